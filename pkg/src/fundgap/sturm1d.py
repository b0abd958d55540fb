"""One-dimensional comparison eigenproblems for -d^2/dz^2 + V on [-D/2, D/2].

V is even, so everything is computed on the half interval [0, D/2]: the
ground state is even (angle 0 at the midpoint) and the first excited state
is odd (angle pi/2 at the midpoint).  Eigenfunctions are normalised by
phi'(D/2) = -1; the Robin variants have phi(D/2) = eps as well.

The Pruefer angle q = arctan(phi'/phi) solves

    q' = (V - mu) cos^2 q - sin^2 q,

which is strictly decreasing in mu for z > 0.  Once q falls below -pi/2
it never comes back (q' = -1 there), which makes early termination safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .core.modulus import ModulusFn, uniform_derivative
from .core.ode import dp_step, integrate, integrate_scalar
from .core.potential import Potential, require_even

TOL_ODE = 1e-10
HALF_PI = 0.5 * math.pi
DEFAULT_SAMPLES = 2049

MODES = ("dirichlet-ground", "dirichlet-excited", "robin-ground", "robin-excited")


class BracketError(RuntimeError):
    pass


class EigenfunctionSignError(ValueError):
    pass


@dataclass(frozen=True)
class Eigen1D:
    """Eigenpair on [-D/2, D/2] with phi'(D/2) = -1.

    ``z``/``phi`` cover the full interval; ``half_log_derivative`` holds
    (log phi)' = tan q on the uniform half grid when the pair came from
    shooting (None for finite differences).
    """

    mu: float
    z: np.ndarray
    phi: np.ndarray
    bc: str                  # "dirichlet" or "robin"
    parity: str              # "even" (ground type) or "odd" (excited type)
    diameter: float
    method: str
    residual: float
    eps: float | None = None
    half_log_derivative: np.ndarray | None = field(default=None, repr=False)

    @property
    def half_z(self) -> np.ndarray:
        m = len(self.z) // 2
        return self.z[m:]

    @property
    def half_phi(self) -> np.ndarray:
        m = len(self.z) // 2
        return self.phi[m:]

    @property
    def tag(self) -> str:
        return f"robin({self.eps:g})" if self.bc == "robin" else "dirichlet"

    def summary(self) -> dict:
        return {
            "mu": self.mu,
            "bc": self.tag,
            "parity": self.parity,
            "method": self.method,
            "residual": self.residual,
        }


def _mirror(zh, ph, parity):
    z = np.concatenate([-zh[:0:-1], zh])
    sign = 1.0 if parity == "even" else -1.0
    return z, np.concatenate([sign * ph[:0:-1], ph])


# ---------------------------------------------------------------------------
# finite differences


def solve_dirichlet_fd(V: Potential, D: float, n_grid: int, k: int = 2) -> list[Eigen1D]:
    """Lowest ``k`` eigenpairs of the 3-point matrix on ``n_grid`` intervals."""
    if n_grid < 64:
        raise ValueError(f"n_grid must be at least 64, got {n_grid}")
    if not 1 <= k <= n_grid - 1:
        raise ValueError(f"k={k} exceeds the {n_grid - 1} interior nodes")
    require_even(V, D / 2)
    h = D / n_grid
    z = -D / 2 + h * np.arange(n_grid + 1)
    zi = z[1:-1]
    diag = 2.0 / h**2 + V.value(zi[:, None])
    off = np.full(n_grid - 2, -1.0 / h**2)
    w, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    out = []
    for i in range(k):
        v = vecs[:, i]
        # second-order one-sided derivative at z = D/2 (phi = 0 there)
        slope = (-4.0 * v[-1] + v[-2]) / (2 * h)
        phi = np.concatenate([[0.0], -v / slope, [0.0]])
        Av = diag * v
        Av[:-1] += off * v[1:]
        Av[1:] += off * v[:-1]
        out.append(Eigen1D(
            mu=float(w[i]), z=z, phi=phi, bc="dirichlet",
            parity="even" if i % 2 == 0 else "odd", diameter=float(D), method="fd",
            residual=float(np.max(np.abs(Av - w[i] * v))),
        ))
    return out


# ---------------------------------------------------------------------------
# Pruefer shooting


def _prufer_rhs(V: Potential, mu: float):
    Vs = V.scalar

    def f(z, q):
        c = math.cos(q)
        return (Vs(z) - mu + 1.0) * c * c - 1.0

    return f


@dataclass(frozen=True)
class PruferPath:
    mu: float
    q0: float
    diameter: float
    z: np.ndarray
    q: np.ndarray
    stopped_at: float | None = None

    @property
    def terminal(self) -> float:
        return float(self.q[-1])

    def residual(self, V: Potential) -> np.ndarray:
        """|q' - (V - mu) cos^2 q + sin^2 q| at the samples, q' by finite differences."""
        dq = uniform_derivative(self.q, self.z[1] - self.z[0])
        Vz = V.value(self.z[:, None])
        c = np.cos(self.q)
        return np.abs(dq - (Vz - self.mu) * c * c + np.sin(self.q) ** 2)


def prufer_shoot(V: Potential, mu: float, q0: float, D: float, samples: int = DEFAULT_SAMPLES,
                 tol: float = TOL_ODE) -> PruferPath:
    """Integrate the angle equation from z = 0 to D/2, landing on every sample."""
    zs = np.linspace(0.0, D / 2, samples)
    f = _prufer_rhs(V, mu)
    sol = integrate(lambda z, y: (f(z, y[0]),), 0.0, (q0,), D / 2, tol=tol, sample_at=zs)
    return PruferPath(float(mu), float(q0), float(D), sol.sample_z, sol.sample_y[:, 0])


def _target_angle(bc: str, eps: float | None) -> float:
    return -HALF_PI if bc == "dirichlet" else math.atan(eps) - HALF_PI


def _parse_mode(mode: str, eps: float | None):
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    bc, kind = mode.split("-")
    if bc == "robin":
        if eps is None or not eps > 0:
            raise ValueError("Robin modes need eps > 0")
    else:
        eps = None
    return bc, ("even" if kind == "ground" else "odd"), eps


def _below_floor(z, q):
    return q < -HALF_PI


class _Shooter:
    """Angle mismatch at a matching point zm between forward and backward shots.

    With zm = D/2 this is plain forward shooting, q(D/2; q0, mu) - target.
    Moving zm to the classical turning point keeps the problem well
    conditioned when V is large near the ends.  The mismatch is strictly
    decreasing in mu and vanishes exactly at the eigenvalue.
    """

    def __init__(self, V, D, q0, target, tol):
        self.V, self.D, self.q0, self.target, self.tol = V, D, q0, target, tol
        self.zm = D / 2

    def __call__(self, mu):
        f = _prufer_rhs(self.V, mu)
        _, qL, stopped = integrate_scalar(f, 0.0, self.q0, self.zm, self.tol, stop=_below_floor)
        if self.zm >= self.D / 2:
            qR = self.target
        else:
            _, qR, _ = integrate_scalar(f, self.D / 2, self.target, self.zm, self.tol)
        return qL - qR

    def turning_point(self, mu, n=1025):
        z = np.linspace(0.0, self.D / 2, n)
        above = self.V.value(z[:, None]) > mu
        if not above[-1]:
            return self.D / 2
        below = np.flatnonzero(~above)
        zt = z[below[-1]] if below.size else 0.0
        return float(np.clip(zt, self.D / 8, self.D / 2))


def _find_eigenvalue(V, D, q0, target, tol, max_scan=4000):
    shoot = _Shooter(V, D, q0, target, tol)
    lo_v, _ = V.range_on(0.0, D / 2)
    step = (math.pi / D) ** 2
    a = lo_v - step
    fa = shoot(a)
    if not fa > 0:
        raise BracketError(f"mismatch not positive below inf V (mu={a:g})")
    for _ in range(max_scan):
        b = a + step
        fb = shoot(b)
        if fb < 0:
            break
        a, fa = b, fb
    else:
        raise BracketError(
            f"no sign change of the angle mismatch for mu in [{lo_v - step:g}, {a:g}]"
        )
    shoot.zm = shoot.turning_point(b)
    fa, fb = shoot(a), shoot(b)
    if not (fa > 0 > fb):
        raise BracketError(f"bracket [{a:g}, {b:g}] lost after moving the matching point")
    mu = brentq(shoot, a, b, xtol=1e-14 * max(1.0, abs(b)), rtol=4 * np.finfo(float).eps,
                maxiter=200)
    return mu, abs(shoot(mu)), shoot.zm


def _reconstruct(V, D, mu, q0, target, r_end, zm, samples, tol):
    """Angle and amplitude on the half grid: phi = r cos q, phi' = r sin q.

    The amplitude obeys (log r)' = (1 + V - mu) sin q cos q.  Forward
    integration covers [0, zm], backward integration from the boundary
    data covers [zm, D/2]; the two are joined by matching r at zm.
    """
    zs = np.linspace(0.0, D / 2, samples)
    Vs = V.scalar

    def f(z, y):
        q = y[0]
        c, s = math.cos(q), math.sin(q)
        w = Vs(z) - mu + 1.0
        return (w * c * c - 1.0, w * s * c)

    q = np.empty(samples)
    logr = np.empty(samples)
    right = zs >= zm - 1e-15
    right_z = zs[right]
    sol_r = integrate(f, D / 2, (target, math.log(r_end)), zm, tol=tol,
                      sample_at=np.concatenate([right_z[::-1], [zm]]) if right_z[0] != zm else right_z[::-1])
    q[right] = sol_r.sample_y[: right.sum(), 0][::-1]
    logr[right] = sol_r.sample_y[: right.sum(), 1][::-1]
    if (~right).any():
        left_z = zs[~right]
        sol_l = integrate(f, 0.0, (q0, 0.0), zm, tol=tol, sample_at=np.concatenate([left_z, [zm]]))
        qm_l, lrm_l = sol_l.y[-1]
        _, (qm_r, lrm_r) = sol_r.end
        q[~right] = sol_l.sample_y[: len(left_z), 0] + (qm_r - qm_l)
        logr[~right] = sol_l.sample_y[: len(left_z), 1] + (lrm_r - lrm_l)
    return zs, q, logr


def solve_eigen_shooting(V: Potential, D: float, mode: str = "dirichlet-ground",
                         eps: float | None = None, samples: int = DEFAULT_SAMPLES,
                         tol: float = TOL_ODE) -> Eigen1D:
    """Eigenpair of the requested type by shooting on the Pruefer angle.

    Dirichlet targets q(D/2) = -pi/2; Robin targets q(D/2) = arctan(eps) - pi/2,
    i.e. phi'/phi = -1/eps at the boundary.
    """
    bc, parity, eps = _parse_mode(mode, eps)
    require_even(V, D / 2)
    q0 = 0.0 if parity == "even" else HALF_PI
    target = _target_angle(bc, eps)
    mu, residual, zm = _find_eigenvalue(V, D, q0, target, tol)
    r_end = 1.0 if bc == "dirichlet" else math.hypot(1.0, eps)
    zh, q, logr = _reconstruct(V, D, mu, q0, target, r_end, zm, samples, tol)
    ph = np.exp(logr) * np.cos(q)
    if bc == "dirichlet":
        ph[-1] = 0.0
    if parity == "odd":
        ph[0] = 0.0
    with np.errstate(over="ignore"):
        tq = np.tan(q)
    if bc == "dirichlet":
        tq[-1] = -np.inf
    if parity == "odd":
        tq[0] = np.inf
    z, phi = _mirror(zh, ph, parity)
    return Eigen1D(float(mu), z, phi, bc, parity, float(D), "shoot", float(residual), eps, tq)


def log_derivative(e: Eigen1D) -> ModulusFn:
    """(log phi)' on [0, D/2] for a ground-type eigenpair.

    Dirichlet pairs get a pole at D/2; the last sample is dropped.
    """
    if e.parity != "even":
        raise ValueError("log_derivative needs a ground-type (even) eigenpair")
    zh, ph = e.half_z, e.half_phi
    inner = ph[:-1] if e.bc == "dirichlet" else ph
    if np.any(inner <= 0):
        bad = zh[np.flatnonzero(inner <= 0)[0]]
        raise EigenfunctionSignError(f"eigenfunction not positive at z={bad:.6g}")
    dz = zh[1] - zh[0]
    if e.half_log_derivative is not None:
        vals = e.half_log_derivative.copy()
    else:
        with np.errstate(divide="ignore"):
            vals = uniform_derivative(np.log(np.maximum(ph, 1e-300)), dz)
    vals[0] = 0.0
    pole = e.bc == "dirichlet"
    if pole:
        vals = vals[:-1]
    return ModulusFn(e.diameter / 2, vals, dz, pole=pole)


@dataclass(frozen=True)
class Gap1D:
    mu0: float
    mu1: float
    method: str
    diameter: float
    residuals: dict
    ground: Eigen1D
    excited: Eigen1D

    @property
    def gap(self) -> float:
        return self.mu1 - self.mu0


def gap1d(V: Potential, D: float, method: str = "shoot", n_grid: int = 1024,
          robin_eps: float | None = None, samples: int = DEFAULT_SAMPLES) -> Gap1D:
    """mu1 - mu0 for the comparison operator on [-D/2, D/2]."""
    if method == "fd":
        if robin_eps is not None:
            raise ValueError("finite differences only implement Dirichlet conditions")
        g, x = solve_dirichlet_fd(V, D, n_grid, 2)
    elif method == "shoot":
        bc = "robin" if robin_eps is not None else "dirichlet"
        g = solve_eigen_shooting(V, D, f"{bc}-ground", robin_eps, samples)
        x = solve_eigen_shooting(V, D, f"{bc}-excited", robin_eps, samples)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Gap1D(g.mu, x.mu, method, float(D), {"mu0": g.residual, "mu1": x.residual}, g, x)


def fd_convergence(V: Potential, D: float, n_grids=(256, 512, 1024), exact: float | None = None):
    """Gaps on successively refined grids and the observed order.

    With ``exact`` the order uses the errors directly; otherwise successive
    differences.
    """
    gaps = [gap1d(V, D, "fd", n).gap for n in n_grids]
    if exact is not None:
        errs = [abs(g - exact) for g in gaps]
        order = math.log2(errs[-2] / errs[-1])
    else:
        order = math.log2(abs(gaps[0] - gaps[1]) / abs(gaps[1] - gaps[2]))
    return gaps, order


# ---------------------------------------------------------------------------
# Riccati equation  psi' + psi^2 = V - mu


@dataclass(frozen=True)
class RiccatiSolution:
    psi: ModulusFn
    side: str
    mu: float
    k: float | None
    blowup: float | None      # location where |psi| becomes infinite, if any

    def residual(self, V: Potential) -> np.ndarray:
        """|psi' + psi^2 - V + mu| / (1 + psi^2) at the finite samples.

        Equal to the residual of the angle equation for q = arctan(psi),
        which stays well conditioned near a blow-up; q' is taken by finite
        differences.  Equals the plain Riccati residual up to the factor
        1 + psi^2.
        """
        z, p = self.psi.z, self.psi.values
        ok = np.isfinite(p)
        q = np.arctan(np.where(ok, p, 0.0))
        dq = uniform_derivative(q, self.psi.dz)
        c = np.cos(q)
        r = np.abs(dq - (V.value(z[:, None]) - self.mu) * c * c + np.sin(q) ** 2)
        # stencils touching missing samples are unusable
        bad = ~ok
        for s in (1, 2, 3):
            bad = bad | np.roll(~ok, s) | np.roll(~ok, -s)
        return r[~bad]

    def defect(self, V: Potential, tol: float = 1e-13) -> np.ndarray:
        """Per-interval defect in integral form, per unit length.

        Each pair of neighbouring finite samples is joined by a fresh,
        much tighter integration of the angle equation; the mismatch in
        q at the far sample, divided by the spacing, is returned.  Unlike
        :meth:`residual` this does not degrade when q turns quickly
        relative to the sampling.
        """
        z, p = self.psi.z, self.psi.values
        ok = np.flatnonzero(np.isfinite(p[:-1]) & np.isfinite(p[1:]))
        f = _prufer_rhs(V, self.mu)
        q = np.arctan(np.where(np.isfinite(p), p, 0.0))
        out = np.empty(ok.size)
        # follow the integration direction so the reference starts from its own data
        fwd = self.side == "left"
        for n, i in enumerate(ok):
            a, b = (i, i + 1) if fwd else (i + 1, i)
            _, qb, _ = integrate_scalar(f, z[a], q[a], z[b], tol)
            d = qb - q[b]
            d = (d + HALF_PI) % math.pi - HALF_PI   # arctan branch of psi is mod pi
            out[n] = abs(d) / self.psi.dz
        return out


def _locate_crossing(f, z, q, h, level, tol=1e-10):
    """Bisect the last step [z, z+h] for the point where q crosses ``level``."""
    g = lambda z_, y: (f(z_, y[0]),)
    lo, hi = 0.0, h
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        (qm,), _, _ = dp_step(g, z, (q,), mid)
        if (qm - level) * (q - level) > 0:
            lo = mid
        else:
            hi = mid
    return z + 0.5 * (lo + hi)


def riccati_stationary(V: Potential, mu: float, side: str, D: float, k: float | None = None,
                       samples: int = DEFAULT_SAMPLES, tol: float = TOL_ODE) -> RiccatiSolution:
    """Solve psi' + psi^2 = V - mu from psi(0) = 0 (left) or psi(D/2) = -k (right).

    Integrated in the angle q = arctan(psi) so blow-up is a regular point
    (q = -pi/2 forward, q = pi/2 backward).  Samples past the blow-up are
    NaN.
    """
    zs = np.linspace(0.0, D / 2, samples)
    f = _prufer_rhs(V, mu)
    g = lambda z, y: (f(z, y[0]),)
    if side == "left":
        start, q_start, end, level, nodes = 0.0, 0.0, D / 2, -HALF_PI, zs
        stop = lambda z, y: y[0] <= level
    elif side == "right":
        if k is None or not k > 0:
            raise ValueError("right Riccati branch needs k > 0")
        start, q_start, end, level, nodes = D / 2, -math.atan(k), 0.0, HALF_PI, zs[::-1]
        stop = lambda z, y: y[0] >= level
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    sol = integrate(g, start, (q_start,), end, tol=tol, sample_at=nodes, stop=stop)
    vals = np.full(samples, np.nan)
    got = len(sol.sample_z)
    qs = sol.sample_y[:, 0]
    blowup = None
    if sol.stopped:
        z_prev, q_prev = sol.z[-2], sol.y[-2, 0]
        blowup = _locate_crossing(f, z_prev, q_prev, sol.z[-1] - z_prev, level)
        # a sample landed exactly on the last node may already be past the crossing
        keep = (qs > level) if side == "left" else (qs < level)
        got = int(np.argmin(keep)) if not keep.all() else got
        qs = qs[:got]
    psi = np.tan(qs)
    if side == "left":
        vals[:got] = psi
    else:
        vals[samples - got:] = psi[::-1]
    if side == "right":
        vals[-1] = -k
    else:
        vals[0] = 0.0
    mod = ModulusFn(D / 2, vals, zs[1] - zs[0])
    return RiccatiSolution(mod, side, float(mu), k, blowup)


@dataclass(frozen=True)
class Barrier:
    psi: ModulusFn
    k: float
    s: float
    mu_robin: float
    left: RiccatiSolution
    right: RiccatiSolution
    lower_bound: np.ndarray | None
    bound_violation: float | None


def barrier_lower_bound(z, D, k, s, mu, v_inf, v_sup):
    """Explicit lower bound for the barrier when s exceeds the threshold.

    The left branch dominates lam_p tanh(lam_p z) with lam_p^2 = s + inf V - mu;
    the right branch dominates the tan solution with lam_m^2 = s + mu - sup V,
    which is finite while lam_m (D/2 - z) - arctan(k/lam_m) < pi/2.
    """
    lp = math.sqrt(s + v_inf - mu)
    lm = math.sqrt(s + mu - v_sup)
    left = lp * np.tanh(lp * z)
    alpha = math.atan(k / lm)
    arg = lm * (D / 2 - z) - alpha
    ok = arg < HALF_PI
    # lm * tan(arg) == (lm tan(lm w) - k) / (1 + (k/lm) tan(lm w)), w = D/2 - z
    right = np.where(ok, lm * np.tan(np.where(ok, arg, 0.0)), np.inf)
    return np.minimum(left, right)


def barrier_supersolution(V: Potential, k: float, s: float, D: float,
                          samples: int = DEFAULT_SAMPLES, tol: float = TOL_ODE) -> Barrier:
    """min(psi^L at mu_R - s, psi^R_k at mu_R + s), mu_R the Robin eigenvalue for eps = 1/k."""
    if not k > 0 or s < 0:
        raise ValueError("barrier needs k > 0 and s >= 0")
    mu = solve_eigen_shooting(V, D, "robin-ground", 1.0 / k, samples=65, tol=tol).mu
    L = riccati_stationary(V, mu - s, "left", D, samples=samples, tol=tol)
    R = riccati_stationary(V, mu + s, "right", D, k=k, samples=samples, tol=tol)
    a = np.where(np.isnan(L.psi.values), np.inf, L.psi.values)
    b = np.where(np.isnan(R.psi.values), np.inf, R.psi.values)
    vals = np.minimum(a, b)
    if not np.all(np.isfinite(vals)) or np.isnan(L.psi.values).any():
        bad = L.psi.z[~np.isfinite(vals) | np.isnan(L.psi.values)][0]
        raise ValueError(f"Riccati branches do not cover [0, D/2]; gap at z={bad:.6g}")
    mod = ModulusFn(D / 2, vals, L.psi.dz)
    v_inf, v_sup = V.range_on(0.0, D / 2)
    bound = violation = None
    if s > max(mu - v_inf, v_sup - mu):
        bound = barrier_lower_bound(mod.z, D, k, s, mu, v_inf, v_sup)
        violation = float(np.max(bound - vals))
    return Barrier(mod, float(k), float(s), float(mu), L, R, bound, violation)


__all__ = [
    "Eigen1D", "PruferPath", "Gap1D", "RiccatiSolution", "Barrier", "BracketError",
    "EigenfunctionSignError", "solve_dirichlet_fd", "prufer_shoot", "solve_eigen_shooting",
    "log_derivative", "gap1d", "fd_convergence", "riccati_stationary", "barrier_supersolution",
    "barrier_lower_bound", "TOL_ODE",
]
