"""Parabolic flows: Dirichlet Schroedinger heat flow, Neumann heat flow with
drift, the drift ratio v = u1/u0, oscillation decay, and the evolution

    psi_t = psi'' + 2 psi psi' - V~'   on [0, D/2],  psi(0) = 0,  psi(D/2) = -k

whose stationary states solve the Riccati equation psi' + psi^2 = V~ - mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import splu

from .core.domain import ConvexDomain
from .core.grid import Grid, GridFunction
from .core.modulus import ModulusFn
from .core.potential import Potential
from .moduli import PairSample, check_convexity_modulus, check_modulus_of_continuity
from .schrod_nd import DiscreteOperator, discretize, smallest_eigenpairs
from .sturm1d import gap1d

OSC_FLOOR = 1e-13


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray            # (snapshots, nodes)
    points: np.ndarray            # (nodes, n)
    dt: float
    theta: float = 0.5
    scheme: str = "crank-nicolson"
    grid: object = None
    flagged: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.times):
            raise ValueError("one snapshot per time is required")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite values in trajectory")

    def __len__(self):
        return len(self.times)

    def snapshot(self, n) -> np.ndarray:
        return self.values[n]

    def oscillation(self) -> np.ndarray:
        return self.values.max(axis=1) - self.values.min(axis=1)

    def describe(self) -> dict:
        return {
            "scheme": self.scheme,
            "theta": self.theta,
            "dt": self.dt,
            "T": float(self.times[-1]),
            "snapshots": len(self.times),
            "nodes": int(self.values.shape[1]),
            **self.meta,
        }


def _steps(T, dt):
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n = max(1, int(round(T / dt)))
    return n, T / n


# ---------------------------------------------------------------------------
# Dirichlet flow  u_t = Laplace u - V u


def heat_dirichlet(domain: ConvexDomain, V: Potential, u0, T: float, dt: float,
                   store_every: int = 1, op: DiscreteOperator | None = None) -> Trajectory:
    """Crank-Nicolson for u_t = -A u with A the discrete -Laplace + V.

    Boundary values are zero by construction (only interior nodes are
    unknowns).  The minimum interior value is monitored.
    """
    if op is None:
        if not isinstance(u0, GridFunction):
            raise TypeError("u0 must be a GridFunction when no operator is given")
        op = discretize(domain, V, u0.grid.h)
    u = np.array(u0.values if isinstance(u0, GridFunction) else u0, dtype=float)
    if u.shape != (op.size,):
        raise ValueError(f"u0 has {u.size} values, operator has {op.size} nodes")
    if u.min() < -1e-14 * max(1.0, np.abs(u).max()):
        raise ValueError("initial data must be non-negative")
    n, dt = _steps(T, dt)
    I = sp.identity(op.size, format="csc")
    A = op.matrix.tocsc()
    lhs = splu((I + 0.5 * dt * A).tocsc())
    rhs = (I - 0.5 * dt * A).tocsr()
    times, snaps = [0.0], [u.copy()]
    min_seen = float(u.min())
    for s in range(1, n + 1):
        u = lhs.solve(rhs @ u)
        min_seen = min(min_seen, float(u.min()))
        if s % store_every == 0 or s == n:
            times.append(s * dt)
            snaps.append(u.copy())
    return Trajectory(np.array(times), np.array(snaps), op.grid.points, dt, 0.5,
                      "crank-nicolson", op.grid, None,
                      {"min_interior_value": min_seen, "steps": n, "h": list(op.grid.h)})


# ---------------------------------------------------------------------------
# v = u1/u0


def _flag_near_boundary(grid: Grid, width: float = 2.0) -> np.ndarray:
    return grid.boundary_distance <= width * max(grid.h) * (1 + 1e-9)


def drift_ratio(u1: Trajectory, u0: Trajectory, margin: float | None = None) -> Trajectory:
    """v = u1/u0 with the residual of v_t = Laplace v + 2 grad log u0 . grad v.

    Nodes within 2h of the boundary are flagged and filled from the
    nearest unflagged node.  The residual uses centred differences in
    space and time at unflagged nodes whose stencil is complete and, with
    ``margin``, at least that far from the boundary.  Near the boundary
    grad log u0 grows like 1/distance, so only a fixed margin gives a
    residual that converges under refinement.
    """
    if not np.array_equal(u1.times, u0.times) or u1.values.shape != u0.values.shape:
        raise ValueError("trajectories must share grid and time levels")
    grid = u0.grid
    if np.any(u0.values <= 0):
        raise ValueError("u0 must stay positive on interior nodes")
    raw = u1.values / u0.values
    v = raw.copy()
    flagged = np.zeros(raw.shape[1], bool)
    if isinstance(grid, Grid):
        from scipy.spatial import cKDTree

        flagged = _flag_near_boundary(grid)
        good = np.flatnonzero(~flagged)
        if good.size == 0:
            raise ValueError("every node lies within 2h of the boundary")
        if flagged.any():
            _, near = cKDTree(grid.points[good]).query(grid.points[flagged])
            v[:, flagged] = raw[:, good[near]]
    res = _drift_residual(grid, raw, u0.values, u0.times, flagged, margin)
    meta = {"flagged_nodes": int(flagged.sum()), **res}
    return Trajectory(u0.times, v, u0.points, u0.dt, u0.theta, "ratio", grid, flagged, meta)


def _drift_residual(grid, v, u, times, flagged, margin=None) -> dict:
    if not isinstance(grid, Grid) or len(times) < 3:
        return {"residual_max": None}
    full = np.all(grid.neighbors >= 0, axis=(0, 1)) & ~flagged
    if margin is not None:
        full &= grid.boundary_distance >= margin
    nb = grid.neighbors
    for a in range(grid.dimension):
        for s in range(2):
            full &= ~flagged[np.maximum(nb[a, s], 0)]
    idx = np.flatnonzero(full)
    if idx.size == 0:
        return {"residual_max": None}
    worst, scale = 0.0, 0.0
    logu = np.log(u)
    for t in range(1, len(times) - 1):
        vt = (v[t + 1, idx] - v[t - 1, idx]) / (times[t + 1] - times[t - 1])
        lap = np.zeros(idx.size)
        drift = np.zeros(idx.size)
        for a in range(grid.dimension):
            h = grid.h[a]
            lo, hi = nb[a, 0, idx], nb[a, 1, idx]
            lap += (v[t, hi] - 2 * v[t, idx] + v[t, lo]) / h**2
            drift += 2 * (logu[t, hi] - logu[t, lo]) / (2 * h) * (v[t, hi] - v[t, lo]) / (2 * h)
        r = np.abs(vt - lap - drift)
        worst = max(worst, float(r.max()))
        scale = max(scale, float(np.abs(vt).max()))
    return {"residual_max": worst, "residual_scale": scale, "residual_nodes": int(idx.size)}


# ---------------------------------------------------------------------------
# Neumann flow with drift  v_t = Laplace v + X . grad v


@dataclass
class CellGrid:
    """Cell-centred lattice on an interval or box (Neumann problems)."""

    domain: ConvexDomain
    h: tuple
    shape: tuple
    points: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def boundary_distance(self) -> np.ndarray:
        return self.domain.distance_to_boundary(self.points)


def cell_grid(domain: ConvexDomain, h) -> CellGrid:
    if domain.kind not in ("interval", "rectangle"):
        raise ValueError("Neumann flows are implemented on intervals and boxes only")
    lo, hi = domain.bounding_box()
    n = domain.dimension
    hs = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    counts = np.rint((hi - lo) / hs).astype(int)
    hs = (hi - lo) / counts
    axes = [lo[a] + hs[a] * (np.arange(counts[a]) + 0.5) for a in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return CellGrid(domain, tuple(hs), tuple(counts), pts)


def _neumann_operators(cg: CellGrid):
    """Sparse Laplacian and per-axis centred first differences.

    A missing neighbour is a ghost cell equal to the boundary cell, which
    makes the boundary face flux vanish.
    """
    N = cg.size
    idx = np.arange(N).reshape(cg.shape)
    rows_l, cols_l, vals_l = [], [], []
    grads = []
    for a in range(cg.dimension):
        h = cg.h[a]
        plus = np.roll(idx, -1, axis=a)
        minus = np.roll(idx, 1, axis=a)
        sl_last = [slice(None)] * cg.dimension
        sl_last[a] = -1
        sl_first = [slice(None)] * cg.dimension
        sl_first[a] = 0
        plus[tuple(sl_last)] = idx[tuple(sl_last)]
        minus[tuple(sl_first)] = idx[tuple(sl_first)]
        p, m, c = plus.ravel(), minus.ravel(), idx.ravel()
        rows_l += [c, c, c]
        cols_l += [p, m, c]
        vals_l += [np.full(N, 1 / h**2), np.full(N, 1 / h**2), np.full(N, -2 / h**2)]
        G = sp.csr_matrix(
            (np.concatenate([np.full(N, 0.5 / h), np.full(N, -0.5 / h)]),
             (np.concatenate([c, c]), np.concatenate([p, m]))), shape=(N, N))
        grads.append(G)
    Lap = sp.csr_matrix((np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
                        shape=(N, N))
    return Lap, grads


def heat_drift_neumann(domain: ConvexDomain, X, v0, T: float, dt: float, h,
                       store_every: int = 1) -> Trajectory:
    """Crank-Nicolson for v_t = Laplace v + X . grad v with zero Neumann data.

    ``X`` is None, an (N, n) array, or a callable ``X(t, points)``;
    ``v0`` is an array on the cell centres or a callable of the points.
    """
    cg = cell_grid(domain, h)
    Lap, grads = _neumann_operators(cg)
    N = cg.size
    v = np.asarray(v0(cg.points) if callable(v0) else v0, dtype=float).reshape(N)
    n, dt = _steps(T, dt)

    def drift(t):
        if X is None:
            return sp.csr_matrix((N, N))
        F = X(t, cg.points) if callable(X) else X
        F = np.asarray(F, dtype=float).reshape(N, cg.dimension)
        return sum(sp.diags(F[:, a]) @ grads[a] for a in range(cg.dimension))

    I = sp.identity(N, format="csc")
    static = not callable(X)
    Lop = (Lap + drift(0.0)).tocsc()
    lu = splu((I - 0.5 * dt * Lop).tocsc()) if static else None
    times, snaps = [0.0], [v.copy()]
    for s in range(1, n + 1):
        t0, t1 = (s - 1) * dt, s * dt
        if static:
            v = lu.solve(v + 0.5 * dt * (Lop @ v))
        else:
            L0 = Lap + drift(t0)
            L1 = (Lap + drift(t1)).tocsc()
            v = splu((I - 0.5 * dt * L1).tocsc()).solve(v + 0.5 * dt * (L0 @ v))
        if s % store_every == 0 or s == n:
            times.append(t1)
            snaps.append(v.copy())
    return Trajectory(np.array(times), np.array(snaps), cg.points, dt, 0.5, "crank-nicolson",
                      cg, None, {"steps": n, "h": list(cg.h), "grid": "cell-centred"})


# ---------------------------------------------------------------------------
# decay rates


def _fit_window(times, osc, window):
    if window is not None:
        t0, t1 = window
        sel = (times >= t0) & (times <= t1)
        if sel.sum() < 2:
            raise ValueError(f"window {window} holds fewer than two snapshots")
        if np.any(osc[sel] < OSC_FLOOR):
            raise ValueError(f"oscillation below {OSC_FLOOR:g} inside the fit window")
        return sel
    if osc[0] < OSC_FLOOR:
        raise ValueError("oscillation vanishes; no decay rate to fit")
    start = np.flatnonzero(osc <= osc[0] / 10)
    if start.size == 0:
        raise ValueError("oscillation never dropped by 10x; extend the run")
    i0 = start[0]
    small = np.flatnonzero(osc < 1e-10)
    i1 = small[0] - 1 if small.size else len(osc) - 1
    if i1 - i0 < 1:
        raise ValueError("fit window too short between transient and underflow")
    sel = np.zeros(len(osc), bool)
    sel[i0:i1 + 1] = True
    return sel


def osc_decay_rate(traj: Trajectory, window=None, with_info: bool = False):
    """Least-squares decay exponent of osc v(., t) = sup v - inf v."""
    osc = traj.oscillation()
    sel = _fit_window(traj.times, osc, window)
    t, y = traj.times[sel], np.log(osc[sel])
    slope, icpt = np.polyfit(t, y, 1)
    rate = -float(slope)
    if with_info:
        fit = slope * t + icpt
        return rate, {
            "window": [float(t[0]), float(t[-1])],
            "points": int(sel.sum()),
            "fit_residual": float(np.max(np.abs(fit - y))),
        }
    return rate


# ---------------------------------------------------------------------------
# modulus preservation


@dataclass
class PreservationReport:
    times: list
    reports: list
    first_failure: float | None

    @property
    def passed(self) -> bool:
        return self.first_failure is None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "first_failure": self.first_failure,
            "snapshots": [{"t": t, **r.to_dict()} for t, r in zip(self.times, self.reports)],
        }


def modulus_preservation_test(traj: Trajectory, phi_family, pairs: PairSample,
                              tol: float = 1e-12, every: int = 1) -> PreservationReport:
    """Check the continuity modulus phi_family(t) at each stored snapshot."""
    times, reports = [], []
    first = None
    for n in range(0, len(traj), every):
        t = float(traj.times[n])
        rep = check_modulus_of_continuity(traj.values[n], phi_family(t), pairs, tol=tol)
        times.append(t)
        reports.append(rep)
        if first is None and not rep.passed:
            first = t
    return PreservationReport(times, reports, first)


# ---------------------------------------------------------------------------
# the psi evolution


@dataclass(frozen=True)
class PsiState:
    z: np.ndarray
    psi: np.ndarray
    k: float
    t: float


def _staggered_potential(V: Potential, z, h):
    zm = z[:-1] + 0.5 * h
    return V.value(zm[:, None])


def riccati_defect(V: Potential, z, psi, mu=None):
    """Staggered Riccati residual G + mu with the least-squares mu.

    G_{i+1/2} = (psi_{i+1} - psi_i)/h + (psi_i^2 + psi_{i+1}^2)/2 - V~(z_{i+1/2}).
    The evolution's right-hand side at node i is (G_{i+1/2} - G_{i-1/2})/h,
    so stationary states have constant G = -mu.
    """
    h = z[1] - z[0]
    G = np.diff(psi) / h + 0.5 * (psi[:-1] ** 2 + psi[1:] ** 2) - _staggered_potential(V, z, h)
    if mu is None:
        mu = -float(G.mean())
    return mu, G + mu


def discrete_riccati(V: Potential, z, mu: float, side: str, k: float | None = None):
    """Solve G_{i+1/2} = -mu exactly, marching from psi(0) = 0 or psi(D/2) = -k.

    Each step is a quadratic equation; a negative discriminant is a
    blow-up (psi -> -inf forward, +inf backward) and fills the rest with
    -inf / +inf.
    """
    h = z[1] - z[0]
    W = _staggered_potential(V, z, h) - mu
    m = len(z) - 1
    psi = np.empty(m + 1)
    if side == "left":
        psi[0] = 0.0
        for i in range(m):
            c = 0.5 * h * psi[i] ** 2 - psi[i] - h * W[i]
            disc = 1.0 - 2.0 * h * c
            if disc < 0:
                psi[i + 1:] = -np.inf
                break
            psi[i + 1] = (-1.0 + math.sqrt(disc)) / h
    elif side == "right":
        psi[m] = -k
        for i in range(m - 1, -1, -1):
            c = 0.5 * h * psi[i + 1] ** 2 + psi[i + 1] - h * W[i]
            disc = 1.0 - 2.0 * h * c
            if disc < 0:
                psi[: i + 1] = np.inf
                break
            psi[i] = (1.0 - math.sqrt(disc)) / h
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return psi


def discrete_robin(V: Potential, D: float, k: float, m: int):
    """Discrete stationary state: left march reaching psi(D/2) = -k."""
    z = np.linspace(0.0, D / 2, m + 1)
    lo_v, _ = V.range_on(0.0, D / 2)

    def end(mu):
        p = discrete_riccati(V, z, mu, "left")
        return (p[-1] if np.isfinite(p[-1]) else -1e300) + k

    a, b = lo_v - 1.0, lo_v + (math.pi / D) ** 2
    while end(b) > 0:
        a, b = b, b + 2 * (b - a)
    mu = brentq(end, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=300)
    return z, mu, discrete_riccati(V, z, mu, "left")


def discrete_barrier(V: Potential, D: float, k: float, s: float, m: int):
    """Discrete analogue of min(psi^L at mu - s, psi^R_k at mu + s).

    Built from the exact discrete marches, so its staggered defect is
    piecewise constant and it is a supersolution of the discrete flow.
    """
    z, mu, _ = discrete_robin(V, D, k, m)
    L = discrete_riccati(V, z, mu - s, "left")
    R = discrete_riccati(V, z, mu + s, "right", k)
    psi = np.minimum(L, R)
    if not np.all(np.isfinite(psi)):
        raise ValueError("discrete barrier branches do not cover [0, D/2]")
    psi[0], psi[-1] = 0.0, -k
    return z, psi, mu


@dataclass
class PsiRun:
    states: list
    dt: float
    dt_requested: float
    cfl_reduced: bool
    max_increase: float
    steps: int

    @property
    def final(self) -> PsiState:
        return self.states[-1]

    def describe(self) -> dict:
        return {
            "dt": self.dt,
            "dt_requested": self.dt_requested,
            "cfl_reduced": self.cfl_reduced,
            "max_increase": self.max_increase,
            "steps": self.steps,
            "snapshots": len(self.states),
        }


def evolve_psi(V: Potential, D: float, psi0, k: float, T: float, dt: float,
               m: int = 500, snapshots: int = 50, cfl: float = 0.25) -> PsiRun:
    """Semi-implicit flow: implicit psi'', explicit 2 psi psi' - V~'.

    In flux form psi_t = (G_{i+1/2} - G_{i-1/2})/h with the staggered
    Riccati defect G.  The explicit part is limited by
    dt <= cfl * h / max|psi|; a larger request is reduced and reported.
    ``psi0`` is a ModulusFn, a callable, or an array on the m+1 nodes.
    The largest pointwise increase over all steps is tracked.
    """
    z = np.linspace(0.0, D / 2, m + 1)
    h = z[1] - z[0]
    if isinstance(psi0, ModulusFn):
        p = np.asarray(psi0(z), dtype=float)
    elif callable(psi0):
        p = np.asarray(psi0(z), dtype=float)
    else:
        p = np.asarray(psi0, dtype=float).copy()
    if p.shape != z.shape:
        raise ValueError(f"psi0 must have {m + 1} samples")
    scale = max(1.0, k)
    if abs(p[0]) > 1e-8 * scale or abs(p[-1] + k) > 1e-8 * scale:
        raise ValueError("psi0 must satisfy psi(0) = 0 and psi(D/2) = -k")
    p[0], p[-1] = 0.0, -k
    dt_max = cfl * h / max(np.abs(p).max(), 1e-300)
    n, dt_eff = _steps(T, min(dt, dt_max))
    reduced = dt_eff < dt * (1 - 1e-12)
    Vs = _staggered_potential(V, z, h)
    # implicit second difference on the interior nodes 1..m-1
    n_in = m - 1
    main = np.full(n_in, 1 + 2 * dt_eff / h**2)
    offd = np.full(n_in - 1, -dt_eff / h**2)
    M = sp.diags([offd, main, offd], [-1, 0, 1], format="csc")
    lu = splu(M)
    bc = np.zeros(n_in)
    every = max(1, n // max(1, snapshots))
    states = [PsiState(z, p.copy(), k, 0.0)]
    max_inc = -np.inf
    for s in range(1, n + 1):
        flux = 0.5 * (p[:-1] ** 2 + p[1:] ** 2) - Vs
        explicit = p[1:-1] + dt_eff * np.diff(flux) / h
        bc[0] = dt_eff / h**2 * p[0]
        bc[-1] = dt_eff / h**2 * p[-1]
        new = p.copy()
        new[1:-1] = lu.solve(explicit + bc)
        max_inc = max(max_inc, float(np.max(new - p)))
        p = new
        if not np.all(np.isfinite(p)):
            raise FloatingPointError(f"psi evolution blew up at t={s * dt_eff:g}")
        if np.abs(p).max() > scale * 10 and np.abs(p).max() * dt_eff > cfl * h * 4:
            raise FloatingPointError("explicit transport term became unstable")
        if s % every == 0 or s == n:
            states.append(PsiState(z, p.copy(), k, s * dt_eff))
    return PsiRun(states, dt_eff, dt, reduced, max_inc, n)


# ---------------------------------------------------------------------------
# end-to-end gap from decay


def comparison_modulus(Vt: Potential, D: float, samples: int = 2049) -> ModulusFn:
    """V~' sampled on [0, D/2]."""
    z = np.linspace(0.0, D / 2, samples)
    return ModulusFn(D / 2, Vt.gradient(z[:, None])[:, 0], z[1] - z[0])


def gap_from_decay(domain: ConvexDomain, V: Potential, Vt: Potential, h=1 / 64, dt=1e-3,
                   T=None, seed: int = 0, tol: float = 1e-2, eig_tol: float = 1e-10,
                   pairs: PairSample | None = None) -> dict:
    """Decay rate of osc(u1/u0) against the one-dimensional comparison gap.

    u0 is the flow of the ground state, u1 the flow of phi0 + 0.1 phi1.
    Returns a report with one evidence block per stage; raises StageError
    tagged with the failing stage.
    """
    D = domain.diameter()
    evidence = {}
    try:
        op = discretize(domain, V, h)
    except Exception as exc:
        raise StageError("discretize", str(exc)) from exc
    if pairs is None:
        pairs = PairSample.stratified(op.grid.points, D, seed=seed)
    try:
        conv = check_convexity_modulus(V, comparison_modulus(Vt, D), pairs)
    except Exception as exc:
        raise StageError("convexity", str(exc)) from exc
    evidence["convexity"] = conv.to_dict()
    if not conv.passed:
        return {"passed": False, "failed_stage": "convexity", "evidence": evidence}
    try:
        eig = smallest_eigenpairs(op, k=2, tol=eig_tol, seed=seed)
    except Exception as exc:
        raise StageError("eigen", str(exc)) from exc
    lam0, lam1 = (float(x) for x in eig.values[:2])
    phi0, phi1 = eig.vectors[:, 0], eig.vectors[:, 1]
    evidence["eigen"] = {"lambda0": lam0, "lambda1": lam1, "gap": lam1 - lam0,
                         "residuals": eig.residuals.tolist()}
    if T is None:
        # long enough for the oscillation to fall by about 1e-6
        T = 14.0 / max(lam1 - lam0, 1e-12)
    try:
        seed_u1 = phi0 + 0.1 * phi1
        if seed_u1.min() <= 0:
            seed_u1 = phi0 + 0.1 * phi1 * (phi0.min() / max(np.abs(phi1).max(), 1e-300))
        u0 = heat_dirichlet(domain, V, phi0, T, dt, op=op)
        u1 = heat_dirichlet(domain, V, np.maximum(seed_u1, 0.0), T, dt, op=op)
        v = drift_ratio(u1, u0)
        rate, fit = osc_decay_rate(v, with_info=True)
    except Exception as exc:
        raise StageError("decay", str(exc)) from exc
    evidence["decay"] = {"rate": rate, "fit": fit, "dt": u0.dt, "T": float(u0.times[-1]),
                         "flagged_nodes": v.meta["flagged_nodes"],
                         "residual_max": v.meta.get("residual_max")}
    try:
        g1 = gap1d(Vt, D)
    except Exception as exc:
        raise StageError("gap1d", str(exc)) from exc
    evidence["gap1d"] = {"mu0": g1.mu0, "mu1": g1.mu1, "gap": g1.gap, "diameter": D}
    passed = rate >= g1.gap * (1 - tol)
    return {
        "passed": bool(passed),
        "rate": rate,
        "gap_nd": lam1 - lam0,
        "gap_1d": g1.gap,
        "relative_rate_error": abs(rate - (lam1 - lam0)) / (lam1 - lam0),
        "evidence": evidence,
    }


__all__ = [
    "Trajectory", "PsiState", "PsiRun", "CellGrid", "StageError", "PreservationReport",
    "heat_dirichlet", "drift_ratio", "heat_drift_neumann", "cell_grid", "osc_decay_rate",
    "modulus_preservation_test", "evolve_psi", "riccati_defect", "discrete_riccati",
    "discrete_robin", "discrete_barrier", "comparison_modulus", "gap_from_decay",
]
