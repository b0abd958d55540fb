"""Pairwise moduli: continuity, expansion/contraction, convexity, log-concavity.

Every check evaluates a two-point quantity over a sample of point pairs
(x, y), with d = |y - x| and e = (y - x)/d, and reports the worst value of

    continuity      |v(y) - v(x)| - 2 eta(d/2)
    contraction     (X(y) - X(x)).e - 2 omega(d/2)
    convexity       2 V~'(d/2) - (grad V(y) - grad V(x)).e
    log-concavity   (grad log phi(y) - grad log phi(x)).e - 2 psi(d/2)

A check passes when the worst value is at most its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core.grid import GridFunction
from .core.modulus import ModulusFn
from .core.potential import Potential

DEFAULT_BINS = 32
DEFAULT_PER_BIN = 512
DEFAULT_SEED = 20240607
DEFAULT_C_TOL_FLOOR = 0.05


class ModulusPoleError(ValueError):
    pass


class NonPositiveError(ValueError):
    pass


@dataclass(frozen=True)
class PairSample:
    """Pairs of node indices into ``points``, with distance-bin bookkeeping."""

    points: np.ndarray
    i: np.ndarray
    j: np.ndarray
    edges: np.ndarray
    seed: int | None = None
    kind: str = "stratified"

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        if i.shape != j.shape:
            raise ValueError("pair index arrays differ in length")
        if np.any(i == j):
            raise ValueError("pairs must consist of distinct points")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)

    def __len__(self):
        return len(self.i)

    @property
    def x(self) -> np.ndarray:
        return self.points[self.i]

    @property
    def y(self) -> np.ndarray:
        return self.points[self.j]

    def geometry(self):
        diff = self.y - self.x
        d = np.linalg.norm(diff, axis=1)
        return d, diff / d[:, None]

    def bin_counts(self) -> list[int]:
        d, _ = self.geometry()
        return np.histogram(d, bins=self.edges)[0].tolist()

    def union(self, other: "PairSample") -> "PairSample":
        if other.points is not self.points and not np.array_equal(other.points, self.points):
            raise ValueError("samples refer to different point sets")
        return PairSample(self.points, np.concatenate([self.i, other.i]),
                          np.concatenate([self.j, other.j]), self.edges, self.seed, "union")

    @classmethod
    def all_pairs(cls, points, diameter: float | None = None, bins: int = DEFAULT_BINS):
        """Every unordered pair of distinct points (brute-force enumeration)."""
        points = np.asarray(points, dtype=float)
        i, j = np.triu_indices(len(points), k=1)
        D = diameter or _spread(points)
        return cls(points, i, j, np.linspace(0.0, D, bins + 1), None, "all")

    @classmethod
    def stratified(cls, points, diameter: float, bins: int = DEFAULT_BINS,
                   per_bin: int = DEFAULT_PER_BIN, seed: int = DEFAULT_SEED,
                   max_rounds: int = 30):
        """Random pairs with ``per_bin`` pairs in each distance bin of (0, D).

        For each bin, anchors x are drawn among points whose farthest
        partner can reach the bin.  A target x + r e with r in the bin is
        snapped to the nearest point; half of the directions e are uniform
        and half aim at a hull vertex far enough away, so near-diameter
        separations are sampled as densely as short ones.  Bins that no
        pair of points can reach stay short.
        """
        from scipy.spatial import cKDTree

        points = np.asarray(points, dtype=float)
        n = points.shape[1]
        rng = np.random.default_rng(seed)
        edges = np.linspace(0.0, diameter, bins + 1)
        hull = _hull_points(points)
        far = _farthest_distances(points, hull)
        tree = cKDTree(points)
        I, J = [], []
        for b in range(bins):
            lo, hi = edges[b], edges[b + 1]
            anchors = np.flatnonzero(far >= lo)
            got = 0
            for _ in range(max_rounds):
                if got >= per_bin or anchors.size == 0:
                    break
                m = 2 * (per_bin - got) + 16
                xs = rng.choice(anchors, size=m)
                X = points[xs]
                e = rng.standard_normal((m, n))
                r_max = np.full(m, hi)
                dv = np.linalg.norm(X[:, None, :] - hull[None, :, :], axis=2)
                score = np.where((dv >= lo) & (dv > 0), rng.random(dv.shape), -1.0)
                v = np.argmax(score, axis=1)
                directed = (rng.random(m) < 0.5) & (score[np.arange(m), v] >= 0)
                to_v = hull[v] - X
                e[directed] = to_v[directed]
                r_max[directed] = np.minimum(hi, dv[np.arange(m), v][directed])
                e /= np.linalg.norm(e, axis=1)[:, None]
                r = lo + (r_max - lo) * rng.random(m)
                _, ys = tree.query(X + r[:, None] * e)
                dist = np.linalg.norm(points[ys] - X, axis=1)
                ok = (dist >= lo) & (dist < hi) & (ys != xs)
                take = min(per_bin - got, int(ok.sum()))
                I.append(xs[ok][:take])
                J.append(ys[ok][:take])
                got += take
        i = np.concatenate(I) if I else np.zeros(0, dtype=np.int64)
        j = np.concatenate(J) if J else np.zeros(0, dtype=np.int64)
        return cls(points, i, j, edges, seed, "stratified")

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "pairs": len(self),
            "seed": self.seed,
            "bins": len(self.edges) - 1,
            "bin_counts": self.bin_counts(),
        }


def _spread(points) -> float:
    return float(_farthest_distances(points).max())


def _hull_points(points) -> np.ndarray:
    n = points.shape[1]
    if n == 1:
        return points[[np.argmin(points[:, 0]), np.argmax(points[:, 0])]]
    if len(points) <= n + 1:
        return points
    from scipy.spatial import ConvexHull, QhullError
    try:
        return points[ConvexHull(points).vertices]
    except QhullError:  # degenerate (e.g. collinear) point sets
        return points


def _farthest_distances(points, hull=None) -> np.ndarray:
    """Distance from each point to the farthest point of the set.

    The farthest point is always a vertex of the convex hull, so only hull
    vertices are compared against.
    """
    cand = _hull_points(points) if hull is None else hull
    out = np.empty(len(points))
    step = max(1, 2_000_000 // max(1, len(cand)))
    for s in range(0, len(points), step):
        blk = points[s:s + step]
        out[s:s + step] = np.linalg.norm(blk[:, None, :] - cand[None, :, :], axis=2).max(axis=1)
    return out


@dataclass
class PairReport:
    check: str
    worst: float
    arg_pair: tuple | None
    checked: int
    tolerance: float
    skipped: dict = field(default_factory=dict)
    bin_worst: list = field(default_factory=list)
    sample: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "worst": self.worst,
            "arg_pair": None if self.arg_pair is None else [list(map(float, p)) for p in self.arg_pair],
            "checked": self.checked,
            "tolerance": self.tolerance,
            "skipped": self.skipped,
            "bin_worst": self.bin_worst,
            "sample": self.sample,
            **({"extra": self.extra} if self.extra else {}),
        }


def _report(check, values, pairs: PairSample, mask, tol, skipped, extra=None) -> PairReport:
    d, _ = pairs.geometry()
    vals = np.where(mask, values, -np.inf)
    checked = int(mask.sum())
    bins = len(pairs.edges) - 1
    which = np.clip(np.searchsorted(pairs.edges, d, side="right") - 1, 0, bins - 1)
    bin_worst = []
    for b in range(bins):
        sel = (which == b) & mask
        bin_worst.append(float(vals[sel].max()) if sel.any() else None)
    if checked == 0:
        return PairReport(check, float("-inf"), None, 0, tol, skipped, bin_worst,
                          pairs.describe(), extra or {})
    k = int(np.argmax(vals))
    arg = (pairs.x[k], pairs.y[k])
    return PairReport(check, float(vals[k]), arg, checked, float(tol), skipped, bin_worst,
                      pairs.describe(), extra or {})


def _modulus_at(mod: ModulusFn, d, strict: bool):
    """2 * mod(d/2); pairs beyond a pole cutoff raise or are masked."""
    z = 0.5 * d
    beyond = z > mod.z_cut * (1 + 1e-12) if mod.pole else np.zeros(len(z), bool)
    if beyond.any() and strict:
        raise ModulusPoleError(
            f"modulus has a pole at D/2 = {mod.half_diameter:g}; needed up to z = {z.max():.6g}"
            f" beyond the cutoff {mod.z_cut:.6g}"
        )
    out = np.full(len(z), np.nan)
    out[~beyond] = 2.0 * mod(z[~beyond])
    return out, beyond


def _values(f, pairs):
    v = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
    if len(v) != len(pairs.points):
        raise ValueError(f"function has {len(v)} values but the sample has {len(pairs.points)} points")
    return v


def check_modulus_of_continuity(v, eta: ModulusFn, pairs: PairSample,
                                tol: float = 1e-12) -> PairReport:
    vals = _values(v, pairs)
    d, _ = pairs.geometry()
    bound, beyond = _modulus_at(eta, d, strict=False)
    lhs = np.abs(vals[pairs.j] - vals[pairs.i])
    ok = ~beyond & np.isfinite(bound)
    return _report("continuity", lhs - bound, pairs, ok, tol,
                   {"beyond_cutoff": int(beyond.sum())})


def check_contraction_modulus(X, omega: ModulusFn, pairs: PairSample,
                              tol: float = 1e-12) -> PairReport:
    """Worst of (X(y) - X(x)).e - 2 omega(d/2); at most ``tol`` to pass."""
    F = X.values if isinstance(X, GridFunction) else np.asarray(X, dtype=float)
    F = F.reshape(len(pairs.points), -1)
    d, e = pairs.geometry()
    bound, beyond = _modulus_at(omega, d, strict=False)
    lhs = np.einsum("ij,ij->i", F[pairs.j] - F[pairs.i], e)
    ok = ~beyond & np.isfinite(bound) & np.all(np.isfinite(F[pairs.i]), 1) \
        & np.all(np.isfinite(F[pairs.j]), 1)
    return _report("contraction", lhs - bound, pairs, ok, tol,
                   {"beyond_cutoff": int(beyond.sum()),
                    "undefined_field": int((~np.isfinite(lhs)).sum())})


def check_convexity_modulus(V: Potential, Vt_prime: ModulusFn, pairs: PairSample,
                            tol: float = 1e-9) -> PairReport:
    d, e = pairs.geometry()
    bound, _ = _modulus_at(Vt_prime, d, strict=True)
    G = V.gradient(pairs.points)
    lhs = np.einsum("ij,ij->i", G[pairs.j] - G[pairs.i], e)
    return _report("convexity", bound - lhs, pairs, np.ones(len(d), bool), tol, {})


def optimal_convexity_modulus(V: Potential, half_diameter: float, z_grid: int,
                              pairs: PairSample) -> tuple[ModulusFn, list[float]]:
    """Largest piecewise-linear V~' on ``z_grid`` nodes that the sample admits.

    Node w_i takes the infimum of (grad V(y) - grad V(x)).e / 2 over the
    pairs whose half-distance lies in the support [w_{i-1}, w_{i+1}] of the
    node's hat function.  Linear interpolation then never exceeds any
    sampled pair's value, so the result passes ``check_convexity_modulus``
    on the same sample.  Nodes with no pair in their support are NaN and
    are returned as the list of missing z values.
    """
    if z_grid < 2:
        raise ValueError("need at least two modulus nodes")
    d, e = pairs.geometry()
    G = V.gradient(pairs.points)
    g = 0.5 * np.einsum("ij,ij->i", G[pairs.j] - G[pairs.i], e)
    z = 0.5 * d
    dz = half_diameter / (z_grid - 1)
    vals = np.full(z_grid, np.inf)
    # z lies in the supports of nodes floor(z/dz) and floor(z/dz) + 1
    k = np.clip(np.floor(z / dz).astype(int), 0, z_grid - 1)
    np.minimum.at(vals, k, g)
    np.minimum.at(vals, np.minimum(k + 1, z_grid - 1), g)
    # a pair sitting exactly on a node also belongs to the node below
    on = np.isclose(z, k * dz, rtol=0, atol=1e-14 * max(1.0, half_diameter)) & (k > 0)
    np.minimum.at(vals, k[on] - 1, g[on])
    missing = ~np.isfinite(vals)
    vals[missing] = np.nan
    mod = ModulusFn(half_diameter, vals, dz, interp="linear")
    return mod, (np.flatnonzero(missing) * dz).tolist()


def grad_log(phi: GridFunction) -> np.ndarray:
    """Centred differences of log phi, one-sided where a neighbour is missing.

    Components with no neighbour on either side are NaN.
    """
    g = phi.grid
    v = phi.values
    if np.any(v <= 0):
        k = int(np.argmin(v))
        raise NonPositiveError(f"phi not positive at node {g.points[k].tolist()} ({v[k]:.3e})")
    L = np.log(v)
    out = np.full((g.size, g.dimension), np.nan)
    for a in range(g.dimension):
        h = g.h[a]
        lo, hi = g.neighbors[a, 0], g.neighbors[a, 1]
        both = (lo >= 0) & (hi >= 0)
        out[both, a] = (L[hi[both]] - L[lo[both]]) / (2 * h)
        only_hi = (lo < 0) & (hi >= 0)
        out[only_hi, a] = (L[hi[only_hi]] - L[only_hi]) / h
        only_lo = (hi < 0) & (lo >= 0)
        out[only_lo, a] = (L[only_lo] - L[lo[only_lo]]) / h
    return out


def check_log_concavity(phi0: GridFunction, psi: ModulusFn, pairs: PairSample,
                        tol: float | None = None, c_tol: float | None = None,
                        exclude: float = 2.0) -> PairReport:
    """Worst of (grad log phi(y) - grad log phi(x)).e - 2 psi(d/2).

    Pairs with an endpoint within ``exclude * h`` of the boundary and pairs
    whose half-distance lies past psi's cutoff are skipped and counted.
    The default tolerance is ``c_tol * h``.
    """
    grid = phi0.grid
    if len(grid.points) != len(pairs.points):
        raise ValueError("pair sample was not drawn from this grid")
    h = max(grid.h)
    if tol is None:
        c_tol = DEFAULT_C_TOL_FLOOR if c_tol is None else c_tol
        tol = c_tol * h
    G = grad_log(phi0)
    d, e = pairs.geometry()
    bound, beyond = _modulus_at(psi, d, strict=False)
    near = grid.boundary_distance <= exclude * h * (1 + 1e-9)
    near_pair = near[pairs.i] | near[pairs.j]
    lhs = np.einsum("ij,ij->i", G[pairs.j] - G[pairs.i], e)
    ok = ~beyond & ~near_pair & np.isfinite(lhs)
    skipped = {
        "beyond_cutoff": int(beyond.sum()),
        "near_boundary": int((near_pair & ~beyond).sum()),
    }
    return _report("log-concavity", lhs - bound, pairs, ok, tol, skipped,
                   {"h": h, "c_tol": None if c_tol is None else c_tol})


def calibrate_c_tol(h: float, floor: float = DEFAULT_C_TOL_FLOOR, exclude: float = 2.0) -> dict:
    """C_tol from the one-dimensional equality case.

    On (-1/2, 1/2) with V = 0 the ground state is cos(pi z) and
    (log cos)'(z) = -pi tan(pi z) is the sharp modulus, so every symmetric
    pair is an equality.  The worst discrete violation over all pairs,
    divided by h, calibrates the tolerance; ``floor`` keeps it positive
    when the discretisation errs on the safe side.
    """
    from .core.domain import ConvexDomain
    from .core.potential import ZeroPotential
    from .schrod_nd import discretize, smallest_eigenpairs

    op = discretize(ConvexDomain.interval(-0.5, 0.5), ZeroPotential(1), h)
    eig = smallest_eigenpairs(op, k=1, tol=1e-11)
    phi = GridFunction(op.grid, eig.vectors[:, 0])
    psi = ModulusFn.from_function(lambda z: -np.pi * np.tan(np.pi * z), 0.5, pole=True)
    rep = check_log_concavity(phi, psi, PairSample.all_pairs(op.grid.points, 1.0), tol=np.inf,
                              exclude=exclude)
    observed = max(rep.worst, 0.0) / h
    return {"h": h, "worst": rep.worst, "observed_c": observed, "c_tol": max(observed, floor)}


__all__ = [
    "PairSample", "PairReport", "ModulusPoleError", "NonPositiveError",
    "check_modulus_of_continuity", "check_contraction_modulus", "check_convexity_modulus",
    "optimal_convexity_modulus", "check_log_concavity", "grad_log", "calibrate_c_tol",
]
