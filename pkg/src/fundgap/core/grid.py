"""Uniform lattices restricted to a convex domain.

Nodes whose neighbours fall outside the domain carry the fractional
distance (in units of the spacing) from the node to the boundary along
each axis direction; the Shortley-Weller stencil in ``schrod_nd`` uses it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import ConvexDomain

# Lattice points closer than THETA_MIN * h to the boundary are treated as
# boundary points; keeps 1/theta stencil weights bounded.
THETA_MIN = 1e-3
_BISECT_ITERS = 45  # 2**-45 < 1e-12


class DegenerateGridError(ValueError):
    pass


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Grid:
    """Interior lattice nodes of ``domain`` with spacing ``h``.

    Attributes
    ----------
    points : (N, n) array of interior node coordinates
    index : (N, n) integer lattice coordinates
    neighbors : (n, 2, N) int array; ``neighbors[a, 0]`` is the index of the
        node one step in the -x_a direction (``[a, 1]`` for +x_a), or -1 if
        that lattice point is not an interior node.
    theta : (n, 2, N) float array of fractional boundary distances, equal to
        1 wherever the neighbour is an interior node.
    """

    def __init__(self, domain: ConvexDomain, h):
        n = domain.dimension
        h = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
        if np.any(h <= 0):
            raise DegenerateGridError(f"grid spacing must be positive, got {h}")
        self.domain = domain
        self.h = tuple(float(v) for v in h)
        anchor = domain.lattice_anchor()
        lo, hi = domain.bounding_box()
        eps = 1e-9
        imin = np.ceil((lo - anchor) / h - eps).astype(int)
        imax = np.floor((hi - anchor) / h + eps).astype(int)
        self.anchor = tuple(anchor)
        self.lattice_min = tuple(imin)
        self.lattice_shape = tuple(imax - imin + 1)

        axes = [np.arange(a, b + 1) for a, b in zip(imin, imax)]
        mesh = np.meshgrid(*axes, indexing="ij")
        lat = np.stack([m.ravel() for m in mesh], axis=1)
        coords = anchor + lat * h
        phi = domain.implicit(coords)
        inside = phi < -THETA_MIN * h.min()
        if not inside.any():
            raise DegenerateGridError(f"no interior nodes for spacing {self.h}")

        self.index = _readonly(lat[inside])
        self.points = _readonly(coords[inside])
        self.lattice_flat = _readonly(np.flatnonzero(inside))
        lookup = np.full(lat.shape[0], -1, dtype=np.int64)
        lookup[inside] = np.arange(inside.sum())
        self._lookup = lookup.reshape(self.lattice_shape)

        N = len(self.points)
        nbr = np.full((n, 2, N), -1, dtype=np.int64)
        theta = np.ones((n, 2, N))
        rel = self.index - imin
        shape = np.array(self.lattice_shape)
        for a in range(n):
            for s, sign in enumerate((-1, 1)):
                j = rel.copy()
                j[:, a] += sign
                ok = (j[:, a] >= 0) & (j[:, a] < shape[a])
                idx = np.full(N, -1, dtype=np.int64)
                idx[ok] = self._lookup[tuple(j[ok].T)]
                nbr[a, s] = idx
                missing = np.flatnonzero(idx < 0)
                if missing.size:
                    theta[a, s, missing] = self._boundary_fraction(
                        self.points[missing], a, sign, h[a]
                    )
        self.neighbors = _readonly(nbr)
        self.theta = _readonly(theta)
        self.boundary_distance = _readonly(domain.distance_to_boundary(self.points))

    def _boundary_fraction(self, pts, axis, sign, h):
        step = np.zeros(pts.shape[1])
        step[axis] = sign
        far = self.domain.implicit(pts + h * step)
        frac = np.ones(len(pts))
        cross = far >= 0
        if not cross.any():
            return frac
        p = pts[cross]
        lo = np.zeros(len(p))
        hi = np.full(len(p), h)
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            outside = self.domain.implicit(p + mid[:, None] * step) >= 0
            hi = np.where(outside, mid, hi)
            lo = np.where(outside, lo, mid)
        frac[cross] = hi / h
        return frac

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    @property
    def size(self) -> int:
        return len(self.points)

    def is_irregular(self) -> np.ndarray:
        return np.any(self.theta < 1.0, axis=(0, 1))

    def nodes_per_axis(self) -> tuple[int, ...]:
        return tuple(int(np.ptp(self.index[:, a])) + 1 for a in range(self.dimension))

    def lattice_values(self, values, fill=0.0) -> np.ndarray:
        """Embed interior values into the full bounding lattice."""
        out = np.full(int(np.prod(self.lattice_shape)), fill, dtype=float)
        out[self.lattice_flat] = values
        return out.reshape(self.lattice_shape)

    def node_at(self, point, tol=1e-9) -> int:
        """Interior index of the node at ``point`` or -1."""
        p = np.asarray(point, dtype=float).reshape(-1)
        rel = (p - np.asarray(self.anchor)) / np.asarray(self.h)
        k = np.rint(rel)
        if np.any(np.abs(rel - k) > tol):
            return -1
        j = k.astype(int) - np.asarray(self.lattice_min)
        if np.any(j < 0) or np.any(j >= np.asarray(self.lattice_shape)):
            return -1
        return int(self._lookup[tuple(j)])

    def describe(self) -> dict:
        return {
            "h": list(self.h),
            "interior_nodes": self.size,
            "irregular_nodes": int(self.is_irregular().sum()),
            "lattice_shape": list(self.lattice_shape),
        }


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.shape[0]}")
        object.__setattr__(self, "values", _readonly(v))

    def to_csv(self, path) -> None:
        write_grid_csv(path, self.grid, self.values)


def write_grid_csv(path, grid: Grid, values, name="value") -> None:
    values = np.asarray(values)
    cols = [f"x{i + 1}" for i in range(grid.dimension)]
    if values.ndim == 1:
        cols.append(name)
        rows = np.column_stack([grid.points, values])
    else:
        cols += [f"{name}{i + 1}" for i in range(values.shape[1])]
        rows = np.column_stack([grid.points, values])
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def write_profile_csv(path, columns: dict) -> None:
    """Write equal-length 1D arrays as CSV columns."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in data:
            w.writerow([repr(float(x)) for x in r])
