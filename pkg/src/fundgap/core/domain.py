"""Convex domains: intervals, boxes, discs and convex polygons."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexDomain:
    """A bounded convex region in R^n.

    Construct through :meth:`interval`, :meth:`rectangle`, :meth:`disc` or
    :meth:`polygon` rather than directly.  Every domain exposes an implicit
    function ``implicit(points)`` which is negative inside, zero on the
    boundary and positive outside; for interior points its negative is the
    Euclidean distance to the boundary.
    """

    kind: str
    params: tuple
    dimension: int
    center: tuple = field(default=())

    # -- constructors -----------------------------------------------------

    @classmethod
    def interval(cls, a: float, b: float) -> "ConvexDomain":
        a, b = float(a), float(b)
        if not b > a:
            raise DomainError(f"interval needs b > a, got ({a}, {b})")
        return cls("interval", (a, b), 1, ((a + b) / 2,))

    @classmethod
    def rectangle(cls, widths, center=None) -> "ConvexDomain":
        widths = tuple(float(w) for w in widths)
        if not widths or min(widths) <= 0:
            raise DomainError(f"rectangle widths must be positive, got {widths}")
        if center is None:
            center = (0.0,) * len(widths)
        center = tuple(float(c) for c in center)
        if len(center) != len(widths):
            raise DomainError("rectangle center and widths differ in dimension")
        return cls("rectangle", widths, len(widths), center)

    @classmethod
    def square(cls, side: float = 1.0) -> "ConvexDomain":
        return cls.rectangle((side, side))

    @classmethod
    def disc(cls, radius: float, center=(0.0, 0.0)) -> "ConvexDomain":
        radius = float(radius)
        if radius <= 0:
            raise DomainError(f"disc radius must be positive, got {radius}")
        center = tuple(float(c) for c in center)
        if len(center) != 2:
            raise DomainError("disc center must be a 2D point")
        return cls("disc", (radius,), 2, center)

    @classmethod
    def polygon(cls, vertices) -> "ConvexDomain":
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise DomainError("polygon needs at least three 2D vertices")
        m = len(verts)
        for i in range(m):
            p, q, r = verts[i], verts[(i + 1) % m], verts[(i + 2) % m]
            cross = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0])
            if not cross > 0:
                raise DomainError(
                    "polygon vertices must be strictly convex and counterclockwise "
                    f"(cross product {cross:g} at vertex {(i + 1) % m})"
                )
        vt = tuple(tuple(map(float, v)) for v in verts)
        return cls("polygon", vt, 2, tuple(verts.mean(axis=0)))

    # -- geometry ---------------------------------------------------------

    def diameter(self) -> float:
        if self.kind == "interval":
            a, b = self.params
            return b - a
        if self.kind == "rectangle":
            return float(np.linalg.norm(self.params))
        if self.kind == "disc":
            return 2.0 * self.params[0]
        verts = np.asarray(self.params)
        return max(float(np.linalg.norm(p - q)) for p, q in combinations(verts, 2))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "interval":
            a, b = self.params
            return np.array([a]), np.array([b])
        if self.kind == "rectangle":
            c, w = np.asarray(self.center), np.asarray(self.params)
            return c - w / 2, c + w / 2
        if self.kind == "disc":
            c, r = np.asarray(self.center), self.params[0]
            return c - r, c + r
        verts = np.asarray(self.params)
        return verts.min(axis=0), verts.max(axis=0)

    def lattice_anchor(self) -> np.ndarray:
        """Point through which grid lattices are laid.

        Box-like domains anchor at a corner so that widths commensurate with
        the spacing put the boundary exactly on lattice lines; discs anchor at
        the center to keep the lattice symmetric.
        """
        if self.kind in ("interval", "rectangle"):
            return self.bounding_box()[0]
        if self.kind == "disc":
            return np.asarray(self.center)
        return self.bounding_box()[0]

    def implicit(self, points) -> np.ndarray:
        pts = self._as_points(points)
        if self.kind == "interval":
            a, b = self.params
            x = pts[:, 0]
            return np.maximum(a - x, x - b)
        if self.kind == "rectangle":
            c, w = np.asarray(self.center), np.asarray(self.params)
            return np.max(np.abs(pts - c) - w / 2, axis=1)
        if self.kind == "disc":
            c = np.asarray(self.center)
            return np.linalg.norm(pts - c, axis=1) - self.params[0]
        verts = np.asarray(self.params)
        edges = np.roll(verts, -1, axis=0) - verts
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        offsets = np.einsum("ij,ij->i", normals, verts)
        return np.max(pts @ normals.T - offsets, axis=1)

    def contains(self, points) -> np.ndarray:
        """Strict interior test."""
        return self.implicit(points) < 0

    def distance_to_boundary(self, points) -> np.ndarray:
        """Distance to the boundary for interior points (zero outside)."""
        return np.maximum(-self.implicit(points), 0.0)

    def _as_points(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(1, -1) if self.dimension > 1 else pts.reshape(-1, 1)
        if pts.shape[1] != self.dimension:
            raise DomainError(
                f"points have dimension {pts.shape[1]}, domain has {self.dimension}"
            )
        return pts

    def describe(self) -> dict:
        out = {"kind": self.kind, "dimension": self.dimension, "diameter": self.diameter()}
        if self.kind == "interval":
            out["a"], out["b"] = self.params
        elif self.kind == "rectangle":
            out["widths"] = list(self.params)
            out["center"] = list(self.center)
        elif self.kind == "disc":
            out["radius"] = self.params[0]
            out["center"] = list(self.center)
        else:
            out["vertices"] = [list(v) for v in self.params]
        return out


def diameter(domain: ConvexDomain) -> float:
    return domain.diameter()


def parse_domain(text: str) -> ConvexDomain:
    """Parse a compact domain description.

    Accepted forms::

        interval:A,B        square:S          rect:W1xW2[xW3]
        disc:R              disc:R@CX,CY      polygon:X1,Y1;X2,Y2;...
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "interval":
            a, b = (float(v) for v in rest.split(","))
            return ConvexDomain.interval(a, b)
        if kind == "square":
            return ConvexDomain.square(float(rest))
        if kind in ("rect", "rectangle"):
            return ConvexDomain.rectangle([float(v) for v in rest.lower().split("x")])
        if kind == "disc":
            radius, _, c = rest.partition("@")
            center = tuple(float(v) for v in c.split(",")) if c else (0.0, 0.0)
            return ConvexDomain.disc(float(radius), center)
        if kind == "polygon":
            verts = [tuple(float(v) for v in p.split(",")) for p in rest.split(";") if p.strip()]
            return ConvexDomain.polygon(verts)
    except DomainError:
        raise
    except ValueError as exc:
        raise DomainError(f"cannot parse domain {text!r}: {exc}") from None
    raise DomainError(f"unknown domain kind {kind!r} in {text!r}")
