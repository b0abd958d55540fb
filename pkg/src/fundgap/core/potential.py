"""Scalar potentials V on R^n with gradient access."""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .grid import Grid


class PotentialError(ValueError):
    pass


def _as_points(points, dim):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if dim == 1 else pts.reshape(1, -1)
    if pts.shape[1] != dim:
        raise PotentialError(f"points of dimension {pts.shape[1]} for a {dim}D potential")
    return pts


class Potential:
    """Base class.  Subclasses implement ``_value`` and optionally ``_gradient``.

    ``value``/``gradient`` take an (N, n) array (or a single point) and
    return arrays of shape (N,) and (N, n).  For 1D potentials ``scalar`` and
    ``scalar_derivative`` are fast float paths used by the ODE integrators.
    """

    dimension: int = 1
    gradient_mode = "analytic"
    h_g = 1e-4
    ast = None

    def value(self, points) -> np.ndarray:
        return self._value(_as_points(points, self.dimension))

    def gradient(self, points) -> np.ndarray:
        pts = _as_points(points, self.dimension)
        if self.gradient_mode == "analytic":
            return self._gradient(pts)
        return self.central_gradient(pts, self.h_g)

    def central_gradient(self, points, h_g=None) -> np.ndarray:
        """Fourth-order central differences with step ``h_g``."""
        h = self.h_g if h_g is None else h_g
        pts = _as_points(points, self.dimension)
        out = np.empty_like(pts)
        for a in range(self.dimension):
            e = np.zeros(self.dimension)
            e[a] = h
            f = self._value
            out[:, a] = (-f(pts + 2 * e) + 8 * f(pts + e) - 8 * f(pts - e) + f(pts - 2 * e)) / (12 * h)
        return out

    def scalar(self, z: float) -> float:
        return float(self._value(np.array([[z]]))[0])

    def scalar_derivative(self, z: float) -> float:
        return float(self.gradient(np.array([[z]]))[0, 0])

    def with_gradient_mode(self, mode: str, h_g: float | None = None) -> "Potential":
        import copy

        if mode not in ("analytic", "central"):
            raise PotentialError(f"unknown gradient mode {mode!r}")
        if mode == "analytic" and not self.has_analytic_gradient():
            raise PotentialError("analytic gradient unavailable for this potential")
        p = copy.copy(self)
        p.gradient_mode = mode
        if h_g is not None:
            p.h_g = float(h_g)
        return p

    def has_analytic_gradient(self) -> bool:
        return True

    def text(self) -> str:
        if self.ast is None:
            return repr(self)
        return ex.to_text(self.ast)

    def describe(self) -> dict:
        return {"form": type(self).__name__, "text": self.text(),
                "dimension": self.dimension, "gradient_mode": self.gradient_mode}

    # 1D helpers

    def range_on(self, a: float, b: float, samples: int = 4097) -> tuple[float, float]:
        """Sampled (inf, sup) of a 1D potential on [a, b]."""
        self._need_1d()
        z = np.linspace(a, b, samples)
        v = self._value(z[:, None])
        return float(v.min()), float(v.max())

    def odd_part(self, half_width: float, samples: int = 1025) -> float:
        """Largest |V(z) - V(-z)| / 2 over [0, half_width]."""
        self._need_1d()
        z = np.linspace(0.0, half_width, samples)
        return float(np.max(np.abs(self._value(z[:, None]) - self._value(-z[:, None]))) / 2)

    def _need_1d(self):
        if self.dimension != 1:
            raise PotentialError("operation needs a one-dimensional potential")

    def __eq__(self, other):
        return isinstance(other, Potential) and self.ast is not None and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)


def _radius(pts):
    return np.sqrt(np.sum(pts * pts, axis=1))


class ExpressionPotential(Potential):
    def __init__(self, ast, dimension: int, gradient_mode: str = "analytic", h_g: float = 1e-4):
        self.ast = ast
        self.dimension = int(dimension)
        self.h_g = float(h_g)
        names = ex.variables(ast)
        for v in names:
            if v != "r" and int(v[1:]) > self.dimension:
                raise ex.DimensionError(v, self.dimension, 0)
        self._vec = ex.compile_vector(ast)
        self._sc = ex.compile_scalar(ast)
        try:
            grads = [ex.derivative(ast, f"x{k + 1}") for k in range(self.dimension)]
            self._grad_ast = grads
            self._gvec = [ex.compile_vector(g) for g in grads]
            self._gsc = [ex.compile_scalar(g) for g in grads]
        except ex.NotDifferentiable:
            self._grad_ast = None
        self.gradient_mode = gradient_mode if self._grad_ast is not None else "central"

    def has_analytic_gradient(self):
        return self._grad_ast is not None

    def _value(self, pts):
        X = pts.T
        out = self._vec(X, _radius(pts))
        return np.broadcast_to(np.asarray(out, dtype=float), (len(pts),)).copy()

    def _gradient(self, pts):
        X, r = pts.T, _radius(pts)
        cols = [np.broadcast_to(np.asarray(g(X, r), dtype=float), (len(pts),)) for g in self._gvec]
        return np.stack(cols, axis=1)

    def scalar(self, z):
        return float(self._sc((z,), abs(z)))

    def scalar_derivative(self, z):
        if self.gradient_mode == "analytic":
            return float(self._gsc[0]((z,), abs(z)))
        h = self.h_g
        f = self.scalar
        return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)

    def __repr__(self):
        return f"ExpressionPotential({self.text()!r}, dim={self.dimension})"


def parse_potential(text: str, dimension: int) -> ExpressionPotential:
    return ExpressionPotential(ex.parse_expression(text, dimension), dimension)


def _sum_squares(names):
    node = None
    for n in names:
        term = ex.BinOp("^", ex.Var(n), ex.Num(2.0))
        node = term if node is None else ex.BinOp("+", node, term)
    return node


class ZeroPotential(Potential):
    def __init__(self, dimension: int = 1):
        self.dimension = dimension
        self.ast = ex.Num(0.0)

    def _value(self, pts):
        return np.zeros(len(pts))

    def _gradient(self, pts):
        return np.zeros_like(pts)

    def scalar(self, z):
        return 0.0

    def scalar_derivative(self, z):
        return 0.0

    def __repr__(self):
        return f"ZeroPotential(dim={self.dimension})"


class QuadraticPotential(Potential):
    """V(x) = (K/2)|x|^2."""

    def __init__(self, K: float, dimension: int = 1):
        self.K = float(K)
        self.dimension = dimension
        names = [f"x{i + 1}" for i in range(dimension)]
        self.ast = ex.BinOp("*", ex.Num(self.K / 2), _sum_squares(names))

    def _value(self, pts):
        return 0.5 * self.K * np.sum(pts * pts, axis=1)

    def _gradient(self, pts):
        return self.K * pts

    def scalar(self, z):
        return 0.5 * self.K * z * z

    def scalar_derivative(self, z):
        return self.K * z

    def __repr__(self):
        return f"QuadraticPotential(K={self.K}, dim={self.dimension})"


class DoubleWellPotential(Potential):
    """V(x) = -a|x|^2 + b|x|^4; in 1D the familiar -a z^2 + b z^4."""

    def __init__(self, a: float, b: float, dimension: int = 1):
        self.a, self.b = float(a), float(b)
        self.dimension = dimension
        var = ex.Var("x1") if dimension == 1 else ex.Var("r")
        self.ast = ex.BinOp(
            "+",
            ex.BinOp("*", ex.Num(-self.a), ex.BinOp("^", var, ex.Num(2.0))),
            ex.BinOp("*", ex.Num(self.b), ex.BinOp("^", var, ex.Num(4.0))),
        )

    def _value(self, pts):
        r2 = np.sum(pts * pts, axis=1)
        return -self.a * r2 + self.b * r2 * r2

    def _gradient(self, pts):
        r2 = np.sum(pts * pts, axis=1)
        return (-2 * self.a + 4 * self.b * r2)[:, None] * pts

    def scalar(self, z):
        z2 = z * z
        return -self.a * z2 + self.b * z2 * z2

    def scalar_derivative(self, z):
        return (-2 * self.a + 4 * self.b * z * z) * z

    def __repr__(self):
        return f"DoubleWellPotential(a={self.a}, b={self.b}, dim={self.dimension})"


class RadialPlusTransversePotential(Potential):
    """V(x) = W(|x|) + c * (x2^2 + ... + xn^2) for a 1D profile W."""

    def __init__(self, profile: Potential, c: float, dimension: int = 2):
        if profile.dimension != 1:
            raise PotentialError("radial profile must be one-dimensional")
        if dimension < 2:
            raise PotentialError("radial-plus-transverse needs dimension >= 2")
        self.profile = profile
        self.c = float(c)
        self.dimension = dimension
        if profile.ast is not None:
            radial = ex.substitute(profile.ast, {"x1": ex.Var("r")})
            trans = _sum_squares([f"x{i + 1}" for i in range(1, dimension)])
            self.ast = ex.BinOp("+", radial, ex.BinOp("*", ex.Num(self.c), trans))

    def _value(self, pts):
        r = _radius(pts)
        return self.profile.value(r[:, None]) + self.c * np.sum(pts[:, 1:] ** 2, axis=1)

    def _gradient(self, pts):
        r = _radius(pts)
        dW = self.profile.gradient(r[:, None])[:, 0]
        unit = np.divide(pts, r[:, None], out=np.zeros_like(pts), where=r[:, None] > 0)
        g = dW[:, None] * unit
        g[:, 1:] += 2 * self.c * pts[:, 1:]
        return g

    def has_analytic_gradient(self):
        return self.profile.gradient_mode == "analytic"

    def __repr__(self):
        return f"RadialPlusTransversePotential({self.profile!r}, c={self.c}, dim={self.dimension})"


class GridPotential(Potential):
    """Potential known only through its values at the interior nodes of a Grid."""

    gradient_mode = "central"

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.dimension = grid.dimension
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.size,):
            raise PotentialError(f"expected {grid.size} node values, got shape {v.shape}")
        self.values = v
        self.values.setflags(write=False)

    def has_analytic_gradient(self):
        return False

    def _nodes(self, pts):
        idx = np.array([self.grid.node_at(p) for p in pts])
        if np.any(idx < 0):
            bad = pts[np.flatnonzero(idx < 0)[0]]
            raise PotentialError(f"grid-sampled potential evaluated off its grid at {bad.tolist()}")
        return idx

    def _value(self, pts):
        return self.values[self._nodes(pts)]

    def gradient(self, points):
        return self.node_gradient()[self._nodes(_as_points(points, self.dimension))]

    def central_gradient(self, points, h_g=None):
        return self.gradient(points)

    def node_gradient(self) -> np.ndarray:
        """Second-order differences at every node, one-sided where a neighbour is missing."""
        g = self.grid
        out = np.zeros((g.size, g.dimension))
        v = self.values
        for a in range(g.dimension):
            h = g.h[a]
            lo, hi = g.neighbors[a, 0], g.neighbors[a, 1]
            both = (lo >= 0) & (hi >= 0)
            out[both, a] = (v[hi[both]] - v[lo[both]]) / (2 * h)
            only_hi = (lo < 0) & (hi >= 0)
            out[only_hi, a] = (v[hi[only_hi]] - v[only_hi]) / h
            only_lo = (hi < 0) & (lo >= 0)
            out[only_lo, a] = (v[only_lo] - v[lo[only_lo]]) / h
        return out

    def __repr__(self):
        return f"GridPotential(nodes={self.grid.size})"


def potential_from_text(text: str, dimension: int) -> Potential:
    """Build a potential from CLI text.

    Besides plain expressions this accepts ``zero``, ``quadratic:K``,
    ``double-well:A,B`` and ``radial-plus-transverse:A,B,C`` (double-well
    profile plus ``C`` times the transverse squares).
    """
    t = text.strip()
    head, sep, rest = t.partition(":")
    key = head.strip().lower()
    if sep and key in ("quadratic", "double-well", "radial-plus-transverse"):
        try:
            nums = [float(v) for v in rest.split(",")]
        except ValueError:
            raise PotentialError(f"bad parameters in {text!r}") from None
        if key == "quadratic" and len(nums) == 1:
            return QuadraticPotential(nums[0], dimension)
        if key == "double-well" and len(nums) == 2:
            return DoubleWellPotential(nums[0], nums[1], dimension)
        if key == "radial-plus-transverse" and len(nums) == 3:
            return RadialPlusTransversePotential(DoubleWellPotential(nums[0], nums[1], 1), nums[2], dimension)
        raise PotentialError(f"wrong number of parameters in {text!r}")
    if key == "zero" and not sep:
        return ZeroPotential(dimension)
    return parse_potential(t, dimension)


def require_even(V: Potential, half_width: float, tol: float = 1e-12) -> None:
    odd = V.odd_part(half_width)
    scale = max(1.0, float(np.max(np.abs(V.value(np.linspace(0, half_width, 257)[:, None])))))
    if odd > tol * scale:
        raise PotentialError(
            f"comparison potential must be even; odd part {odd:.3e} exceeds {tol:g}"
        )


__all__ = [
    "Potential", "ExpressionPotential", "ZeroPotential", "QuadraticPotential",
    "DoubleWellPotential", "RadialPlusTransversePotential", "GridPotential",
    "PotentialError", "parse_potential", "potential_from_text", "require_even",
]

