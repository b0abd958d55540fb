"""Scalar functions on [0, D/2] used as moduli (continuity, convexity, concavity)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class ModulusRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ModulusFn:
    """Samples of a modulus on the uniform grid ``z_i = i * dz``.

    With ``pole=True`` the function blows up at ``half_diameter`` and the
    last stored sample sits at ``z_cut < half_diameter``; evaluating beyond
    ``z_cut`` raises :class:`ModulusRangeError`.  NaN samples mark missing
    values and force linear interpolation.
    """

    half_diameter: float
    values: np.ndarray
    dz: float
    pole: bool = False
    interp: str = "cubic"
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("a modulus needs at least two samples")
        if not self.dz > 0:
            raise ValueError("sample spacing must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        end = (len(v) - 1) * self.dz
        if self.pole:
            if not end < self.half_diameter:
                raise ValueError("pole modulus must stop short of D/2")
        elif abs(end - self.half_diameter) > 1e-9 * max(1.0, self.half_diameter):
            raise ValueError(f"samples end at {end}, expected D/2 = {self.half_diameter}")
        if self.interp not in ("cubic", "linear"):
            raise ValueError(f"unknown interpolation {self.interp!r}")

    @classmethod
    def from_function(cls, f, half_diameter, samples=2049, pole=False, interp="cubic"):
        """Sample ``f`` (vectorised) on [0, D/2]; a pole drops the last node."""
        dz = half_diameter / (samples - 1)
        z = dz * np.arange(samples - 1 if pole else samples)
        return cls(float(half_diameter), np.asarray(f(z), dtype=float), dz, pole, interp)

    @property
    def z(self) -> np.ndarray:
        return self.dz * np.arange(len(self.values))

    @property
    def z_cut(self) -> float:
        return self.dz * (len(self.values) - 1)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        top = self.z_cut if self.pole else self.half_diameter
        slack = 1e-12 * max(1.0, top)
        if z.size and (z.min() < -slack or z.max() > top + slack):
            what = "beyond the cutoff of a pole modulus" if self.pole else "outside [0, D/2]"
            raise ModulusRangeError(
                f"modulus evaluated {what}: z in [{z.min():.6g}, {z.max():.6g}], limit {top:.6g}"
            )
        zc = np.clip(z, 0.0, self.z_cut)
        if self.interp == "linear":
            return np.interp(zc, self.z, self.values)
        if self._spline is None:
            object.__setattr__(self, "_spline", self._build_spline())
        spline, lo, hi = self._spline
        if spline is None:
            return np.interp(zc, self.z, self.values)
        out = spline(np.clip(zc, lo, hi))
        return np.where((zc < lo - slack) | (zc > hi + slack), np.nan, out)

    def _build_spline(self):
        # cubic on the contiguous run of finite samples; NaN outside it
        ok = np.isfinite(self.values)
        idx = np.flatnonzero(ok)
        if idx.size < 4 or idx[-1] - idx[0] + 1 != idx.size:
            return None, 0.0, self.z_cut
        z = self.z[idx]
        return CubicSpline(z, self.values[idx]), z[0], z[-1]

    def scaled(self, c: float) -> "ModulusFn":
        return ModulusFn(self.half_diameter, c * self.values, self.dz, self.pole, self.interp)

    def describe(self) -> dict:
        return {
            "half_diameter": self.half_diameter,
            "samples": len(self.values),
            "dz": self.dz,
            "pole": self.pole,
            "z_cut": self.z_cut,
        }


def _stencil_weights(offsets) -> np.ndarray:
    """First-derivative weights on integer offsets (unit spacing)."""
    x = np.asarray(offsets, dtype=float)
    m = len(x)
    A = np.vander(x, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)


def uniform_derivative(values, dz, order: int = 6) -> np.ndarray:
    """Finite-difference derivative of uniformly spaced samples.

    Central stencils of the given (even) order in the interior, shifted
    stencils of the same width near the ends.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    width = order + 1
    if n < width:
        return np.gradient(v, dz)
    half = order // 2
    d = np.empty(n)
    wc = _stencil_weights(np.arange(-half, half + 1))
    d[half:n - half] = sum(wc[j] * v[j:n - order + j] for j in range(width)) / dz
    for i in range(half):
        w = _stencil_weights(np.arange(width) - i)
        d[i] = w @ v[:width] / dz
        d[n - 1 - i] = -(w @ v[::-1][:width]) / dz
    return d
