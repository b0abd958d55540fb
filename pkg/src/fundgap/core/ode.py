"""Adaptive Dormand-Prince 5(4) integration for small ODE systems.

The state is a tuple of Python floats; for the one- and two-component
systems used here this is several times faster than going through numpy
or ``scipy.integrate.solve_ivp``.  The local error is controlled per unit
length: a step of size ``h`` is accepted when ``max|err| <= tol * |h|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StepSizeUnderflow(RuntimeError):
    pass


_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def dp_step(f, z, y, h, k1=None):
    """One Dormand-Prince step.  Returns (y_new, err_max, k7)."""
    m = len(y)
    ks = [k1 if k1 is not None else f(z, y)]
    for s in range(1, 7):
        a = _A[s]
        ys = tuple(y[i] + h * sum(a[j] * ks[j][i] for j in range(s)) for i in range(m))
        ks.append(f(z + _C[s] * h, ys))
    y_new = ys  # stage 7 is evaluated at the 5th-order solution (FSAL)
    err = max(abs(h * sum(_E[j] * ks[j][i] for j in range(7))) for i in range(m))
    return y_new, err, ks[6]


@dataclass
class Solution:
    z: np.ndarray            # accepted nodes, in integration order
    y: np.ndarray            # (nodes, m)
    dy: np.ndarray           # right-hand side at the nodes
    sample_z: np.ndarray
    sample_y: np.ndarray
    stopped: bool
    rejected: int

    @property
    def end(self):
        return self.z[-1], self.y[-1]


def integrate(f, z0, y0, z1, tol=1e-10, sample_at=None, stop=None, h0=None,
              hmin_rel=1e-14, max_steps=2_000_000):
    """Integrate ``y' = f(z, y)`` from ``z0`` to ``z1`` (either direction).

    Parameters
    ----------
    f : callable(z, tuple) -> tuple
    sample_at : increasing-in-direction node positions the integrator is
        forced to land on exactly; their states are returned in
        ``sample_y``.
    stop : optional callable(z, y) -> bool checked after each accepted step;
        returning True ends the integration early.
    """
    y = tuple(float(v) for v in y0)
    z, span = float(z0), float(z1) - float(z0)
    direction = 1.0 if span >= 0 else -1.0
    total = abs(span)
    samples = [] if sample_at is None else [float(s) for s in sample_at]
    si = 0
    out_sz, out_sy = [], []
    while si < len(samples) and direction * (samples[si] - z) <= 0:
        if samples[si] == z:
            out_sz.append(z)
            out_sy.append(y)
        si += 1
    zs, ys = [z], [y]
    k1 = f(z, y)
    dys = [k1]
    if total == 0:
        return Solution(np.array(zs), np.array(ys), np.array(dys), np.array(out_sz),
                        np.array(out_sy).reshape(len(out_sz), len(y)), False, 0)
    h = direction * (h0 if h0 else min(total, 1e-2 * max(total, 1e-3)))
    rejected = 0
    stopped = False
    hmin = hmin_rel * max(1.0, abs(z0), abs(z1))
    for _ in range(max_steps):
        remaining = z1 - z
        if direction * remaining <= 0:
            break
        target = z1
        if si < len(samples):
            target = samples[si]
        hit = False
        if direction * (z + h - target) >= -1e-14 * max(1.0, abs(target)):
            h = target - z
            hit = True
        y_new, err, k7 = dp_step(f, z, y, h, k1)
        bound = tol * abs(h)
        if err <= bound or abs(h) <= hmin:
            if err > bound:
                raise StepSizeUnderflow(f"step size underflow at z={z:.12g} (h={h:.3e})")
            z = target if hit else z + h
            y = y_new
            k1 = k7
            zs.append(z)
            ys.append(y)
            dys.append(k1)
            if hit and si < len(samples) and target == samples[si]:
                out_sz.append(z)
                out_sy.append(y)
                si += 1
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (bound / err) ** 0.25))
            h = h * fac if not hit else direction * max(abs(h) * fac, abs(zs[-1] - zs[-2]))
            if stop is not None and stop(z, y):
                stopped = True
                break
        else:
            rejected += 1
            h = h * max(0.2, 0.9 * (bound / err) ** 0.25)
        if abs(h) < hmin:
            h = direction * hmin
    else:
        raise StepSizeUnderflow(f"too many steps integrating to {z1}")
    m = len(y)
    return Solution(np.array(zs), np.array(ys).reshape(-1, m), np.array(dys).reshape(-1, m),
                    np.array(out_sz), np.array(out_sy).reshape(len(out_sz), m), stopped, rejected)


def integrate_scalar(f, z0, y0, z1, tol=1e-10, stop=None, h0=None, hmin_rel=1e-14,
                     max_steps=2_000_000):
    """Scalar fast path of :func:`integrate` returning only ``(z, y, stopped)``.

    ``f(z, y)`` takes and returns floats.  Used inside root finders where
    only the end state matters.
    """
    a21 = 1 / 5
    a31, a32 = 3 / 40, 9 / 40
    a41, a42, a43 = 44 / 45, -56 / 15, 32 / 9
    a51, a52, a53, a54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
    a61, a62, a63, a64, a65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
    b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
    e1, e3, e4, e5, e6, e7 = _E[0], _E[2], _E[3], _E[4], _E[5], _E[6]
    z, y = float(z0), float(y0)
    span = float(z1) - z
    if span == 0:
        return z, y, False
    direction = 1.0 if span > 0 else -1.0
    h = direction * (h0 if h0 else 1e-2 * abs(span))
    hmin = hmin_rel * max(1.0, abs(z0), abs(z1))
    k1 = f(z, y)
    for _ in range(max_steps):
        if direction * (z1 - z) <= 0:
            return z, y, False
        hit = direction * (z + h - z1) >= -1e-14 * max(1.0, abs(z1))
        if hit:
            h = z1 - z
        k2 = f(z + h / 5, y + h * a21 * k1)
        k3 = f(z + 0.3 * h, y + h * (a31 * k1 + a32 * k2))
        k4 = f(z + 0.8 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3))
        k5 = f(z + h * 8 / 9, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4))
        k6 = f(z + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5))
        yn = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6)
        zn = z1 if hit else z + h
        k7 = f(zn, yn)
        err = abs(h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7))
        bound = tol * abs(h)
        if err <= bound:
            z, y, k1 = zn, yn, k7
            if stop is not None and stop(z, y):
                return z, y, True
            h *= 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * (bound / err) ** 0.25))
        else:
            if abs(h) <= hmin:
                raise StepSizeUnderflow(f"step size underflow at z={z:.12g} (h={h:.3e})")
            h *= max(0.2, 0.9 * (bound / err) ** 0.25)
            if abs(h) < hmin:
                h = direction * hmin
    raise StepSizeUnderflow(f"too many steps integrating to {z1}")
