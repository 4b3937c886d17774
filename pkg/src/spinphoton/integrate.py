"""Explicit Runge-Kutta propagation of linear ODE systems onto target times.

Two schemes: classical fixed-step RK4 and the Dormand-Prince 5(4) embedded
pair with standard step-size control. Both advance a numpy array ``y``
(vector or stack of column vectors) under ``dy/dt = f(t, y)`` and stop
exactly on each requested target time.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class StepSizeUnderflow(RuntimeError):
    """Adaptive control shrank the step below the floor (stiff or diverging system)."""

    def __init__(self, t: float, dt: float):
        super().__init__(f"step size underflow at t={t:.6e} s (dt={dt:.3e} s)")
        self.t = t
        self.dt = dt


def rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


# Dormand-Prince 5(4) tableau
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
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)  # B5 - B4


def dopri_step(f, t, y, h, k1):
    """One Dormand-Prince step; returns ``(y_new, err, k_last)`` (FSAL)."""
    ks = [k1]
    for i in range(1, 7):
        yi = y
        for aij, kj in zip(_A[i], ks):
            if aij:
                yi = yi + (h * aij) * kj
        ks.append(f(t + _C[i] * h, yi))
    # the 7th stage is evaluated at y_new already
    y_new = y
    for bi, ki in zip(_B, ks):
        if bi:
            y_new = y_new + (h * bi) * ki
    err = sum((h * ei) * ki for ei, ki in zip(_E, ks) if ei)
    return y_new, err, ks[-1]


def propagate(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    targets: Sequence[float],
    *,
    method: str = "rk4",
    dt: float,
    max_dt: float | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-12,
    min_dt: float | None = None,
    post_step: Callable[[np.ndarray], np.ndarray] | None = None,
    on_step: Callable[[float, np.ndarray], None] | None = None,
) -> list[np.ndarray]:
    """Integrate from ``t0`` through the sorted ``targets``; return ``y`` at each.

    For ``method='rk4'`` every interval between consecutive targets is split
    into equal substeps no longer than ``dt``. For ``method='rk45'`` ``dt`` is
    the initial step and ``max_dt`` caps it. ``post_step`` is applied to every
    accepted state; ``on_step`` sees each accepted ``(t, y)``.
    """
    targets = [float(x) for x in targets]
    if any(b < a for a, b in zip([t0] + targets[:-1], targets)):
        raise ValueError("targets must be sorted and not precede t0")
    max_dt = max_dt if max_dt is not None else dt
    y = np.array(y0, copy=True)
    t = float(t0)
    out = []
    if method == "rk4":
        for tt in targets:
            span = tt - t
            if span > 0:
                n = max(1, math.ceil(span / dt - 1e-9))
                h = span / n
                for j in range(n):
                    y = rk4_step(f, t, y, h)
                    if post_step is not None:
                        y = post_step(y)
                    t = tt if j == n - 1 else t + h
                    if on_step is not None:
                        on_step(t, y)
            out.append(y.copy())
        return out
    if method != "rk45":
        raise ValueError(f"unknown integration method {method!r}")

    floor = min_dt if min_dt is not None else 1e-12 * max(abs(targets[-1] - t0) if targets else 1.0, 1e-300)
    h = min(dt, max_dt)
    k1 = f(t, y)
    for tt in targets:
        while tt - t > 1e-15 * max(1.0, abs(tt)):
            step = min(h, tt - t)
            y_new, err, k_last = dopri_step(f, t, y, step, k1)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            enorm = float(np.sqrt(np.mean((np.abs(err) / scale) ** 2)))
            if enorm <= 1.0 or step <= floor:
                if enorm > 1.0:
                    raise StepSizeUnderflow(t, step)
                t = tt if step == tt - t else t + step
                y = y_new if post_step is None else post_step(y_new)
                k1 = k_last if post_step is None else f(t, y)
                if on_step is not None:
                    on_step(t, y)
                fac = 5.0 if enorm == 0 else min(5.0, 0.9 * enorm ** -0.2)
                # a step clipped to hit a target says nothing about the natural step
                if step == h or fac < 1:
                    h = min(max_dt, step * fac)
            else:
                h = step * max(0.2, 0.9 * enorm ** -0.2)
                if h < floor:
                    raise StepSizeUnderflow(t, h)
        out.append(y.copy())
    return out
