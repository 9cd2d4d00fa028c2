"""Embedded Dormand-Prince 5(4) integrator with PI step control.

The state is a 2-D array ``(batch, m)``; the error norm is the RMS over each
row followed by the max over rows, so one step size serves a whole batch of
trajectories.  Output is produced at requested times by cubic Hermite
interpolation between accepted steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LeftChartDomain, StepFailure

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
PI_ALPHA = 0.7 / 5
PI_BETA = 0.4 / 5
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass
class OdeResult:
    t: np.ndarray          # output times (requested, or the accepted step nodes)
    y: np.ndarray          # (len(t), batch, m)
    accepted: int
    rejected: int


def _hermite(t0, y0, f0, t1, y1, f1, t):
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def integrate(rhs, y0, t_end, t_eval, rtol=1e-9, atol=1e-12, h_max=None, h_min=1e-9,
              h_init=None, land_on_eval=False) -> OdeResult:
    """Integrate ``y' = rhs(t, y)`` from 0 to ``t_end``.

    With ``t_eval=None`` the solution is returned at the accepted step nodes,
    where no interpolation error enters.  ``land_on_eval=True`` shortens steps
    so that every requested time is an accepted node, which also avoids it.

    ``rhs`` may raise :class:`DomainError` when a stage leaves the chart; the
    step is then shrunk, and :class:`LeftChartDomain` is raised once the step
    falls below ``h_min``.
    """
    y = np.array(y0, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    nodes = None
    if t_eval is None:
        nodes = [(0.0, y)]
        t_eval = np.empty(0)
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) < 0) or (t_eval.size and (t_eval[0] < 0 or t_eval[-1] > t_end + 1e-15)):
        raise ValueError("t_eval must be sorted inside [0, t_end]")
    if h_max is None:
        h_max = t_end / 50 if t_end > 0 else 1.0
    h = h_init if h_init is not None else min(h_max, max(h_min, 0.1 * h_max))
    out = np.empty((t_eval.size,) + y.shape)
    k_out = 0
    t = 0.0
    f = rhs(t, y)
    while k_out < t_eval.size and t_eval[k_out] <= 0.0:
        out[k_out] = y
        k_out += 1
    accepted = rejected = 0
    err_prev = 1.0
    while t < t_end and (t_end - t) > 1e-15 * max(1.0, t_end):
        h = min(h, h_max, t_end - t)
        if land_on_eval and k_out < t_eval.size and t + h > t_eval[k_out] > t:
            h = t_eval[k_out] - t
        try:
            ks = [f]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_A[i], ks) if a != 0.0)
                ks.append(rhs(t + _C[i] * h, yi))
        except DomainError:
            rejected += 1
            h *= 0.25
            if h < h_min:
                raise LeftChartDomain(t) from None
            continue
        y_new = y + h * sum(b * k for b, k in zip(_B5, ks) if b != 0.0)
        err_vec = h * sum(e * k for e, k in zip(_E, ks) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.sqrt(np.mean((err_vec / scale) ** 2, axis=-1))))
        if not np.isfinite(err):
            err = 1e10
        if err <= 1.0:
            f_new = ks[6]
            t_new = t + h
            if land_on_eval and k_out < t_eval.size and abs(t_new - t_eval[k_out]) < 1e-14:
                t_new = t_eval[k_out]
            while k_out < t_eval.size and t_eval[k_out] <= t_new + 1e-14:
                te = min(t_eval[k_out], t_new)
                out[k_out] = y_new if te == t_new else _hermite(t, y, f, t_new, y_new, f_new, te)
                k_out += 1
            t, y, f = t_new, y_new, f_new
            if nodes is not None:
                nodes.append((t, y))
            accepted += 1
            fac = SAFETY * max(err, 1e-10) ** (-PI_ALPHA) * err_prev ** PI_BETA
            h *= min(MAX_FACTOR, max(MIN_FACTOR, fac))
            err_prev = max(err, 1e-4)
        else:
            rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** (-1 / 5))
            if h < h_min:
                raise StepFailure(f"step size fell below {h_min} at t = {t:.6g}")
    while k_out < t_eval.size:
        out[k_out] = y
        k_out += 1
    if nodes is not None:
        return OdeResult(np.array([n[0] for n in nodes]), np.array([n[1] for n in nodes]), accepted, rejected)
    return OdeResult(t_eval, out, accepted, rejected)
