"""Shared numerical kernels.

Fixed-step classical Runge-Kutta (RK4), composite Simpson quadrature on a
uniform grid, and piecewise-linear interpolation helpers for time-indexed
matrices and vectors.  Everything here is deterministic: no adaptivity, no
randomness, so repeated runs produce bit-identical results.
"""

from __future__ import annotations

import numpy as np


def rk4_path(f, y0, t0, t1, n_steps, max_abs=None):
    """Integrate dy/dt = f(t, y) from t0 to t1 with n_steps RK4 steps.

    Works forward (t1 > t0) and backward (t1 < t0).  Returns (times, ys)
    where ys has shape (n_steps + 1,) + y0.shape and ys[0] = y0.

    If max_abs is given, raises OverflowError as soon as any entry of the
    state exceeds it (finite-escape guard); callers translate this into a
    domain-specific error.
    """
    y0 = np.asarray(y0, dtype=float)
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("rk4_path needs at least one step")
    h = (t1 - t0) / n_steps
    times = t0 + h * np.arange(n_steps + 1)
    times[-1] = t1
    ys = np.empty((n_steps + 1,) + y0.shape, dtype=float)
    ys[0] = y0
    y = y0
    for i in range(n_steps):
        t = times[i]
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise OverflowError("state became non-finite during integration")
        if max_abs is not None and np.max(np.abs(y)) > max_abs:
            raise OverflowError("state exceeded finite-escape guard")
        ys[i + 1] = y
    return times, ys


def simpson_integral(values, dt):
    """Composite Simpson rule on a uniform grid with spacing dt.

    Handles an odd number of intervals by closing the last three with the
    Simpson 3/8 rule, preserving fourth-order accuracy.  Two nodes fall
    back to the trapezoid rule.
    """
    values = np.asarray(values, dtype=float)
    n = len(values) - 1
    if n < 1:
        return 0.0
    if n == 1:
        return 0.5 * dt * (values[0] + values[1])
    total = 0.0
    m = n
    if n % 2 == 1:
        # 3/8 rule over the final three intervals
        total += 3.0 * dt / 8.0 * (
            values[n - 3] + 3.0 * values[n - 2] + 3.0 * values[n - 1] + values[n]
        )
        m = n - 3
    if m > 0:
        v = values[: m + 1]
        total += dt / 3.0 * (v[0] + v[-1] + 4.0 * np.sum(v[1:-1:2]) + 2.0 * np.sum(v[2:-1:2]))
    return float(total)


def _bracket(times, t):
    idx = int(np.searchsorted(times, t, side="right")) - 1
    return min(max(idx, 0), len(times) - 2)


def grid_interp(times, values, t):
    """Piecewise-linear interpolation of a time-indexed array at scalar t.

    values has shape (N,) + item_shape; clamps t to the grid range.
    """
    times = np.asarray(times, dtype=float)
    i = _bracket(times, t)
    t0, t1 = times[i], times[i + 1]
    w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
    w = min(max(w, 0.0), 1.0)
    return (1.0 - w) * values[i] + w * values[i + 1]


def grid_interp_many(times, values, query):
    """Vectorized piecewise-linear interpolation at an array of times."""
    times = np.asarray(times, dtype=float)
    query = np.asarray(query, dtype=float)
    idx = np.clip(np.searchsorted(times, query, side="right") - 1, 0, len(times) - 2)
    t0 = times[idx]
    t1 = times[idx + 1]
    w = np.clip((query - t0) / (t1 - t0), 0.0, 1.0)
    w = w.reshape(w.shape + (1,) * (values.ndim - 1))
    return (1.0 - w) * values[idx] + w * values[idx + 1]


def grid_derivative(times, values):
    """Nodal time derivative of a sampled path.

    Central differences at interior nodes, one-sided at the two endpoints.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    d = np.empty_like(values)
    if len(times) < 2:
        raise ValueError("need at least two nodes to differentiate")
    tcol = times.reshape((len(times),) + (1,) * (values.ndim - 1))
    d[1:-1] = (values[2:] - values[:-2]) / (tcol[2:] - tcol[:-2])
    d[0] = (values[1] - values[0]) / (tcol[1] - tcol[0])
    d[-1] = (values[-1] - values[-2]) / (tcol[-1] - tcol[-2])
    return d


def uniform_grid(t0, t1, dt):
    """Uniform grid from t0 to t1 with spacing as close to dt as divides evenly.

    Returns (times, dt_effective) with at least two nodes.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    span = t1 - t0
    if span <= 0:
        raise ValueError("grid span must be positive")
    n = max(1, int(round(span / dt)))
    dt_eff = span / n
    times = t0 + dt_eff * np.arange(n + 1)
    times[-1] = t1
    return times, dt_eff


def max_abs(a):
    """Largest absolute entry of an array (0.0 for empty input)."""
    a = np.asarray(a)
    return 0.0 if a.size == 0 else float(np.max(np.abs(a)))
