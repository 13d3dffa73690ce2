"""Feedforward synthesis for tracking problems.

The feedforward state g(t) obeys the linear vector equation

    dg/dt + A' g + C'Q z - 1/2 (P + P') B R^{-1} B' g = 0,

equivalently dg/dt = -A_cl' g - C'Q z with A_cl = A - B K the closed loop
under K = 1/2 R^{-1} B' (P + P').  Finite horizons integrate it backward
from g(tf) = C'(tf) F z(tf).  On an infinite horizon with A_cl Hurwitz the
bounded steady-state solution is

    g(t) = int_t^inf exp(A_cl' (tau - t)) C'Q z(tau) dtau,

with the sign fixed so the closed loop tracks z.  Quadrature of that
integral is the reference route; for sinusoidal references a direct
harmonic-balance linear solve provides the fast path, and for the scalar
single-frequency case the coefficients have a closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import numerics
from .errors import (
    InfiniteHorizon,
    IntegrationBlowup,
    NotHurwitz,
    UnstableExponent,
    ValidationError,
)
from .model import TRACKING
from .solvers import BLOWUP_LIMIT, control_weight_inverse_map


@dataclass(frozen=True)
class FeedforwardSolution:
    """Time-indexed feedforward state with its equation-residual certificate."""

    times: np.ndarray
    g: np.ndarray
    method: str
    ode_residual_max: float

    def g_at(self, t):
        return numerics.grid_interp(self.times, self.g, t)

    def write_csv(self, path):
        write_feedforward_csv(self, path)


def _require_tracking(problem):
    if problem.kind != TRACKING:
        raise ValidationError("feedforward synthesis applies to tracking problems")


def _sym_part_path(P, times_P):
    """Callable t -> P(t) + P(t)' for constant or gridded P."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 2:
        S = P + P.T
        return lambda t: S
    if times_P is None:
        raise ValidationError("gridded P needs its grid of times")
    times_P = np.asarray(times_P, dtype=float)
    S = P + np.transpose(P, (0, 2, 1))
    return lambda t: numerics.grid_interp(times_P, S, t)


def g_equation_residual(problem, times, g, P, times_P=None):
    """Residual of the g-equation on a grid, dg/dt via central differences.

    The derivative estimate cannot resolve the terminal boundary layer of a
    stiff backward solve, so nodes within twelve time constants of tf are
    excluded along with the one-sided endpoints.
    """
    times = np.asarray(times, dtype=float)
    g = np.asarray(g, dtype=float)
    S_at = _sym_part_path(P, times_P)
    M = control_weight_inverse_map(problem)
    gdot = numerics.grid_derivative(times, g)

    rates = []
    residuals = np.zeros(len(times))
    for k, t in enumerate(times):
        A = problem.A.eval(t)
        C = problem.C.eval(t)
        z = problem.reference.eval(t)
        coeff = A.T - 0.5 * S_at(t) @ M
        rates.append(numerics.max_abs(coeff))
        residuals[k] = numerics.max_abs(
            gdot[k] + coeff @ g[k] + C.T @ problem.Q @ z)
    margin = 12.0 / max(max(rates), 1e-9)
    keep = (times >= times[0] + (times[1] - times[0])) \
        & (times <= times[-1] - max(margin, times[1] - times[0]))
    if not np.any(keep):
        keep = slice(1, -1)
    return float(np.max(residuals[keep]))


def integrate_g(problem, P, dt, times_P=None):
    """Backward RK4 solve of the g-equation from g(tf) = C'(tf) F z(tf)."""
    _require_tracking(problem)
    horizon = problem.horizon
    if horizon.is_infinite:
        raise InfiniteHorizon("finite horizon required; use steady_state_g instead")
    times, _ = numerics.uniform_grid(horizon.t0, horizon.tf, dt)
    S_at = _sym_part_path(P, times_P)
    M = control_weight_inverse_map(problem)
    C_tf = problem.C.eval(horizon.tf)
    g_tf = C_tf.T @ problem.F @ problem.reference.eval(horizon.tf)

    def f(s, g):
        t = horizon.tf - s
        A = problem.A.eval(t)
        C = problem.C.eval(t)
        z = problem.reference.eval(t)
        # dg/ds = -dg/dt = A'g + C'Qz - 1/2 S M g
        return A.T @ g + C.T @ problem.Q @ z - 0.5 * S_at(t) @ M @ g

    try:
        _, path = numerics.rk4_path(f, g_tf, 0.0, horizon.tf - horizon.t0,
                                    len(times) - 1, max_abs=BLOWUP_LIMIT)
    except OverflowError as exc:
        raise IntegrationBlowup("feedforward integration escaped toward infinity") from exc
    g = path[::-1].copy()
    residual = g_equation_residual(problem, times, g, P, times_P)
    return FeedforwardSolution(times=times, g=g, method="backward_ode",
                               ode_residual_max=residual)


def closed_loop_matrix(problem, P):
    """A - 1/2 B R^{-1} B' (P + P') for a constant P."""
    P = np.asarray(P, dtype=float)
    A = problem.A.eval(problem.horizon.t0)
    M = control_weight_inverse_map(problem)
    return A - 0.5 * M @ (P + P.T)


def _hurwitz_decay(A_cl):
    lam = np.linalg.eigvals(A_cl)
    slowest = float(np.max(lam.real))
    if slowest >= 0.0:
        raise NotHurwitz(f"closed loop has eigenvalue with real part {slowest:.3e}")
    return -slowest, float(np.max(np.abs(lam)))


def steady_state_g(problem, P, t, truncation_T=None):
    """Steady-state feedforward at time t by truncated Simpson quadrature.

    The truncation horizon is chosen (or verified, when supplied) so the
    propagator norm has fallen below 1e-10, bounding the discarded tail.
    """
    _require_tracking(problem)
    A_cl = closed_loop_matrix(problem, P)
    decay, fastest = _hurwitz_decay(A_cl)
    E_T = A_cl.T

    T = truncation_T if truncation_T is not None else 26.0 / decay
    for _ in range(60):
        if np.linalg.norm(scipy.linalg.expm(E_T * T), np.inf) < 1e-10:
            break
        T *= 2.0
    else:
        raise NotHurwitz("propagator norm did not fall below 1e-10")

    # Resolve the fastest closed-loop mode and the reference oscillation.
    h = min(0.05 / fastest, T / 400.0)
    if problem.reference.kind == "sinusoid" and problem.reference.omega:
        h = min(h, 2.0 * np.pi / problem.reference.omega / 400.0)
    n_steps = int(np.ceil(T / h))
    n_steps += n_steps % 2  # even interval count for plain Simpson
    h = T / n_steps

    CQ = problem.C.eval(t).T @ problem.Q
    E_h = scipy.linalg.expm(E_T * h)
    E = np.eye(problem.n)
    values = np.empty((n_steps + 1, problem.n))
    for k in range(n_steps + 1):
        values[k] = E @ (CQ @ problem.reference.eval(t + k * h))
        E = E @ E_h
    weights = np.ones(n_steps + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return (h / 3.0) * np.einsum("k,ki->i", weights, values)


def steady_state_g_harmonic(problem, P):
    """Harmonic-balance coefficients (g_sin, g_cos) for a sinusoidal reference.

    Solves the 2n x 2n linear system obtained by matching sin/cos terms in
    the steady-state g-equation; the quadrature route is the reference this
    fast path is checked against.
    """
    _require_tracking(problem)
    if problem.reference.kind != "sinusoid":
        raise ValidationError("harmonic balance applies to sinusoidal references")
    A_cl = closed_loop_matrix(problem, P)
    _hurwitz_decay(A_cl)
    omega = problem.reference.omega
    C = problem.C.eval(problem.horizon.t0)
    rhs_sin = C.T @ problem.Q @ problem.reference.amplitude
    n = problem.n
    lhs = np.block([[A_cl.T, -omega * np.eye(n)],
                    [omega * np.eye(n), A_cl.T]])
    sol = np.linalg.solve(lhs, np.concatenate([-rhs_sin, np.zeros(n)]))
    return sol[:n], sol[n:]


def harmonic_g_path(problem, P, times):
    """Steady-state g sampled on a grid via the harmonic-balance fast path."""
    g_sin, g_cos = steady_state_g_harmonic(problem, P)
    omega = problem.reference.omega
    times = np.asarray(times, dtype=float)
    return (np.outer(np.sin(omega * times), g_sin)
            + np.outer(np.cos(omega * times), g_cos))


def sinusoid_feedforward_closed_form(problem, p):
    """Closed-form (sin, cos) feedforward coefficients for the scalar case.

    For scalar data (a, b, c, weights m, n) and reference alpha sin(omega t)
    the steady-state integral evaluates to

        g(t) = beta [ (p b^2 - a n) sin(omega t) + n omega cos(omega t) ],
        beta = alpha c m n / ((n a - b^2 p)^2 + n^2 omega^2).
    """
    _require_tracking(problem)
    if problem.n != 1 or problem.m != 1 or problem.p != 1:
        raise ValidationError("closed form applies to scalar problems only")
    if problem.reference.kind != "sinusoid":
        raise ValidationError("closed form applies to sinusoidal references")
    a = float(problem.A.eval(problem.horizon.t0)[0, 0])
    b = float(problem.B.eval(problem.horizon.t0)[0, 0])
    c = float(problem.C.eval(problem.horizon.t0)[0, 0])
    m_w = float(problem.Q[0, 0])
    n_w = float(problem.R[0, 0])
    alpha = float(problem.reference.amplitude[0])
    omega = float(problem.reference.omega)
    p = float(p)
    if a - p * b * b / n_w >= 0.0:
        raise UnstableExponent("closed-loop exponent a - p b^2 / n must be negative")
    beta = alpha * c * m_w * n_w / ((n_w * a - b * b * p) ** 2 + (n_w * omega) ** 2)
    return beta * (p * b * b - a * n_w), beta * n_w * omega


def write_feedforward_csv(ff, path):
    """CSV dump `t, g_1..g_n`."""
    n = ff.g.shape[1]
    header = ["t"] + [f"g_{i + 1}" for i in range(n)]
    lines = [",".join(header)]
    for k in range(len(ff.times)):
        cells = [repr(float(ff.times[k]))] + [repr(float(v)) for v in ff.g[k]]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
