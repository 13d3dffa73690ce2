"""Iterative improvement for finite-horizon regulation problems.

Starting from any admissible feedback gain, each sweep fits a quadratic
improving function x' P_k x to the current closed loop by solving the
linear (Lyapunov-type) matrix equation

    dP_k/dt + P_k A_cl + A_cl' P_k + Q + K_k' R K_k = 0,
    A_cl = A - B K_k,   P_k(tf) = F,

backward in time, then improves the gain through the pointwise minimizer
K_{k+1} = 1/2 R^{-1} B' (P_k + P_k'), simulates, and stops once the cost
decrease falls below a tolerance.  This is successive approximation in
policy space: each cost is no worse than the last, and the fixed point is
the direct Riccati solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    Blowup,
    DivergedIterate,
    InfiniteHorizon,
    IntegrationBlowup,
    Unstabilizable,
    ValidationError,
)
from .model import REGULATION
from .sim import simulate
from .solvers import BLOWUP_LIMIT, ControlLaw


@dataclass(frozen=True)
class KrotovRunConfig:
    """Stopping tolerance on |J_k - J_{k+1}|, iteration cap, and grid step."""

    epsilon: float = 1e-6
    max_iter: int = 50
    dt: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")


@dataclass(frozen=True)
class IterationRecord:
    """State of one sweep: improving-function parameter, gain, and cost."""

    k: int
    times: np.ndarray
    P_k: np.ndarray
    gain_k: ControlLaw
    J_k: float
    delta: float


def _gain_grid(problem, u0, times):
    """Normalize the initial control to a (N, m, n) gain grid."""
    N = len(times)
    m, n = problem.m, problem.n
    if isinstance(u0, ControlLaw):
        if u0.u_ff is not None and numerics.max_abs(u0.u_ff) > 0:
            raise ValidationError("initial law must be pure feedback for regulation")
        return np.stack([np.atleast_2d(u0.K_at(t)) for t in times])
    K0 = np.asarray(u0, dtype=float)
    if K0.shape == (m, n):
        return np.broadcast_to(K0, (N, m, n)).copy()
    if K0.ndim == 3 and K0.shape[1:] == (m, n):
        if K0.shape[0] != N:
            raise ValidationError("gain grid length does not match the iteration grid")
        return K0.copy()
    raise ValidationError(f"cannot interpret initial control of shape {K0.shape}")


def _policy_evaluation(problem, times, K_grid):
    """Backward Lyapunov sweep for the current gain; returns P on the grid."""
    tf = times[-1]
    Pf = problem.F.copy()

    def f(s, P):
        t = tf - s
        A = problem.A.eval(t)
        B = problem.B.eval(t)
        K = numerics.grid_interp(times, K_grid, t)
        A_cl = A - B @ K
        # dP/ds = -dP/dt = P A_cl + A_cl' P + Q + K'RK
        return P @ A_cl + A_cl.T @ P + problem.Q + K.T @ problem.R @ K

    try:
        _, path = numerics.rk4_path(f, Pf, 0.0, tf - times[0], len(times) - 1,
                                    max_abs=BLOWUP_LIMIT)
    except OverflowError as exc:
        raise IntegrationBlowup("policy-evaluation sweep escaped toward infinity") from exc
    return path[::-1].copy()


def krotov_iterate(problem, u0, cfg=KrotovRunConfig()):
    """Generate a non-increasing sequence of costs from an initial gain.

    Returns the list of IterationRecord, one per evaluated process; the
    final record holds the converged gain and cost.
    """
    if problem.kind != REGULATION:
        raise ValidationError("iterative improvement is implemented for regulation")
    if problem.horizon.is_infinite:
        raise InfiniteHorizon("iterative improvement needs a finite horizon")

    times, _ = numerics.uniform_grid(problem.horizon.t0, problem.horizon.tf, cfg.dt)
    K_grid = _gain_grid(problem, u0, times)

    records = []
    J_prev = None
    for k in range(cfg.max_iter + 1):
        law = ControlLaw(K=K_grid, times=times)
        try:
            traj = simulate(problem, law, cfg.dt)
        except Blowup as exc:
            raise Unstabilizable(f"iteration {k} produced an unbounded trajectory") from exc
        J_k = traj.total_cost
        if J_prev is not None and J_k > J_prev + 1e-6 * abs(J_prev):
            raise DivergedIterate(
                f"cost increased at iteration {k}: {J_prev!r} -> {J_k!r}")
        delta = 0.0 if J_prev is None else J_prev - J_k

        P_k = _policy_evaluation(problem, times, K_grid)
        records.append(IterationRecord(k=k, times=times, P_k=P_k,
                                       gain_k=law, J_k=J_k, delta=delta))
        if J_prev is not None and abs(J_prev - J_k) < cfg.epsilon:
            break
        J_prev = J_k
        K_grid = np.stack([_improved_gain(problem, P_k[i], times[i])
                           for i in range(len(times))])
    return records


def _improved_gain(problem, P, t):
    B = problem.B.eval(t)
    return 0.5 * np.linalg.solve(problem.R, B.T @ (P + P.T))


def improving_function_residual(problem, times, P_grid, K_grid, t):
    """Residual of the policy-evaluation equation at time t.

    dP/dt comes from central differences on the grid, so this confirms a
    stored sweep without re-integrating.
    """
    times = np.asarray(times, dtype=float)
    P_grid = np.asarray(P_grid, dtype=float)
    Pdot = numerics.grid_interp(times, numerics.grid_derivative(times, P_grid), t)
    P = numerics.grid_interp(times, P_grid, t)
    K = numerics.grid_interp(times, np.asarray(K_grid, dtype=float), t)
    A = problem.A.eval(t)
    B = problem.B.eval(t)
    A_cl = A - B @ K
    return Pdot + P @ A_cl + A_cl.T @ P + problem.Q + K.T @ problem.R @ K


def gain_from_open_loop(problem, times, u_signal, dt=None):
    """Least-squares conversion of an open-loop signal to a constant gain.

    Simulates the open loop, then fits u ~ -K x over the visited states.
    Only used when a gain-form start is not available.
    """
    times = np.asarray(times, dtype=float)
    u_signal = np.atleast_2d(np.asarray(u_signal, dtype=float))
    if u_signal.shape[0] != len(times):
        raise ValidationError("open-loop signal and times must have equal length")

    def f(t, x):
        u = numerics.grid_interp(times, u_signal, t)
        return problem.A.eval(t) @ x + problem.B.eval(t) @ u

    n_steps = len(times) - 1
    try:
        _, states = numerics.rk4_path(f, problem.x0, times[0], times[-1],
                                      n_steps, max_abs=BLOWUP_LIMIT)
    except OverflowError as exc:
        raise Unstabilizable("open-loop start produced an unbounded trajectory") from exc
    K_t, *_ = np.linalg.lstsq(states, -u_signal, rcond=None)
    return K_t.T


def write_iteration_csv(records, path):
    """CSV log `k, J_k, delta, max_gain_change`."""
    lines = ["k,J_k,delta,max_gain_change"]
    prev_K = None
    for rec in records:
        K = rec.gain_k.K
        change = 0.0 if prev_K is None else numerics.max_abs(K - prev_K)
        prev_K = K
        lines.append(f"{rec.k},{rec.J_k!r},{rec.delta!r},{change!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
