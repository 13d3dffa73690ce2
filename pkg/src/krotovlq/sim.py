"""Closed-loop simulation, cost evaluation, and runtime verification checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import Blowup, GridTooCoarse, ValidationError
from .krotov_core import s_value
from .solvers import control_weight_inverse_map, spd_sqrt

STATE_NORM_LIMIT = 1e12


@dataclass(frozen=True)
class Trajectory:
    """Simulated closed-loop path with per-node cost samples.

    running_cost carries the one-half convention; total_cost adds the
    terminal term when the path reaches a finite horizon's end.  For
    truncated infinite-horizon runs, tail_bound estimates the discarded
    cost running_cost(t_end) / (2 |Re lambda_max|) from the slowest
    closed-loop mode.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    running_cost: np.ndarray
    total_cost: float
    tail_bound: float | None = None

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])


def _law_path(law, stage_times, m, n):
    """Gain and feedforward sampled at an array of stage times."""
    N = len(stage_times)
    K = np.asarray(law.K, dtype=float)
    if K.ndim == 2:
        K_path = np.broadcast_to(K, (N, m, n))
    else:
        K_path = numerics.grid_interp_many(law.times, K, stage_times)
    if law.u_ff is None:
        ff_path = None
    else:
        ff = np.asarray(law.u_ff, dtype=float)
        if ff.ndim == 1:
            ff_path = np.broadcast_to(ff, (N, m))
        else:
            ff_path = numerics.grid_interp_many(law.times, ff, stage_times)
    return K_path, ff_path


def simulate(problem, law, dt, t_end=None):
    """RK4 forward integration of dx/dt = A x + B u(x, t) from x0.

    The feedback law is evaluated continuously inside the RK4 stages (no
    zero-order hold); recorded inputs are the law at the stored states.
    """
    horizon = problem.horizon
    if t_end is None:
        if horizon.is_infinite:
            raise ValidationError("infinite-horizon simulation needs t_end")
        t_end = horizon.tf
    if not horizon.is_infinite and t_end > horizon.tf + 1e-12:
        raise ValidationError("t_end exceeds the problem horizon")

    times, dt_eff = numerics.uniform_grid(horizon.t0, t_end, dt)
    n_steps = len(times) - 1
    h = dt_eff
    mids = times[:-1] + 0.5 * h

    A_n = problem.A.eval_many(times)
    A_m = problem.A.eval_many(mids)
    B_n = problem.B.eval_many(times)
    B_m = problem.B.eval_many(mids)
    K_n, ff_n = _law_path(law, times, problem.m, problem.n)
    K_m, ff_m = _law_path(law, mids, problem.m, problem.n)

    def u_at(K, ff, x):
        out = -K @ x
        return out if ff is None else out + ff

    def xdot(A, B, K, ff, x):
        return A @ x + B @ u_at(K, ff, x)

    states = np.empty((n_steps + 1, problem.n))
    states[0] = problem.x0
    x = problem.x0.astype(float)
    for i in range(n_steps):
        ffn = None if ff_n is None else ff_n[i]
        ffm = None if ff_m is None else ff_m[i]
        ffn1 = None if ff_n is None else ff_n[i + 1]
        k1 = xdot(A_n[i], B_n[i], K_n[i], ffn, x)
        k2 = xdot(A_m[i], B_m[i], K_m[i], ffm, x + 0.5 * h * k1)
        k3 = xdot(A_m[i], B_m[i], K_m[i], ffm, x + 0.5 * h * k2)
        k4 = xdot(A_n[i + 1], B_n[i + 1], K_n[i + 1], ffn1, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > STATE_NORM_LIMIT:
            raise Blowup("simulated state exceeded the norm guard 1e12")
        states[i + 1] = x

    inputs = -np.einsum("kij,kj->ki", K_n, states)
    if ff_n is not None:
        inputs = inputs + ff_n
    if problem.kind == REGULATION:
        state_term = np.einsum("ki,ij,kj->k", states, problem.Q, states)
    else:
        C_n = problem.C.eval_many(times)
        z = problem.reference.eval_many(times)
        e = z - np.einsum("kij,kj->ki", C_n, states)
        state_term = np.einsum("ki,ij,kj->k", e, problem.Q, e)
    running = 0.5 * (state_term + np.einsum("ki,ij,kj->k", inputs, problem.R, inputs))

    total = numerics.simpson_integral(running, dt_eff)
    if not horizon.is_infinite and abs(t_end - horizon.tf) <= 0.5 * dt_eff:
        total += problem.terminal_cost(states[-1])

    tail = None
    if horizon.is_infinite:
        A = problem.A.eval(t_end)
        B = problem.B.eval(t_end)
        A_cl = A - B @ law.K_at(t_end)
        decay = -float(np.max(np.linalg.eigvals(A_cl).real))
        tail = float(running[-1] / (2.0 * decay)) if decay > 0 else float("inf")

    return Trajectory(times=times, states=states, inputs=inputs,
                      running_cost=running, total_cost=float(total),
                      tail_bound=tail)


def evaluate_cost(problem, traj):
    """Composite-Simpson cost of a trajectory plus any terminal term."""
    if len(traj.times) < 3:
        raise GridTooCoarse("need at least three nodes to integrate the cost")
    total = numerics.simpson_integral(traj.running_cost, traj.dt)
    horizon = problem.horizon
    if not horizon.is_infinite and abs(traj.times[-1] - horizon.tf) <= 0.5 * traj.dt:
        total += problem.terminal_cost(traj.states[-1])
    return float(total)


@dataclass(frozen=True)
class LyapunovReport:
    """Dissipation check for V(x) = x'(P + P')x along a trajectory."""

    max_deviation: float
    strictly_decreasing: bool
    n_checked: int


def lyapunov_check(problem, P, traj):
    """Compare the sampled derivative of V = x'(P+P')x with its algebraic form.

    For any algebraic solution P, adding the equation to its transpose gives
    A'S + SA = -2 Q_eff + 1/2 S M S with S = P + P', so along the closed
    loop dV/dt = -x'(2 Q_eff + 1/2 S M S)x.  The sampled derivative uses a
    five-point central difference on interior nodes, so the stencil error
    is O(dt^4) and does not mask the identity at small dt.
    """
    P = np.asarray(P, dtype=float)
    S = P + P.T
    M = control_weight_inverse_map(problem)
    W = 2.0 * problem.q_eff() + 0.5 * S @ M @ S
    x = traj.states
    V = np.einsum("ki,ij,kj->k", x, S, x)
    predicted = -np.einsum("ki,ij,kj->k", x, W, x)
    dt = traj.dt
    if len(V) < 5:
        raise GridTooCoarse("need at least five nodes for the dissipation check")
    fd = (-V[4:] + 8.0 * V[3:-1] - 8.0 * V[1:-3] + V[:-4]) / (12.0 * dt)
    deviation = np.max(np.abs(fd - predicted[2:-2]))
    decreasing = bool(np.all(np.diff(V) < 0.0))
    return LyapunovReport(max_deviation=float(deviation),
                          strictly_decreasing=decreasing,
                          n_checked=len(fd))


@dataclass(frozen=True)
class PointwiseMinReport:
    """Sampled check that the law minimizes s pointwise in u."""

    min_margin: float
    max_margin_mismatch: float
    max_x_gradient: float
    n_samples: int


def pointwise_min_check(problem, kf, law, traj, n_samples=1000, seed=0):
    """Verify s(x, u* + d, t) >= s(x, u*, t) over random perturbations d.

    Also checks that s is stationary in x at (x, u*(x)): for a solving
    Krotov function the completed square vanishes there, so the central
    difference of s in x (exact for quadratics) must be near zero.  The
    margin of each perturbation is compared against its completed-square
    value |Rs d|^2.
    """
    rng = np.random.default_rng(seed)
    times = traj.times
    interior = np.arange(1, len(times) - 1)
    node_ids = rng.choice(interior, size=n_samples)
    deltas = rng.normal(size=(n_samples, problem.m))
    Rs = spd_sqrt(problem.R)

    min_margin = np.inf
    max_mismatch = 0.0
    for node, delta in zip(node_ids, deltas):
        t = times[node]
        x = traj.states[node]
        u_star = law.u(x, t)
        base = s_value(problem, kf, x, u_star, t)
        margin = s_value(problem, kf, x, u_star + delta, t) - base
        Rs_d = Rs @ delta
        mismatch = abs(margin - float(Rs_d @ Rs_d))
        min_margin = min(min_margin, margin)
        max_mismatch = max(max_mismatch, mismatch)

    # Stationarity in x at a spread of nodes; u is frozen at u*(x).
    max_grad = 0.0
    h = 1e-4
    check_nodes = np.unique(np.linspace(1, len(times) - 2, 25).astype(int))
    for node in check_nodes:
        t = times[node]
        x = traj.states[node]
        u_star = law.u(x, t)
        grad = np.zeros(problem.n)
        for i in range(problem.n):
            step = np.zeros(problem.n)
            step[i] = h
            grad[i] = (s_value(problem, kf, x + step, u_star, t)
                       - s_value(problem, kf, x - step, u_star, t)) / (2.0 * h)
        max_grad = max(max_grad, float(np.linalg.norm(grad)))

    return PointwiseMinReport(min_margin=float(min_margin),
                              max_margin_mismatch=float(max_mismatch),
                              max_x_gradient=max_grad,
                              n_samples=n_samples)


def write_trajectory_csv(traj, path):
    """CSV dump `t, x_1.., u_1.., running_cost` plus a total-cost comment."""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + \
        [f"u_{j + 1}" for j in range(m)] + ["running_cost"]
    lines = [",".join(header)]
    for k in range(len(traj.times)):
        cells = [repr(float(traj.times[k]))]
        cells += [repr(float(v)) for v in traj.states[k]]
        cells += [repr(float(v)) for v in traj.inputs[k]]
        cells.append(repr(float(traj.running_cost[k])))
        lines.append(",".join(cells))
    tail = "nan" if traj.tail_bound is None else repr(float(traj.tail_bound))
    lines.append(f"# total_cost={float(traj.total_cost)!r} tail_bound={tail}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
