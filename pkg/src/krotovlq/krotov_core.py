"""Equivalent-problem machinery built on a quadratic Krotov function.

For q(x, t) = x' P(t) x - 2 g(t)' x the original constrained problem is
rewritten through the pointwise running term

    s(x, u, t) = dq/dt + dq/dx (A x + B u) + x'Qx + u'Ru        (regulation)
                 dq/dt + dq/dx (A x + B u) + e'Qe + u'Ru        (tracking)

and the terminal term s_f(xf) = l_f(xf) - q(xf, tf), where l_f is the
terminal quadratic.  The running and terminal quadratics here carry no
one-half factor; reported costs do, so `equivalent_cost` halves the
assembled total.  Completing the square in u splits s into

    x' M_resid x - 2 affine' x + | Rs u + 1/2 Rs^{-1} B'(P + P') x
                                   - Rs^{-1} B' g |^2 + offset

with Rs the SPD square root of R.  Convexity of s and s_f then reduces to
semidefiniteness of sym(M_resid) along the grid and of the terminal gap,
which is what `convexity_certificate` checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import numerics
from .errors import GridMismatch, InfiniteHorizon, OutOfHorizon, ValidationError
from .model import REGULATION
from .solvers import control_weight_inverse_map, spd_sqrt

CERTIFICATE_EIG_TOL = 1e-8


@dataclass(frozen=True)
class KrotovFunction:
    """Quadratic Krotov function q(x, t) = x' P(t) x - 2 g(t)' x.

    P is (n, n) for a constant function or (N, n, n) sampled on `times`;
    g is (n,) / (N, n) or None for identically zero.  P is not required
    to be symmetric or definite.  Grid evaluation interpolates piecewise
    linearly; time derivatives come from central differences on the grid
    (exactly zero for constant data).
    """

    P: np.ndarray
    times: np.ndarray | None = None
    g: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        object.__setattr__(self, "P", P)
        if self.times is not None:
            times = np.asarray(self.times, dtype=float)
            object.__setattr__(self, "times", times)
            if np.any(np.diff(times) <= 0):
                raise ValidationError("Krotov function grid must be strictly increasing")
            if P.ndim != 3 or P.shape[0] != len(times):
                raise ValidationError("gridded P must have shape (N, n, n)")
        elif P.ndim != 2:
            raise ValidationError("constant P must be a square matrix")
        if self.g is not None:
            g = np.asarray(self.g, dtype=float)
            object.__setattr__(self, "g", g)
            expected = (len(self.times), P.shape[-1]) if self.times is not None \
                else (P.shape[-1],)
            if g.shape != expected:
                raise ValidationError(f"g must have shape {expected}, got {g.shape}")
        if not np.all(np.isfinite(P)):
            raise ValidationError("P has non-finite entries")
        if self.g is not None and not np.all(np.isfinite(self.g)):
            raise ValidationError("g has non-finite entries")

    @classmethod
    def constant(cls, P, g=None):
        return cls(P=np.asarray(P, dtype=float), g=g)

    @classmethod
    def on_grid(cls, times, P, g=None):
        return cls(P=np.asarray(P, dtype=float), times=times, g=g)

    @property
    def n(self):
        return self.P.shape[-1]

    @cached_property
    def _Pdot(self):
        if self.times is None:
            return None
        return numerics.grid_derivative(self.times, self.P)

    @cached_property
    def _gdot(self):
        if self.times is None or self.g is None:
            return None
        return numerics.grid_derivative(self.times, self.g)

    def P_at(self, t):
        if self.times is None:
            return self.P
        return numerics.grid_interp(self.times, self.P, t)

    def Pdot_at(self, t):
        if self.times is None:
            return np.zeros_like(self.P)
        return numerics.grid_interp(self.times, self._Pdot, t)

    def g_at(self, t):
        if self.g is None:
            return np.zeros(self.n)
        if self.times is None:
            return self.g
        return numerics.grid_interp(self.times, self.g, t)

    def gdot_at(self, t):
        if self.g is None or self.times is None:
            return np.zeros(self.n)
        return numerics.grid_interp(self.times, self._gdot, t)

    def q_value(self, x, t):
        x = np.asarray(x, dtype=float)
        return float(x @ self.P_at(t) @ x - 2.0 * self.g_at(t) @ x)

    def covers(self, t0, t1):
        if self.times is None:
            return True
        return self.times[0] <= t0 + 1e-9 and t1 <= self.times[-1] + 1e-9


def _check_in_horizon(problem, t):
    if not problem.horizon.contains(t):
        raise OutOfHorizon(f"t = {t!r} lies outside the problem horizon")


def _running_integrand(problem, x, u, t):
    # No one-half factor here; see module docstring.
    if problem.kind == REGULATION:
        state = x @ problem.Q @ x
    else:
        e = problem.error(x, t)
        state = e @ problem.Q @ e
    return float(state + u @ problem.R @ u)


def s_value(problem, kf, x, u, t):
    """Running term of the equivalent problem at (x, u, t)."""
    _check_in_horizon(problem, t)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    A = problem.A.eval(t)
    B = problem.B.eval(t)
    P = kf.P_at(t)
    dq_dt = float(x @ kf.Pdot_at(t) @ x - 2.0 * kf.gdot_at(t) @ x)
    dq_dx = (P + P.T) @ x - 2.0 * kf.g_at(t)
    xdot = A @ x + B @ u
    return dq_dt + float(dq_dx @ xdot) + _running_integrand(problem, x, u, t)


def s_terminal_value(problem, kf, xf):
    """Terminal term s_f(xf) = l_f(xf) - q(xf, tf) of the equivalent problem."""
    if problem.horizon.is_infinite:
        raise InfiniteHorizon("terminal term undefined for infinite horizon")
    tf = problem.horizon.tf
    xf = np.asarray(xf, dtype=float)
    P = kf.P_at(tf)
    if problem.kind == REGULATION:
        return float(xf @ (problem.F - P) @ xf)
    C = problem.C.eval(tf)
    z = problem.reference.eval(tf)
    g = kf.g_at(tf)
    quad = xf @ (C.T @ problem.F @ C - P) @ xf
    lin = 2.0 * (g - C.T @ problem.F @ z) @ xf
    return float(quad + lin + z @ problem.F @ z)


@dataclass(frozen=True)
class SDecomposition:
    """Completed-square split of s at one time.

    s(x, u) = x' m_resid x - 2 affine_coeff' x + |shift(x, u)|^2 + offset
    with shift(x, u) = r_sqrt u + lin_x x + lin_0.
    """

    m_resid: np.ndarray
    affine_coeff: np.ndarray
    r_sqrt: np.ndarray
    lin_x: np.ndarray
    lin_0: np.ndarray
    offset: float

    def shift(self, x, u):
        return self.r_sqrt @ np.asarray(u, dtype=float) \
            + self.lin_x @ np.asarray(x, dtype=float) + self.lin_0

    def reconstruct(self, x, u):
        x = np.asarray(x, dtype=float)
        v = self.shift(x, u)
        return float(x @ self.m_resid @ x - 2.0 * self.affine_coeff @ x
                     + v @ v + self.offset)


def residual_matrix(problem, kf, t):
    """Quadratic-residual coefficient of the decomposition at time t."""
    P = kf.P_at(t)
    Pdot = kf.Pdot_at(t)
    A = problem.A.eval(t)
    M = control_weight_inverse_map(problem, t)
    PM = P @ M
    return (Pdot + P @ A + A.T @ P + problem.q_eff(t)
            - 0.5 * PM @ P - 0.25 * PM @ P.T - 0.25 * P.T @ M @ P)


def decompose_s(problem, kf, t):
    """Algebraic decomposition of s at time t (see SDecomposition)."""
    _check_in_horizon(problem, t)
    P = kf.P_at(t)
    g = kf.g_at(t)
    A = problem.A.eval(t)
    B = problem.B.eval(t)
    M = control_weight_inverse_map(problem, t)
    Rs = spd_sqrt(problem.R)
    Rs_inv_Bt = np.linalg.solve(Rs, B.T)

    m_resid = residual_matrix(problem, kf, t)
    if problem.kind == REGULATION:
        affine = np.zeros(problem.n)
        offset = 0.0
    else:
        C = problem.C.eval(t)
        z = problem.reference.eval(t)
        affine = (kf.gdot_at(t) + A.T @ g + C.T @ problem.Q @ z
                  - 0.5 * (P + P.T) @ M @ g)
        offset = float(z @ problem.Q @ z - g @ M @ g)
    return SDecomposition(
        m_resid=m_resid,
        affine_coeff=affine,
        r_sqrt=Rs,
        lin_x=0.5 * Rs_inv_Bt @ (P + P.T),
        lin_0=-Rs_inv_Bt @ g,
        offset=offset,
    )


def _s_values_on_grid(problem, kf, times, states, inputs):
    """Vectorized s over a trajectory grid."""
    N = len(times)
    n = problem.n
    if kf.times is None:
        P = np.broadcast_to(kf.P, (N, n, n))
        Pdot = np.zeros((N, n, n))
        g = np.broadcast_to(kf.g_at(0.0), (N, n))
        gdot = np.zeros((N, n))
    else:
        P = numerics.grid_interp_many(kf.times, kf.P, times)
        Pdot = numerics.grid_interp_many(kf.times, kf._Pdot, times)
        if kf.g is None:
            g = np.zeros((N, n))
            gdot = np.zeros((N, n))
        else:
            g = numerics.grid_interp_many(kf.times, kf.g, times)
            gdot = numerics.grid_interp_many(kf.times, kf._gdot, times)

    def matrix_path(tm):
        if tm.is_constant:
            return np.broadcast_to(tm.base, (N,) + tm.base.shape)
        factors = np.array([tm.profile.value(t) for t in times])
        return tm.base[None, :, :] * factors[:, None, None]

    A = matrix_path(problem.A)
    B = matrix_path(problem.B)
    x = states
    u = inputs
    xdot = np.einsum("kij,kj->ki", A, x) + np.einsum("kij,kj->ki", B, u)
    Psym = P + np.transpose(P, (0, 2, 1))
    dq_dx = np.einsum("kij,kj->ki", Psym, x) - 2.0 * g
    dq_dt = np.einsum("ki,kij,kj->k", x, Pdot, x) - 2.0 * np.einsum("ki,ki->k", gdot, x)
    s = dq_dt + np.einsum("ki,ki->k", dq_dx, xdot)
    if problem.kind == REGULATION:
        s += np.einsum("ki,ij,kj->k", x, problem.Q, x)
    else:
        C = matrix_path(problem.C)
        z = np.stack([problem.reference.eval(t) for t in times])
        e = z - np.einsum("kij,kj->ki", C, x)
        s += np.einsum("ki,ij,kj->k", e, problem.Q, e)
    s += np.einsum("ki,ij,kj->k", u, problem.R, u)
    return s


def equivalent_cost(problem, kf, traj):
    """Cost of an admissible trajectory assembled through the Krotov function.

    Equals the direct cost (one-half convention) up to quadrature error for
    any Krotov function.  For an infinite-horizon trajectory truncated at
    t_end the terminal term is -q(x(t_end), t_end), consistent with a zero
    terminal weight at the truncation point.
    """
    times = traj.times
    if len(times) < 3:
        raise GridMismatch("trajectory grid too short for quadrature")
    if not kf.covers(times[0], times[-1]):
        raise GridMismatch("Krotov function grid does not cover the trajectory")
    dt = times[1] - times[0]
    s = _s_values_on_grid(problem, kf, times, traj.states, traj.inputs)
    total = kf.q_value(traj.states[0], times[0]) + numerics.simpson_integral(s, dt)
    if problem.horizon.is_infinite or times[-1] < problem.horizon.tf - 1e-9:
        total -= kf.q_value(traj.states[-1], times[-1])
    else:
        total += s_terminal_value(problem, kf, traj.states[-1])
    return 0.5 * total


@dataclass(frozen=True)
class ConvexityCertificate:
    """Result of the semidefiniteness scan backing the convexity claim."""

    certified: bool
    min_eig_over_grid: float
    terminal_min_eig: float | None
    failure_time: float | None

    def summary(self):
        status = "certified" if self.certified else "NOT certified"
        terminal = ("n/a" if self.terminal_min_eig is None
                    else f"{self.terminal_min_eig:.6g}")
        return (f"{status}: min eig sym residual {self.min_eig_over_grid:.6g}, "
                f"terminal min eig {terminal}")


def terminal_gap(problem, kf):
    """Terminal convexity matrix: F - P(tf), or C'FC - P(tf) for tracking."""
    if problem.horizon.is_infinite:
        return None
    tf = problem.horizon.tf
    P = kf.P_at(tf)
    if problem.kind == REGULATION:
        return problem.F - P
    C = problem.C.eval(tf)
    return C.T @ problem.F @ C - P


def convexity_certificate(problem, kf, grid):
    """Scan sym(M_resid) over the grid plus the terminal gap.

    Certified iff every grid eigenvalue is >= -1e-8 and, for finite
    horizons, the terminal gap is also >= -1e-8.
    """
    grid = np.asarray(grid, dtype=float)
    min_eig = np.inf
    failure_time = None
    for t in grid:
        _check_in_horizon(problem, t)
        Mr = residual_matrix(problem, kf, t)
        eig = float(np.min(np.linalg.eigvalsh(0.5 * (Mr + Mr.T))))
        if eig < min_eig:
            min_eig = eig
        if eig < -CERTIFICATE_EIG_TOL and failure_time is None:
            failure_time = float(t)
    gap = terminal_gap(problem, kf)
    terminal_min = None if gap is None else float(np.min(np.linalg.eigvalsh(
        0.5 * (gap + gap.T))))
    certified = min_eig >= -CERTIFICATE_EIG_TOL and (
        terminal_min is None or terminal_min >= -CERTIFICATE_EIG_TOL)
    return ConvexityCertificate(
        certified=bool(certified),
        min_eig_over_grid=float(min_eig),
        terminal_min_eig=terminal_min,
        failure_time=failure_time,
    )


def max_certified_scale(problem, hi=100.0, tol=1e-4, grid=None):
    """Largest c > 0 such that the constant Krotov function P = c I certifies.

    Bisection over (0, hi]; assumes the certified set is an interval
    anchored at zero, which holds for the scalar scans used in practice.
    """
    if grid is None:
        t0 = problem.horizon.t0
        grid = np.array([t0]) if problem.horizon.is_infinite else \
            np.linspace(t0, problem.horizon.tf, 101)
    eye = np.eye(problem.n)

    def certified(c):
        return convexity_certificate(problem, KrotovFunction.constant(c * eye),
                                     grid).certified

    lo = 0.0
    if certified(hi):
        return hi
    hi_cur = hi
    while hi_cur - lo > tol:
        mid = 0.5 * (lo + hi_cur)
        if certified(mid):
            lo = mid
        else:
            hi_cur = mid
    return lo


def write_certificate_csv(problem, kf, grid, path):
    """Certificate report: `t, min_eig_sym_resid` rows, then the terminal line."""
    grid = np.asarray(grid, dtype=float)
    lines = ["t,min_eig_sym_resid"]
    for t in grid:
        Mr = residual_matrix(problem, kf, t)
        eig = float(np.min(np.linalg.eigvalsh(0.5 * (Mr + Mr.T))))
        lines.append(f"{float(t)!r},{eig!r}")
    cert = convexity_certificate(problem, kf, grid)
    terminal = float("nan") if cert.terminal_min_eig is None else cert.terminal_min_eig
    lines.append(f"{terminal!r},{int(cert.certified)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
