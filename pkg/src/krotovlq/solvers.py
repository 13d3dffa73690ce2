"""Matrix equation machinery.

The central object is the generalized Riccati-type map

    G(P, t) = Pdot + P A + A' P + Q_eff
              - 1/2 P M P - 1/4 P M P' - 1/4 P' M P,     M = B R^{-1} B',

whose solutions P need be neither symmetric nor definite.  For symmetric P
the three quadratic terms merge into the classical P M P, so G reduces to
the ordinary matrix differential / algebraic Riccati equation; that
reduction is exploited throughout the tests as an independent oracle.

Provided here:

* spd_sqrt            unique SPD square root of an SPD matrix
* generalized_residual  evaluate G at a candidate P
* integrate_mdre      backward RK4 for the generalized differential equation
* integrate_standard_mdre  classical MDRE baseline (oracle)
* solve_algebraic     multistart Newton enumeration of algebraic solutions
* solve_standard_are  classical stabilizing ARE solution via the Hamiltonian
                      invariant-subspace method (oracle)
* select_stabilizing  stabilizing selection: P + P' > 0 plus a closed-loop
                      spectrum check
* gain_from_P         feedback gain K = 1/2 R^{-1} B' (P + P') and
                      feedforward R^{-1} B' g
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import (
    InfiniteHorizon,
    IntegrationBlowup,
    NoSolutionFound,
    NoStabilizingSolution,
    NotSpd,
    NotStabilizable,
    ValidationError,
)
from .model import REGULATION

BLOWUP_LIMIT = 1e12

# Classification tolerances for algebraic solutions.
SYMMETRY_TOL = 1e-8
SPD_MIN_EIG = 1e-9


def spd_sqrt(R):
    """Unique symmetric positive definite square root of an SPD matrix."""
    R = np.asarray(R, dtype=float)
    if R.shape[0] != R.shape[1]:
        raise NotSpd(f"matrix must be square, got shape {R.shape}")
    if np.max(np.abs(R - R.T)) > 1e-12 * max(1.0, np.max(np.abs(R))):
        raise NotSpd("matrix must be symmetric")
    w, V = np.linalg.eigh(R)
    if np.min(w) <= 1e-10:
        raise NotSpd(f"matrix must be positive definite, min eigenvalue {np.min(w):.3e}")
    root = (V * np.sqrt(w)) @ V.T
    return 0.5 * (root + root.T)


def control_weight_inverse_map(problem, t=None):
    """M = B R^{-1} B' at time t."""
    B = problem.B.eval(problem.horizon.t0 if t is None else t)
    return B @ np.linalg.solve(problem.R, B.T)


def generalized_residual(problem, P, Pdot=None, t=None):
    """Residual of the generalized equation at P (Pdot = 0 when omitted)."""
    P = np.asarray(P, dtype=float)
    t = problem.horizon.t0 if t is None else t
    A = problem.A.eval(t)
    M = control_weight_inverse_map(problem, t)
    PM = P @ M
    value = P @ A + A.T @ P + problem.q_eff(t)
    value -= 0.5 * PM @ P + 0.25 * PM @ P.T + 0.25 * P.T @ M @ P
    if Pdot is not None:
        value = value + np.asarray(Pdot, dtype=float)
    return value


def classical_riccati_residual(problem, P, Pdot=None, t=None):
    """Residual of the classical Riccati equation (quadratic term P M P)."""
    P = np.asarray(P, dtype=float)
    t = problem.horizon.t0 if t is None else t
    A = problem.A.eval(t)
    M = control_weight_inverse_map(problem, t)
    value = P @ A + A.T @ P + problem.q_eff(t) - P @ M @ P
    if Pdot is not None:
        value = value + np.asarray(Pdot, dtype=float)
    return value


def terminal_value(problem):
    """Terminal condition for backward integration: F, or C'FC for tracking."""
    if problem.horizon.is_infinite:
        raise InfiniteHorizon("backward integration needs a finite horizon")
    tf = problem.horizon.tf
    if problem.kind == REGULATION:
        return problem.F.copy()
    C = problem.C.eval(tf)
    return C.T @ problem.F @ C


def _integrate_backward(problem, dt, rhs_drift):
    horizon = problem.horizon
    times, dt_eff = numerics.uniform_grid(horizon.t0, horizon.tf, dt)
    n_steps = len(times) - 1
    Pf = terminal_value(problem)

    # Backward in t is forward in s = tf - t; dP/ds = +drift(P, tf - s).
    def f(s, P):
        return rhs_drift(P, horizon.tf - s)

    try:
        _, path = numerics.rk4_path(f, Pf, 0.0, horizon.tf - horizon.t0,
                                    n_steps, max_abs=BLOWUP_LIMIT)
    except OverflowError as exc:
        raise IntegrationBlowup(
            "backward integration escaped toward infinity (entry beyond 1e12)"
        ) from exc
    return times, path[::-1].copy()


def integrate_mdre(problem, dt):
    """Backward RK4 solution of the generalized matrix differential equation.

    Returns (times, P) with times ascending over [t0, tf] and
    P[k] = P(times[k]); P[-1] equals the terminal value exactly.
    """

    def drift(P, t):
        return generalized_residual(problem, P, t=t)

    return _integrate_backward(problem, dt, drift)


def integrate_standard_mdre(problem, dt):
    """Backward RK4 solution of the classical MDRE (baseline oracle)."""

    def drift(P, t):
        return classical_riccati_residual(problem, P, t=t)

    return _integrate_backward(problem, dt, drift)


# ---------------------------------------------------------------------------
# Algebraic equation: multistart Newton enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgebraicSolution:
    """One residual-verified solution of the generalized algebraic equation."""

    P: np.ndarray
    residual_norm: float
    symmetric: bool
    spd_symmetric_part: bool
    closed_loop_stable: bool


@dataclass(frozen=True)
class SolutionSet:
    """Deduplicated, deterministically ordered algebraic solutions."""

    solutions: tuple

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def symmetric_members(self):
        return [s for s in self.solutions if s.symmetric]

    def write_csv(self, path):
        write_solution_set_csv(self, path)


def _commutation_matrix(n):
    # K vec(E) = vec(E') for column-major vec.
    K = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            K[i + j * n, j + i * n] = 1.0
    return K


def _vec(P):
    return P.flatten(order="F")


def _unvec(v, n):
    return v.reshape((n, n), order="F")


def _gen_jacobian(A, M, P, K):
    """Jacobian of vec(G(P)) with respect to vec(P), column-major convention."""
    n = A.shape[0]
    eye = np.eye(n)
    PM = P @ M
    PtM = P.T @ M
    J = np.kron(A.T, eye) + np.kron(eye, A.T)
    J -= 0.5 * (np.kron(PtM, eye) + np.kron(eye, PM))
    J -= 0.25 * (np.kron(PM, eye) + np.kron(eye, PM) @ K)
    J -= 0.25 * (np.kron(PtM, eye) @ K + np.kron(eye, PtM))
    return J


def _newton_polish(A, M, Qe, P0, max_iter=100):
    """Newton iteration with step-halving line search on the residual norm.

    Returns the final iterate and its max-abs residual (converged or not).
    """
    n = A.shape[0]
    K = _commutation_matrix(n)

    def resid(P):
        PM = P @ M
        return (P @ A + A.T @ P + Qe
                - 0.5 * PM @ P - 0.25 * PM @ P.T - 0.25 * P.T @ M @ P)

    P = P0.copy()
    r = resid(P)
    rnorm = numerics.max_abs(r)
    for _ in range(max_iter):
        if rnorm < 1e-12:
            break
        try:
            step = np.linalg.solve(_gen_jacobian(A, M, P, K), -_vec(r))
        except np.linalg.LinAlgError:
            break
        dP = _unvec(step, n)
        alpha = 1.0
        improved = False
        for _ in range(40):
            P_try = P + alpha * dP
            if np.all(np.isfinite(P_try)) and numerics.max_abs(P_try) < BLOWUP_LIMIT:
                r_try = resid(P_try)
                rnorm_try = numerics.max_abs(r_try)
                if rnorm_try < rnorm:
                    P, r, rnorm = P_try, r_try, rnorm_try
                    improved = True
                    break
            alpha *= 0.5
        if not improved:
            break
    return P, rnorm


def _random_start_scale(A, Qe):
    return 3.0 * (1.0 + numerics.max_abs(A) + np.sqrt(max(1.0, numerics.max_abs(Qe))))


def solve_algebraic(problem, n_starts=200, seed=0, residual_tol=1e-8, dedup_tol=1e-6):
    """Enumerate solutions of the generalized algebraic equation.

    Newton's method is run from `n_starts` random matrices (entries uniform
    in [-s, s] with s scaled to the problem data) plus two deterministic
    starts: the zero matrix and the classical stabilizing ARE solution when
    it exists.  Converged iterates are re-verified against `residual_tol`
    independently of the Newton convergence flag, deduplicated entrywise
    at `dedup_tol`, and ordered deterministically.
    """
    if not problem.horizon.is_infinite:
        raise ValidationError("solve_algebraic requires an infinite-horizon problem")
    if not problem.is_time_invariant:
        raise ValidationError("solve_algebraic requires a time-invariant problem")

    n = problem.n
    A = problem.A.eval(problem.horizon.t0)
    M = control_weight_inverse_map(problem)
    Qe = problem.q_eff()

    starts = [np.zeros((n, n))]
    try:
        starts.append(solve_standard_are(problem))
    except NotStabilizable:
        pass
    rng = np.random.default_rng(seed)
    s = _random_start_scale(A, Qe)
    for _ in range(int(n_starts)):
        starts.append(rng.uniform(-s, s, size=(n, n)))

    found = []
    for P0 in starts:
        P, _ = _newton_polish(A, M, Qe, P0)
        rnorm = numerics.max_abs(generalized_residual(problem, P))
        if rnorm >= residual_tol:
            continue
        if any(numerics.max_abs(P - other) < dedup_tol for other in found):
            continue
        found.append(P)

    if not found:
        raise NoSolutionFound("no Newton start converged to a verified solution")

    solutions = []
    for P in found:
        S = P + P.T
        A_cl = A - 0.5 * M @ S
        solutions.append(AlgebraicSolution(
            P=P,
            residual_norm=numerics.max_abs(generalized_residual(problem, P)),
            symmetric=numerics.max_abs(P - P.T) < SYMMETRY_TOL,
            spd_symmetric_part=bool(np.min(np.linalg.eigvalsh(S)) > SPD_MIN_EIG),
            closed_loop_stable=bool(np.max(np.linalg.eigvals(A_cl).real) < 0.0),
        ))

    solutions.sort(key=lambda sol: (round(float(np.trace(sol.P)), 9),
                                    tuple(np.round(sol.P.flatten(), 9))))
    return SolutionSet(solutions=tuple(solutions))


def stabilizing_candidates(solution_set):
    """Solutions qualifying for the stabilizing selection (P + P' > 0)."""
    return [s for s in solution_set if s.spd_symmetric_part]


def select_stabilizing(solution_set, problem):
    """Pick the stabilizing solution and return its control law.

    Qualifying solutions have P + P' > 0; the chosen one must also give a
    strictly stable closed loop.  Ties break toward minimal trace(P + P').
    """
    qualifiers = stabilizing_candidates(solution_set)
    if not qualifiers:
        raise NoStabilizingSolution("no solution has P + P' > 0")
    stable = [s for s in qualifiers if s.closed_loop_stable]
    if not stable:
        raise NoStabilizingSolution(
            "solutions with P + P' > 0 exist but none stabilizes the closed loop"
        )
    stable.sort(key=lambda sol: (float(np.trace(sol.P + sol.P.T)),
                                 tuple(np.round(sol.P.flatten(), 9))))
    return gain_from_P(problem, stable[0].P)


@dataclass(frozen=True)
class ControlLaw:
    """State feedback u(x, t) = -K(t) x + u_ff(t).

    K is (m, n) for a constant law or (N, m, n) on a grid; u_ff likewise
    (m,) or (N, m), or None for pure feedback.
    """

    K: np.ndarray
    times: np.ndarray | None = None
    u_ff: np.ndarray | None = None

    @property
    def is_constant(self):
        return self.times is None

    def K_at(self, t):
        if self.times is None:
            return self.K
        return numerics.grid_interp(self.times, self.K, t)

    def u_ff_at(self, t):
        if self.u_ff is None:
            return None
        if self.times is None:
            return self.u_ff
        return numerics.grid_interp(self.times, self.u_ff, t)

    def u(self, x, t):
        out = -self.K_at(t) @ x
        ff = self.u_ff_at(t)
        return out if ff is None else out + ff


def gain_from_P(problem, P, g=None, times=None):
    """Control law from a solution: K = 1/2 R^{-1} B' (P + P'), u_ff = R^{-1} B' g."""
    P = np.asarray(P, dtype=float)
    R = problem.R

    def gain_at(Pk, t):
        B = problem.B.eval(t)
        return 0.5 * np.linalg.solve(R, B.T @ (Pk + Pk.T))

    def ff_at(gk, t):
        B = problem.B.eval(t)
        return np.linalg.solve(R, B.T @ gk)

    if P.ndim == 2:
        t0 = problem.horizon.t0
        K = gain_at(P, t0)
        u_ff = None if g is None else ff_at(np.asarray(g, dtype=float), t0)
        return ControlLaw(K=K, u_ff=u_ff)

    if times is None:
        raise ValidationError("time-indexed P needs its grid of times")
    times = np.asarray(times, dtype=float)
    K = np.stack([gain_at(P[k], times[k]) for k in range(len(times))])
    u_ff = None
    if g is not None:
        g = np.asarray(g, dtype=float)
        u_ff = np.stack([ff_at(g[k], times[k]) for k in range(len(times))])
    return ControlLaw(K=K, times=times, u_ff=u_ff)


def solve_standard_are(problem):
    """Classical stabilizing ARE solution via the Hamiltonian spectrum.

    Builds the 2n x 2n Hamiltonian [[A, -M], [-Q_eff, -A']], selects the
    eigenvectors of its n stable eigenvalues, and recovers P from the
    spanned invariant subspace.  Raises NotStabilizable when fewer than n
    stable eigenvalues exist.
    """
    if not problem.is_time_invariant:
        raise ValidationError("classical ARE oracle requires a time-invariant problem")
    n = problem.n
    A = problem.A.eval(problem.horizon.t0)
    M = control_weight_inverse_map(problem)
    Qe = problem.q_eff()
    H = np.block([[A, -M], [-Qe, -A.T]])
    w, V = np.linalg.eig(H)
    stable = np.where(w.real < 0.0)[0]
    if len(stable) < n:
        raise NotStabilizable(
            f"Hamiltonian has {len(stable)} stable eigenvalues, need {n}"
        )
    order = stable[np.argsort(w[stable].real)]
    basis = V[:, order[:n]]
    X = basis[:n, :]
    Y = basis[n:, :]
    try:
        P = np.linalg.solve(X.T, Y.T).T
    except np.linalg.LinAlgError as exc:
        raise NotStabilizable("stable invariant subspace is not a graph") from exc
    P = P.real
    return 0.5 * (P + P.T)


def write_solution_set_csv(solution_set, path):
    """One row per solution: flattened P, residual norm, classification flags."""
    first = solution_set.solutions[0]
    n = first.P.shape[0]
    header = [f"p_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    header += ["residual_norm", "symmetric", "spd_symmetric_part", "closed_loop_stable"]
    lines = [",".join(header)]
    for sol in solution_set:
        cells = [repr(float(v)) for v in sol.P.flatten()]
        cells.append(repr(float(sol.residual_norm)))
        cells += [str(int(sol.symmetric)), str(int(sol.spd_symmetric_part)),
                  str(int(sol.closed_loop_stable))]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
