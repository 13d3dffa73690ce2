"""Problem definitions: dynamics, weights, horizons, references, validation.

An LqProblem bundles everything the synthesis routines need:

    regulation:  minimize 0.5 x(tf)' F x(tf) + 0.5 int x'Qx + u'Ru dt
    tracking:    minimize 0.5 e(tf)' F e(tf) + 0.5 int e'Qe + u'Ru dt,
                 e(t) = z(t) - C(t) x(t)

subject to dx/dt = A(t) x + B(t) u.  The dynamics matrices may carry a
reciprocal-shift profile (scale / (t + shift)); weights are constant.  All
types are immutable after validation, and validation pins down the shape
and definiteness invariants the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    InfiniteHorizonWithTerminalCost,
    NonPdWeight,
    NonPsdWeight,
    ProfileSingularity,
    ScenarioError,
    TimeVaryingInfiniteHorizon,
)

REGULATION = "regulation"
TRACKING = "tracking"

# Eigenvalue tolerance for weight definiteness checks.
WEIGHT_EIG_TOL = 1e-10


def _as_matrix(entries, name="matrix"):
    a = np.atleast_2d(np.asarray(entries, dtype=float))
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


def _as_vector(entries, name="vector"):
    a = np.atleast_1d(np.asarray(entries, dtype=float))
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ReciprocalShift:
    """Analytic profile scale / (t + shift); undefined at t = -shift."""

    scale: float
    shift: float

    def value(self, t):
        den = t + self.shift
        if abs(den) < 1e-12:
            raise ProfileSingularity(
                f"reciprocal-shift profile is singular at t = {t!r}"
            )
        return self.scale / den


@dataclass(frozen=True)
class TimeMatrix:
    """Matrix-valued function of time with fixed dimensions.

    Either constant (profile None) or base * profile(t) for a named
    analytic profile.
    """

    rows: int
    cols: int
    base: np.ndarray
    profile: ReciprocalShift | None = None

    @classmethod
    def constant(cls, entries):
        a = _as_matrix(entries)
        return cls(rows=a.shape[0], cols=a.shape[1], base=a)

    @classmethod
    def scaled(cls, entries, profile):
        a = _as_matrix(entries)
        return cls(rows=a.shape[0], cols=a.shape[1], base=a, profile=profile)

    @classmethod
    def identity(cls, n):
        return cls.constant(np.eye(n))

    @property
    def is_constant(self):
        return self.profile is None

    def eval(self, t):
        if not np.isfinite(t):
            raise ValueError("evaluation time must be finite")
        if self.profile is None:
            return self.base
        return self.base * self.profile.value(t)

    def eval_many(self, times):
        """Vectorized evaluation: shape (len(times), rows, cols)."""
        times = np.asarray(times, dtype=float)
        if self.profile is None:
            return np.broadcast_to(self.base, (len(times),) + self.base.shape)
        factors = np.array([self.profile.value(t) for t in times])
        return self.base[None, :, :] * factors[:, None, None]


@dataclass(frozen=True)
class ReferenceSignal:
    """Reference trajectory: zero, constant, ramp, or single-frequency sinusoid."""

    kind: str
    dimension: int
    value: np.ndarray | None = None      # constant level
    slope: np.ndarray | None = None      # ramp: z(t) = slope * t
    amplitude: np.ndarray | None = None  # sinusoid: z_i(t) = amplitude_i sin(omega t)
    omega: float | None = None

    @classmethod
    def zero(cls, dimension):
        return cls(kind="zero", dimension=int(dimension))

    @classmethod
    def constant(cls, value):
        v = _as_vector(value, "constant reference")
        return cls(kind="constant", dimension=len(v), value=v)

    @classmethod
    def ramp(cls, slope):
        s = _as_vector(slope, "ramp slope")
        return cls(kind="ramp", dimension=len(s), slope=s)

    @classmethod
    def sinusoid(cls, amplitude, omega):
        a = _as_vector(amplitude, "sinusoid amplitude")
        return cls(kind="sinusoid", dimension=len(a), amplitude=a, omega=float(omega))

    @property
    def is_zero(self):
        return self.kind == "zero"

    def eval(self, t):
        if not np.isfinite(t):
            raise ValueError("evaluation time must be finite")
        if self.kind == "zero":
            return np.zeros(self.dimension)
        if self.kind == "constant":
            return self.value.copy()
        if self.kind == "ramp":
            return self.slope * t
        if self.kind == "sinusoid":
            return self.amplitude * np.sin(self.omega * t)
        raise ValueError(f"unknown reference kind {self.kind!r}")

    def eval_many(self, times):
        """Vectorized evaluation: shape (len(times), dimension)."""
        times = np.asarray(times, dtype=float)
        if self.kind == "zero":
            return np.zeros((len(times), self.dimension))
        if self.kind == "constant":
            return np.broadcast_to(self.value, (len(times), self.dimension)).copy()
        if self.kind == "ramp":
            return np.outer(times, self.slope)
        return np.outer(np.sin(self.omega * times), self.amplitude)


@dataclass(frozen=True)
class Horizon:
    """Time window [t0, tf]; tf = None marks an infinite horizon."""

    t0: float
    tf: float | None

    def __post_init__(self):
        if self.tf is not None and not self.tf > self.t0:
            raise DimensionMismatch(
                f"finite horizon needs tf > t0, got t0={self.t0}, tf={self.tf}"
            )

    @classmethod
    def finite(cls, t0, tf):
        return cls(t0=float(t0), tf=float(tf))

    @classmethod
    def infinite(cls, t0=0.0):
        return cls(t0=float(t0), tf=None)

    @property
    def is_infinite(self):
        return self.tf is None

    def contains(self, t):
        if t < self.t0 - 1e-12:
            return False
        return self.is_infinite or t <= self.tf + 1e-12


@dataclass(frozen=True)
class LqProblem:
    """Full linear-quadratic problem description.

    Cost convention: the integrand and terminal term carry the multiplier
    one half, as written above.  Q and F live in error space (p x p) for
    tracking and in state space (n x n) for regulation, where C is pinned
    to the identity and the reference to zero.
    """

    kind: str
    A: TimeMatrix
    B: TimeMatrix
    C: TimeMatrix
    Q: np.ndarray
    R: np.ndarray
    F: np.ndarray
    horizon: Horizon
    x0: np.ndarray
    reference: ReferenceSignal
    validated: bool = field(default=False, compare=False)

    @property
    def n(self):
        return self.A.rows

    @property
    def m(self):
        return self.B.cols

    @property
    def p(self):
        return self.C.rows

    @property
    def is_time_invariant(self):
        return self.A.is_constant and self.B.is_constant and self.C.is_constant

    def q_eff(self, t=None):
        """State-space quadratic weight: Q for regulation, C'QC for tracking."""
        if self.kind == REGULATION:
            return self.Q
        C = self.C.eval(self.horizon.t0 if t is None else t)
        return C.T @ self.Q @ C

    def error(self, x, t):
        """Tracking error z(t) - C(t) x; zero vector for regulation."""
        if self.kind == REGULATION:
            return np.zeros(self.p)
        return self.reference.eval(t) - self.C.eval(t) @ x

    def running_cost(self, x, u, t):
        """Instantaneous cost with the one-half convention."""
        if self.kind == REGULATION:
            state_term = x @ self.Q @ x
        else:
            e = self.error(x, t)
            state_term = e @ self.Q @ e
        return 0.5 * (state_term + u @ self.R @ u)

    def terminal_cost(self, xf):
        """Terminal cost with the one-half convention (zero for infinite horizon)."""
        if self.horizon.is_infinite:
            return 0.0
        if self.kind == REGULATION:
            return 0.5 * float(xf @ self.F @ xf)
        e = self.error(xf, self.horizon.tf)
        return 0.5 * float(e @ self.F @ e)


def regulation(A, B, Q, R, horizon, x0, F=None, A_profile=None):
    """Build and validate a regulation problem from plain arrays."""
    A_tm = TimeMatrix.scaled(A, A_profile) if A_profile else TimeMatrix.constant(A)
    B_tm = TimeMatrix.constant(B)
    n = A_tm.rows
    Q = _as_matrix(Q, "Q")
    F = np.zeros_like(Q) if F is None else _as_matrix(F, "F")
    problem = LqProblem(
        kind=REGULATION,
        A=A_tm,
        B=B_tm,
        C=TimeMatrix.identity(n),
        Q=Q,
        R=_as_matrix(R, "R"),
        F=F,
        horizon=horizon,
        x0=_as_vector(x0, "x0"),
        reference=ReferenceSignal.zero(n),
    )
    return validate_problem(problem)


def tracking(A, B, C, Q, R, horizon, x0, reference, F=None, A_profile=None):
    """Build and validate a tracking problem from plain arrays."""
    A_tm = TimeMatrix.scaled(A, A_profile) if A_profile else TimeMatrix.constant(A)
    Q = _as_matrix(Q, "Q")
    F = np.zeros_like(Q) if F is None else _as_matrix(F, "F")
    problem = LqProblem(
        kind=TRACKING,
        A=A_tm,
        B=TimeMatrix.constant(B),
        C=TimeMatrix.constant(C),
        Q=Q,
        R=_as_matrix(R, "R"),
        F=F,
        horizon=horizon,
        x0=_as_vector(x0, "x0"),
        reference=reference,
    )
    return validate_problem(problem)


def _check_symmetric(M, name, error_cls):
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if np.max(np.abs(M - M.T)) > 1e-10 * max(1.0, np.max(np.abs(M))):
        raise error_cls(f"{name} must be symmetric")


def validate_problem(problem):
    """Check every LqProblem invariant; returns the problem unchanged.

    Idempotent: a problem that already validated passes straight through.
    """
    if problem.validated:
        return problem

    if problem.kind not in (REGULATION, TRACKING):
        raise ScenarioError(f"unknown problem kind {problem.kind!r}")

    n, m, p = problem.n, problem.m, problem.p
    if problem.A.cols != n:
        raise DimensionMismatch(f"A must be square, got {problem.A.rows}x{problem.A.cols}")
    if problem.B.rows != n:
        raise DimensionMismatch(f"B must have {n} rows, got {problem.B.rows}")
    if problem.C.cols != n:
        raise DimensionMismatch(f"C must have {n} columns, got {problem.C.cols}")
    if problem.x0.shape != (n,):
        raise DimensionMismatch(f"x0 must have length {n}, got {problem.x0.shape}")

    _check_symmetric(problem.Q, "Q", NonPsdWeight)
    _check_symmetric(problem.R, "R", NonPdWeight)
    _check_symmetric(problem.F, "F", NonPsdWeight)
    if problem.Q.shape != (p, p):
        raise DimensionMismatch(f"Q must be {p}x{p}, got {problem.Q.shape}")
    if problem.R.shape != (m, m):
        raise DimensionMismatch(f"R must be {m}x{m}, got {problem.R.shape}")
    if problem.F.shape != (p, p):
        raise DimensionMismatch(f"F must be {p}x{p}, got {problem.F.shape}")

    if np.min(np.linalg.eigvalsh(0.5 * (problem.R + problem.R.T))) <= WEIGHT_EIG_TOL:
        raise NonPdWeight("R must be positive definite (eigenvalue <= 1e-10)")
    for name, W in (("Q", problem.Q), ("F", problem.F)):
        if np.min(np.linalg.eigvalsh(0.5 * (W + W.T))) < -WEIGHT_EIG_TOL:
            raise NonPsdWeight(f"{name} must be positive semidefinite")

    if problem.kind == REGULATION:
        if not (problem.C.is_constant and np.array_equal(problem.C.base, np.eye(n))):
            raise DimensionMismatch("regulation problems require C = identity")
        if not problem.reference.is_zero:
            raise DimensionMismatch("regulation problems require a zero reference")
    else:
        if problem.reference.dimension != p:
            raise DimensionMismatch(
                f"reference dimension {problem.reference.dimension} != output dimension {p}"
            )

    if problem.horizon.is_infinite:
        if np.max(np.abs(problem.F)) > 0.0:
            raise InfiniteHorizonWithTerminalCost(
                "infinite horizon requires a zero terminal weight"
            )
        if not problem.is_time_invariant:
            raise TimeVaryingInfiniteHorizon(
                "infinite horizon requires time-invariant A, B, C"
            )

    # Dynamics must evaluate finitely somewhere inside the horizon.
    t_probe = problem.horizon.t0
    for name, tm in (("A", problem.A), ("B", problem.B), ("C", problem.C)):
        val = tm.eval(t_probe)
        if not np.all(np.isfinite(val)):
            raise DimensionMismatch(f"{name}({t_probe}) has non-finite entries")

    return replace(problem, validated=True)


def eval_time_matrix(tm, t):
    """Evaluate a TimeMatrix at time t."""
    return tm.eval(t)


def eval_reference(ref, t):
    """Evaluate a ReferenceSignal at time t."""
    return ref.eval(t)


# ---------------------------------------------------------------------------
# Scenario files: line-oriented `key = value`.  Matrices are row-major with
# rows separated by `;` and entries by `,`.
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = {
    "kind", "A", "B", "C", "Q", "R", "F",
    "t0", "tf", "x0", "reference", "A_profile",
}


def _parse_matrix(text, key):
    try:
        rows = [
            [float(entry) for entry in row.split(",") if entry.strip() != ""]
            for row in text.split(";")
        ]
        a = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ScenarioError(f"cannot parse matrix for key {key!r}: {text!r}") from exc
    if a.ndim != 2:
        raise ScenarioError(f"ragged matrix for key {key!r}: {text!r}")
    return a


def _parse_vector(text, key):
    a = _parse_matrix(text, key)
    if a.shape[0] != 1:
        raise ScenarioError(f"key {key!r} expects a single row of entries")
    return a[0]


def _parse_reference(text):
    parts = text.split(":")
    tag = parts[0].strip()
    if tag == "zero" and len(parts) == 1:
        return ("zero",)
    if tag == "ramp" and len(parts) == 2:
        return ("ramp", _parse_vector(parts[1], "reference"))
    if tag == "sin" and len(parts) == 3:
        return ("sin", _parse_vector(parts[1], "reference"), float(parts[2]))
    raise ScenarioError(f"cannot parse reference spec {text!r}")


def _parse_profile(text):
    parts = text.split(":")
    tag = parts[0].strip()
    if tag == "const" and len(parts) == 1:
        return None
    if tag == "recip_shift" and len(parts) == 3:
        return ReciprocalShift(scale=float(parts[1]), shift=float(parts[2]))
    raise ScenarioError(f"cannot parse profile spec {text!r}")


def parse_scenario(text):
    """Parse scenario text into a validated LqProblem."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioError(f"line {lineno}: expected `key = value`, got {line!r}")
        key, value = (s.strip() for s in stripped.split("=", 1))
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    for required in ("kind", "A", "B", "Q", "R", "tf", "x0"):
        if required not in raw:
            raise ScenarioError(f"missing required key {required!r}")

    kind = raw["kind"].strip().lower()
    if kind not in (REGULATION, TRACKING):
        raise ScenarioError(f"kind must be regulation or tracking, got {raw['kind']!r}")

    A = _parse_matrix(raw["A"], "A")
    B = _parse_matrix(raw["B"], "B")
    profile = _parse_profile(raw["A_profile"]) if "A_profile" in raw else None
    n = A.shape[0]
    C = _parse_matrix(raw["C"], "C") if "C" in raw else np.eye(n)
    Q = _parse_matrix(raw["Q"], "Q")
    R = _parse_matrix(raw["R"], "R")
    F = _parse_matrix(raw["F"], "F") if "F" in raw else None

    t0 = float(raw.get("t0", "0"))
    tf_text = raw["tf"].strip().lower()
    horizon = Horizon.infinite(t0) if tf_text == "inf" else Horizon.finite(t0, float(tf_text))

    x0 = _parse_vector(raw["x0"], "x0")

    ref_spec = _parse_reference(raw["reference"]) if "reference" in raw else ("zero",)
    p = C.shape[0]
    if ref_spec[0] == "zero":
        reference = ReferenceSignal.zero(p)
    elif ref_spec[0] == "ramp":
        reference = ReferenceSignal.ramp(ref_spec[1])
    else:
        reference = ReferenceSignal.sinusoid(ref_spec[1], ref_spec[2])

    if kind == REGULATION:
        return regulation(A, B, Q, R, horizon, x0, F=F, A_profile=profile)
    return tracking(A, B, C, Q, R, horizon, x0, reference, F=F, A_profile=profile)


def load_scenario(path):
    """Read and parse a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())
