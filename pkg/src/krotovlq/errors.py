"""Exception types shared across the package.

The hierarchy mirrors how the CLI maps failures to exit codes:
ValidationError -> 1, SolverError -> 2, NumericalBlowup -> 3.
"""


class KrotovLqError(Exception):
    """Base class for all library errors."""


class ValidationError(KrotovLqError):
    """Problem or input data violates a contract."""


class NonPdWeight(ValidationError):
    """Input weight R is not symmetric positive definite."""


class NonPsdWeight(ValidationError):
    """State or terminal weight is not symmetric positive semidefinite."""


class DimensionMismatch(ValidationError):
    """Shapes of the problem data are inconsistent."""


class InfiniteHorizonWithTerminalCost(ValidationError):
    """Infinite-horizon problems must have a zero terminal weight."""


class TimeVaryingInfiniteHorizon(ValidationError):
    """Infinite-horizon problems must be time invariant."""


class ScenarioError(ValidationError):
    """Scenario file cannot be parsed."""


class ProfileSingularity(ValidationError):
    """A time-varying matrix profile is undefined at the requested time."""


class OutOfHorizon(ValidationError):
    """Requested time lies outside the problem horizon."""


class InfiniteHorizon(ValidationError):
    """Operation requires a finite horizon."""


class GridMismatch(ValidationError):
    """Time grids of two objects do not line up."""


class GridTooCoarse(ValidationError):
    """Grid has too few nodes for the requested quadrature."""


class NotSpd(ValidationError):
    """Matrix expected to be symmetric positive definite is not."""


class SolverError(KrotovLqError):
    """A synthesis step failed to produce a usable solution."""


class NoSolutionFound(SolverError):
    """No start of the multistart solve converged."""


class NoStabilizingSolution(SolverError):
    """Solution set contains no stabilizing member."""


class NotStabilizable(SolverError):
    """Hamiltonian spectrum has fewer stable eigenvalues than states."""


class NotHurwitz(SolverError):
    """Closed-loop matrix has an eigenvalue with nonnegative real part."""


class UnstableExponent(SolverError):
    """Closed-form feedforward requires a stable closed-loop exponent."""


class Unstabilizable(SolverError):
    """Iterative improvement could not produce a finite trajectory."""


class NumericalBlowup(KrotovLqError):
    """State or solution grew beyond the finite-escape guard."""


class IntegrationBlowup(NumericalBlowup):
    """Matrix or vector ODE integration escaped toward infinity."""


class Blowup(NumericalBlowup):
    """Simulated state norm exceeded the guard threshold."""


class DivergedIterate(NumericalBlowup):
    """Iterative improvement increased the cost beyond tolerance."""
