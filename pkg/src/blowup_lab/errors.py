"""Exception types shared across the package."""


class BlowupLabError(Exception):
    """Base class for all package errors."""


class ConfigError(BlowupLabError, ValueError):
    """Invalid parameters or configuration."""


class SolverError(BlowupLabError):
    """A numerical procedure failed to meet its tolerance."""


class PoleError(BlowupLabError):
    """A stereographic field contains south-pole points."""


class GridTooCoarse(BlowupLabError):
    """Not enough nodes for the requested derivative order."""


class SingularOrigin(BlowupLabError):
    """A field that must vanish at r = 0 does not."""


class QuadratureFailure(SolverError):
    """Adaptive quadrature exceeded its refinement budget."""


class SeriesTruncationError(SolverError):
    """A truncated power series is not accurate enough."""


class DomainError(BlowupLabError):
    """Evaluation requested outside the region of validity."""


class SeriesDivergence(DomainError):
    """Series evaluation requested outside its convergence window."""


class MatchFailure(SolverError):
    """Series and ODE solutions disagree at the handoff point."""


class FitIllConditioned(SolverError):
    """A least-squares fit has a condition number above the limit."""


class FitDiverged(SolverError):
    """A nonlinear fit left its admissible parameter range."""


class ScaleUnresolved(BlowupLabError):
    """The grid is too coarse for the concentration scale."""


class GridMismatch(BlowupLabError):
    """Fields live on different grids."""


class StepRejected(SolverError):
    """The implicit stage of a time step did not converge."""
