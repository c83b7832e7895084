"""Exception hierarchy shared by every package. The CLI maps these classes to exit codes."""


class ConfigValidationError(ValueError):
    """Run configuration or command-line flags failed validation (exit code 2)."""


class NumericalFailure(RuntimeError):
    """Base class for numerical breakdowns (exit code 3)."""


class StepSizeUnderflow(NumericalFailure):
    """Adaptive step fell below the floor; stiffness or blow-up."""


class NegativityFailure(NumericalFailure):
    """A density went below the projection window after an accepted step."""


class SchemeError(NumericalFailure):
    """A finite-difference scheme lost one of its structural properties."""


class CFLViolation(SchemeError):
    """Requested time step exceeds the monotonicity bound of the scheme."""


class BenchmarkCrossCheckError(NumericalFailure):
    """Direct and FFT right-hand sides disagree, timings are not reported."""


class GridTooCoarse(ValueError):
    """A transform grid lacks the nodes an operation needs."""


class MassMismatch(ValueError):
    """Trajectory mass and equilibrium mass differ."""


class DomainError(ArithmeticError):
    """A formula left its domain of definition (negative radicand)."""


class IllConditioned(NumericalFailure):
    """A linear solve would amplify rounding past the admissible level."""
