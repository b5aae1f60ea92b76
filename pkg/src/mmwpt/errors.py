"""Exception types raised by the simulator.

Everything derives from :class:`WPTError` so callers (and the CLI) can catch
domain failures in one place. Validation-style errors also subclass
``ValueError``.
"""


class WPTError(Exception):
    """Base class for all simulator errors."""


class DomainError(WPTError, ValueError):
    """An argument lies outside the domain of a formula (e.g. omega <= 0)."""


class ModelValidationError(WPTError, ValueError):
    """A SystemModel (or one of its parts) violates an invariant."""


class CouplingBoundError(ModelValidationError):
    """A coupling exceeds |M| <= sqrt(L_i * L_j), i.e. |k| > 1."""


class SingularSystemError(WPTError, ArithmeticError):
    """The KVL matrix is singular or too ill-conditioned to solve."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class ReductionNotApplicableError(WPTError, ValueError):
    """The slab cells are not identical, so they cannot be lumped."""


class SingularGeometryError(WPTError, ValueError):
    """Two filaments coincide and their mutual inductance diverges."""


class GeometryError(WPTError, ValueError):
    """Coil positions are out of order or outside the allowed gap."""


class ExtrapolationError(WPTError, ValueError):
    """A coupling-table query lies outside the tabulated range."""


class EmptyResultError(WPTError, ValueError):
    """A sweep produced no usable points."""


class InfeasibleTargetError(WPTError, ValueError):
    """A tuning target cannot be reached with non-negative components."""


class TuningError(WPTError, ValueError):
    """A topology or optimizer could not be tuned."""


class ConfigError(WPTError, ValueError):
    """A configuration document is malformed; message starts with the field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
