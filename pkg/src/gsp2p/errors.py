"""Exception types raised across the package."""


class Gsp2pError(Exception):
    """Base class for all package errors."""


class FleetError(Gsp2pError, ValueError):
    """Invalid fleet data or an aggregate that violates model assumptions."""


class RegimeError(Gsp2pError, ValueError):
    """Closed-form frequency metrics requested outside the underdamped regime."""


class KernelError(Gsp2pError, ValueError):
    """Linear-algebra or conic kernel failure (bad alpha range, instability)."""


class SynthesisError(Gsp2pError, RuntimeError):
    """Controller synthesis could not produce an admissible gain."""


class HeadroomError(Gsp2pError, ValueError):
    """Headroom sweep or regression failure."""


class SchedulingError(Gsp2pError, ValueError):
    """Unit-commitment instance is inconsistent or cannot be solved."""


class ConfigError(Gsp2pError, ValueError):
    """Configuration document failed validation.

    ``pointer`` is the JSON pointer of the offending field.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class ReportError(Gsp2pError, RuntimeError):
    """A pipeline command could not produce its report."""


class PipelineError(Gsp2pError, RuntimeError):
    """A module error raised while running one pipeline command."""

    def __init__(self, command, cause):
        super().__init__(f"{command}: {type(cause).__name__}: {cause}")
        self.command = command
        self.cause = cause
