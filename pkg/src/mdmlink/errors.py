"""Exception hierarchy.

Argument problems subclass ``ValueError`` so callers that only care about
bad input can catch that.  Runtime DSP failures (sync, divergence, stale
state) derive from ``MdmRuntimeError``; the command line maps those to exit
code 2 and everything else to exit code 1.
"""


class MdmError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(MdmError, ValueError):
    pass


class DegenerateWindowError(InvalidArgumentError):
    pass


class PlanError(InvalidArgumentError):
    pass


class MatrixParseError(MdmError, ValueError):
    """Malformed transfer-matrix file.  ``row``/``column`` are 1-based."""

    def __init__(self, message, row=None, column=None, path=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        prefix = ", ".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.row = row
        self.column = column
        self.path = path


class ConfigError(MdmError, ValueError):
    pass


class MdmRuntimeError(MdmError, RuntimeError):
    pass


class TdmOverlapError(MdmRuntimeError):
    pass


class SyncError(MdmRuntimeError):
    def __init__(self, message, slot=None):
        super().__init__(message)
        self.slot = slot


class SyncAmbiguityError(SyncError):
    pass


class EstimateUnreliableError(MdmRuntimeError):
    pass


class DivergenceError(MdmRuntimeError):
    def __init__(self, message, mse_history=None):
        super().__init__(message)
        self.mse_history = [] if mse_history is None else list(mse_history)


class StaleStateError(MdmRuntimeError):
    pass


class SingularChannelError(MdmRuntimeError):
    pass


class PipelineError(MdmRuntimeError):
    """Wraps an error raised inside ``run_simulation`` with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
