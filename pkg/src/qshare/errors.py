"""Exception hierarchy shared by every module of the package."""


class QShareError(Exception):
    """Base class for all errors raised by qshare."""


class ConfigurationError(QShareError, ValueError):
    """Invalid configuration, flags, scenario file or topology request."""


class PreconditionError(QShareError):
    """An operation was called on a state that violates its precondition."""


class ProtocolOrderError(QShareError):
    """A protocol step was invoked in the wrong phase."""


class ZeroBranchError(QShareError):
    """A forced measurement branch has (numerically) zero probability."""


class EntangledRetirementError(QShareError):
    """Qubits asked to leave the register are still entangled with the rest."""


class IncompleteTranscriptError(QShareError):
    """Retrieval was attempted without every required announcement."""


class InternalError(QShareError):
    """Numerical invariant broken inside the simulator."""
