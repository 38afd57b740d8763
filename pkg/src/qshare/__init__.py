"""N-party two-qubit state sharing with Bell pairs and Bell measurements only."""
from .errors import (
    ConfigurationError,
    IncompleteTranscriptError,
    ProtocolOrderError,
    QShareError,
    ZeroBranchError,
)
from .netsim import run_distributed
from .protocol_engine import ProtocolConfig, RunReport, TwoQubitState, run_full
from .resource_audit import audit, ledger_formula

__all__ = [
    "ConfigurationError",
    "IncompleteTranscriptError",
    "ProtocolConfig",
    "ProtocolOrderError",
    "QShareError",
    "RunReport",
    "TwoQubitState",
    "ZeroBranchError",
    "audit",
    "ledger_formula",
    "run_distributed",
    "run_full",
]
__version__ = "0.1.0"
