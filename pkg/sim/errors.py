"""
Structured error types shared by the simulation core, the pipeline and the CLI.

Every error carries a stable machine code so failures can be reported as JSON
and recorded per sweep point.
"""

from typing import Any, Dict


class LabError(Exception):
    """Base class for all lab errors."""

    code = "internal-error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable payload."""
        return {
            "error": self.code,
            "message": self.message,
            "details": {k: _plain(v) for k, v in self.details.items()},
        }


def _plain(value: Any) -> Any:
    """Make numpy scalars and tuples JSON friendly."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value


class InvalidArgumentError(LabError, ValueError):
    code = "invalid-argument"


class ConfigError(InvalidArgumentError):
    code = "invalid-config"


class UnservedUeError(LabError):
    """A UE has zero rate so its upload time is undefined."""
    code = "unserved-ue"


class ProtocolError(LabError):
    """No UE is served in some round."""
    code = "protocol-error"


class MarginViolationError(LabError):
    """The DP tail bound needs epsilon > lambda."""
    code = "margin-violation"


class ZeroNoiseError(LabError):
    code = "zero-noise"


class InvalidExpansionPointError(LabError):
    code = "invalid-expansion-point"


class SolverFailureError(LabError):
    code = "solver-failure"


class InternalError(LabError):
    code = "internal-error"


class CannotDescaleError(LabError):
    code = "cannot-descale"


class UnsupportedLossError(LabError):
    code = "unsupported"


class SweepError(LabError):
    code = "sweep-failed"


class EmptyResultError(LabError):
    code = "empty-result"


class ResultsIOError(LabError, OSError):
    code = "io-error"


ERROR_TYPES = {
    cls.code: cls
    for cls in (
        LabError, InvalidArgumentError, ConfigError, UnservedUeError, ProtocolError,
        MarginViolationError, ZeroNoiseError, InvalidExpansionPointError,
        SolverFailureError, InternalError, CannotDescaleError, UnsupportedLossError,
        SweepError, EmptyResultError, ResultsIOError,
    )
}


def error_from_dict(payload: Dict[str, Any]) -> LabError:
    """Rebuild an error recorded by a pipeline stage."""
    cls = ERROR_TYPES.get(payload.get("error", ""), LabError)
    return cls(payload.get("message", "unknown failure"), **payload.get("details", {}))
