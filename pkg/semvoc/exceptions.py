"""
Custom Exceptions for semvoc

Provides structured error handling with machine-readable error codes and
process exit codes, so every pipeline stage fails with a single parsable line.
"""

from typing import Any, Dict, Optional


class SemVocError(Exception):
    """
    Base exception for semvoc.

    All custom exceptions inherit from this class.
    """

    def __init__(
        self,
        message: str,
        error_code: str = "INTERNAL_ERROR",
        exit_code: int = 1,
        details: Optional[Dict[str, Any]] = None
    ):
        """
        Initialize exception.

        Args:
            message: Human-readable error message
            error_code: Machine-readable error code
            exit_code: Process exit code used by the CLI
            details: Additional error details
        """
        self.message = message
        self.error_code = error_code
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


# Grad-core errors
class ContractViolation(SemVocError):
    """Raised when an op's shape or precondition contract is broken."""

    def __init__(self, op: str, reason: str, details: Optional[Dict[str, Any]] = None):
        merged = {"op": op, "reason": reason}
        merged.update(details or {})
        super().__init__(
            message=f"Contract violation in {op}: {reason}",
            error_code="CONTRACT_VIOLATION",
            exit_code=2,
            details=merged
        )


class GradientError(SemVocError):
    """Raised when a non-finite value shows up during backward."""

    def __init__(self, op: str, reason: str = "non-finite gradient"):
        super().__init__(
            message=f"Gradient error in backward of '{op}': {reason}",
            error_code="GRADIENT_ERROR",
            exit_code=3,
            details={"op": op, "reason": reason}
        )


# Signal processing errors
class SignalError(SemVocError):
    """Raised when a dsp precondition fails."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="SIGNAL_ERROR",
            exit_code=4,
            details=details
        )


class AudioFormatError(SignalError):
    """Raised when a WAV file is not 16-bit PCM mono."""

    def __init__(self, path: str, reason: str):
        super().__init__(
            message=f"Unsupported audio format in {path}: {reason}",
            details={"path": path, "reason": reason}
        )
        self.error_code = "AUDIO_FORMAT_ERROR"


# Artifact errors
class CheckpointError(SemVocError):
    """Raised when a checkpoint or latent dump cannot be read or used."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="CHECKPOINT_ERROR",
            exit_code=5,
            details=details
        )


class ProviderMismatchError(SemVocError):
    """Raised when latents from one provider meet a model trained on another."""

    def __init__(self, expected: str, actual: str, reason: Optional[str] = None):
        message = f"Latent provider mismatch: expected '{expected}', got '{actual}'"
        if reason:
            message += f" - {reason}"

        super().__init__(
            message=message,
            error_code="PROVIDER_MISMATCH",
            exit_code=6,
            details={"expected": expected, "actual": actual, "reason": reason}
        )


class ConfigurationError(SemVocError):
    """Raised when a configuration value is invalid."""

    def __init__(self, parameter: str, value: Any, reason: str):
        super().__init__(
            message=f"Invalid configuration '{parameter}': {reason}",
            error_code="CONFIG_ERROR",
            exit_code=7,
            details={
                "parameter": parameter,
                "value": str(value),
                "reason": reason
            }
        )


class SamplingError(SemVocError):
    """Raised when the ODE sampler cannot continue."""

    def __init__(self, reason: str, step: Optional[int] = None):
        message = f"Sampling failed: {reason}"
        if step is not None:
            message += f" at step {step}"

        super().__init__(
            message=message,
            error_code="SAMPLING_ERROR",
            exit_code=8,
            details={"reason": reason, "step": step}
        )
        self.step = step


class EvaluationError(SemVocError):
    """Raised when an evaluation precondition fails."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(
            message=message,
            error_code="EVALUATION_ERROR",
            exit_code=9,
            details=details
        )


class CorpusError(SemVocError):
    """Raised when the synthetic corpus cannot be written or read."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        original_error: Optional[Exception] = None
    ):
        details: Dict[str, Any] = {"path": path}
        if original_error:
            details["original_error"] = str(original_error)

        super().__init__(
            message=message,
            error_code="CORPUS_ERROR",
            exit_code=10,
            details=details
        )


# Error Code Registry
ERROR_CODES = {
    "CONTRACT_VIOLATION": {
        "description": "An operation was called with inconsistent shapes or arguments",
        "exit_code": 2,
        "user_action": "Check array shapes passed to the failing op"
    },
    "GRADIENT_ERROR": {
        "description": "Non-finite value during backward",
        "exit_code": 3,
        "user_action": "Lower the learning rate or inspect the named op's inputs"
    },
    "SIGNAL_ERROR": {
        "description": "Signal processing precondition failed",
        "exit_code": 4,
        "user_action": "Check signal length, sample rate and STFT plan"
    },
    "AUDIO_FORMAT_ERROR": {
        "description": "WAV file is not 16-bit PCM mono",
        "exit_code": 4,
        "user_action": "Convert the file to 16-bit PCM mono"
    },
    "CHECKPOINT_ERROR": {
        "description": "Checkpoint or latent dump unreadable or incompatible",
        "exit_code": 5,
        "user_action": "Regenerate the artifact with the current version"
    },
    "PROVIDER_MISMATCH": {
        "description": "Latents and model come from different latent providers",
        "exit_code": 6,
        "user_action": "Encode latents with the provider the model was trained on"
    },
    "CONFIG_ERROR": {
        "description": "Invalid configuration value",
        "exit_code": 7,
        "user_action": "Fix the named configuration key"
    },
    "SAMPLING_ERROR": {
        "description": "ODE sampling diverged or was misconfigured",
        "exit_code": 8,
        "user_action": "Check sampler steps and the checkpoint"
    },
    "EVALUATION_ERROR": {
        "description": "Evaluation input does not meet requirements",
        "exit_code": 9,
        "user_action": "Provide more clips, classes or matching dimensions"
    },
    "CORPUS_ERROR": {
        "description": "Corpus could not be written or read",
        "exit_code": 10,
        "user_action": "Check the output directory and manifest"
    },
    "INTERNAL_ERROR": {
        "description": "Unexpected internal error",
        "exit_code": 11,
        "user_action": "Re-run with SEMVOC_LOG_LEVEL=DEBUG and inspect errors.log"
    }
}


def get_error_info(error_code: str) -> Dict[str, Any]:
    """
    Get detailed information about an error code.

    Args:
        error_code: Error code to look up

    Returns:
        Dictionary with error information
    """
    return ERROR_CODES.get(error_code, ERROR_CODES["INTERNAL_ERROR"])
