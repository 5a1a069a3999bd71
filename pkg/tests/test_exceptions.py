"""
Tests for Exception Hierarchy (semvoc/exceptions.py)

Covers all custom exception classes, their attributes, exit codes,
inheritance chains, and the error code registry.
"""

import pytest

from semvoc.exceptions import (
    ERROR_CODES,
    AudioFormatError,
    CheckpointError,
    ConfigurationError,
    ContractViolation,
    CorpusError,
    EvaluationError,
    GradientError,
    ProviderMismatchError,
    SamplingError,
    SemVocError,
    SignalError,
    get_error_info,
)


class TestSemVocError:
    """Tests for the base exception class."""

    def test_base_attributes(self):
        exc = SemVocError("Something broke", "TEST_ERROR", 3, {"key": "val"})
        assert exc.message == "Something broke"
        assert exc.error_code == "TEST_ERROR"
        assert exc.exit_code == 3
        assert exc.details == {"key": "val"}

    def test_defaults(self):
        exc = SemVocError("fail")
        assert exc.error_code == "INTERNAL_ERROR"
        assert exc.exit_code == 1
        assert exc.details == {}

    def test_str_is_message(self):
        exc = SemVocError("readable message")
        assert str(exc) == "readable message"


class TestGradCoreErrors:
    """Tests for contract and gradient errors."""

    def test_contract_violation(self):
        exc = ContractViolation("matmul", "incompatible shapes", details={"a": [2, 3]})
        assert "matmul" in exc.message
        assert exc.error_code == "CONTRACT_VIOLATION"
        assert exc.exit_code == 2
        assert exc.details["op"] == "matmul"
        assert exc.details["a"] == [2, 3]

    def test_gradient_error_default_reason(self):
        exc = GradientError("conv1d")
        assert exc.details["reason"] == "non-finite gradient"
        assert exc.exit_code == 3
        assert "conv1d" in exc.message


class TestSignalErrors:
    """Tests for signal and audio format errors."""

    def test_signal_error(self):
        exc = SignalError("too short", details={"length": 3})
        assert exc.error_code == "SIGNAL_ERROR"
        assert exc.exit_code == 4

    def test_audio_format_error_keeps_signal_exit_code(self):
        exc = AudioFormatError("a.wav", "stereo")
        assert isinstance(exc, SignalError)
        assert exc.error_code == "AUDIO_FORMAT_ERROR"
        assert exc.exit_code == 4
        assert exc.details == {"path": "a.wav", "reason": "stereo"}


class TestPipelineErrors:
    """Tests for artifact, configuration and stage errors."""

    def test_provider_mismatch_with_reason(self):
        exc = ProviderMismatchError("semantic-oracle", "acoustic-mel", "wrong dump")
        assert "semantic-oracle" in exc.message
        assert "acoustic-mel" in exc.message
        assert exc.message.endswith("wrong dump")
        assert exc.exit_code == 6

    def test_provider_mismatch_without_reason(self):
        exc = ProviderMismatchError("a", "b")
        assert exc.details["reason"] is None

    def test_configuration_error(self):
        exc = ConfigurationError("steps", -1, "must be positive")
        assert exc.message == "Invalid configuration 'steps': must be positive"
        assert exc.details["value"] == "-1"
        assert exc.exit_code == 7

    def test_sampling_error_step(self):
        exc = SamplingError("non-finite state", step=4)
        assert exc.step == 4
        assert exc.message.endswith("at step 4")

    def test_corpus_error_wraps_original(self):
        exc = CorpusError("cannot write clip", path="/x", original_error=OSError("disk full"))
        assert exc.details["path"] == "/x"
        assert "disk full" in exc.details["original_error"]
        assert exc.exit_code == 10

    def test_checkpoint_and_evaluation_codes(self):
        assert CheckpointError("bad").exit_code == 5
        assert EvaluationError("bad").exit_code == 9


class TestExceptionInheritance:
    """Tests for exception inheritance chain."""

    def test_all_inherit_from_base(self):
        exceptions = [
            ContractViolation("op", "r"),
            GradientError("op"),
            SignalError("m"),
            AudioFormatError("p", "r"),
            CheckpointError("m"),
            ProviderMismatchError("a", "b"),
            ConfigurationError("p", 1, "r"),
            SamplingError("r"),
            EvaluationError("m"),
            CorpusError("m"),
        ]
        for exc in exceptions:
            assert isinstance(exc, SemVocError)
            assert isinstance(exc, Exception)


class TestErrorCodeRegistry:
    """Tests for ERROR_CODES dict and get_error_info()."""

    def test_exit_codes_match_exceptions(self):
        pairs = [
            (ContractViolation("op", "r"), "CONTRACT_VIOLATION"),
            (GradientError("op"), "GRADIENT_ERROR"),
            (CheckpointError("m"), "CHECKPOINT_ERROR"),
            (ProviderMismatchError("a", "b"), "PROVIDER_MISMATCH"),
            (ConfigurationError("p", 1, "r"), "CONFIG_ERROR"),
            (SamplingError("r"), "SAMPLING_ERROR"),
            (EvaluationError("m"), "EVALUATION_ERROR"),
            (CorpusError("m"), "CORPUS_ERROR"),
        ]
        for exc, code in pairs:
            assert exc.error_code == code
            assert ERROR_CODES[code]["exit_code"] == exc.exit_code

    def test_each_code_has_required_fields(self):
        for code, info in ERROR_CODES.items():
            assert "description" in info, f"{code} missing description"
            assert "exit_code" in info, f"{code} missing exit_code"
            assert "user_action" in info, f"{code} missing user_action"

    def test_exit_codes_are_nonzero(self):
        assert all(info["exit_code"] > 0 for info in ERROR_CODES.values())

    def test_get_error_info_unknown_code(self):
        info = get_error_info("DOES_NOT_EXIST")
        assert info["exit_code"] == 11  # falls back to INTERNAL_ERROR
