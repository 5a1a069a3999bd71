"""
Tests for Logging Configuration (semvoc/config/logging_config.py)

Covers JSONFormatter, PerformanceLogger and setup_logging.
"""

import json
import logging
import sys

import pytest

from semvoc.config.logging_config import (
    ColoredFormatter,
    JSONFormatter,
    PerformanceLogger,
    setup_logging,
)


def _record(msg="hello world", level=logging.INFO, exc_info=None):
    return logging.LogRecord(
        name="test", level=level, pathname="test.py",
        lineno=1, msg=msg, args=(), exc_info=exc_info,
    )


class TestJSONFormatter:
    """Tests for JSONFormatter."""

    def test_formats_as_json(self):
        data = json.loads(JSONFormatter().format(_record()))
        assert data["level"] == "INFO"
        assert data["message"] == "hello world"
        assert "timestamp" in data
        assert "module" in data

    def test_includes_exception_info(self):
        try:
            raise ValueError("test error")
        except ValueError:
            record = _record("error occurred", logging.ERROR, sys.exc_info())
        data = json.loads(JSONFormatter().format(record))
        assert "ValueError" in data["exception"]

    def test_includes_training_fields(self):
        record = _record("msg")
        record.stage = "train-vocoder"
        record.step = 12
        record.loss = 0.25
        record.duration_ms = 150.5
        data = json.loads(JSONFormatter().format(record))
        assert data["stage"] == "train-vocoder"
        assert data["step"] == 12
        assert data["loss"] == 0.25
        assert data["duration_ms"] == 150.5

    def test_ignores_unknown_extras(self):
        record = _record("msg")
        record.favourite_color = "teal"
        assert "favourite_color" not in json.loads(JSONFormatter().format(record))


class TestColoredFormatter:
    """Tests for ColoredFormatter."""

    def test_formats_without_error(self):
        output = ColoredFormatter().format(_record("warning msg", logging.WARNING))
        assert "warning msg" in output
        assert "WARNING" in output


class TestPerformanceLogger:
    """Tests for PerformanceLogger context manager."""

    def test_normal_operation(self):
        with PerformanceLogger(logging.getLogger("perf_test"), "test operation") as pl:
            assert pl.start_time is not None
        assert pl.duration_ms is not None
        assert pl.extra["duration_ms"] == pl.duration_ms

    def test_carries_stage(self, caplog):
        logger = logging.getLogger("perf_stage")
        with caplog.at_level(logging.INFO, logger="perf_stage"):
            with PerformanceLogger(logger, "encode", stage="encode"):
                pass
        assert any(getattr(r, "stage", None) == "encode" for r in caplog.records)

    def test_exception_is_logged_and_reraised(self, caplog):
        logger = logging.getLogger("perf_fail")
        with caplog.at_level(logging.ERROR, logger="perf_fail"):
            with pytest.raises(RuntimeError):
                with PerformanceLogger(logger, "failing op"):
                    raise RuntimeError("boom")
        assert any("Failed: failing op" in r.getMessage() for r in caplog.records)


class TestSetupLogging:
    """Tests for setup_logging()."""

    def test_setup_with_json(self, tmp_path):
        setup_logging(log_level="DEBUG", log_dir=str(tmp_path), json_logs=True, console_output=True)
        assert (tmp_path / "semvoc.log").exists()
        assert (tmp_path / "errors.log").exists()

    def test_setup_without_console(self, tmp_path):
        setup_logging(log_level="WARNING", log_dir=str(tmp_path), json_logs=False, console_output=False)
        root = logging.getLogger()
        assert root.level == logging.WARNING
        assert not any(type(h) is logging.StreamHandler for h in root.handlers)

    def test_console_goes_to_stderr(self, tmp_path):
        setup_logging(log_level="INFO", log_dir=str(tmp_path), console_output=True)
        streams = [h.stream for h in logging.getLogger().handlers if type(h) is logging.StreamHandler]
        assert streams == [sys.stderr]

    def test_level_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SEMVOC_LOG_LEVEL", "ERROR")
        setup_logging(log_dir=str(tmp_path), console_output=False)
        assert logging.getLogger().level == logging.ERROR

    def test_unknown_level_falls_back_to_info(self, tmp_path):
        setup_logging(log_level="bogus", log_dir=str(tmp_path), console_output=False)
        assert logging.getLogger().level == logging.INFO

    @pytest.mark.parametrize("raw", ["true", "1", "yes", "TRUE"])
    def test_json_logs_truthy_spellings(self, tmp_path, monkeypatch, raw):
        monkeypatch.setenv("SEMVOC_JSON_LOGS", raw)
        setup_logging(log_dir=str(tmp_path), console_output=False)
        formatters = [h.formatter for h in logging.getLogger().handlers]
        assert formatters and all(isinstance(f, JSONFormatter) for f in formatters)

    @pytest.mark.parametrize("raw", ["false", "0", "no"])
    def test_json_logs_falsy_spellings(self, tmp_path, monkeypatch, raw):
        monkeypatch.setenv("SEMVOC_JSON_LOGS", raw)
        setup_logging(log_dir=str(tmp_path), console_output=False)
        assert not any(isinstance(h.formatter, JSONFormatter) for h in logging.getLogger().handlers)
