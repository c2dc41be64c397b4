"""
Tests for logging setup
"""
import logging

import pytest

from main import main
from src.errors import ConfigError
from src.logger import ROOT_LOGGER, get_logger, setup_logging


@pytest.fixture
def root():
    yield logging.getLogger(ROOT_LOGGER)
    for handler in logging.getLogger(ROOT_LOGGER).handlers:
        handler.close()
    logging.getLogger(ROOT_LOGGER).handlers.clear()


def test_log_file_named_after_command(tmp_path, root):
    setup_logging(log_level="DEBUG", log_to_file=True, log_dir=str(tmp_path / "logs"), run_name="decay")
    get_logger("metrics").debug("edge-sum residual 1e-16")
    for handler in root.handlers:
        handler.flush()
    files = list((tmp_path / "logs").glob("mplab_decay_*.log"))
    assert len(files) == 1
    text = files[0].read_text(encoding="utf-8")
    assert "mplab.metrics - DEBUG - edge-sum residual 1e-16" in text


def test_console_level_is_separate(root):
    logger = setup_logging(log_level="DEBUG", log_to_file=False, console_level="WARNING")
    assert logger.level == logging.DEBUG
    assert [h.level for h in root.handlers] == [logging.WARNING]
    assert logging.getLogger("py.warnings").handlers == root.handlers


def test_env_comments_are_stripped(monkeypatch, root):
    monkeypatch.setenv("LOG_LEVEL", "error   # quiet runs")
    monkeypatch.setenv("LOG_TO_FILE", "false # no files")
    assert setup_logging().level == logging.ERROR


def test_unknown_level(root):
    with pytest.raises(ConfigError):
        setup_logging(log_level="LOUD", log_to_file=False)
    with pytest.raises(ConfigError):
        setup_logging(log_level="INFO", log_to_file=False, console_level="silent")


def test_unknown_level_from_env_exits_with_two(tmp_path, monkeypatch, root):
    monkeypatch.setenv("LOG_LEVEL", "LOUD")
    assert main(["sca", "--out", str(tmp_path), "--quiet"]) == 2
