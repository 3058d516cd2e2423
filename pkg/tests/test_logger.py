import logging
from logging.handlers import RotatingFileHandler

from logger import DcagLogger, get_logger, load_config, setup_logging


def test_load_config_missing_file(tmp_path):
    assert load_config(str(tmp_path / 'absent.yaml')) == {}


def test_default_config_sections():
    config = load_config()
    assert {'simulation', 'conversion', 'ctcs', 'experiments', 'logging'} <= set(config)


def test_file_handler_when_configured(tmp_path):
    path = tmp_path / 'config.yaml'
    log_file = tmp_path / 'logs' / 'run.log'
    path.write_text(f"logging:\n  level: DEBUG\n  file: {log_file}\n", encoding='utf-8')

    logger = DcagLogger(str(path)).get_logger()
    assert logger.level == logging.DEBUG
    assert not logger.propagate
    assert any(isinstance(h, RotatingFileHandler) for h in logger.handlers)
    assert log_file.parent.is_dir()


def test_console_only_without_file(tmp_path):
    quiet = tmp_path / 'quiet.yaml'
    quiet.write_text("logging:\n  file: null\n", encoding='utf-8')
    logger = setup_logging(str(quiet), force=True)
    assert len(logger.handlers) == 1
    assert get_logger() is logger


def test_relative_log_file_follows_config_dir(tmp_path, monkeypatch):
    config_dir, elsewhere = tmp_path / 'conf', tmp_path / 'work'
    config_dir.mkdir()
    elsewhere.mkdir()
    path = config_dir / 'config.yaml'
    path.write_text("logging:\n  file: logs/run.log\n", encoding='utf-8')
    monkeypatch.chdir(elsewhere)

    logger = DcagLogger(str(path)).get_logger()
    files = [h.baseFilename for h in logger.handlers if isinstance(h, RotatingFileHandler)]
    assert files == [str(config_dir / 'logs' / 'run.log')]
    assert not (elsewhere / 'logs').exists()
