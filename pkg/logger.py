"""
Логгер - система логирования для DCAG
"""

import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Dict, Optional
import yaml

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.yaml")

DEFAULT_LOG_CONFIG: Dict = {
    'level': 'INFO',
    'console_level': 'WARNING',
    'file': None,
    'max_file_size_mb': 10,
    'backup_count': 5,
}


def load_config(config_path: Optional[str] = None) -> Dict:
    """
    Загрузить config.yaml

    Args:
        config_path: Путь к файлу конфигурации (None = config.yaml рядом с модулем)

    Returns:
        Словарь конфигурации (пустой, если файла нет)
    """
    path = config_path or DEFAULT_CONFIG_PATH
    if not os.path.exists(path):
        return {}
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f) or {}


class DcagLogger:
    """Класс для настройки логирования"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Инициализация логгера

        Args:
            config_path: Путь к файлу конфигурации
        """
        config = load_config(config_path)
        self.log_config = {**DEFAULT_LOG_CONFIG, **(config.get('logging') or {})}
        # относительный путь - от каталога config.yaml
        log_file = self.log_config.get('file')
        if log_file and not os.path.isabs(log_file):
            base = os.path.dirname(os.path.abspath(config_path or DEFAULT_CONFIG_PATH))
            self.log_config['file'] = os.path.join(base, log_file)
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        """Настройка логгера"""
        logger = logging.getLogger('DcagRisk')
        logger.setLevel(self.log_config['level'])

        # Очищаем существующие обработчики
        logger.handlers.clear()
        logger.propagate = False

        formatter = logging.Formatter(
            '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        # Файл (с ротацией) - только если задан
        log_file = self.log_config.get('file')
        if log_file:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir)
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=self.log_config['max_file_size_mb'] * 1024 * 1024,
                backupCount=self.log_config['backup_count'],
                encoding='utf-8'
            )
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        # Консоль (stderr) - по умолчанию только предупреждения
        console_handler = logging.StreamHandler()
        console_handler.setLevel(self.log_config['console_level'])
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

        return logger

    def get_logger(self) -> logging.Logger:
        """Получить настроенный логгер"""
        return self.logger


# Глобальный экземпляр логгера
_global_logger: Optional[logging.Logger] = None


def setup_logging(config_path: Optional[str] = None, force: bool = False) -> logging.Logger:
    """
    Инициализация глобального логгера

    Args:
        config_path: Путь к файлу конфигурации
        force: Пересоздать обработчики даже если логгер уже настроен

    Returns:
        Настроенный логгер
    """
    global _global_logger
    if _global_logger is None or force:
        _global_logger = DcagLogger(config_path).get_logger()
    return _global_logger


def get_logger() -> logging.Logger:
    """
    Получить глобальный логгер

    Returns:
        Логгер
    """
    global _global_logger
    if _global_logger is None:
        return setup_logging()
    return _global_logger
