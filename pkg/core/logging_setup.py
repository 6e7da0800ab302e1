import logging
import os
from logging.handlers import RotatingFileHandler

_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'


def _rotating(path: str, level: int, formatter: logging.Formatter) -> RotatingFileHandler:
    handler = RotatingFileHandler(
        path,
        maxBytes=5 * 1024 * 1024,
        backupCount=3,
        encoding='utf-8'
    )
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(log_dir: str = None):
    """
      1) debug_info.log — пишет уровни ниже WARNING (DEBUG и INFO).
      2) error_critical.log — пишет уровни ERROR и CRITICAL.
      3) violations.log — отдельный лог для нарушенных критериев (WARNING):
         флаги приёмки, обрезка Dσ̄, промахи Нэша–Аронсона, несошедшиеся решатели.
    """
    log_dir = log_dir or os.environ.get("LANGEVIN_LOG_DIR", "./logs")
    try:
        os.makedirs(log_dir, exist_ok=True)
    except OSError as e:
        raise RuntimeError(f"Cannot create log directory {log_dir}: {e}")

    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)
    # повторный вызов (тесты, несколько команд в одном процессе) не дублирует обработчики
    for handler in list(logger.handlers):
        if isinstance(handler, RotatingFileHandler):
            logger.removeHandler(handler)
            handler.close()

    formatter = logging.Formatter(_FORMAT)

    # 1) Логер: debug_info (DEBUG + INFO) -----
    debug_info_handler = _rotating(os.path.join(log_dir, 'debug_info.log'), logging.DEBUG, formatter)

    # Фильтр, чтобы отсечь WARNING и выше
    def debug_info_filter(record: logging.LogRecord):
        return record.levelno < logging.WARNING

    debug_info_handler.addFilter(debug_info_filter)
    logger.addHandler(debug_info_handler)

    # 2) Логер: error_critical (ERROR, CRITICAL) -----
    logger.addHandler(_rotating(os.path.join(log_dir, 'error_critical.log'), logging.ERROR, formatter))

    # 3) Логгер для нарушений критериев (violations)
    violations_logger = logging.getLogger("violations")
    violations_logger.setLevel(logging.WARNING)
    violations_logger.propagate = False
    for handler in list(violations_logger.handlers):
        violations_logger.removeHandler(handler)
        handler.close()
    violations_logger.addHandler(_rotating(os.path.join(log_dir, 'violations.log'), logging.WARNING, formatter))

    return logger
