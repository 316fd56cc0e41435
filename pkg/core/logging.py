import logging
import os
from typing import Dict, Optional

from .config import Settings, get_settings


_LOGGERS: Dict[str, logging.Logger] = {}


def get_logger(name: str, settings: Optional[Settings] = None) -> logging.Logger:
    if name in _LOGGERS:
        return _LOGGERS[name]

    settings = settings or get_settings()
    logger = logging.getLogger(name)
    level = getattr(logging, settings.log_level.upper(), logging.INFO)
    logger.setLevel(level)
    logger.propagate = False

    if not logger.handlers:
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        # stdout is reserved for CSV/JSON payloads
        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(level)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

        if settings.log_dir:
            os.makedirs(settings.log_dir, exist_ok=True)
            file_handler = logging.FileHandler(os.path.join(settings.log_dir, f"{name}.log"))
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    _LOGGERS[name] = logger
    return logger
