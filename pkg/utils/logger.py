import os
import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

from dotenv import load_dotenv

try:
    from pythonjsonlogger.json import JsonFormatter
except ImportError:  # python-json-logger < 3
    from pythonjsonlogger.jsonlogger import JsonFormatter

try:
    from colorlog import ColoredFormatter
except ImportError:
    ColoredFormatter = None  # Optional if colorlog is not installed

load_dotenv()

LOG_DIR = os.getenv("LOG_DIR", "logs")
LOG_FILE = os.path.join(LOG_DIR, "sfclab.log")
MAX_LOG_SIZE = 5 * 1024 * 1024  # 5 MB
BACKUP_COUNT = 5

# ENV FLAGS
USE_JSON_LOGS = os.getenv("USE_JSON_LOGS", "false").lower() == "true"
LOG_TO_FILE = os.getenv("LOG_TO_FILE", "true").lower() == "true"
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()

PLAIN_FORMAT = "[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _json_formatter() -> logging.Formatter:
    return JsonFormatter(
        "%(asctime)s %(levelname)s %(name)s %(message)s",
        rename_fields={"asctime": "timestamp", "levelname": "level", "name": "module"},
    )


def get_logger(name: str, use_json: Optional[bool] = None) -> logging.Logger:
    if use_json is None:
        use_json = USE_JSON_LOGS

    logger = logging.getLogger(name)
    level = getattr(logging, LOG_LEVEL, logging.INFO)
    logger.setLevel(level)

    if logger.hasHandlers():
        return logger  # Avoid duplicate handlers

    if LOG_TO_FILE:
        os.makedirs(LOG_DIR, exist_ok=True)
        file_handler = RotatingFileHandler(LOG_FILE, maxBytes=MAX_LOG_SIZE, backupCount=BACKUP_COUNT)
        file_handler.setLevel(level)
        if use_json:
            file_handler.setFormatter(_json_formatter())
        else:
            file_handler.setFormatter(logging.Formatter(PLAIN_FORMAT, DATE_FORMAT))
        logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    if use_json:
        console_handler.setFormatter(_json_formatter())
    elif ColoredFormatter:
        console_handler.setFormatter(ColoredFormatter(
            "%(log_color)s" + PLAIN_FORMAT,
            datefmt=DATE_FORMAT,
            log_colors={
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'bold_red',
            }
        ))
    else:
        console_handler.setFormatter(logging.Formatter(PLAIN_FORMAT, DATE_FORMAT))
    logger.addHandler(console_handler)

    return logger


# Shared project logger
logger = get_logger("sfclab")
