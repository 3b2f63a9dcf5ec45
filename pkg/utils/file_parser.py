import json
from pathlib import Path
from typing import Any, Dict, Union

from utils.logger import logger

SUPPORTED_FORMATS = {
    ".json": "JSON scenario document",
}


class ConfigParsingError(Exception):
    """Malformed or invalid scenario document"""

    def __init__(self, message: str, errors: list = None):
        super().__init__(message)
        self.errors = errors or [message]


def is_supported_format(filename: str) -> bool:
    return Path(filename).suffix.lower() in SUPPORTED_FORMATS


def read_config_text(file_path: Union[str, Path]) -> str:
    """Read a UTF-8 scenario file."""
    path = Path(file_path)
    if not path.exists():
        raise ConfigParsingError(f"Config file not found: {path}")
    if not is_supported_format(path.name):
        raise ConfigParsingError(f"Unsupported config format '{path.suffix}', expected one of {list(SUPPORTED_FORMATS)}")
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"[CONFIG] Failed to read {path}: {e}", exc_info=True)
        raise ConfigParsingError(f"Could not read config file {path}: {e}")


def parse_json_document(text: str) -> Dict[str, Any]:
    """Decode JSON text into a mapping; errors name the line and column."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParsingError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(document, dict):
        raise ConfigParsingError("scenario document must be a JSON object")
    return document
