"""
Configuration management for the PABF toolkit.

Process-level settings (logging, worker count) come from environment
variables loaded with dotenv. Run configurations are flat `key = value` text
files with dotted section keys, parsed into a validated RunSpec.
"""

import logging
import math
from enum import Enum

from dotenv import load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from pabf.errors import ConfigError
from pabf.models import RunSpec

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process settings loaded from PABF_* environment variables."""

    model_config = SettingsConfigDict(env_prefix="PABF_")

    log_level: str = "INFO"
    log_file: str = ""
    workers: int = Field(1, ge=1)


def load_settings():
    """
    Load settings from a .env file and environment variables.

    Returns:
        Settings object containing process configuration.
    """
    load_dotenv()

    try:
        settings = Settings()
    except ValidationError as e:
        logger.error(f"Error loading settings: {str(e)}", exc_info=True)
        raise

    if not hasattr(logging, settings.log_level.upper()):
        raise ValueError(f"PABF_LOG_LEVEL is not a logging level: {settings.log_level}")
    return settings


def _tokenize(text):
    """Split config text into (key, value, line) triples."""
    entries = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, number, "expected `key = value`")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("<empty>", number, "missing key")
        entries.append((key, value, number))
    return entries


def _nest(entries):
    """Build the nested mapping RunSpec validates, remembering each key's line."""
    tree = {}
    lines = {}
    for key, value, number in entries:
        if key in lines:
            raise ConfigError(key, number, f"duplicate key (first set on line {lines[key]})")
        parts = key.split(".")
        node = tree
        for depth, part in enumerate(parts[:-1]):
            prefix = ".".join(parts[: depth + 1])
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(key, number, f"`{prefix}` is a value, not a section")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(key, number, "is a section, not a value")
        node[parts[-1]] = value
        lines[key] = number
    return tree, lines


def _line_for(key, lines):
    if key in lines:
        return lines[key]
    candidates = [n for k, n in lines.items() if k.startswith(key + ".")]
    return min(candidates) if candidates else None


def parse_config(text):
    """
    Parse run configuration text into a validated RunSpec.

    Args:
        text: Flat `key = value` configuration, `#` comments allowed.

    Returns:
        RunSpec with every default filled in.

    Raises:
        ConfigError: On unknown keys, malformed lines, or out-of-range values,
            naming the key and line number.
    """
    tree, lines = _nest(_tokenize(text))
    try:
        spec = RunSpec.model_validate(tree)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"] if not isinstance(part, int)) or "<config>"
        if first["type"] == "extra_forbidden":
            message = "unknown key"
        elif first["type"] == "missing":
            message = "missing required key"
        else:
            message = first["msg"]
        raise ConfigError(key, _line_for(key, lines), message) from None

    logger.debug(f"Parsed run configuration with {len(lines)} explicit keys")
    return spec


def load_run_spec(path):
    """
    Read and parse a run configuration file.

    Args:
        path: Path to the configuration text file.

    Returns:
        Validated RunSpec.
    """
    logger.info(f"Loading run configuration from {path}")
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def _format_value(value):
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(item) for item in value)
    return str(value)


def _flatten(prefix, data, out):
    for key, value in data.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            _flatten(name, value, out)
        else:
            out.append((name, _format_value(value)))


def format_config(spec):
    """
    Serialize a RunSpec as flat `key = value` text that parses back identically.

    Args:
        spec: The RunSpec to write.

    Returns:
        Configuration text, one key per line.
    """
    items = []
    _flatten("", spec.model_dump(), items)
    return "".join(f"{key} = {value}\n" for key, value in items)
