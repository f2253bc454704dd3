"""
Utility functions for logging and configuration management.

This module provides:
1. A function to initialize and configure a logger.
2. A function to apply the log level configured for the active environment.
3. A function to load configuration settings from a JSON file.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

LOGGER_ROOT = "heatpen"


def get_logger(name: str = LOGGER_ROOT) -> logging.Logger:
    """
    Initialize and configure a logger object.

    All loggers live under the ``heatpen`` namespace so one call to ``set_log_level``
    reaches every module. The handler is attached to the namespace root only.

    Args:
        name (str): Module name, usually ``__name__``.

    Returns:
        logging.Logger: A configured logger object for logging messages.
    """
    root = logging.getLogger(LOGGER_ROOT)
    if not root.handlers:  # Avoid adding multiple handlers if the logger is reused
        formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)
        root.addHandler(stream_handler)
        root.setLevel(logging.INFO)

    if name == LOGGER_ROOT:
        return root
    return root.getChild(name.rsplit(".", 1)[-1])


def set_log_level(level: str) -> None:
    """
    Apply a log level (e.g. ``"DEBUG"``) to every logger of the package.

    Args:
        level (str): Name of a standard logging level.

    Raises:
        ValueError: If the level name is unknown.
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level}")
    get_logger().setLevel(numeric)


def load_config(config_path: str) -> Dict[str, Any]:
    """
    Load configuration settings from a JSON file.

    Args:
        config_path (str): The path to the configuration file.

    Returns:
        Dict[str, Any]: A dictionary containing the configuration settings.

    Raises:
        FileNotFoundError: If the configuration file does not exist.
        json.JSONDecodeError: If the configuration file is not a valid JSON file.
    """
    config_file = Path(config_path)

    if not config_file.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    with open(config_path, "r", encoding="utf-8") as file:
        config: Dict[str, Any] = json.load(file)
        return config
