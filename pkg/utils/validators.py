"""Input validation utilities for config files and command-line arguments."""

import os
import re
from pathlib import Path
from typing import Optional, Tuple

_KEY_PATTERN = re.compile(r"^[a-z_]+(\.[a-z_]+)?$")


def validate_path(path: str, must_exist: bool = True) -> Tuple[bool, str]:
    """
    Validate a file or directory path.

    Args:
        path: Path to validate (environment variables are expanded)
        must_exist: Require the path to exist and be readable

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not path or path.strip() == "":
        return False, "Path cannot be empty"

    try:
        expanded_path = os.path.expandvars(os.path.expanduser(path))
        path_obj = Path(expanded_path)

        if not must_exist:
            return True, ""

        if not path_obj.exists():
            return False, f"Path does not exist: {expanded_path}"

        if not os.access(path_obj, os.R_OK):
            return False, f"Path is not readable: {expanded_path}"

        return True, ""

    except (ValueError, OSError) as e:
        return False, f"Invalid path: {str(e)}"


def validate_output_dir(path: str) -> Tuple[bool, str]:
    """
    Validate a directory that outputs will be written to.

    The directory may not exist yet, but its closest existing ancestor must be
    a writable directory.

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not path or path.strip() == "":
        return False, "Output directory cannot be empty"

    path_obj = Path(os.path.expandvars(os.path.expanduser(path)))
    if path_obj.exists() and not path_obj.is_dir():
        return False, f"Output path is not a directory: {path_obj}"

    ancestor = path_obj
    while not ancestor.exists():
        if ancestor.parent == ancestor:
            break
        ancestor = ancestor.parent
    if not os.access(ancestor, os.W_OK):
        return False, f"Directory is not writable: {ancestor}"

    return True, ""


def validate_key(key: str) -> Tuple[bool, str]:
    """Check that a config key is syntactically a (possibly dotted) lower-case name."""
    if not key:
        return False, "Config key cannot be empty"
    if not _KEY_PATTERN.match(key):
        return False, f"Malformed config key: {key}"
    return True, ""


def parse_assignment(text: str) -> Optional[Tuple[str, str]]:
    """
    Split ``key = value`` (or ``key=value``) into stripped parts.

    Returns:
        (key, value) or None when the text has no '=' or an empty key
    """
    if "=" not in text:
        return None
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        return None
    return key, value.strip()


def parse_bool(value: str) -> Optional[bool]:
    """Parse true/false style strings; returns None when unrecognized."""
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    return None
