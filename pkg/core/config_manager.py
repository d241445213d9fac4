"""Configuration Manager for MAAE runs.

Handles loading, saving, and validation of flat ``key = value`` run configs:
- Presets shipped under ``configs/``
- ``--set key=value`` overrides applied on top of a file
- Type coercion and validation against ``CONFIG_SCHEMA`` (jsonschema)
- Atomic writes of resolved configs and a stable SHA-256 digest
"""

import hashlib
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from jsonschema import Draft7Validator

from models.run_config import RunConfig
from utils.constants import CONFIG_KEYS, CONFIG_SCHEMA, ERROR_MESSAGES, PRESET_DIR
from utils.errors import ConfigError
from utils.validators import parse_assignment, parse_bool, validate_key

logger = logging.getLogger(__name__)


class ConfigManager:
    """Reads, validates and writes run configurations."""

    def __init__(self, preset_dir: Optional[Path] = None):
        """Initialize with the directory presets are looked up in."""
        self.preset_dir = Path(preset_dir) if preset_dir else PRESET_DIR
        self.validator = Draft7Validator(CONFIG_SCHEMA)
        logger.debug(f"ConfigManager initialized: presets in {self.preset_dir}")

    def parse_text(self, text: str, source: str = "<text>") -> Dict[str, str]:
        """
        Parse ``key = value`` lines into raw strings.

        Blank lines and ``#`` comments are ignored; a later line overrides an
        earlier one with the same key.

        Raises:
            ConfigError: malformed line or unknown key
        """
        raw: Dict[str, str] = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            parsed = parse_assignment(stripped)
            if parsed is None:
                raise ConfigError(ERROR_MESSAGES["BAD_LINE"].format(path=source, line=line_no, text=line))
            key, value = parsed
            self._check_known(key)
            raw[key] = value
        return raw

    def _check_known(self, key: str) -> None:
        is_valid, error = validate_key(key)
        if not is_valid or key not in CONFIG_KEYS:
            raise ConfigError(ERROR_MESSAGES["UNKNOWN_KEY"].format(key=key), key=key)

    def coerce(self, key: str, value: str):
        """
        Convert a raw string to the type the schema declares for ``key``.

        Raises:
            ConfigError: unknown key or unparsable value
        """
        self._check_known(key)
        kind = CONFIG_SCHEMA["properties"][key]["type"]
        try:
            if kind == "boolean":
                parsed = parse_bool(value)
                if parsed is None:
                    raise ValueError(f"expected true/false, got {value!r}")
                return parsed
            if kind == "integer":
                return int(value)
            if kind == "number":
                return float(value)
            return value
        except ValueError as e:
            raise ConfigError(ERROR_MESSAGES["BAD_VALUE"].format(key=key, reason=e), key=key) from e

    def validate_config(self, data: Dict) -> Tuple[bool, List[str]]:
        """
        Validate a flat dotted-key dictionary against the schema.

        Returns:
            Tuple of (is_valid, list_of_errors)
        """
        errors = []
        for error in sorted(self.validator.iter_errors(data), key=lambda e: list(e.path)):
            key = error.path[0] if error.path else None
            errors.append(f"{key}: {error.message}" if key else error.message)
        return len(errors) == 0, errors

    def _validate(self, data: Dict) -> None:
        for key in data:
            self._check_known(key)
        for error in self.validator.iter_errors(data):
            key = str(error.path[0]) if error.path else None
            raise ConfigError(ERROR_MESSAGES["BAD_VALUE"].format(key=key, reason=error.message), key=key)

    def apply_overrides(self, data: Dict, overrides: Iterable[str]) -> Dict:
        """
        Apply ``key=value`` overrides to a copy of ``data``.

        Raises:
            ConfigError: malformed override, unknown key or bad value
        """
        result = dict(data)
        for override in overrides:
            parsed = parse_assignment(override)
            if parsed is None:
                raise ConfigError(ERROR_MESSAGES["BAD_LINE"].format(path="--set", line=1, text=override))
            key, value = parsed
            result[key] = self.coerce(key, value)
            logger.debug("Override %s = %r", key, result[key])
        return result

    def load(self, path: Optional[Path] = None, overrides: Iterable[str] = ()) -> RunConfig:
        """
        Build a RunConfig from defaults, an optional file and overrides.

        Args:
            path: config file; relative names without a file on disk are looked
                up as presets (``desk`` → ``configs/desk.cfg``)
            overrides: ``key=value`` strings applied last

        Raises:
            ConfigError: unreadable file, unknown key or invalid value
        """
        data = RunConfig().to_dict()
        if path is not None:
            resolved = self.resolve_path(Path(path))
            try:
                text = resolved.read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"cannot read config {resolved}: {e}") from e
            raw = self.parse_text(text, str(resolved))
            data.update({key: self.coerce(key, value) for key, value in raw.items()})
            logger.info(f"Configuration loaded: {resolved} ({len(raw)} keys)")

        data = self.apply_overrides(data, overrides)
        self._validate(data)
        return RunConfig.from_dict(data)

    def resolve_path(self, path: Path) -> Path:
        """Return ``path`` if it exists, otherwise the matching preset file."""
        if path.exists():
            return path
        preset = self.preset_dir / (path.name if path.suffix else f"{path.name}.cfg")
        if preset.exists():
            logger.debug("Using preset %s", preset)
            return preset
        return path

    def dumps(self, config: RunConfig) -> str:
        """Render as ``key = value`` lines in canonical key order."""
        lines = []
        for key, value in config.to_dict().items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, config: RunConfig, path: Path) -> Path:
        """
        Save a resolved configuration.

        Uses temp file + atomic rename pattern to prevent corruption if interrupted.
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            temp_file = path.with_suffix(".tmp")
            temp_file.write_text(self.dumps(config), encoding="utf-8")
            temp_file.replace(path)
            logger.info(f"Configuration saved: {path}")
        except OSError as e:
            logger.error(f"Failed to save configuration: {e}")
            raise ConfigError(f"cannot write config {path}: {e}") from e
        return path

    def digest(self, config: RunConfig) -> str:
        """SHA-256 over the canonical rendering."""
        return hashlib.sha256(self.dumps(config).encode("utf-8")).hexdigest()


def config_digest(config: RunConfig) -> str:
    return ConfigManager().digest(config)
