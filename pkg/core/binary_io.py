"""Shared helpers for the MAAF and MAAC binary containers."""

import logging
import struct
import zlib
from pathlib import Path

from utils.constants import ERROR_MESSAGES
from utils.errors import BadMagic, ChecksumMismatch, IoError, TruncatedFile, VersionMismatch

logger = logging.getLogger(__name__)


class ByteReader:
    """Sequential little-endian reader that reports truncation by name."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.pos + size
        if end > len(self.data):
            raise TruncatedFile(ERROR_MESSAGES["TRUNCATED_FILE"].format(path=self.path, what=what))
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def take_text(self, size: int, what: str) -> str:
        """UTF-8 field; bytes that do not decode are reported as a checksum failure."""
        raw = self.take(size, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise self._checksum_error(stored=self._trailing_crc(), payload_end=len(self.data) - 4) from None

    def _trailing_crc(self) -> int:
        if len(self.data) < 4:
            return 0
        return struct.unpack("<I", self.data[-4:])[0]

    def _checksum_error(self, stored: int, payload_end: int) -> ChecksumMismatch:
        actual = zlib.crc32(self.data[:max(payload_end, 0)]) & 0xFFFFFFFF
        return ChecksumMismatch(
            ERROR_MESSAGES["CHECKSUM_MISMATCH"].format(path=self.path, expected=stored, actual=actual),
            expected=stored,
            actual=actual,
        )

    def expect_header(self, magic: bytes, version: int) -> None:
        """Check magic bytes and the u16 format version that follows them."""
        found = self.take(len(magic), "magic")
        if found != magic:
            raise BadMagic(ERROR_MESSAGES["BAD_MAGIC"].format(path=self.path, expected=magic, found=found))
        (found_version,) = self.unpack("<H", "version")
        if found_version != version:
            raise VersionMismatch(ERROR_MESSAGES["VERSION_MISMATCH"].format(path=self.path, version=found_version))

    def verify_crc(self) -> None:
        """Compare the trailing CRC32 against every byte read so far."""
        payload_end = self.pos
        (stored,) = self.unpack("<I", "checksum")
        if stored != zlib.crc32(self.data[:payload_end]) & 0xFFFFFFFF or self.pos != len(self.data):
            raise self._checksum_error(stored, payload_end)


def read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def write_with_crc(path: Path, payload: bytes) -> None:
    """
    Append the CRC32 of ``payload`` and write atomically.

    Uses temp file + atomic rename pattern to prevent corruption if interrupted.
    """
    path = Path(path)
    data = payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        temp_file = path.with_suffix(path.suffix + ".tmp")
        temp_file.write_bytes(data)
        temp_file.replace(path)
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise IoError(f"cannot write {path}: {e}") from e
    logger.debug("Wrote %s (%d bytes)", path, len(data))
