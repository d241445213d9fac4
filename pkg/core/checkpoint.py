"""
Checkpoints

MAAC container holding a named parameter table:

    magic "MAAC" | u16 version=1 | u32 entry count
    per entry:  u16 name length | UTF-8 name | u16 rank | u32 dims[rank]
                | little-endian float32 data (row-major)
    u32 CRC32 of every preceding byte
"""

import logging
import math
import struct
from pathlib import Path
from typing import Dict, List

import numpy as np

from core.binary_io import ByteReader, read_bytes, write_with_crc
from utils.constants import MAAC_MAGIC, MAAC_VERSION

logger = logging.getLogger(__name__)

_FLOAT = np.dtype("<f4")


def save_checkpoint(path: Path, tensors: Dict[str, np.ndarray]) -> Path:
    """Write a named parameter table; entries are stored in insertion order."""
    parts: List[bytes] = [MAAC_MAGIC, struct.pack("<HI", MAAC_VERSION, len(tensors))]
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<H", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_FLOAT).tobytes())
    write_with_crc(path, b"".join(parts))
    logger.info(f"Checkpoint saved: {path} ({len(tensors)} tensors)")
    return Path(path)


def load_checkpoint(path: Path) -> Dict[str, np.ndarray]:
    """
    Read a named parameter table.

    Raises:
        BadMagic, VersionMismatch, TruncatedFile, ChecksumMismatch, IoError
    """
    reader = ByteReader(read_bytes(path), Path(path))
    reader.expect_header(MAAC_MAGIC, MAAC_VERSION)
    (count,) = reader.unpack("<I", "entry count")

    tensors: Dict[str, np.ndarray] = {}
    for index in range(count):
        (name_length,) = reader.unpack("<H", f"entry {index} name length")
        name = reader.take_text(name_length, f"entry {index} name")
        (rank,) = reader.unpack("<H", f"{name} rank")
        shape = reader.unpack(f"<{rank}I", f"{name} shape")
        raw = reader.take(math.prod(shape) * _FLOAT.itemsize, f"{name} data")
        tensors[name] = np.frombuffer(raw, dtype=_FLOAT).astype(np.float32).reshape(shape)
    reader.verify_crc()

    logger.debug("Loaded checkpoint %s (%d tensors)", path, count)
    return tensors
