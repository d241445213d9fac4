"""
Feature Files

MAAF container for FeatureStacks:

    magic "MAAF" | u16 version=1 | u16 num_stages
    per stage:  u32 C | u32 H | u32 W | C·H·W little-endian float32 (row-major)
    metadata:   u16 id length | UTF-8 image id | u16 class id
    u32 CRC32 of every preceding byte
"""

import logging
import struct
from pathlib import Path
from typing import List

import numpy as np

from core.binary_io import ByteReader, read_bytes, write_with_crc
from core.tensor import Tensor
from models.features import FeatureStack
from utils.constants import MAAF_MAGIC, MAAF_VERSION

logger = logging.getLogger(__name__)

_FLOAT = np.dtype("<f4")


def encode_feature_stack(stack: FeatureStack) -> bytes:
    """Serialize a stack without the trailing checksum."""
    parts: List[bytes] = [MAAF_MAGIC, struct.pack("<HH", MAAF_VERSION, len(stack.stages))]
    for stage in stack.stages:
        c, h, w = stage.shape
        parts.append(struct.pack("<III", c, h, w))
        parts.append(np.ascontiguousarray(stage.data, dtype=_FLOAT).tobytes())
    image_id = stack.image_id.encode("utf-8")
    parts.append(struct.pack("<H", len(image_id)))
    parts.append(image_id)
    parts.append(struct.pack("<H", stack.class_id))
    return b"".join(parts)


def save_feature_file(stack: FeatureStack, path: Path) -> Path:
    """Write ``stack`` to ``path`` in MAAF format."""
    write_with_crc(path, encode_feature_stack(stack))
    return Path(path)


def load_feature_file(path: Path) -> FeatureStack:
    """
    Read a MAAF file.

    Raises:
        BadMagic, VersionMismatch, TruncatedFile, ChecksumMismatch, IoError
    """
    reader = ByteReader(read_bytes(path), Path(path))
    reader.expect_header(MAAF_MAGIC, MAAF_VERSION)
    (num_stages,) = reader.unpack("<H", "stage count")

    stages: List[Tensor] = []
    for index in range(num_stages):
        c, h, w = reader.unpack("<III", f"stage {index + 1} header")
        raw = reader.take(c * h * w * _FLOAT.itemsize, f"stage {index + 1} data")
        arr = np.frombuffer(raw, dtype=_FLOAT).astype(np.float32).reshape(c, h, w)
        stages.append(Tensor.from_array(arr))

    (id_length,) = reader.unpack("<H", "image id length")
    image_id = reader.take_text(id_length, "image id")
    (class_id,) = reader.unpack("<H", "class id")
    reader.verify_crc()

    logger.debug("Loaded feature file %s (%d stages)", path, num_stages)
    return FeatureStack(stages=stages, image_id=image_id, class_id=class_id)
