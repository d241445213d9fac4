"""Tests for MAAF feature files and MAAC checkpoints."""

import struct
import zlib

import numpy as np
import pytest

from core.backbone import toy_backbone_extract
from core.checkpoint import load_checkpoint, save_checkpoint
from core.feature_io import encode_feature_stack, load_feature_file, save_feature_file
from core.tensor import Tensor
from utils.errors import BadMagic, ChecksumMismatch, IoError, TruncatedFile, VersionMismatch


@pytest.fixture
def stack(rng):
    return toy_backbone_extract(Tensor(rng.uniform(size=(3, 32, 32))), seed=0,
                                image_id="class_01/test/stripe-break/002", class_id=1)


class TestFeatureFile:
    """Tests for the MAAF container."""

    def test_round_trip_bit_exact(self, tmp_path, stack):
        """Test values, shapes and metadata survive a save and load."""
        path = save_feature_file(stack, tmp_path / "x.maaf")
        loaded = load_feature_file(path)
        assert loaded.image_id == stack.image_id
        assert loaded.class_id == 1
        for a, b in zip(stack.stages, loaded.stages):
            assert a.shape == b.shape
            np.testing.assert_array_equal(a.data, b.data)

    def test_header_layout(self, tmp_path, stack):
        """Test magic, version and stage count at the start of the file."""
        raw = save_feature_file(stack, tmp_path / "x.maaf").read_bytes()
        assert raw[:4] == b"MAAF"
        assert struct.unpack("<HH", raw[4:8]) == (1, 4)
        assert struct.unpack("<III", raw[8:20]) == (16, 16, 16)

    def test_trailing_crc(self, tmp_path, stack):
        """Test the last four bytes are the CRC32 of everything before them."""
        raw = save_feature_file(stack, tmp_path / "x.maaf").read_bytes()
        assert raw[:-4] == encode_feature_stack(stack)
        assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])

    def test_flipped_byte(self, tmp_path, stack):
        """Test a corrupted payload byte raises ChecksumMismatch."""
        path = save_feature_file(stack, tmp_path / "x.maaf")
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatch) as info:
            load_feature_file(path)
        assert info.value.expected != info.value.actual

    def test_undecodable_image_id(self, tmp_path, stack):
        """Test a corrupted image id byte raises ChecksumMismatch, not a decode error."""
        path = save_feature_file(stack, tmp_path / "x.maaf")
        raw = bytearray(path.read_bytes())
        id_start = len(raw) - 4 - 2 - len(stack.image_id.encode("utf-8"))
        raw[id_start] = 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatch) as info:
            load_feature_file(path)
        assert info.value.expected != info.value.actual

    def test_truncated(self, tmp_path, stack):
        """Test a cut file raises TruncatedFile."""
        path = save_feature_file(stack, tmp_path / "x.maaf")
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(TruncatedFile):
            load_feature_file(path)

    def test_bad_magic(self, tmp_path):
        """Test a foreign file raises BadMagic."""
        path = tmp_path / "x.maaf"
        path.write_bytes(b"PNG\x00" + bytes(20))
        with pytest.raises(BadMagic):
            load_feature_file(path)

    def test_version_mismatch(self, tmp_path, stack):
        """Test an unknown version raises VersionMismatch."""
        path = save_feature_file(stack, tmp_path / "x.maaf")
        raw = bytearray(path.read_bytes())
        raw[4:6] = struct.pack("<H", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch):
            load_feature_file(path)

    def test_missing_file(self, tmp_path):
        """Test a missing path raises IoError."""
        with pytest.raises(IoError):
            load_feature_file(tmp_path / "absent.maaf")

    def test_no_temp_file_left(self, tmp_path, stack):
        """Test the atomic write removes its temporary file."""
        save_feature_file(stack, tmp_path / "x.maaf")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["x.maaf"]


class TestCheckpoint:
    """Tests for the MAAC container."""

    def test_round_trip(self, tmp_path, rng):
        """Test names, order, shapes and values survive."""
        table = {
            "model.block0.spatial.query": rng.normal(size=(8, 8)).astype(np.float32),
            "ffm.dc_bias": rng.normal(size=(8,)).astype(np.float32),
            "noise.weight": np.full((4, 8), 0.01, dtype=np.float32),
        }
        loaded = load_checkpoint(save_checkpoint(tmp_path / "model.maac", table))
        assert list(loaded) == list(table)
        for name, arr in table.items():
            np.testing.assert_array_equal(loaded[name], arr)

    def test_empty_table(self, tmp_path):
        """Test a checkpoint with no entries."""
        assert load_checkpoint(save_checkpoint(tmp_path / "empty.maac", {})) == {}

    def test_rejects_feature_file(self, tmp_path, stack):
        """Test the MAAF magic is refused."""
        path = save_feature_file(stack, tmp_path / "x.maac")
        with pytest.raises(BadMagic):
            load_checkpoint(path)

    def test_flipped_byte(self, tmp_path):
        """Test corruption is detected."""
        path = save_checkpoint(tmp_path / "model.maac", {"w": np.ones((3, 3), dtype=np.float32)})
        raw = bytearray(path.read_bytes())
        raw[-8] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatch):
            load_checkpoint(path)

    def test_undecodable_entry_name(self, tmp_path):
        """Test a corrupted name byte raises ChecksumMismatch, not a decode error."""
        path = save_checkpoint(tmp_path / "model.maac", {"w": np.ones((3, 3), dtype=np.float32)})
        raw = bytearray(path.read_bytes())
        name_start = len(b"MAAC") + struct.calcsize("<HIH")
        assert raw[name_start:name_start + 1] == b"w"
        raw[name_start] = 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatch):
            load_checkpoint(path)
