"""
Datasets

Synthetic multi-class dataset generation, MVTec-style directory walking,
line-oriented manifests and feature extraction for whole datasets.

Directory layout (both read and written):

    <root>/<class>/train/good/*.png
    <root>/<class>/test/good/*.png
    <root>/<class>/test/<defect>/*.png
    <root>/<class>/ground_truth/<defect>/<stem>_mask.png

Manifest lines: ``path<TAB>class<TAB>split<TAB>label<TAB>maskpath?``
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from core.backbone import toy_backbone_extract
from core.feature_io import load_feature_file, save_feature_file
from core.tensor import Tensor
from models.dataset import DatasetIndex, DatasetRecord, SyntheticSpec
from models.features import FeatureStack
from utils.constants import (
    ERROR_MESSAGES,
    GOOD_DIR,
    GROUND_TRUTH_DIR,
    IMAGE_SUFFIXES,
    MAAF_SUFFIX,
    MANIFEST_FILE,
)
from utils.errors import IoError, LayoutError, MissingMask

logger = logging.getLogger(__name__)

_SPLIT_CODES = {"train": 0, "test-normal": 1, "test-anomalous": 2}


# Synthetic textures

def class_texture(class_seed: int, size: int) -> np.ndarray:
    """
    Seeded sinusoid-plus-checker texture (3×size×size, values in [0.1, 0.9]).

    Frequencies are whole cycles across the image so circular shifts stay seamless.
    """
    rng = np.random.default_rng(class_seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    cell = int(rng.choice([4, 8, 16]))
    checker = ((np.arange(size)[:, None] // cell + np.arange(size)[None, :] // cell) % 2).astype(np.float64)

    channels = []
    for _ in range(3):
        fy, fx = rng.integers(1, 6, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (fy * yy + fx * xx) + phase)
        wave2 = np.cos(2 * np.pi * (rng.integers(1, 4) * yy) + rng.uniform(0, 2 * np.pi))
        mix = rng.uniform(0.2, 0.6)
        channels.append(mix * wave + 0.3 * wave2 + (1 - mix) * (2 * checker - 1) * rng.uniform(0.3, 1.0))
    texture = np.stack(channels)
    lo, hi = texture.min(), texture.max()
    return 0.1 + 0.8 * (texture - lo) / (hi - lo)


def jitter(texture: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Normal-sample variation: small circular shift, brightness change and pixel noise."""
    dy, dx = rng.integers(-2, 3, size=2)
    image = np.roll(texture, (int(dy), int(dx)), axis=(1, 2))
    image = image * (1.0 + rng.normal(0.0, 0.03)) + rng.normal(0.0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def inject_anomaly(image: np.ndarray, kind: str, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply one local defect.

    Returns:
        Tuple of (defective image, boolean mask of edited pixels)
    """
    size = image.shape[1]
    out = image.copy()
    mask = np.zeros((size, size), dtype=bool)

    if kind == "patch-swap":
        s = int(rng.integers(size // 8, size // 4 + 1))
        y, x = rng.integers(0, size - s, size=2)
        sy, sx = rng.integers(0, size - s, size=2)
        patch = image[:, sy:sy + s, sx:sx + s].transpose(0, 2, 1)
        out[:, y:y + s, x:x + s] = 1.0 - np.roll(patch, 1, axis=0)
        mask[y:y + s, x:x + s] = True
    elif kind == "intensity-blob":
        radius = float(rng.uniform(size / 16, size / 8))
        cy, cx = rng.uniform(radius, size - radius, size=2)
        yy, xx = np.mgrid[0:size, 0:size]
        dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
        mask = dist2 <= radius ** 2
        amplitude = 0.5 if image[:, mask].mean() < 0.5 else -0.5
        blob = amplitude * np.exp(-dist2 / (2 * (radius / 2) ** 2)) * mask
        out = out + blob[None]
    elif kind == "stripe-break":
        width = int(rng.integers(2, 5))
        length = int(rng.integers(size // 4, size // 2 + 1))
        offset = int(rng.integers(0, size - width))
        start = int(rng.integers(0, size - length))
        if rng.random() < 0.5:
            mask[offset:offset + width, start:start + length] = True
        else:
            mask[start:start + length, offset:offset + width] = True
        out[:, mask] = 1.0 - out[:, mask]
    else:
        raise ValueError(f"unknown anomaly kind {kind!r}")

    return np.clip(out, 0.0, 1.0), mask


def _save_png(arr: np.ndarray, path: Path) -> None:
    """Write a 3×H×W float image in [0, 1] or an H×W boolean mask as PNG."""
    if arr.dtype == bool:
        pixels = arr.astype(np.uint8) * 255
    else:
        pixels = np.round(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8).transpose(1, 2, 0)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path)


def generate_synthetic_dataset(spec: SyntheticSpec, root: Path) -> DatasetIndex:
    """
    Write a deterministic multi-class dataset under ``root`` plus its manifest.

    Per class: a seeded base texture; normal samples are jittered copies;
    anomalous test samples carry one injected defect and an exact mask.

    Raises:
        IoError: files could not be written
    """
    root = Path(root)
    size = spec.image_size
    records: List[DatasetRecord] = []
    class_names = [f"class_{c:02d}" for c in range(spec.num_classes)]
    logger.info(f"Generating synthetic dataset: {spec.num_classes} classes at {size}x{size} under {root}")

    try:
        for class_id, name in enumerate(class_names):
            texture = class_texture(spec.class_seed(class_id), size)
            class_dir = root / name

            for i in range(spec.train_per_class):
                rng = np.random.default_rng([spec.seed, class_id, _SPLIT_CODES["train"], i])
                path = class_dir / "train" / GOOD_DIR / f"{i:03d}.png"
                _save_png(jitter(texture, rng), path)
                records.append(DatasetRecord(path, class_id, "train", "normal"))

            for i in range(spec.test_normal_per_class):
                rng = np.random.default_rng([spec.seed, class_id, _SPLIT_CODES["test-normal"], i])
                path = class_dir / "test" / GOOD_DIR / f"{i:03d}.png"
                _save_png(jitter(texture, rng), path)
                records.append(DatasetRecord(path, class_id, "test", "normal"))

            for i in range(spec.test_anomalous_per_class):
                rng = np.random.default_rng([spec.seed, class_id, _SPLIT_CODES["test-anomalous"], i])
                kind = spec.anomaly_kinds[i % len(spec.anomaly_kinds)]
                image, mask = inject_anomaly(jitter(texture, rng), kind, rng)
                path = class_dir / "test" / kind / f"{i:03d}.png"
                mask_path = class_dir / GROUND_TRUTH_DIR / kind / f"{i:03d}_mask.png"
                _save_png(image, path)
                _save_png(mask, mask_path)
                records.append(DatasetRecord(path, class_id, "test", "anomalous", mask_path))
    except OSError as e:
        logger.error(f"Failed to write synthetic dataset: {e}")
        raise IoError(f"cannot write synthetic dataset under {root}: {e}") from e

    index = DatasetIndex(records=records, class_names=class_names, root=root)
    write_manifest(index, root / MANIFEST_FILE)
    logger.info("Synthetic dataset ready: %s", index.counts())
    return index


# Manifests and directory layouts

def write_manifest(index: DatasetIndex, path: Path) -> Path:
    """Write ``index`` as a manifest; paths are stored relative to the manifest's directory."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        return Path(os.path.relpath(Path(p).resolve(), base)).as_posix()

    lines = []
    for r in index.records:
        fields = [rel(r.path), index.class_name(r.class_id), r.split, r.label]
        if r.mask_path is not None:
            fields.append(rel(r.mask_path))
        lines.append("\t".join(fields))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        temp_file = path.with_suffix(".tmp")
        temp_file.write_text("\n".join(lines) + "\n", encoding="utf-8")
        temp_file.replace(path)
    except OSError as e:
        raise IoError(f"cannot write manifest {path}: {e}") from e
    logger.info(f"Manifest written: {path} ({len(lines)} records)")
    return path


def _parse_manifest(path: Path, require_masks: bool) -> DatasetIndex:
    base = path.parent
    class_ids: Dict[str, int] = {}
    records: List[DatasetRecord] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5):
            raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
                path=f"{path}:{line_no}", reason=f"expected 4 or 5 tab-separated fields, got {len(fields)}"))
        rel_path, class_name, split, label = fields[:4]
        mask_field = fields[4].strip() if len(fields) == 5 else ""
        if split not in ("train", "test") or label not in ("normal", "anomalous"):
            raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
                path=f"{path}:{line_no}", reason=f"bad split/label {split!r}/{label!r}"))
        if split == "train" and label != "normal":
            raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
                path=f"{path}:{line_no}", reason="anomalous record in the train split"))
        class_id = class_ids.setdefault(class_name, len(class_ids))
        mask_path = base / mask_field if mask_field else None
        record = DatasetRecord(base / rel_path, class_id, split, label, mask_path)
        _check_mask(record, require_masks)
        records.append(record)
    return DatasetIndex(records=records, class_names=list(class_ids), root=base)


def _images_in(directory: Path) -> List[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES + (MAAF_SUFFIX,))


def _walk_layout(root: Path, require_masks: bool) -> DatasetIndex:
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir() and ((d / "train").is_dir() or (d / "test").is_dir()))
    if not class_dirs:
        raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
            path=root, reason="no class directories with train/ or test/ found"))

    records: List[DatasetRecord] = []
    for class_id, class_dir in enumerate(class_dirs):
        train_dir = class_dir / "train"
        if train_dir.is_dir():
            for sub in sorted(d for d in train_dir.iterdir() if d.is_dir()):
                if sub.name != GOOD_DIR:
                    raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
                        path=sub, reason="train split may only contain 'good' images"))
                records.extend(DatasetRecord(p, class_id, "train", "normal") for p in _images_in(sub))

        test_dir = class_dir / "test"
        if test_dir.is_dir():
            for sub in sorted(d for d in test_dir.iterdir() if d.is_dir()):
                for image_path in _images_in(sub):
                    if sub.name == GOOD_DIR:
                        records.append(DatasetRecord(image_path, class_id, "test", "normal"))
                        continue
                    mask_path = class_dir / GROUND_TRUTH_DIR / sub.name / f"{image_path.stem}_mask.png"
                    record = DatasetRecord(
                        image_path, class_id, "test", "anomalous", mask_path if mask_path.exists() else None)
                    _check_mask(record, require_masks)
                    records.append(record)

    return DatasetIndex(records=records, class_names=[d.name for d in class_dirs], root=root)


def _check_mask(record: DatasetRecord, require_masks: bool) -> None:
    if not (require_masks and record.is_anomalous):
        return
    if record.mask_path is None or not record.mask_path.exists():
        raise MissingMask(ERROR_MESSAGES["MISSING_MASK"].format(path=record.path))


def load_dataset_manifest(path: Path, require_masks: bool = False) -> DatasetIndex:
    """
    Resolve a dataset from a manifest file, a directory holding ``manifest.tsv``,
    or an MVTec-style directory tree.

    Args:
        path: manifest file or dataset root
        require_masks: raise MissingMask for anomalous test images without masks

    Raises:
        LayoutError: unrecognized layout or anomalous training records
        MissingMask: see ``require_masks``
    """
    path = Path(path)
    if path.is_file():
        index = _parse_manifest(path, require_masks)
    elif (path / MANIFEST_FILE).is_file():
        index = _parse_manifest(path / MANIFEST_FILE, require_masks)
    elif path.is_dir():
        index = _walk_layout(path, require_masks)
    else:
        raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(path=path, reason="no such dataset"))

    logger.info(f"Dataset loaded from {path}: {len(index.class_names)} classes, {index.counts()}")
    return index


# Pixel data and features

def load_image(path: Path, image_size: int) -> Tensor:
    """Load an RGB image as a 3×S×S float32 tensor in [0, 1]."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (image_size, image_size):
                img = img.resize((image_size, image_size), Image.BILINEAR)
            pixels = np.asarray(img, dtype=np.float32) / 255.0
    except OSError as e:
        raise IoError(f"cannot read image {path}: {e}") from e
    return Tensor(pixels.transpose(2, 0, 1), dtype=np.float32)


def load_mask(record: DatasetRecord, image_size: int) -> np.ndarray:
    """Binary S×S mask for a test record; normal records get an all-zero mask."""
    if record.mask_path is None:
        if record.is_anomalous:
            raise MissingMask(ERROR_MESSAGES["MISSING_MASK"].format(path=record.path))
        return np.zeros((image_size, image_size), dtype=bool)
    try:
        with Image.open(record.mask_path) as img:
            img = img.convert("L")
            if img.size != (image_size, image_size):
                img = img.resize((image_size, image_size), Image.NEAREST)
            return np.asarray(img) > 127
    except OSError as e:
        raise IoError(f"cannot read mask {record.mask_path}: {e}") from e


def load_features(record: DatasetRecord, backbone_seed: int, image_size: int) -> FeatureStack:
    """Features for one record: read a MAAF file or run the toy backbone on the image."""
    if record.path.suffix == MAAF_SUFFIX:
        stack = load_feature_file(record.path)
        stack.class_id = record.class_id
    else:
        stack = toy_backbone_extract(
            load_image(record.path, image_size), backbone_seed, image_id=record.image_id, class_id=record.class_id)
    stack.validate()
    return stack


def extract_dataset(
    index: DatasetIndex,
    out_dir: Path,
    backbone_seed: int,
    image_size: int,
    workers: int = 1,
) -> DatasetIndex:
    """
    Extract every record to a MAAF file under ``out_dir`` and write a manifest
    whose records point at the feature files.
    """
    out_dir = Path(out_dir)

    def extract_one(record: DatasetRecord) -> DatasetRecord:
        stack = load_features(record, backbone_seed, image_size)
        target = (out_dir / index.class_name(record.class_id) / record.split
                  / record.path.parent.name / f"{record.path.stem}{MAAF_SUFFIX}")
        save_feature_file(stack, target)
        return DatasetRecord(target, record.class_id, record.split, record.label, record.mask_path)

    logger.info(f"Extracting {len(index.records)} records to {out_dir} (workers={workers})")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(extract_one, index.records))
    else:
        records = [extract_one(r) for r in index.records]

    extracted = DatasetIndex(records=records, class_names=list(index.class_names), root=out_dir)
    write_manifest(extracted, out_dir / MANIFEST_FILE)
    return extracted
