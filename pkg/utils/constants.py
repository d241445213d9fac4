"""Constants, file-format identifiers and the configuration schema for the MAAE toolkit."""

from pathlib import Path
from typing import Dict


# Paths
USER_HOME = Path.home()
CONFIG_DIR = USER_HOME / ".maae"
LOG_FILE = CONFIG_DIR / "maae.log"
PRESET_DIR = Path(__file__).resolve().parent.parent / "configs"

# Application
APP_NAME = "maae"
APP_VERSION = "1.0.0"

# Feature files
MAAF_MAGIC = b"MAAF"
MAAF_VERSION = 1
MAAF_SUFFIX = ".maaf"
NUM_STAGES = 4

# Checkpoints
MAAC_MAGIC = b"MAAC"
MAAC_VERSION = 1
MAAC_SUFFIX = ".maac"

# Toy backbone
BACKBONE_CHANNELS = (16, 32, 64, 128)
BACKBONE_LEAK = 0.1
BACKBONE_DIVISOR = 16

# Adaptive noise generator
# A·w starts above the level where the shrinkage term outweighs the L_e gain.
ANG_INIT_WEIGHT = 0.5

# Parameter init: "identity" starts every residual group as an exact pass-through
INIT_SCHEMES = ("identity", "uniform")
INIT_PERTURBATION = 0.1

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Dataset layout
MANIFEST_FILE = "manifest.tsv"
GOOD_DIR = "good"
GROUND_TRUTH_DIR = "ground_truth"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
SYNTH_ANOMALY_KINDS = ("patch-swap", "intensity-blob", "stripe-break")

# Run outputs
LOSS_LOG_FILE = "loss_log.csv"
REPORT_FILE = "report.tsv"
HEATMAP_DIR = "heatmaps"
UNIFIED_UNIT = "unified"
CHECKPOINT_FILE = "model" + MAAC_SUFFIX
ABLATION_DIR = "ablation"
ABLATION_FILE = "ablation.tsv"
RESOLVED_CONFIG_FILE = "run.cfg"

# Heatmaps
HEATMAP_FLAT_VALUE = 128

# Dotted config key -> RunConfig attribute
CONFIG_KEYS: Dict[str, str] = {
    "paradigm": "paradigm",
    "image_size": "image_size",
    "lr": "lr",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "precision": "precision",
    "workers": "workers",
    "ang.intensity": "ang_intensity",
    "ang.lambda_ang": "lambda_ang",
    "ang.lambda_re": "lambda_re",
    "ang.seed": "ang_seed",
    "dilation": "dilation",
    "num_blocks": "num_blocks",
    "residual_period": "residual_period",
    "seed.backbone": "backbone_seed",
    "seed.init": "init_seed",
    "seed.shuffle": "shuffle_seed",
    "ablation.use_ang": "use_ang",
    "ablation.use_ffm": "use_ffm",
    "ablation.use_mixed_attention": "use_mixed_attention",
    "recon.target": "recon_target",
    "data.root": "data_root",
    "run.dir": "run_dir",
    "eval.pixel": "eval_pixel",
    "synth.num_classes": "synth_num_classes",
    "synth.train_per_class": "synth_train_per_class",
    "synth.test_normal_per_class": "synth_test_normal_per_class",
    "synth.test_anomalous_per_class": "synth_test_anomalous_per_class",
    "synth.seed": "synth_seed",
}

_POSITIVE_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_NONNEG_NUMBER = {"type": "number", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "paradigm": {"type": "string", "enum": ["unified", "separate"]},
        "image_size": {"type": "integer", "minimum": 16, "multipleOf": 16},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": _POSITIVE_INT,
        "epochs": _NONNEG_INT,
        "precision": {"type": "string", "enum": ["float32", "float64"]},
        "workers": _POSITIVE_INT,
        "ang.intensity": _NONNEG_NUMBER,
        "ang.lambda_ang": _NONNEG_NUMBER,
        "ang.lambda_re": _NONNEG_NUMBER,
        "ang.seed": _NONNEG_INT,
        "dilation": _POSITIVE_INT,
        "num_blocks": _NONNEG_INT,
        "residual_period": _POSITIVE_INT,
        "seed.backbone": _NONNEG_INT,
        "seed.init": _NONNEG_INT,
        "seed.shuffle": _NONNEG_INT,
        "ablation.use_ang": {"type": "boolean"},
        "ablation.use_ffm": {"type": "boolean"},
        "ablation.use_mixed_attention": {"type": "boolean"},
        "recon.target": {"type": "string", "enum": ["noised", "clean"]},
        "data.root": {"type": "string", "minLength": 1},
        "run.dir": {"type": "string", "minLength": 1},
        "eval.pixel": {"type": "boolean"},
        "synth.num_classes": _POSITIVE_INT,
        "synth.train_per_class": _POSITIVE_INT,
        "synth.test_normal_per_class": _POSITIVE_INT,
        "synth.test_anomalous_per_class": _POSITIVE_INT,
        "synth.seed": _NONNEG_INT,
    },
}

# Six ablation rows: (use_ang, use_ffm, use_mixed_attention)
ABLATION_GRID = (
    (False, False, False),
    (False, False, True),
    (True, False, False),
    (True, True, False),
    (True, False, True),
    (True, True, True),
)

# Error Messages (User-friendly)
ERROR_MESSAGES = {
    "SHAPE_MISMATCH": "{op}: incompatible shapes {left} and {right}",
    "RANK_ERROR": "{op}: expected rank {expected}, got shape {shape}",
    "EMPTY_OUTPUT": "conv2d: output would be {h}x{w} for input {shape}",
    "NOT_SCALAR": "backward() needs a scalar loss, got shape {shape}",
    "DETACHED_TENSOR": "loss was not produced on this tape",
    "NON_FINITE": "{op}: forward result contains NaN or Inf",
    "BAD_DIMS": "image dims {h}x{w} must be divisible by {divisor}",
    "BAD_MAGIC": "{path}: expected magic {expected!r}, found {found!r}",
    "VERSION_MISMATCH": "{path}: unsupported format version {version}",
    "TRUNCATED_FILE": "{path}: file ended before {what} was read",
    "CHECKSUM_MISMATCH": "{path}: CRC32 mismatch (stored {expected:#010x}, computed {actual:#010x})",
    "LAYOUT_ERROR": "{path}: {reason}",
    "MISSING_MASK": "no ground-truth mask for anomalous image {path}",
    "EMPTY_MAP": "anomaly map {image_id!r} is empty",
    "DEGENERATE_LABELS": "AUROC needs both classes, got {positives} positive and {negatives} negative labels",
    "EMPTY_DATASET": "training split is empty{detail}",
    "CONFIG_MISMATCH": "{what}: expected {expected}, got {actual}",
    "CHECKPOINT_MISMATCH": "{path}: {reason}",
    "NON_FINITE_LOSS": "non-finite {loss} at step {step}; aborting before checkpoint write",
    "UNKNOWN_KEY": "unknown config key: {key}",
    "BAD_VALUE": "invalid value for {key}: {reason}",
    "BAD_LINE": "{path}:{line}: expected 'key = value', got {text!r}",
    "CHECKPOINT_NOT_FOUND": "no checkpoint found at {path}; run 'train' first",
}
