"""
Trainer

Unified and separate training of the fusion + noise + auto-encoder pipeline,
evaluation without noise, heatmap export and the ablation grid.

Every step runs two updates in sequence:

1. model and FFM parameters on L_e, with the noise weight W held constant;
2. W on L_ANG, with the freshly updated model held constant,
   replaying the exact noise draw of step 1.
"""

import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.ang import ang_loss, ang_sample, init_noise_params, noise_rng
from core.checkpoint import load_checkpoint, save_checkpoint
from core.config_manager import config_digest
from core.dataset import load_features, load_mask
from core.ffm import bilinear_fuse, ffm_fuse, init_ffm_params, standardize_tokens
from core.maae import init_maae_params, maae_forward, recon_loss
from core.optim import adam_step
from core.scoring import anomaly_map, anomaly_score, auroc, emit_heatmap, pixel_auroc
from core.tensor import Tape, Tensor, backward, get_default_dtype, precision
from models.dataset import DatasetIndex, DatasetRecord
from models.features import FeatureStack, FusedFeature
from models.params import FfmParams, MaaeParams, NoiseParams
from models.report import AblationRow, AnomalyMap, ClassResult, EvalReport
from models.run_config import RunConfig
from models.train_state import LossRecord, TrainResult, TrainState
from utils.constants import (
    ABLATION_DIR,
    ABLATION_GRID,
    CHECKPOINT_FILE,
    ERROR_MESSAGES,
    HEATMAP_DIR,
    LOSS_LOG_FILE,
    UNIFIED_UNIT,
)
from utils.errors import (
    CheckpointMismatch,
    ConfigMismatch,
    DegenerateLabels,
    EmptyDataset,
    LayoutError,
    MissingMask,
    NonFiniteError,
    NonFiniteLoss,
)

logger = logging.getLogger(__name__)


class FeatureCache:
    """Backbone features per record; the backbone is frozen so each image is extracted once."""

    def __init__(self, backbone_seed: int, image_size: int, workers: int = 1):
        self.backbone_seed = backbone_seed
        self.image_size = image_size
        self.workers = workers
        self._stacks: Dict[Path, FeatureStack] = {}

    def get(self, records: Sequence[DatasetRecord]) -> List[FeatureStack]:
        missing = [r for r in records if r.path not in self._stacks]
        if missing:
            logger.debug("Extracting features for %d records", len(missing))
            stacks = _map(lambda r: load_features(r, self.backbone_seed, self.image_size), missing, self.workers)
            self._stacks.update({r.path: s for r, s in zip(missing, stacks)})
        return [self._stacks[r.path] for r in records]

    def __len__(self) -> int:
        return len(self._stacks)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Apply ``fn`` to every item; results always come back in item order."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _feature_layout(stacks: Sequence[FeatureStack]) -> Tuple[Tuple[int, ...], Tuple[int, int]]:
    """Channel plan and grid shared by every stack."""
    channels, grid = stacks[0].channels, stacks[0].grid
    for stack in stacks[1:]:
        if stack.channels != channels or stack.grid != grid:
            raise ConfigMismatch(ERROR_MESSAGES["CONFIG_MISMATCH"].format(
                what=f"feature layout of {stack.image_id}", expected=(channels, grid),
                actual=(stack.channels, stack.grid)))
    return channels, grid


# Parameters and checkpoints

def init_train_state(config: RunConfig, channels: Tuple[int, ...], grid: Tuple[int, int]) -> TrainState:
    """Fresh parameters for the configured ablation switches, drawn from ``seed.init``."""
    dtype = get_default_dtype()
    rng = np.random.default_rng(config.init_seed)
    ffm = init_ffm_params(channels, config.dilation, rng, dtype) if config.use_ffm else None
    num_tokens, width = grid[0] * grid[1], sum(channels)
    model = init_maae_params(num_tokens, width, grid, config.num_blocks, config.residual_period,
                             config.dilation, config.use_mixed_attention, rng, dtype)
    noise = init_noise_params((num_tokens, width), config.effective_intensity, config.ang_seed, dtype)
    logger.info(f"Initialized model: {model.num_parameters()} MAAE, "
                f"{ffm.num_parameters() if ffm else 0} FFM, {noise.num_parameters()} noise parameters")
    return TrainState(model=model, ffm=ffm, noise=noise)


def _model_arrays(state: TrainState) -> Dict[str, np.ndarray]:
    arrays = {f"model.{k}": v for k, v in state.model.arrays().items()}
    if state.ffm is not None:
        arrays.update({f"ffm.{k}": v for k, v in state.ffm.arrays().items()})
    return arrays


def _split_model_arrays(arrays: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    model = {k[len("model."):]: v for k, v in arrays.items() if k.startswith("model.")}
    ffm = {k[len("ffm."):]: v for k, v in arrays.items() if k.startswith("ffm.")}
    return model, ffm


def state_arrays(state: TrainState) -> Dict[str, np.ndarray]:
    """Every persisted parameter under its checkpoint name."""
    arrays = _model_arrays(state)
    arrays["noise.weight"] = state.noise.weight.data
    return arrays


def with_state_arrays(state: TrainState, arrays: Dict[str, np.ndarray]) -> TrainState:
    model, ffm = _split_model_arrays(arrays)
    return replace(
        state,
        model=state.model.with_arrays(model),
        ffm=state.ffm.with_arrays(ffm) if state.ffm is not None else None,
        noise=state.noise.with_arrays({"weight": arrays["noise.weight"]}),
    )


def restore_state(path: Path, template: TrainState) -> TrainState:
    """
    Load a checkpoint into a state shaped like ``template``.

    Raises:
        CheckpointMismatch: missing file, or names/shapes disagree with the config
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointMismatch(ERROR_MESSAGES["CHECKPOINT_NOT_FOUND"].format(path=path))
    stored = load_checkpoint(path)
    expected = state_arrays(template)
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise CheckpointMismatch(ERROR_MESSAGES["CHECKPOINT_MISMATCH"].format(
            path=path, reason=f"missing {missing[:3]}, unexpected {extra[:3]}"))
    for name, arr in expected.items():
        if stored[name].shape != arr.shape:
            raise CheckpointMismatch(ERROR_MESSAGES["CHECKPOINT_MISMATCH"].format(
                path=path, reason=f"{name} has shape {stored[name].shape}, expected {arr.shape}"))
    dtype = get_default_dtype()
    return with_state_arrays(template, {k: v.astype(dtype) for k, v in stored.items()})


# Training

def fuse(stack: FeatureStack, ffm: Optional[FfmParams]) -> FusedFeature:
    """FFM fusion, or the bilinear baseline when the FFM is ablated, standardized to unit scale."""
    fused = ffm_fuse(stack, ffm) if ffm is not None else bilinear_fuse(stack)
    return standardize_tokens(fused)


def _reconstruction(
    stack: FeatureStack,
    ffm: Optional[FfmParams],
    model: MaaeParams,
    noise: NoiseParams,
    rng: np.random.Generator,
    recon_target: str,
) -> Tensor:
    """L_e of one item against the clean tokens, or X* when ``recon_target`` is ``noised``; no stop-gradient."""
    x = fuse(stack, ffm).tokens
    x_star, _ = ang_sample(noise, x, rng)
    y = maae_forward(x_star, model)
    target = x_star if recon_target == "noised" else x
    return recon_loss(y, target, x.shape[0])


def _model_item_grads(state: TrainState, stack: FeatureStack, item: int, config: RunConfig, step: int):
    """L_e and model/FFM gradients for one item; W is a constant here."""
    model = state.model.leaves()
    ffm = state.ffm.leaves() if state.ffm is not None else None
    noise = state.noise.leaves(requires_grad=False)
    with Tape() as tape:
        l_e = _reconstruction(stack, ffm, model, noise, noise_rng(config.ang_seed, step, item), config.recon_target)
    backward(l_e, tape)
    grads = {f"model.{k}": g for k, g in model.grads().items()}
    if ffm is not None:
        grads.update({f"ffm.{k}": g for k, g in ffm.grads().items()})
    return l_e.item(), grads


def _noise_item_grads(state: TrainState, stack: FeatureStack, item: int, config: RunConfig, step: int):
    """L_ANG and the W gradient for one item; model and FFM are constants here."""
    noise = state.noise.leaves()
    with Tape() as tape:
        l_e = _reconstruction(stack, state.ffm, state.model, noise,
                              noise_rng(config.ang_seed, step, item), config.recon_target)
        l_ang = ang_loss(l_e, noise.weight, config.lambda_ang, config.lambda_re)
    backward(l_ang, tape)
    return l_ang.item(), noise.grads()


def _mean_grads(per_item: List[Dict[str, np.ndarray]]) -> Dict[str, np.ndarray]:
    """Average per-item gradients, summed in item order."""
    merged = {name: g.copy() for name, g in per_item[0].items()}
    for grads in per_item[1:]:
        for name, g in grads.items():
            merged[name] += g
    return {name: g / len(per_item) for name, g in merged.items()}


def _check_finite(value: float, what: str, step: int) -> None:
    if not np.isfinite(value):
        raise NonFiniteLoss(ERROR_MESSAGES["NON_FINITE_LOSS"].format(loss=what, step=step), step=step)


def model_step(
    state: TrainState,
    stacks: Sequence[FeatureStack],
    items: Sequence[int],
    config: RunConfig,
    step: int,
) -> Tuple[TrainState, float]:
    """Adam update of the model and FFM on the batch L_e; W is held constant."""
    pairs = list(zip(stacks, items))
    try:
        results = _map(lambda p: _model_item_grads(state, p[0], p[1], config, step), pairs, config.workers)
    except NonFiniteError as e:
        raise NonFiniteLoss(ERROR_MESSAGES["NON_FINITE_LOSS"].format(loss="L_e", step=step), step=step) from e
    recon = float(np.mean([r[0] for r in results]))
    _check_finite(recon, "L_e", step)

    arrays, model_opt = adam_step(_model_arrays(state), _mean_grads([r[1] for r in results]),
                                  state.model_opt, config.lr)
    if not all(np.all(np.isfinite(a)) for a in arrays.values()):
        raise NonFiniteLoss(ERROR_MESSAGES["NON_FINITE_LOSS"].format(loss="model update", step=step), step=step)
    dtype = get_default_dtype()
    model, ffm = _split_model_arrays({k: v.astype(dtype, copy=False) for k, v in arrays.items()})
    state = replace(
        state,
        model=state.model.with_arrays(model),
        ffm=state.ffm.with_arrays(ffm) if state.ffm is not None else None,
        model_opt=model_opt,
    )
    return state, recon


def noise_step(
    state: TrainState,
    stacks: Sequence[FeatureStack],
    items: Sequence[int],
    config: RunConfig,
    step: int,
) -> Tuple[TrainState, float]:
    """Adam update of W on the batch L_ANG; model and FFM are held constant."""
    pairs = list(zip(stacks, items))
    try:
        results = _map(lambda p: _noise_item_grads(state, p[0], p[1], config, step), pairs, config.workers)
    except NonFiniteError as e:
        raise NonFiniteLoss(ERROR_MESSAGES["NON_FINITE_LOSS"].format(loss="L_ANG", step=step), step=step) from e
    ang_value = float(np.mean([r[0] for r in results]))
    _check_finite(ang_value, "L_ANG", step)

    new_w, noise_opt = adam_step(state.noise.arrays(), _mean_grads([r[1] for r in results]),
                                 state.noise_opt, config.lr)
    weight = new_w["weight"].astype(get_default_dtype(), copy=False)
    return replace(state, noise=state.noise.with_arrays({"weight": weight}), noise_opt=noise_opt), ang_value


def train_step(
    state: TrainState,
    stacks: Sequence[FeatureStack],
    items: Sequence[int],
    config: RunConfig,
) -> TrainState:
    """
    One alternating update on a batch: ``model_step`` then ``noise_step``.

    Args:
        stacks: batch features
        items: stable per-image indices (the noise stream id of each stack)

    Raises:
        NonFiniteLoss: a loss or updated parameter is NaN/Inf
    """
    step = state.step + 1
    state, recon = model_step(state, stacks, items, config, step)

    if config.use_ang:
        state, ang_value = noise_step(state, stacks, items, config, step)
    else:
        w = state.noise.weight.data
        ang_value = -config.lambda_ang * recon + config.lambda_re * float(np.sqrt((w * w).sum()))

    w = state.noise.weight.data
    record = LossRecord(step=step, recon_loss=recon, ang_loss=ang_value, noise_norm=float(np.sqrt((w * w).sum())))
    logger.debug("step %d: L_e=%.6g L_ANG=%.6g |W|=%.6g", step, recon, ang_value, record.noise_norm)
    return replace(state, step=step, history=state.history + [record])


def write_loss_log(history: Sequence[LossRecord], path: Path) -> Path:
    """CSV with header ``step,L_e,L_ANG,norm_W``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = path.with_suffix(".tmp")
    lines = ["step,L_e,L_ANG,norm_W"] + [r.to_csv_row() for r in history]
    temp_file.write_text("\n".join(lines) + "\n", encoding="utf-8")
    temp_file.replace(path)
    return path


def unit_dir(config: RunConfig, unit: str) -> Path:
    return Path(config.run_dir) / unit


def train_unit(
    config: RunConfig,
    records: Sequence[DatasetRecord],
    unit: str,
    cache: FeatureCache,
) -> TrainResult:
    """Train one model on ``records``, checkpointing after every epoch."""
    if not records:
        raise EmptyDataset(ERROR_MESSAGES["EMPTY_DATASET"].format(detail=f" for {unit}"))
    anomalous = [r for r in records if r.is_anomalous]
    if anomalous:
        raise LayoutError(ERROR_MESSAGES["LAYOUT_ERROR"].format(
            path=anomalous[0].path, reason="anomalous record in the train split"))

    stacks = cache.get(records)
    channels, grid = _feature_layout(stacks)
    state = init_train_state(config, channels, grid)
    checkpoint = unit_dir(config, unit) / CHECKPOINT_FILE
    loss_log = unit_dir(config, unit) / LOSS_LOG_FILE
    logger.info(f"Training {unit}: {len(records)} images, C={sum(channels)}, grid={grid}, "
                f"{config.epochs} epochs of batch {config.batch_size}")

    save_checkpoint(checkpoint, state_arrays(state))
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.shuffle_seed, epoch]).permutation(len(records))
        first_step = state.step
        for start in range(0, len(order), config.batch_size):
            batch = [int(i) for i in order[start:start + config.batch_size]]
            try:
                state = train_step(state, [stacks[i] for i in batch], batch, config)
            except NonFiniteLoss as e:
                logger.error(f"Training {unit} aborted: {e}")
                write_loss_log(state.history, loss_log)
                raise
        epoch_records = state.history[first_step:]
        logger.info(f"{unit} epoch {epoch + 1}/{config.epochs}: "
                    f"L_e={np.mean([r.recon_loss for r in epoch_records]):.6g} "
                    f"L_ANG={np.mean([r.ang_loss for r in epoch_records]):.6g} "
                    f"|W|={epoch_records[-1].noise_norm:.6g}")
        save_checkpoint(checkpoint, state_arrays(state))

    write_loss_log(state.history, loss_log)
    return TrainResult(unit=unit, checkpoint=checkpoint, loss_log=loss_log, state=state)


def training_units(config: RunConfig, dataset: DatasetIndex) -> Dict[str, List[DatasetRecord]]:
    """Train records per unit: one ``unified`` unit, or one per class."""
    if config.paradigm == "unified":
        return {UNIFIED_UNIT: dataset.train}
    return {dataset.class_name(c): dataset.split("train", c) for c in range(len(dataset.class_names))}


def train(config: RunConfig, dataset: DatasetIndex, cache: Optional[FeatureCache] = None) -> List[TrainResult]:
    """
    Train according to ``config.paradigm``.

    Returns:
        One TrainResult per unit (a single unified model or one per class)

    Raises:
        EmptyDataset, ConfigMismatch, NonFiniteLoss
    """
    if not dataset.train:
        raise EmptyDataset(ERROR_MESSAGES["EMPTY_DATASET"].format(detail=""))
    cache = cache or FeatureCache(config.backbone_seed, config.image_size, config.workers)
    with precision(config.precision):
        results = [train_unit(config, records, unit, cache)
                   for unit, records in training_units(config, dataset).items()]
    logger.info(f"Training finished: {len(results)} checkpoint(s) under {config.run_dir}")
    return results


# Evaluation

def infer_maps(
    state: TrainState,
    stacks: Sequence[FeatureStack],
    image_size: int,
    workers: int = 1,
) -> List[AnomalyMap]:
    """Noise-free reconstruction residual maps at image resolution."""

    def one(stack: FeatureStack) -> AnomalyMap:
        fused = fuse(stack, state.ffm)
        y = maae_forward(fused.tokens, state.model)
        return anomaly_map(y, fused.tokens, fused.grid, (image_size, image_size), stack.image_id)

    return _map(one, stacks, workers)


def _load_unit_state(config: RunConfig, unit: str, stacks: Sequence[FeatureStack]) -> TrainState:
    channels, grid = _feature_layout(stacks)
    template = init_train_state(config, channels, grid)
    return restore_state(unit_dir(config, unit) / CHECKPOINT_FILE, template)


def _class_result(
    name: str,
    records: Sequence[DatasetRecord],
    maps: Sequence[AnomalyMap],
    config: RunConfig,
) -> Optional[ClassResult]:
    labels = [int(r.is_anomalous) for r in records]
    scores = [anomaly_score(m) for m in maps]
    num_anomalous = sum(labels)
    if num_anomalous == 0 or num_anomalous == len(labels):
        logger.warning(f"Class {name} has {num_anomalous} anomalous of {len(labels)} test images; skipped")
        return None
    image = auroc(scores, labels)

    pixel = None
    if config.eval_pixel:
        try:
            masks = [load_mask(r, config.image_size) for r in records]
            pixel = pixel_auroc(maps, masks)
        except (MissingMask, DegenerateLabels) as e:
            logger.warning(f"Pixel AUROC skipped for {name}: {e}")
    logger.info(f"{name}: image AUROC {image:.4f}, pixel AUROC {'n/a' if pixel is None else f'{pixel:.4f}'}")
    return ClassResult(class_name=name, image_auroc=image, pixel_auroc=pixel,
                       num_normal=len(labels) - num_anomalous, num_anomalous=num_anomalous)


def evaluate(
    config: RunConfig,
    dataset: DatasetIndex,
    cache: Optional[FeatureCache] = None,
    heatmap_dir: Optional[Path] = None,
) -> EvalReport:
    """
    Score every test image with the checkpoints of ``config.run_dir``.

    No noise is applied and no parameter changes. Image and pixel AUROC are
    computed per class and averaged over classes.

    Raises:
        CheckpointMismatch: checkpoint missing or incompatible with the config
    """
    cache = cache or FeatureCache(config.backbone_seed, config.image_size, config.workers)
    rows: List[ClassResult] = []
    with precision(config.precision):
        states: Dict[str, TrainState] = {}
        for class_id, name in enumerate(dataset.class_names):
            records = dataset.split("test", class_id)
            if not records:
                logger.warning(f"Class {name} has no test images; skipped")
                continue
            stacks = cache.get(records)
            unit = UNIFIED_UNIT if config.paradigm == "unified" else name
            if unit not in states:
                states[unit] = _load_unit_state(config, unit, stacks)
            maps = infer_maps(states[unit], stacks, config.image_size, config.workers)
            if heatmap_dir is not None:
                write_heatmaps(records, maps, Path(heatmap_dir) / name)
            row = _class_result(name, records, maps, config)
            if row is not None:
                rows.append(row)

    if not rows:
        raise DegenerateLabels(ERROR_MESSAGES["DEGENERATE_LABELS"].format(positives="?", negatives="?"))
    report = EvalReport(rows=rows, config_digest=config_digest(config))
    logger.info(f"Evaluation average: image {report.image_auroc:.4f}")
    return report


def write_heatmaps(records: Sequence[DatasetRecord], maps: Sequence[AnomalyMap], out_dir: Path) -> List[Path]:
    """One PGM per test image, named ``<defect>_<stem>.pgm``."""
    return [emit_heatmap(m, Path(out_dir) / f"{r.path.parent.name}_{r.path.stem}.pgm")
            for r, m in zip(records, maps)]


def write_report(report: EvalReport, path: Path) -> Path:
    """TSV rows ``class, image_auroc, pixel_auroc`` plus the ``average`` row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_file = path.with_suffix(".tmp")
    temp_file.write_text("\n".join(report.to_lines()) + "\n", encoding="utf-8")
    temp_file.replace(path)
    logger.info(f"Report written: {path}")
    return path


def heatmaps(config: RunConfig, dataset: DatasetIndex, cache: Optional[FeatureCache] = None) -> EvalReport:
    """Evaluate and write heatmaps under ``<run.dir>/heatmaps/<class>/``."""
    return evaluate(config, dataset, cache, heatmap_dir=Path(config.run_dir) / HEATMAP_DIR)


# Ablation

def run_ablation(
    config: RunConfig,
    dataset: DatasetIndex,
    seeds: Sequence[int] = (0, 1, 2),
) -> List[AblationRow]:
    """
    Train and evaluate every (ANG, FFM, mixed attention) combination of the
    ablation grid; each row reports the median AUROC over ``seeds``.
    """
    cache = FeatureCache(config.backbone_seed, config.image_size, config.workers)
    rows: List[AblationRow] = []
    for use_ang, use_ffm, use_mixed in ABLATION_GRID:
        image_scores, pixel_scores = [], []
        for seed in seeds:
            row_config = replace(
                config,
                use_ang=use_ang,
                use_ffm=use_ffm,
                use_mixed_attention=use_mixed,
                init_seed=seed,
                ang_seed=seed,
                shuffle_seed=seed,
                run_dir=str(Path(config.run_dir) / ABLATION_DIR
                            / f"ang{int(use_ang)}_ffm{int(use_ffm)}_mixed{int(use_mixed)}" / f"seed{seed}"),
            )
            train(row_config, dataset, cache)
            report = evaluate(row_config, dataset, cache)
            image_scores.append(report.image_auroc)
            if report.pixel_auroc is not None:
                pixel_scores.append(report.pixel_auroc)
        row = AblationRow(
            use_ang=use_ang,
            use_ffm=use_ffm,
            use_mixed_attention=use_mixed,
            image_auroc=statistics.median(image_scores),
            pixel_auroc=statistics.median(pixel_scores) if pixel_scores else None,
            seeds=tuple(seeds),
        )
        logger.info(f"Ablation {row.label}: image {row.image_auroc:.4f}")
        rows.append(row)
    return rows
