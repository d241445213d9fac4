"""Command-line interface: ``maae <command> [--config FILE] [--set key=value ...]``."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from core.config_manager import ConfigManager
from core.dataset import extract_dataset, generate_synthetic_dataset, load_dataset_manifest
from core.gradcheck import run_gradcheck_suite
from core.trainer import FeatureCache, evaluate, heatmaps, run_ablation, train, write_report
from models.run_config import RunConfig
from utils.constants import (
    ABLATION_FILE,
    APP_NAME,
    APP_VERSION,
    HEATMAP_DIR,
    REPORT_FILE,
    RESOLVED_CONFIG_FILE,
)
from utils.errors import ConfigError, MaaeError, UsageError
from utils.logger import setup_logging
from utils.validators import validate_output_dir, validate_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class ArgumentParser(argparse.ArgumentParser):
    """argparse variant that raises instead of exiting on bad arguments."""

    def error(self, message: str):
        raise UsageError(message)


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file or preset name (desk, paper)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--log-file", type=Path, help="log file (default ~/.maae/maae.log)")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = ArgumentParser(prog=APP_NAME, description="Mixed-attention auto encoder anomaly detection toolkit")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    commands.add_parser("synth", parents=[common], help="generate the synthetic multi-class dataset")
    extract = commands.add_parser("extract", parents=[common], help="extract backbone features to MAAF files")
    extract.add_argument("--out", type=Path, required=True, help="output directory for feature files")
    commands.add_parser("train", parents=[common], help="train the unified or per-class models")
    commands.add_parser("eval", parents=[common], help="evaluate checkpoints and print the AUROC report")
    commands.add_parser("heatmap", parents=[common], help="write PGM anomaly heatmaps for the test split")
    ablate = commands.add_parser("ablate", parents=[common], help="run the six-row ablation grid")
    ablate.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2], help="seeds to take the median over")
    gradcheck = commands.add_parser("gradcheck", parents=[common], help="run the finite-difference gradient suite")
    gradcheck.add_argument("--instances", type=int, default=20, help="random instances per operation")
    gradcheck.add_argument("--seed", type=int, default=0)
    return parser


def _load_dataset(config: RunConfig, require_masks: bool = False):
    is_valid, error = validate_path(config.data_root)
    if not is_valid:
        raise ConfigError(f"data.root: {error}", key="data.root")
    return load_dataset_manifest(Path(config.data_root), require_masks=require_masks)


def _check_run_dir(config: RunConfig) -> None:
    is_valid, error = validate_output_dir(config.run_dir)
    if not is_valid:
        raise ConfigError(f"run.dir: {error}", key="run.dir")


def cmd_synth(config: RunConfig, args) -> int:
    index = generate_synthetic_dataset(config.synthetic_spec(), Path(config.data_root))
    counts = index.counts()
    print(f"{len(index.class_names)} classes, {counts['train']} train, {counts['test']} test "
          f"({counts['anomalous']} anomalous) under {config.data_root}")
    return EXIT_OK


def cmd_extract(config: RunConfig, args) -> int:
    is_valid, error = validate_output_dir(str(args.out))
    if not is_valid:
        raise UsageError(f"--out: {error}")
    index = extract_dataset(_load_dataset(config), args.out, config.backbone_seed, config.image_size, config.workers)
    print(f"{len(index.records)} feature files written to {args.out}")
    return EXIT_OK


def cmd_train(config: RunConfig, args) -> int:
    _check_run_dir(config)
    results = train(config, _load_dataset(config))
    ConfigManager().save(config, Path(config.run_dir) / RESOLVED_CONFIG_FILE)
    for result in results:
        print(f"{result.unit}\t{result.checkpoint}\t{result.loss_log}")
    return EXIT_OK


def cmd_eval(config: RunConfig, args) -> int:
    report = evaluate(config, _load_dataset(config, require_masks=config.eval_pixel))
    write_report(report, Path(config.run_dir) / REPORT_FILE)
    print("\n".join(report.to_lines()))
    return EXIT_OK


def cmd_heatmap(config: RunConfig, args) -> int:
    heatmaps(config, _load_dataset(config, require_masks=config.eval_pixel))
    print(Path(config.run_dir) / HEATMAP_DIR)
    return EXIT_OK


def cmd_ablate(config: RunConfig, args) -> int:
    _check_run_dir(config)
    rows = run_ablation(config, _load_dataset(config, require_masks=config.eval_pixel), seeds=args.seeds)
    lines = [row.to_line() for row in rows]
    out = Path(config.run_dir) / ABLATION_FILE
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, args) -> int:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    reports = run_gradcheck_suite(instances=args.instances, seed=args.seed)
    print("\n".join(r.to_line() for r in reports))
    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.error(f"Gradient check failed for: {', '.join(failed)}")
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "heatmap": cmd_heatmap,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
}


def start_logging(args: argparse.Namespace, argv: Sequence[str], config: Optional[RunConfig] = None) -> Path:
    """Configure logging with the command line and, once loaded, the run's precision and layout in the banner."""
    context = {"Command": " ".join([args.command, *argv[1:]])}
    if config is not None:
        context.update({
            "Config": args.config or "defaults",
            "Precision": config.precision,
            "Paradigm": config.paradigm,
            "Run dir": config.run_dir,
        })
    return setup_logging(logging.DEBUG if args.verbose else logging.INFO, args.log_file, context)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command.

    Returns:
        0 on success, 1 on usage or config errors, 2 on runtime failures
    """
    argv: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"{APP_NAME}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    config: Optional[RunConfig] = None
    try:
        config = ConfigManager().load(args.config, args.overrides)
        start_logging(args, argv, config)
        return COMMANDS[args.command](config, args)
    except (ConfigError, UsageError) as e:
        if config is None:
            start_logging(args, argv)
        logger.error(f"{args.command}: {e}")
        print(f"{APP_NAME}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MaaeError, OSError) as e:
        if config is None:
            start_logging(args, argv)
        logger.exception(f"{args.command} failed: {e}")
        print(f"{APP_NAME}: {args.command} failed: {e}", file=sys.stderr)
        return EXIT_FAILURE
