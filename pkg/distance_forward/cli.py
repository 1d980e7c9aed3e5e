"""
Command-line entry point: train, eval, robustness, profile and verify.

Every command writes its CSV output and a manifest.json (resolved config,
seed, artifact hashes, input checkpoint hash, code revision) into --out.

Exit codes:
    0  success
    1  usage or configuration error (bad flags, unknown config keys,
       unreadable dataset or checkpoint, missing files)
    2  a verification check failed
    3  training diverged
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from distance_forward import __version__
from distance_forward.config import RunConfig, dataset_root, flatten_config, load_run_config
from distance_forward.data.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from distance_forward.data.loaders import load_dataset, load_normalized
from distance_forward.data.manifest import RunManifest, code_revision, file_blob_hash, write_manifest
from distance_forward.data.metrics import write_metrics
from distance_forward.data.normalize import compute_stats, normalize
from distance_forward.evaluation.decode import evaluate
from distance_forward.evaluation.robustness import robustness_sweep
from distance_forward.exceptions import (
    CheckpointVersionError,
    ConfigurationError,
    DatasetFormatError,
    DivergenceError,
    NonFiniteGradientError,
    VerificationError,
)
from distance_forward.factory import build_model_and_embedding
from distance_forward.profiling.sweep import profile_sweep
from distance_forward.profiling.timing import fit_depth_scaling
from distance_forward.training.trainer import Trainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_DIVERGENCE = 3

CHECKPOINT_NAME = "checkpoint.dfck"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage errors as ConfigurationError instead of exiting with 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat JSON config file (path or name under config/)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one config key; repeatable")
    common.add_argument("--out", default="out", help="Output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="Master seed for every random stream")
    common.add_argument("--threads", type=int, default=1, help="Worker threads for evaluation (default: 1)")
    common.add_argument("--dataset-root", default=None, help="Dataset root; overrides $DF_DATASET_ROOT")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _ArgumentParser(prog="distance-forward", description="Distance-Forward local learning")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="Train a model and write a checkpoint")
    for name, text in (("eval", "Accuracy report for a checkpoint"),
                       ("robustness", "Noise and quantization sweep for a checkpoint")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--checkpoint", required=True, help="Checkpoint written by train")
    sub.add_parser("profile", parents=[common], help="Memory and backward-time sweep over depths")
    sub.add_parser("verify", parents=[common], help="Run every built-in property check")
    return parser


def resolve_config(args: argparse.Namespace, base: Optional[Dict] = None) -> RunConfig:
    """Config file and --set overrides on top of `base`; --seed wins over every seed key"""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"train.seed={args.seed}", f"robustness.seed={args.seed}"]
    return load_run_config(args.config, overrides, base=base)


def _finish(command: str, args: argparse.Namespace, config: RunConfig, artifacts: List[str],
            inputs: Optional[Dict[str, str]] = None) -> None:
    manifest = RunManifest(
        command=command,
        argv=list(args.argv),
        seed=config.train.seed,
        threads=args.threads,
        config=flatten_config(config),
        artifacts={name: "" for name in artifacts},
        inputs=inputs or {},
        code_revision=code_revision(),
    )
    write_manifest(args.out, manifest)


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    root = dataset_root(config.data, args.dataset_root)
    train_set, test_set, stats = load_normalized(config.data, root)
    model, emb = build_model_and_embedding(config, train_set.image_shape)

    trainer = Trainer(model, emb, config.train, augment=config.data.augment, stats=stats)
    report = trainer.fit(train_set, test_set if config.train.eval_every else None, config.decode)

    out = Path(args.out)
    save_checkpoint(out / CHECKPOINT_NAME, Checkpoint(
        model=model,
        emb=emb,
        feedback=getattr(trainer.strategy, "feedback", None),
        stats=stats,
        config=flatten_config(config),
        rng_state=trainer.rng_state(),
    ))
    write_metrics(out / "metrics.csv", report.rows())
    _finish("train", args, config, [CHECKPOINT_NAME, "metrics.csv"])
    if report.final_accuracy is not None:
        logger.info(f"Final test accuracy {report.final_accuracy:.4f}")
    return EXIT_OK


def _load_for_eval(args: argparse.Namespace):
    ckpt = load_checkpoint(args.checkpoint)
    config = resolve_config(args, base=ckpt.config)
    root = dataset_root(config.data, args.dataset_root)
    raw_test = load_dataset(config.data, root, "test")
    stats = ckpt.stats if ckpt.stats is not None else compute_stats(load_dataset(config.data, root, "train"))
    layer_set = config.decode.resolve(ckpt.model.depth, config.train.strategy.kind)
    return ckpt, config, raw_test, stats, layer_set


def _checkpoint_input(args: argparse.Namespace) -> Dict[str, str]:
    return {"checkpoint": file_blob_hash(args.checkpoint)}


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt, config, raw_test, stats, layer_set = _load_for_eval(args)
    report = evaluate(ckpt.model, ckpt.emb, normalize(raw_test, stats), layer_set,
                      config.train.loss.mean_goodness, threads=args.threads)
    write_metrics(Path(args.out) / "eval.csv", report.rows())
    _finish("eval", args, config, ["eval.csv"], _checkpoint_input(args))
    return EXIT_OK


def cmd_robustness(args: argparse.Namespace) -> int:
    ckpt, config, raw_test, stats, layer_set = _load_for_eval(args)
    rows = robustness_sweep(ckpt.model, ckpt.emb, raw_test, stats, layer_set, config.robustness,
                            config.train.loss.mean_goodness, threads=args.threads)
    write_metrics(Path(args.out) / "robustness.csv", rows)
    _finish("robustness", args, config, ["robustness.csv"], _checkpoint_input(args))
    return EXIT_OK


def cmd_profile(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    rows = profile_sweep(config.profile, config.train.loss, seed=config.train.seed)
    write_metrics(Path(args.out) / "profile.csv", rows)

    artifacts = ["profile.csv"]
    if len(config.profile.depths) >= 2:
        fits = []
        for kind in config.profile.strategies:
            mine = [r for r in rows if r.strategy == kind.value]
            fit = fit_depth_scaling([r.depth for r in mine], [r.backward_ms_median for r in mine])
            fits.append({"strategy": kind.value, **fit.model_dump()})
            logger.info(f"{kind.value}: {fit.slope:.3f} ms per unit, R^2 {fit.r_squared:.3f}")
        write_metrics(Path(args.out) / "scaling.csv", fits)
        artifacts.append("scaling.csv")
    _finish("profile", args, config, artifacts)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    from distance_forward.verification import run_all

    config = resolve_config(args)
    results = run_all(seed=config.train.seed)
    write_metrics(Path(args.out) / "verify.csv", results)
    _finish("verify", args, config, ["verify.csv"])
    logger.info(f"All {len(results)} checks passed")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "robustness": cmd_robustness,
    "profile": cmd_profile,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    args.argv = argv

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        return COMMANDS[args.command](args)
    except VerificationError as e:
        logger.error(f"Verification failed: {e}")
        return EXIT_VERIFICATION
    except (DivergenceError, NonFiniteGradientError) as e:
        logger.error(f"Training diverged: {e}")
        return EXIT_DIVERGENCE
    except (ConfigurationError, DatasetFormatError, CheckpointVersionError, FileNotFoundError) as e:
        logger.error(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
