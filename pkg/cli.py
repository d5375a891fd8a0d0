"""
Command-line entry point.

    python main.py synth
    python main.py pretrain --set pretrain.epochs=5
    python main.py metatrain --shots 1
    python main.py metatest
    python main.py gradcheck
    python main.py oracle --make-fixtures fixtures/ && python main.py oracle --fixtures fixtures/
    python main.py report runs/pretrain/metrics.ndjson
    python main.py sweep --grid local --set pretrain.epochs=2
    python main.py convert --src images/train --role train

Failures print one line to stderr, `error=<ClassName> exit=<code> msg=<text>`,
and exit with 2 (config), 3 (data) or 4 (numeric abort).
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from config import RunConfig, apply_overrides, load_config
from errors import MissingFileError, PipelineError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(format=LOG_FORMAT, level=logging.DEBUG if verbose else logging.INFO, force=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override, repeatable")
    common.add_argument("--out", help="output directory for this command")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="fewshot", description="Contrastive few-shot learning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate synthetic train/val/test splits")
    synth.add_argument("--goldens", metavar="DIR", help="also write golden augmentation outputs")

    sub.add_parser("pretrain", parents=[common], help="contrastive pre-training")
    for name, text in (("metatrain", "cross-view episodic meta-training"), ("metatest", "episodic evaluation")):
        stage = sub.add_parser(name, parents=[common], help=text)
        stage.add_argument("--shots", type=int, help="apply the shot-dependent defaults for K shots")
        stage.add_argument("--checkpoint", help="checkpoint or run directory to start from")

    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")

    oracle = sub.add_parser("oracle", parents=[common], help="compare losses against the literal-summation oracle")
    mode = oracle.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fixtures", metavar="DIR", help="compare library and oracle on a fixture set")
    mode.add_argument("--make-fixtures", metavar="DIR", help="write a random fixture set")
    mode.add_argument("--batch", metavar="DIR", help="print library loss terms for a stored batch")

    rep = sub.add_parser("report", parents=[common], help="CSV + text summary of a metrics stream")
    rep.add_argument("metrics", help="metrics.ndjson path")
    rep.add_argument("--accuracy", metavar="PATH", help="meta-test report (default: next to the metrics, then <out_dir>/metatest/)")

    sweep = sub.add_parser("sweep", parents=[common], help="run an ablation grid")
    sweep.add_argument("--grid", choices=("pretrain", "local", "meta"), required=True)

    convert = sub.add_parser("convert", parents=[common], help="convert an image folder into a split")
    convert.add_argument("--src", required=True, help="folder laid out as <class>/<image>")
    convert.add_argument("--role", choices=("train", "val", "test"), default="train")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults -> --shots preset -> --config -> --set -> --seed; the shot counts themselves follow --shots."""
    shots = getattr(args, "shots", None)
    cfg = RunConfig().for_shots(shots) if shots else RunConfig()
    if args.config:
        cfg = load_config(args.config, base=cfg)
    apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg.seed = args.seed
    if shots:
        cfg.episode.shots = cfg.metatest.shots = shots
    if args.command in ("pretrain", "metatrain", "metatest"):
        cfg.stage = args.command
    return cfg


def stage_dir(cfg: RunConfig, args: argparse.Namespace, stage: str) -> str:
    return args.out or os.path.join(cfg.out_dir, stage)


# ============================================================
# Command handlers
# ============================================================

def cmd_synth(cfg: RunConfig, args: argparse.Namespace) -> int:
    from data.goldens import write_goldens
    from data.splits import save_split
    from data.synth import synth_dataset

    d = cfg.data
    root = args.out or d.root
    blocks = [("train", d.synth_classes, 0), ("val", d.synth_val_classes, d.synth_classes),
              ("test", d.synth_novel_classes, d.synth_classes + d.synth_val_classes)]
    for role, n_classes, offset in blocks:
        if n_classes <= 0:
            continue
        split = synth_dataset(n_classes, d.synth_per_class, d.synth_image_size, d.synth_difficulty,
                              seed=cfg.seed + offset, class_offset=offset, role=role)
        save_split(split, os.path.join(root, role))
    if args.goldens:
        write_goldens(args.goldens, cfg.augment)
    print(f"synthetic splits written to {root}")
    return 0


def cmd_pretrain(cfg: RunConfig, args: argparse.Namespace) -> int:
    from training.pretrain import pretrain_loop

    cfg.validate(check_files=True)
    result = pretrain_loop(cfg, out_dir=stage_dir(cfg, args, "pretrain"))
    print(f"checkpoint={result.checkpoint} metrics={result.metrics_path}")
    return 0


def cmd_metatrain(cfg: RunConfig, args: argparse.Namespace) -> int:
    from training.checkpoint import resolve_checkpoint
    from training.metatrain import metatrain_loop

    cfg.validate(check_files=True)
    init = args.checkpoint or cfg.train.init_checkpoint
    if not init and os.path.isdir(os.path.join(cfg.out_dir, "pretrain")):
        init = os.path.join(cfg.out_dir, "pretrain")
    if init:
        init = resolve_checkpoint(init)
    result = metatrain_loop(cfg, init_checkpoint=init, out_dir=stage_dir(cfg, args, "metatrain"))
    print(f"checkpoint={result.checkpoint} metrics={result.metrics_path}")
    return 0


def cmd_metatest(cfg: RunConfig, args: argparse.Namespace) -> int:
    from training.metatest import metatest_loop

    cfg.validate(check_files=True)
    source = args.checkpoint or cfg.train.init_checkpoint or os.path.join(cfg.out_dir, "metatrain")
    report = metatest_loop(cfg, checkpoint=source, out_dir=stage_dir(cfg, args, "metatest"))
    print(report.summary())
    return 0


def cmd_gradcheck(cfg: RunConfig, args: argparse.Namespace) -> int:
    from evaluation.gradcheck_suite import format_table, gradcheck_suite

    results = gradcheck_suite(seed=cfg.seed)
    print(format_table(results))
    return 0 if all(r.passed() for r in results) else 1


def cmd_oracle(cfg: RunConfig, args: argparse.Namespace) -> int:
    from evaluation.fixtures import library_terms, load_fixtures, make_fixtures, oracle_compare

    if args.make_fixtures:
        print(make_fixtures(args.make_fixtures, seed=cfg.seed))
        return 0
    if args.batch:
        index, arrays = load_fixtures(args.batch)
        for name, value in library_terms(index, arrays).items():
            print(f"{name} {value:.12g}")
        return 0
    rows = oracle_compare(args.fixtures)
    for row in rows:
        status = "pass" if row.passed else "FAIL"
        print(f"{row.loss:<16} library={row.library:.12g} oracle={row.oracle:.12g} delta={row.delta:.2e} {status}")
    return 0 if all(row.passed for row in rows) else 1


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    from evaluation.report import report

    if not os.path.exists(args.metrics):
        raise MissingFileError(f"metrics file not found: {args.metrics}")
    if args.accuracy and not os.path.exists(args.accuracy):
        raise MissingFileError(f"accuracy report not found: {args.accuracy}")
    result = report(args.metrics, out_dir=args.out, cfg=cfg, accuracy_report=args.accuracy)
    print("\n".join(result.lines))
    return 0


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    from evaluation.sweep import run_sweep

    cfg.validate(check_files=True)
    frame = run_sweep(cfg, args.grid, out_dir=args.out)
    print(frame.to_string(index=False))
    return 0


def cmd_convert(cfg: RunConfig, args: argparse.Namespace) -> int:
    from data.convert import convert_folder

    out = args.out or os.path.join(cfg.data.root, args.role)
    print(convert_folder(args.src, out, tuple(cfg.backbone.input_size), role=args.role))
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "metatrain": cmd_metatrain,
    "metatest": cmd_metatest,
    "gradcheck": cmd_gradcheck,
    "oracle": cmd_oracle,
    "report": cmd_report,
    "sweep": cmd_sweep,
    "convert": cmd_convert,
}


def error_line(exc: BaseException, exit_code: int) -> str:
    message = " ".join(str(exc).split())
    return f"error={type(exc).__name__} exit={exit_code} msg={message}"


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        cfg.validate()
        return HANDLERS[args.command](cfg, args)
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e}")
        print(error_line(e, e.exit_code), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"{args.command} failed with an unexpected error")
        print(error_line(e, 1), file=sys.stderr)
        return 1
