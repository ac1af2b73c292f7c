"""Command-line entry point: ``basisproj <subcommand> ...``.

Logs go to stderr; every machine-readable result is written to files under
``--out``. Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig
from .data import generate_synthetic, save_dataset
from .errors import ConfigError, DataError, InvalidArgumentError, TrainingError
from .experiment import compare, evaluate_checkpoint, inspect_bases, train, write_json

log = logging.getLogger("basisproj")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _check_out_dir(out: Path, force: bool) -> None:
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    synthetic = cfg.data.synthetic_spec()
    if args.seed is not None:
        synthetic.seed = args.seed
    try:
        synthetic.validate()
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out)
    _check_out_dir(out, args.force)
    d = generate_synthetic(synthetic)
    save_dataset(d, out)
    write_json(out / "synthetic_spec.json", synthetic.to_dict())
    log.info("wrote %d samples (%d x %d) to %s", len(d), d.t_dim, d.f_dim, out)
    return EXIT_OK


def cmd_train(args) -> int:
    out = Path(args.out)
    if args.resume:
        result = train(ExperimentConfig(), out_dir=out, resume=args.resume)
    else:
        cfg = _load_config(args)
        _check_out_dir(out, args.force)
        result = train(cfg, out_dir=out)
    log.info("final train micro-F1 %.4f", result.train_metrics.micro_f1)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    report = evaluate_checkpoint(args.checkpoint, args.data)
    write_json(Path(args.out) / "evaluate_report.json", report)
    log.info("micro-F1 %.4f macro-F1 %.4f", report["metrics"]["micro_f1"], report["metrics"]["macro_f1"])
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    _check_out_dir(out, args.force)
    compare(cfg, out_dir=out)
    return EXIT_OK


def cmd_inspect_bases(args) -> int:
    inspect_bases(args.checkpoint, args.out, initial=args.initial, factorizations=args.factorizations)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="basisproj", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a classifier and write checkpoints and a report")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--force", action="store_true")
    t.add_argument("--resume", help="checkpoint to continue from (its stored config is used)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", help="dataset directory (defaults to the checkpoint's dataset)")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="run the front-layer / initializer comparison grid")
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True)
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_compare)

    i = sub.add_parser("inspect-bases", help="export a 2-D PCA embedding of learned bases")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--initial", help=".npy file with the initial bases")
    i.add_argument("--factorizations", action="store_true", help="also embed SVD and NMF components")
    i.add_argument("--out", required=True, help="CSV path")
    i.set_defaults(func=cmd_inspect_bases)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except TrainingError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except InvalidArgumentError as exc:
        log.error("invalid argument: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
