"""Command-line interface.

Subcommands: gen, stats, quantize, pipeline, report. Exit codes:
0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.
Flags mirror the experiment config; a --config JSON file overrides
flags, and LRC_SEED sets the default seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, ModelSpec, canonical_json, load_config_file
from .errors import (
    AlreadyFinalized,
    BadGroupsize,
    BadIterationCount,
    ConfigError,
    DimensionMismatch,
    DimNotPowerOfTwo,
    EmptyCandidates,
    EmptyStats,
    NotPositiveDefinite,
    NotSymmetric,
    RankOutOfBounds,
    TensorFileError,
)
from .pipeline import aggregate_reports, collect_stats, load_shards, run_layer, run_model
from .quant import ActQuantConfig
from .synth import gen_synthetic
from .tensorfile import write_tensor

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_CONFIG_ERRORS = (
    ConfigError,
    DimensionMismatch,
    BadGroupsize,
    BadIterationCount,
    EmptyCandidates,
    EmptyStats,
    AlreadyFinalized,
    RankOutOfBounds,
    DimNotPowerOfTwo,
    ValueError,
)
_NUMERICAL_ERRORS = (NotPositiveDefinite, NotSymmetric)
_IO_ERRORS = (TensorFileError, OSError)


def _default_seed() -> int:
    try:
        return int(os.environ.get("LRC_SEED", "0"))
    except ValueError:
        return 0


def _parse_act_bits(text: str):
    if text.lower() in ("identity", "none"):
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"invalid act bits {text!r}") from None


def _parse_clip_grid(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"invalid clip grid {text!r}") from None


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--method", choices=["rtn", "gptq", "svd", "lrc", "oracle"])
    p.add_argument("--weight-bits", type=int, dest="weight_bits")
    p.add_argument("--act-bits", dest="act_bits")
    p.add_argument("--rank", dest="rank_spec")
    p.add_argument("--iterations", type=int)
    p.add_argument("--groupsize", type=int)
    p.add_argument("--clip-grid", dest="clip_grid")
    p.add_argument("--rotate", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--rotation-seed", type=int, dest="rotation_seed")
    p.add_argument("--seed", type=int)
    p.add_argument("--damping", type=float)
    p.add_argument(
        "--calib-propagation", choices=["clean", "quantized"], dest="calib_propagation"
    )
    p.add_argument("--config", help="JSON config file; overrides flags")


def _build_config(args, shards, out_dir) -> ExperimentConfig:
    overrides = {}
    for name in (
        "method",
        "weight_bits",
        "iterations",
        "groupsize",
        "rotate",
        "rotation_seed",
        "seed",
        "damping",
        "calib_propagation",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "act_bits", None) is not None:
        overrides["act_bits"] = _parse_act_bits(args.act_bits)
    if getattr(args, "rank_spec", None) is not None:
        overrides["rank_spec"] = args.rank_spec
    if getattr(args, "clip_grid", None) is not None:
        overrides["clip_grid"] = _parse_clip_grid(args.clip_grid)
    if "seed" not in overrides:
        overrides["seed"] = _default_seed()
    overrides["shards"] = list(shards)
    overrides["output_dir"] = str(out_dir)
    cfg = ExperimentConfig().updated(overrides)
    if getattr(args, "config", None):
        cfg = cfg.updated(load_config_file(args.config))
    return cfg


def _cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    result = gen_synthetic(
        args.out,
        seed=seed,
        d_out=args.dims[0],
        d_in=args.dims[1],
        n=args.n,
        n_shards=args.shards,
        outlier_channels=args.outlier_channels,
        outlier_gain=args.outlier_gain,
        latent_rank=args.latent_rank,
        noise=args.noise,
    )
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _cmd_stats(args) -> int:
    shards = load_shards(args.shards)
    act_cfg = ActQuantConfig(
        bits=_parse_act_bits(args.act_bits),
        clip_ratio=args.clip_ratio,
        groupsize=args.groupsize,
    )
    stats = collect_stats(shards, act_cfg, args.damping)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "sigma_x.lrt", stats.sigma_x)
    write_tensor(out / "sigma_y.lrt", stats.sigma_y)
    write_tensor(out / "sigma_xy.lrt", stats.sigma_xy)
    meta = {
        "n": stats.n,
        "eps_x": stats.eps_x,
        "eps_y": stats.eps_y,
        "finalized": stats.finalized,
        "act_bits": act_cfg.bits,
        "clip_ratio": act_cfg.clip_ratio,
        "groupsize": act_cfg.groupsize,
        "damping": args.damping,
    }
    (out / "stats.json").write_text(canonical_json(meta))
    print(f"wrote statistics for {stats.n} samples to {out}")
    return EXIT_OK


def _cmd_quantize(args) -> int:
    cfg = _build_config(args, args.shards, args.out)
    report = run_layer(cfg, args.weight, args.shards)
    print(report.canonical_json(), end="")
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    cfg = _build_config(args, args.shards, args.out)
    spec = ModelSpec.from_file(args.model)
    _, model_report = run_model(cfg, spec)
    print(canonical_json(model_report), end="")
    return EXIT_OK


def _cmd_report(args) -> int:
    csv_path, summary_path = aggregate_reports(args.dir, args.out)
    print(f"wrote {csv_path} and {summary_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrc",
        description="Low-bit quantization with low-rank correction, at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic weights and activation shards")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dims", type=int, nargs=2, metavar=("DOUT", "DIN"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--shards", type=int, default=4)
    p.add_argument("--outlier-channels", type=int, default=0, dest="outlier_channels")
    p.add_argument("--outlier-gain", type=float, default=1.0, dest="outlier_gain")
    p.add_argument("--latent-rank", type=int, default=None, dest="latent_rank")
    p.add_argument("--noise", type=float, default=0.1)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("stats", help="accumulate and persist calibration statistics")
    p.add_argument("--out", required=True)
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--act-bits", default="4", dest="act_bits")
    p.add_argument("--clip-ratio", type=float, default=1.0, dest="clip_ratio")
    p.add_argument("--groupsize", type=int, default=None)
    p.add_argument("--damping", type=float, default=1e-2)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("quantize", help="quantize a single layer")
    p.add_argument("--weight", required=True)
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_quantize)

    p = sub.add_parser("pipeline", help="quantize a model sequentially")
    p.add_argument("--model", required=True)
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("report", help="aggregate layer reports into CSV + summary")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _IO_ERRORS as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
