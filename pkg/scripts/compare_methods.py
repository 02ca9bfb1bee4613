#!/usr/bin/env python3
"""Compare quantization methods on one synthetic layer.

Generates a Gaussian weight with low-rank-plus-outlier activations, then
runs rtn / gptq / svd / lrc / oracle at the same bit widths and rank and
prints a comparison table.

    python3 scripts/compare_methods.py --dims 64 64 --n 384 --rank 10% \
        --outlier-channels 4 --outlier-gain 8
"""

import argparse
import tempfile
from pathlib import Path

from lrckit import ExperimentConfig, gen_synthetic, run_layer

METHODS = ("rtn", "gptq", "svd", "lrc", "oracle")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dims", type=int, nargs=2, default=(32, 32), metavar=("DOUT", "DIN"))
    ap.add_argument("--n", type=int, default=192)
    ap.add_argument("--weight-bits", type=int, default=4)
    ap.add_argument("--act-bits", default="4")
    ap.add_argument("--rank", default="10%")
    ap.add_argument("--iterations", type=int, default=1)
    ap.add_argument("--groupsize", type=int, default=None)
    ap.add_argument("--rotate", action="store_true")
    ap.add_argument("--outlier-channels", type=int, default=3)
    ap.add_argument("--outlier-gain", type=float, default=6.0)
    ap.add_argument("--out", default=None, help="keep artifacts here instead of a temp dir")
    args = ap.parse_args()

    act_bits = None if args.act_bits in ("identity", "none") else int(args.act_bits)
    workdir = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="lrc-compare-"))
    files = gen_synthetic(
        workdir / "data",
        seed=args.seed,
        d_out=args.dims[0],
        d_in=args.dims[1],
        n=args.n,
        outlier_channels=args.outlier_channels,
        outlier_gain=args.outlier_gain,
    )

    print(
        f"layer {args.dims[0]}x{args.dims[1]}, n={args.n}, "
        f"W{args.weight_bits}A{act_bits or 'fp'}, rank {args.rank}, seed {args.seed}"
    )
    header = f"{'method':>8} {'rel. error':>12} {'bits equiv.':>12} {'clip':>6} {'time (s)':>9}"
    print(header)
    print("-" * len(header))
    for method in METHODS:
        cfg = ExperimentConfig(
            method=method,
            weight_bits=args.weight_bits,
            act_bits=act_bits,
            rank_spec=args.rank,
            iterations=args.iterations,
            groupsize=args.groupsize,
            rotate=args.rotate,
            seed=args.seed,
            output_dir=str(workdir / method),
        ).validate()
        report = run_layer(cfg, files["weight"], files["shards"])
        clip = f"{report.clip_ratio:.2f}" if report.clip_ratio is not None else "-"
        print(
            f"{method:>8} {report.relative_error:>12.5f} "
            f"{report.bits_equivalent:>12.2f} {clip:>6} {report.wall_time_s:>9.3f}"
        )
    print(f"\nartifacts in {workdir}")


if __name__ == "__main__":
    main()
