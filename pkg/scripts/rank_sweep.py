#!/usr/bin/env python3
"""Sweep the correction rank on a small multi-layer model.

Builds a rectifier MLP with synthetic weights, quantizes it end to end
at several ranks (percent of the layer min-dimension) and reports the
final-output relative error per rank, averaged over seeds.

    python3 scripts/rank_sweep.py --dim 32 --layers 3 --seeds 5 \
        --ranks 0% 10% 20% 30%
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from lrckit import ExperimentConfig, ModelSpec, gen_synthetic, make_layer_data, run_model, write_tensor


def build_model(workdir: Path, dim: int, n_layers: int, seed: int) -> ModelSpec:
    layers = []
    for i in range(n_layers):
        W, _ = make_layer_data(seed=seed * 97 + i, d_out=dim, d_in=dim, n=dim)
        path = workdir / f"w{i}.lrt"
        write_tensor(path, W)
        layers.append(
            {
                "name": f"fc{i}",
                "weight_path": str(path),
                "activation_rule": "input" if i == 0 else "previous_output",
                "nonlinearity": "rectifier" if i + 1 < n_layers else "none",
            }
        )
    return ModelSpec.from_dict({"layers": layers})


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--layers", type=int, default=3)
    ap.add_argument("--n", type=int, default=192)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ranks", nargs="+", default=["0%", "10%", "20%", "30%"])
    ap.add_argument("--weight-bits", type=int, default=4)
    ap.add_argument("--act-bits", type=int, default=4)
    ap.add_argument("--iterations", type=int, default=1)
    ap.add_argument("--rotate", action="store_true")
    ap.add_argument("--outlier-channels", type=int, default=3)
    ap.add_argument("--outlier-gain", type=float, default=6.0)
    args = ap.parse_args()

    errors = {rank: [] for rank in args.ranks}
    workdir = Path(tempfile.mkdtemp(prefix="lrc-sweep-"))
    for seed in range(args.seeds):
        seed_dir = workdir / f"seed{seed}"
        files = gen_synthetic(
            seed_dir / "data",
            seed=seed,
            d_out=args.dim,
            d_in=args.dim,
            n=args.n,
            outlier_channels=args.outlier_channels,
            outlier_gain=args.outlier_gain,
        )
        spec = build_model(seed_dir, args.dim, args.layers, seed)
        for rank in args.ranks:
            cfg = ExperimentConfig(
                method="lrc",
                weight_bits=args.weight_bits,
                act_bits=args.act_bits,
                rank_spec=rank,
                iterations=args.iterations,
                rotate=args.rotate,
                seed=seed,
                shards=files["shards"],
                output_dir=str(seed_dir / f"rank_{rank.rstrip('%')}"),
            ).validate()
            _, model_report = run_model(cfg, spec)
            errors[rank].append(model_report["final_relative_error"])

    print(
        f"{args.layers}-layer model, dim {args.dim}, n={args.n}, "
        f"W{args.weight_bits}A{args.act_bits}, {args.seeds} seeds"
    )
    header = f"{'rank':>6} {'mean rel. error':>16} {'min':>9} {'max':>9}"
    print(header)
    print("-" * len(header))
    for rank in args.ranks:
        vals = np.array(errors[rank])
        print(f"{rank:>6} {vals.mean():>16.5f} {vals.min():>9.5f} {vals.max():>9.5f}")
    print(f"\nartifacts in {workdir}")


if __name__ == "__main__":
    main()
