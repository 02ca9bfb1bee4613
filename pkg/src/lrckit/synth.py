"""Synthetic weight/activation generation for desk-scale experiments."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .tensorfile import write_tensor


def make_layer_data(
    seed: int,
    d_out: int,
    d_in: int,
    n: int,
    outlier_channels: int = 0,
    outlier_gain: float = 1.0,
    latent_rank: int | None = None,
    noise: float = 0.1,
):
    """Draw a Gaussian weight matrix and low-rank-plus-noise activations.

    Activations are column samples; ``outlier_channels`` input channels
    get additional heavy-tailed (Student-t) noise scaled by
    ``outlier_gain``, mimicking the channel outliers that make activation
    quantization hard. Requires n >= max(d_out, d_in) so second-moment
    matrices can be full rank.
    """
    if n < max(d_out, d_in):
        raise ConfigError(f"n={n} must be at least max(dims)={max(d_out, d_in)}")
    if outlier_channels < 0 or outlier_channels > d_in:
        raise ConfigError(f"outlier_channels={outlier_channels} outside [0, {d_in}]")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((d_out, d_in)) / math.sqrt(d_in)
    r = latent_rank if latent_rank is not None else max(1, d_in // 4)
    B = rng.standard_normal((d_in, r))
    Z = rng.standard_normal((r, n))
    X = B @ Z / math.sqrt(r) + noise * rng.standard_normal((d_in, n))
    if outlier_channels > 0:
        idx = rng.choice(d_in, size=outlier_channels, replace=False)
        X[idx, :] += outlier_gain * rng.standard_t(3, size=(outlier_channels, n))
    return W, X


def gen_synthetic(
    out_dir,
    seed: int,
    d_out: int,
    d_in: int,
    n: int,
    n_shards: int = 4,
    outlier_channels: int = 0,
    outlier_gain: float = 1.0,
    latent_rank: int | None = None,
    noise: float = 0.1,
) -> dict:
    """Write W plus activation shards as tensor files; deterministic per seed."""
    if n_shards < 1:
        raise ConfigError(f"n_shards must be >= 1, got {n_shards}")
    W, X = make_layer_data(
        seed, d_out, d_in, n,
        outlier_channels=outlier_channels,
        outlier_gain=outlier_gain,
        latent_rank=latent_rank,
        noise=noise,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    weight_path = out / "W.lrt"
    write_tensor(weight_path, W)
    shard_paths = []
    for i, shard in enumerate(np.array_split(X, n_shards, axis=1)):
        p = out / f"X_{i:03d}.lrt"
        write_tensor(p, np.ascontiguousarray(shard))
        shard_paths.append(str(p))
    return {"weight": str(weight_path), "shards": shard_paths}
