"""Greedy layer-wise weight quantization against an activation Hessian.

Given a target weight matrix and the (damped) second-moment matrix of the
quantized activations, the solver walks columns left to right; after a
column is rounded, its rounding error is propagated into the columns not
yet quantized, scaled by the upper Cholesky factor of the inverse
Hessian, so later roundings compensate for earlier ones. Columns are
processed in blocks, with cross-block feedback applied once per block.

Per-row scales are fixed from the target matrix before the greedy loop
(max-abs rule), so a diagonal Hessian makes the solver collapse to plain
round-to-nearest, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import Matrix, cholesky, solve_triangular
from .quant import QuantGrid, QuantizedWeight, dequantize, round_half_away, rtn_quantize_weight


@dataclass(frozen=True)
class GptqConfig:
    """Solver settings. ``grid=None`` is the identity sentinel used by
    tests: the target weight is returned unchanged, no codes produced.

    ``damping_added`` is declarative: it records that the caller's
    second-moment matrix already carries its ridge term. The solver never
    adds damping of its own (one damping knob for the whole pipeline),
    so an undamped singular matrix fails its factorization loudly.
    """

    grid: QuantGrid | None
    groupsize: int | None = None
    block_size: int = 32
    damping_added: bool = True

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")


@dataclass
class GptqResult:
    quantized: QuantizedWeight | None
    dequantized: Matrix
    objective: float


def build_target_weight(
    W: Matrix,
    U: Matrix,
    V: Matrix,
    sigma_xy: Matrix,
    sigma_y_chol,
) -> Matrix:
    """Least-squares weight for the corrected layer on quantized inputs.

    Computes (W - U V^T) @ sigma_xy @ sigma_y^{-1} where sigma_y is given
    by its Cholesky factor; the inverse is applied as two triangular
    solves rather than an explicit inverse.
    """
    W = np.asarray(W, dtype=np.float64)
    sigma_xy = np.asarray(sigma_xy, dtype=np.float64)
    if W.shape[1] != sigma_xy.shape[0] or sigma_xy.shape[1] != sigma_y_chol.dim:
        raise DimensionMismatch(
            f"W {W.shape}, sigma_xy {sigma_xy.shape}, chol dim {sigma_y_chol.dim}"
        )
    if U.shape[0] != W.shape[0] or V.shape[0] != W.shape[1] or U.shape[1] != V.shape[1]:
        raise DimensionMismatch(f"low-rank factors {U.shape} x {V.shape} vs W {W.shape}")
    A = (W - U @ V.T) @ sigma_xy
    Z = solve_triangular(sigma_y_chol, A.T, "lower")
    Z = solve_triangular(sigma_y_chol, Z, "upper-transposed")
    return np.ascontiguousarray(Z.T)


def quantization_objective(w_target: Matrix, w_hat_deq: Matrix, sigma_y: Matrix) -> float:
    """Tr((W~ - W^) sigma_y (W~ - W^)^T), the quadratic reconstruction error."""
    w_target = np.asarray(w_target, dtype=np.float64)
    w_hat_deq = np.asarray(w_hat_deq, dtype=np.float64)
    if w_target.shape != w_hat_deq.shape or w_target.shape[1] != sigma_y.shape[0]:
        raise DimensionMismatch(
            f"shapes {w_target.shape}, {w_hat_deq.shape}, {sigma_y.shape}"
        )
    D = w_target - w_hat_deq
    return float(np.sum((D @ sigma_y) * D))


def _fixed_scales(w_target: Matrix, grid: QuantGrid, groupsize: int | None):
    """Max-abs scales from the target weight, shaped like QuantizedWeight."""
    ref = rtn_quantize_weight(w_target, grid, groupsize)
    return ref.scales


def gptq_solve(w_target: Matrix, sigma_y: Matrix, cfg: GptqConfig) -> GptqResult:
    """Quantize ``w_target`` minimizing the sigma_y-weighted error greedily.

    ``sigma_y`` must be symmetric positive definite (already damped);
    NotPositiveDefinite propagates from its factorization otherwise.
    """
    w_target = np.asarray(w_target, dtype=np.float64)
    if cfg.grid is None:
        return GptqResult(quantized=None, dequantized=w_target.copy(), objective=0.0)
    d_out, d_in = w_target.shape
    if sigma_y.shape != (d_in, d_in):
        raise DimensionMismatch(f"sigma_y {sigma_y.shape} vs d_in={d_in}")
    qmax = float(cfg.grid.qmax)
    scales = _fixed_scales(w_target, cfg.grid, cfg.groupsize)

    def column_scale(j: int) -> np.ndarray:
        if cfg.groupsize is None:
            return scales
        return scales[:, j // cfg.groupsize]

    # Upper Cholesky factor R of sigma_y^{-1} (R^T R = sigma_y^{-1});
    # row j of R carries the error-feedback coefficients for column j.
    L = cholesky(sigma_y)
    Linv = solve_triangular(L, np.eye(d_in), "lower")
    Hinv = Linv.T @ Linv
    Hinv = 0.5 * (Hinv + Hinv.T)
    R = cholesky(Hinv).dense().T

    work = w_target.copy()
    codes = np.zeros((d_out, d_in), dtype=np.int32)
    B = cfg.block_size
    for i1 in range(0, d_in, B):
        i2 = min(i1 + B, d_in)
        err_block = np.empty((d_out, i2 - i1))
        for j in range(i1, i2):
            s = column_scale(j)
            w = work[:, j]
            q = np.zeros_like(w)
            np.divide(w, s, out=q, where=s > 0.0)
            q = np.clip(round_half_away(q), -qmax, qmax)
            codes[:, j] = q.astype(np.int32)
            err = (w - q * s) / R[j, j]
            if j + 1 < i2:
                work[:, j + 1 : i2] -= np.outer(err, R[j, j + 1 : i2])
            err_block[:, j - i1] = err
        if i2 < d_in:
            work[:, i2:] -= err_block @ R[i1:i2, i2:]

    qw = QuantizedWeight(codes=codes, scales=scales, grid=cfg.grid, groupsize=cfg.groupsize)
    deq = dequantize(qw)
    return GptqResult(
        quantized=qw,
        dequantized=deq,
        objective=quantization_objective(w_target, deq, sigma_y),
    )
