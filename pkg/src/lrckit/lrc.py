"""Joint quantization with a full-precision low-rank correction.

The layer objective is

    || W X - W^ Y - U V^T X ||_F^2,   Y = Q_a(X),

where W^ is the low-bit weight acting on quantized activations and
U V^T is a rank-k full-precision matrix acting on the unquantized
activations. Everything is evaluated through the accumulated
second-moment matrices

    sigma_x = X X^T + eps_x I,  sigma_y = Y Y^T + eps_y I,
    sigma_xy = X Y^T,

so raw activations never need to be retained. The solver alternates a
greedy quantization step (against the least-squares target weight) with
a closed-form update of (U, V): U comes from the top-k eigenvectors of a
d_out x d_out scatter matrix, V from the corresponding normal equations.
The low-rank half-step is an exact minimizer, so it never increases the
objective; the quantization half-step is approximate.

Damping is applied once, at finalize, and the damped matrices feed every
formula afterwards. That introduces a small, documented bias in the
objective values (eps_x ||W - U V^T||^2 + eps_y ||W^||^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlreadyFinalized,
    BadIterationCount,
    DimensionMismatch,
    EmptyStats,
    RankOutOfBounds,
)
from .gptq import GptqConfig, GptqResult, build_target_weight, gptq_solve
from .linalg import Matrix, cholesky, cholesky_solve, solve_triangular, top_k_eigvecs
from .quant import ActQuantConfig, QuantizedWeight, rtn_quantize_activations

DEFAULT_DAMPING = 1e-2


@dataclass
class CalibStats:
    """Streaming second-moment statistics of a layer's calibration data."""

    sigma_x: Matrix
    sigma_y: Matrix
    sigma_xy: Matrix
    n: int = 0
    eps_x: float = 0.0
    eps_y: float = 0.0
    finalized: bool = False

    @classmethod
    def zeros(cls, d_in: int) -> "CalibStats":
        return cls(
            sigma_x=np.zeros((d_in, d_in)),
            sigma_y=np.zeros((d_in, d_in)),
            sigma_xy=np.zeros((d_in, d_in)),
        )

    @property
    def d_in(self) -> int:
        return self.sigma_x.shape[0]


@dataclass
class ScatterMatrices:
    """Intermediate d_out x d_out scatter matrices of the low-rank updates."""

    sigma1: Matrix
    sigma2: Matrix
    sigma3: Matrix | None = None
    sigma_init: Matrix | None = None


@dataclass
class LrcSolution:
    """Final (W^, U, V) of a layer plus the objective after each half-step."""

    quantized: QuantizedWeight | None
    w_hat: Matrix
    U: Matrix
    V: Matrix
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 1

    @property
    def rank(self) -> int:
        return self.U.shape[1]


def accumulate_stats(stats: CalibStats, x_batch: Matrix, act_cfg: ActQuantConfig) -> CalibStats:
    """Fold one batch of activation columns into the statistics (in place)."""
    if stats.finalized:
        raise AlreadyFinalized("cannot accumulate into finalized statistics")
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != stats.d_in:
        raise DimensionMismatch(f"batch shape {x.shape} vs d_in={stats.d_in}")
    m = x.shape[1]
    if m == 0:
        return stats
    y = rtn_quantize_activations(x, act_cfg)
    stats.sigma_x += x @ x.T
    stats.sigma_y += y @ y.T
    stats.sigma_xy += x @ y.T
    stats.n += m
    return stats


def finalize_stats(stats: CalibStats, damping: float = DEFAULT_DAMPING) -> CalibStats:
    """Add the trace-scaled ridge terms and freeze the statistics.

    eps = damping / d_in * trace(raw second moment), applied to sigma_x
    and sigma_y separately. damping=0 leaves the raw matrices untouched
    (degenerate inputs then surface later as factorization failures).
    """
    if stats.finalized:
        raise AlreadyFinalized("statistics already finalized")
    if stats.n < 1:
        raise EmptyStats("no samples accumulated")
    d = stats.d_in
    stats.eps_x = damping / d * float(np.trace(stats.sigma_x))
    stats.eps_y = damping / d * float(np.trace(stats.sigma_y))
    stats.sigma_x += stats.eps_x * np.eye(d)
    stats.sigma_y += stats.eps_y * np.eye(d)
    stats.finalized = True
    return stats


def _require_finalized(stats: CalibStats):
    if not stats.finalized:
        raise ValueError("statistics must be finalized first")


def _check_rank(k: int, d_out: int, d_in: int):
    if not 0 <= k <= min(d_out, d_in):
        raise RankOutOfBounds(f"k={k} outside [0, {min(d_out, d_in)}]")


def _empty_factors(d_out: int, d_in: int) -> tuple[Matrix, Matrix]:
    return np.zeros((d_out, 0)), np.zeros((d_in, 0))


def init_lr(W: Matrix, stats: CalibStats, k: int):
    """Closed-form solution of the relaxed problem (unconstrained weight).

    Returns (U, V, w_target, scatter): U spans the top-k eigenspace of
    sigma_init = W sigma_x W^T - S^T S with S = L_y^{-1} sigma_xy^T W^T,
    V = W^T U, and w_target is the optimal unconstrained weight for that
    pair. k=0 is permitted and returns empty factors.
    """
    _require_finalized(stats)
    W = np.asarray(W, dtype=np.float64)
    d_out, d_in = W.shape
    if d_in != stats.d_in:
        raise DimensionMismatch(f"W has {d_in} columns, stats have d_in={stats.d_in}")
    _check_rank(k, d_out, d_in)
    sigma1 = W @ stats.sigma_x @ W.T
    sigma1 = 0.5 * (sigma1 + sigma1.T)
    L_y = cholesky(stats.sigma_y)
    S = solve_triangular(L_y, stats.sigma_xy.T @ W.T, "lower")
    sigma2 = S.T @ S
    sigma2 = 0.5 * (sigma2 + sigma2.T)
    sigma_init = sigma1 - sigma2
    if k == 0:
        U, V = _empty_factors(d_out, d_in)
    else:
        pair = top_k_eigvecs(sigma_init, k)
        U = pair.vectors
        V = W.T @ U
    w_target = build_target_weight(W, U, V, stats.sigma_xy, L_y)
    scatter = ScatterMatrices(sigma1=sigma1, sigma2=sigma2, sigma_init=sigma_init)
    return U, V, w_target, scatter


def update_lr(W: Matrix, w_hat_deq: Matrix, stats: CalibStats, k: int):
    """Exact minimizer of the objective over (U, V) for a fixed W^.

    U holds the top-k eigenvectors of sigma1 + sigma2 - sigma3 (an
    indefinite symmetric matrix; the signed spectrum is intended) and
    V = [W^T - sigma_x^{-1} sigma_xy W^^T] U via Cholesky solves.
    """
    _require_finalized(stats)
    W = np.asarray(W, dtype=np.float64)
    w_hat = np.asarray(w_hat_deq, dtype=np.float64)
    if W.shape != w_hat.shape:
        raise DimensionMismatch(f"W {W.shape} vs w_hat {w_hat.shape}")
    d_out, d_in = W.shape
    if d_in != stats.d_in:
        raise DimensionMismatch(f"W has {d_in} columns, stats have d_in={stats.d_in}")
    _check_rank(k, d_out, d_in)
    sigma1 = W @ stats.sigma_x @ W.T
    sigma1 = 0.5 * (sigma1 + sigma1.T)
    sigma3 = w_hat @ stats.sigma_xy.T @ W.T
    sigma3 = sigma3 + sigma3.T
    L_x = cholesky(stats.sigma_x)
    cross = stats.sigma_xy @ w_hat.T
    S = solve_triangular(L_x, cross, "lower")
    sigma2 = S.T @ S
    sigma2 = 0.5 * (sigma2 + sigma2.T)
    sigma = sigma1 + sigma2 - sigma3
    if k == 0:
        U, V = _empty_factors(d_out, d_in)
    else:
        pair = top_k_eigvecs(sigma, k)
        U = pair.vectors
        V = (W.T - cholesky_solve(L_x, cross)) @ U
    scatter = ScatterMatrices(sigma1=sigma1, sigma2=sigma2, sigma3=sigma3)
    return U, V, scatter


def lrc_objective(W: Matrix, w_hat_deq: Matrix, U: Matrix, V: Matrix, stats: CalibStats) -> float:
    """Objective ||W X - W^ Y - U V^T X||_F^2 evaluated in trace form.

    Exact for undamped statistics; with damping the value carries the
    non-negative ridge bias documented in the module docstring. Clamped
    at zero against cancellation noise.
    """
    _require_finalized(stats)
    W = np.asarray(W, dtype=np.float64)
    w_hat = np.asarray(w_hat_deq, dtype=np.float64)
    if W.shape != w_hat.shape:
        raise DimensionMismatch(f"W {W.shape} vs w_hat {w_hat.shape}")
    if W.shape[1] != stats.d_in:
        raise DimensionMismatch(f"W has {W.shape[1]} columns, stats d_in={stats.d_in}")
    if U.shape[0] != W.shape[0] or V.shape[0] != W.shape[1] or U.shape[1] != V.shape[1]:
        raise DimensionMismatch(f"factors {U.shape} x {V.shape} vs W {W.shape}")
    A = W - U @ V.T
    val = (
        float(np.sum((A @ stats.sigma_x) * A))
        - 2.0 * float(np.sum((A @ stats.sigma_xy) * w_hat))
        + float(np.sum((w_hat @ stats.sigma_y) * w_hat))
    )
    return max(val, 0.0)


def lrc_quantize_layer(
    W: Matrix,
    stats: CalibStats,
    gptq_cfg: GptqConfig,
    k: int,
    iterations: int = 1,
) -> LrcSolution:
    """Alternating quantize / low-rank-update loop for one layer.

    Runs the closed-form initialization, then ``iterations`` rounds of
    [quantize against the current target weight, re-solve (U, V)],
    recording the trace-form objective after every half-step. The
    low-rank half-steps are exact minimizers and never increase the
    objective; the quantization half-steps are greedy and may.
    """
    if iterations < 1:
        raise BadIterationCount(f"iterations must be >= 1, got {iterations}")
    _require_finalized(stats)
    U, V, _, _ = init_lr(W, stats, k)
    L_y = cholesky(stats.sigma_y)
    trace: list[float] = []
    result: GptqResult | None = None
    for _ in range(iterations):
        w_target = build_target_weight(W, U, V, stats.sigma_xy, L_y)
        result = gptq_solve(w_target, stats.sigma_y, gptq_cfg)
        trace.append(lrc_objective(W, result.dequantized, U, V, stats))
        U, V, _ = update_lr(W, result.dequantized, stats, k)
        trace.append(lrc_objective(W, result.dequantized, U, V, stats))
    return LrcSolution(
        quantized=result.quantized,
        w_hat=result.dequantized,
        U=U,
        V=V,
        objective_trace=trace,
        iterations=iterations,
    )


def svd_baseline(W: Matrix, w_hat_deq: Matrix, k: int) -> tuple[Matrix, Matrix]:
    """Best rank-k approximation of the weight error W - W^.

    Computed from the top-k eigenpairs of the error's Gram matrix:
    U = left singular vectors scaled by singular values, V = unit right
    singular vectors, so U V^T is the Frobenius-optimal rank-k
    approximation of the error.
    """
    W = np.asarray(W, dtype=np.float64)
    w_hat = np.asarray(w_hat_deq, dtype=np.float64)
    if W.shape != w_hat.shape:
        raise DimensionMismatch(f"W {W.shape} vs w_hat {w_hat.shape}")
    d_out, d_in = W.shape
    _check_rank(k, d_out, d_in)
    if k == 0:
        return _empty_factors(d_out, d_in)
    E = W - w_hat
    G = E @ E.T
    G = 0.5 * (G + G.T)
    pair = top_k_eigvecs(G, k)
    sv = np.sqrt(np.maximum(pair.values, 0.0))
    U = pair.vectors * sv
    V = np.zeros((d_in, k))
    nonzero = sv > 0.0
    if np.any(nonzero):
        V[:, nonzero] = (E.T @ pair.vectors[:, nonzero]) / sv[nonzero]
    return U, V


def oracle_relaxed(W: Matrix, stats: CalibStats, k: int):
    """Relaxed optimum (unconstrained weight): lower bound for any
    quantized solution on the same statistics."""
    U, V, w_target, _ = init_lr(W, stats, k)
    objective = lrc_objective(W, w_target, U, V, stats)
    return w_target, U, V, objective
