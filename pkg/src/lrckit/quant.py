"""Round-to-nearest quantizers for activations and weights.

Conventions, fixed for the whole toolkit:

* symmetric signed integer grids with no zero-point: levels are
  ``-qmax .. qmax`` with ``qmax = 2**(bits-1) - 1``;
* rounding is half-away-from-zero, so symmetric inputs stay symmetric;
* quantization is simulated: every quantizer returns float64 values
  ``code * scale``, never integer tensors on a compute path;
* all-zero rows/columns/groups get a zero-scale sentinel (codes 0,
  dequantized value 0) instead of a division error.

Activations are quantized per token (column), optionally per contiguous
row group within a column; weights per row, optionally per contiguous
column group within a row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadGroupsize, DimensionMismatch, EmptyCandidates

Matrix = np.ndarray


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, halves away from zero."""
    return np.trunc(x + np.copysign(0.5, x))


@dataclass(frozen=True)
class QuantGrid:
    """Symmetric signed integer grid for a given bit width."""

    bits: int

    def __post_init__(self):
        if not 2 <= self.bits <= 8:
            raise ValueError(f"bits must be in 2..8, got {self.bits}")

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def num_levels(self) -> int:
        return 2**self.bits - 1


@dataclass(frozen=True)
class ActQuantConfig:
    """Per-token activation quantizer settings.

    ``bits=None`` is the identity sentinel: activations pass through
    unquantized (the weights-only regime).
    """

    bits: int | None
    clip_ratio: float = 1.0
    groupsize: int | None = None

    def __post_init__(self):
        if self.bits is not None and not 2 <= self.bits <= 8:
            raise ValueError(f"act bits must be None or in 2..8, got {self.bits}")
        if not 0.0 < self.clip_ratio <= 1.0:
            raise ValueError(f"clip_ratio must be in (0, 1], got {self.clip_ratio}")
        if self.groupsize is not None and self.groupsize < 1:
            raise ValueError(f"groupsize must be positive, got {self.groupsize}")

    @property
    def identity(self) -> bool:
        return self.bits is None


@dataclass
class QuantizedWeight:
    """Integer codes plus scales; dequantized entries are code * scale exactly.

    ``scales`` has shape (d_out,) for per-row scaling or
    (d_out, d_in // groupsize) when a column groupsize is set.
    """

    codes: np.ndarray
    scales: np.ndarray
    grid: QuantGrid
    groupsize: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape


def rtn_quantize_activations(X: Matrix, cfg: ActQuantConfig) -> Matrix:
    """Simulated round-to-nearest quantization of activations, per column.

    Each column x is rescaled by clip_ratio * max(abs(x)) mapped onto the
    integer grid, rounded, clamped, and mapped back. With a groupsize g,
    the scale is computed per contiguous group of g rows instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"activations must be 2-d, got ndim={X.ndim}")
    if cfg.identity:
        return X.copy()
    d, n = X.shape
    g = cfg.groupsize if cfg.groupsize is not None else d
    if d % g != 0:
        raise BadGroupsize(f"groupsize {g} does not divide d_in={d}")
    qmax = float(2 ** (cfg.bits - 1) - 1)
    Xg = X.reshape(d // g, g, n)
    scale = cfg.clip_ratio * np.max(np.abs(Xg), axis=1, keepdims=True) / qmax
    codes = np.zeros_like(Xg)
    np.divide(Xg, scale, out=codes, where=scale > 0.0)
    codes = np.clip(round_half_away(codes), -qmax, qmax)
    return np.ascontiguousarray((codes * scale).reshape(d, n))


def search_clip_ratio(
    X: Matrix,
    bits: int,
    candidates,
    groupsize: int | None = None,
) -> tuple[float, float]:
    """Exhaustive search for the clip ratio minimizing ||X - Q(X; c)||_F^2.

    Ties resolve to the smallest candidate.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("clip-ratio candidate list is empty")
    for c in candidates:
        if not 0.0 < c <= 1.0:
            raise ValueError(f"clip-ratio candidate {c} outside (0, 1]")
    X = np.asarray(X, dtype=np.float64)
    best_c, best_mse = None, np.inf
    for c in sorted(candidates):
        cfg = ActQuantConfig(bits=bits, clip_ratio=c, groupsize=groupsize)
        err = X - rtn_quantize_activations(X, cfg)
        mse = float(np.sum(err * err))
        if mse < best_mse:
            best_c, best_mse = c, mse
    return best_c, best_mse


def rtn_quantize_weight(
    W: Matrix, grid: QuantGrid, groupsize: int | None = None
) -> QuantizedWeight:
    """Round-to-nearest weight quantization with max-abs scales per row.

    With a groupsize, scales are per (row, contiguous column group).
    Zero rows/groups produce the zero-scale sentinel.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionMismatch(f"weights must be 2-d, got ndim={W.ndim}")
    d_out, d_in = W.shape
    qmax = float(grid.qmax)
    if groupsize is None:
        scales = np.max(np.abs(W), axis=1) / qmax
        denom = scales[:, None]
    else:
        if groupsize < 1 or d_in % groupsize != 0:
            raise BadGroupsize(f"groupsize {groupsize} does not divide d_in={d_in}")
        Wg = W.reshape(d_out, d_in // groupsize, groupsize)
        scales = np.max(np.abs(Wg), axis=2) / qmax
        denom = np.repeat(scales, groupsize, axis=1)
    q = np.zeros_like(W)
    np.divide(W, denom, out=q, where=denom > 0.0)
    codes = np.clip(round_half_away(q), -qmax, qmax).astype(np.int32)
    return QuantizedWeight(codes=codes, scales=scales, grid=grid, groupsize=groupsize)


def dequantize(qw: QuantizedWeight) -> Matrix:
    """Map codes back to reals: entrywise code * scale."""
    codes = qw.codes.astype(np.float64)
    if qw.groupsize is None:
        return codes * qw.scales[:, None]
    return codes * np.repeat(qw.scales, qw.groupsize, axis=1)
