"""Orthogonal Walsh-Hadamard rotations fused into layer weights.

Rotating a layer's input space with H (optionally preceded by a random
sign diagonal D) spreads channel outliers across all coordinates while
keeping the layer output exactly unchanged once W is replaced by
W D^T H^T. Only power-of-two dimensions are supported; other layers skip
rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DimNotPowerOfTwo
from .linalg import Matrix


def is_power_of_two(d: int) -> bool:
    return d >= 1 and (d & (d - 1)) == 0


@dataclass(frozen=True)
class RotationPlan:
    """Planned rotation H @ D with H the normalized Hadamard matrix of
    size ``dim`` and D an optional +-1 diagonal."""

    dim: int
    normalized: bool = True
    sign_diag: np.ndarray | None = None

    def __post_init__(self):
        if not is_power_of_two(self.dim):
            raise DimNotPowerOfTwo(f"rotation dim {self.dim} is not a power of two")
        if self.sign_diag is not None:
            d = np.asarray(self.sign_diag, dtype=np.float64)
            if d.shape != (self.dim,) or not np.all(np.abs(d) == 1.0):
                raise ValueError("sign_diag must be a +-1 vector of length dim")
            object.__setattr__(self, "sign_diag", d)

    @classmethod
    def randomized(cls, dim: int, seed: int) -> "RotationPlan":
        rng = np.random.default_rng(seed)
        signs = rng.choice(np.array([-1.0, 1.0]), size=dim)
        return cls(dim=dim, sign_diag=signs)


def _fwht_rows(X: Matrix) -> Matrix:
    """Unnormalized fast Walsh-Hadamard transform along axis 0."""
    d = X.shape[0]
    Z = X.copy()
    h = 1
    while h < d:
        V = Z.reshape(d // (2 * h), 2 * h, -1)
        top = V[:, :h].copy()
        bot = V[:, h:]
        V[:, :h] = top + bot
        V[:, h:] = top - bot
        h *= 2
    return Z


def apply_rotation(X: Matrix, plan: RotationPlan) -> Matrix:
    """Rotate columns of X: returns H @ (D @ X) via in-place butterflies."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return apply_rotation(X[:, None], plan)[:, 0]
    if X.shape[0] != plan.dim:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, plan dim {plan.dim}")
    Z = X * plan.sign_diag[:, None] if plan.sign_diag is not None else X
    Z = _fwht_rows(Z)
    if plan.normalized:
        Z *= 1.0 / math.sqrt(plan.dim)
    return Z


def fuse_into_layer(W: Matrix, plan: RotationPlan) -> Matrix:
    """Fold the inverse rotation into the weights: W' = W D^T H^T.

    The fused layer satisfies W' @ (H D x) = W @ x, so rotating the
    inputs leaves the full-precision output unchanged.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != plan.dim:
        raise DimensionMismatch(f"W has shape {W.shape}, plan dim {plan.dim}")
    if not plan.normalized:
        raise ValueError("fusing requires a normalized rotation plan")
    T = W * plan.sign_diag[None, :] if plan.sign_diag is not None else W
    # H is symmetric in natural order, so W' = T H^T = (H T^T)^T.
    fused = _fwht_rows(np.ascontiguousarray(T.T)).T * (1.0 / math.sqrt(plan.dim))
    return np.ascontiguousarray(fused)


def _kurtosis(M: Matrix) -> float:
    x = np.asarray(M, dtype=np.float64).ravel()
    if x.size == 0:
        return 0.0
    mu = float(np.mean(x))
    var = float(np.mean((x - mu) ** 2))
    if var == 0.0:
        return 0.0
    return float(np.mean((x - mu) ** 4) / var**2)


def incoherence_report(X: Matrix, X_rotated: Matrix) -> dict:
    """Outlier diagnostics before/after rotation (pure statistics)."""
    X = np.asarray(X, dtype=np.float64)
    R = np.asarray(X_rotated, dtype=np.float64)
    return {
        "max_abs_before": float(np.max(np.abs(X))) if X.size else 0.0,
        "max_abs_after": float(np.max(np.abs(R))) if R.size else 0.0,
        "kurtosis_before": _kurtosis(X),
        "kurtosis_after": _kurtosis(R),
    }
