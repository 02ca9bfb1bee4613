import math

import numpy as np
import pytest

from lrckit.errors import DimensionMismatch, DimNotPowerOfTwo
from lrckit.hadamard import (
    RotationPlan,
    apply_rotation,
    fuse_into_layer,
    incoherence_report,
    is_power_of_two,
)


def dense_hadamard(d):
    """Oracle: explicit Sylvester construction by Kronecker products."""
    H = np.array([[1.0]])
    while H.shape[0] < d:
        H = np.block([[H, H], [H, -H]])
    return H / math.sqrt(d)


def test_power_of_two_predicate():
    assert [d for d in range(1, 10) if is_power_of_two(d)] == [1, 2, 4, 8]


class TestPlan:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(DimNotPowerOfTwo):
            RotationPlan(dim=3)

    def test_rejects_bad_signs(self):
        with pytest.raises(ValueError):
            RotationPlan(dim=2, sign_diag=np.array([1.0, 0.5]))

    def test_randomized_is_seeded(self):
        a = RotationPlan.randomized(16, seed=4)
        b = RotationPlan.randomized(16, seed=4)
        np.testing.assert_array_equal(a.sign_diag, b.sign_diag)
        assert np.all(np.abs(a.sign_diag) == 1.0)


class TestApplyRotation:
    def test_hand_case_dim2(self):
        out = apply_rotation(np.array([[1.0], [1.0]]), RotationPlan(dim=2))
        np.testing.assert_allclose(out, [[math.sqrt(2.0)], [0.0]], atol=1e-15)

    def test_matches_dense_oracle(self, rng):
        for d in (2, 4, 8, 32):
            X = rng.standard_normal((d, 5))
            out = apply_rotation(X, RotationPlan(dim=d))
            np.testing.assert_allclose(out, dense_hadamard(d) @ X, atol=1e-12)

    def test_involution(self, rng):
        X = rng.standard_normal((16, 7))
        plan = RotationPlan(dim=16)
        back = apply_rotation(apply_rotation(X, plan), plan)
        assert np.max(np.abs(back - X)) <= 1e-10

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            apply_rotation(rng.standard_normal((6, 2)), RotationPlan(dim=4))

    def test_orthogonality_across_dims(self):
        for d in (2, 4, 8, 16, 32, 64, 128, 256, 512, 1024):
            plan = RotationPlan(dim=d)
            H = apply_rotation(np.eye(d), plan)
            assert np.linalg.norm(H.T @ H - np.eye(d)) <= 1e-10

    def test_energy_preservation(self, rng):
        X = rng.standard_normal((64, 9))
        plan = RotationPlan.randomized(64, seed=0)
        assert np.linalg.norm(apply_rotation(X, plan)) == pytest.approx(
            np.linalg.norm(X), abs=1e-10
        )

    def test_column_norms_preserved(self, rng):
        X = rng.standard_normal((32, 6))
        out = apply_rotation(X, RotationPlan.randomized(32, seed=2))
        np.testing.assert_allclose(
            np.linalg.norm(out, axis=0), np.linalg.norm(X, axis=0), atol=1e-10
        )

    def test_vector_input(self, rng):
        x = rng.standard_normal(8)
        plan = RotationPlan(dim=8)
        np.testing.assert_allclose(
            apply_rotation(x, plan), apply_rotation(x[:, None], plan)[:, 0]
        )

    def test_unnormalized_scale(self):
        out = apply_rotation(np.array([[1.0], [1.0]]), RotationPlan(dim=2, normalized=False))
        np.testing.assert_array_equal(out, [[2.0], [0.0]])


class TestFusion:
    def test_identity_weight(self, rng):
        plan = RotationPlan(dim=8)
        W = np.eye(8)
        fused = fuse_into_layer(W, plan)
        np.testing.assert_allclose(fused, dense_hadamard(8).T, atol=1e-12)
        x = rng.standard_normal((8, 3))
        np.testing.assert_allclose(fused @ apply_rotation(x, plan), x, atol=1e-12)

    def test_output_preserved(self, rng):
        W = rng.standard_normal((4, 4))
        plan = RotationPlan(dim=4)
        fused = fuse_into_layer(W, plan)
        for _ in range(100):
            x = rng.standard_normal(4)
            ref = W @ x
            out = fused @ apply_rotation(x, plan)
            assert np.linalg.norm(out - ref) <= 1e-9 * max(np.linalg.norm(ref), 1e-300)

    def test_output_preserved_with_signs(self, rng):
        plan = RotationPlan.randomized(16, seed=9)
        W = rng.standard_normal((5, 16))
        fused = fuse_into_layer(W, plan)
        X = rng.standard_normal((16, 40))
        ref = W @ X
        out = fused @ apply_rotation(X, plan)
        assert np.linalg.norm(out - ref) <= 1e-9 * np.linalg.norm(ref)

    def test_requires_normalized_plan(self, rng):
        with pytest.raises(ValueError):
            fuse_into_layer(rng.standard_normal((2, 2)), RotationPlan(dim=2, normalized=False))

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            fuse_into_layer(rng.standard_normal((3, 6)), RotationPlan(dim=4))


class TestIncoherenceReport:
    def test_zero_input(self):
        rep = incoherence_report(np.zeros((4, 4)), np.zeros((4, 4)))
        assert rep == {
            "max_abs_before": 0.0,
            "max_abs_after": 0.0,
            "kurtosis_before": 0.0,
            "kurtosis_after": 0.0,
        }

    def test_spike_is_spread_out(self, rng):
        X = 0.01 * rng.standard_normal((64, 32))
        X[17, 3] = 50.0
        plan = RotationPlan.randomized(64, seed=1)
        rep = incoherence_report(X, apply_rotation(X, plan))
        assert rep["max_abs_after"] < rep["max_abs_before"]
        assert rep["kurtosis_after"] < rep["kurtosis_before"]

    def test_gaussian_kurtosis_near_three(self, rng):
        X = rng.standard_normal((128, 128))
        rep = incoherence_report(X, X)
        assert rep["kurtosis_before"] == pytest.approx(3.0, abs=0.3)
