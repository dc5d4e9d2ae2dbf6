"""The finite-difference checker must accept exact gradients and flag wrong ones."""

import numpy as np
import pytest

from cablewatch.errors import UsageError
from cablewatch.nn.gradcheck import finite_diff_check
from cablewatch.nn.params import ParamBlock


def test_accepts_exact_gradient_of_linear_loss():
    rng = np.random.default_rng(0)
    coeff = rng.normal(size=(4, 3))
    blk = ParamBlock("w", rng.normal(size=(4, 3)))

    def loss():
        blk.grad = coeff.copy()
        return float((coeff * blk.value).sum())

    worst = finite_diff_check(loss, [blk], rng=np.random.default_rng(1))
    assert worst < 1e-8


def test_flags_corrupted_gradient():
    rng = np.random.default_rng(2)
    coeff = rng.normal(size=6) + 3.0  # keep coefficients away from zero

    blk = ParamBlock("w", rng.normal(size=6))

    def loss():
        blk.grad = 2.0 * coeff  # doubled analytic gradient
        return float((coeff * blk.value).sum())

    worst = finite_diff_check(loss, [blk], rng=np.random.default_rng(3))
    assert worst > 0.5


def test_quadratic_loss_small_error():
    blk = ParamBlock("w", np.array([0.3, -1.2, 2.0]))

    def loss():
        blk.grad = 2.0 * blk.value
        return float((blk.value**2).sum())

    worst = finite_diff_check(loss, [blk], rng=np.random.default_rng(4))
    assert worst < 1e-6


def test_restores_analytic_gradients_after_probing():
    blk = ParamBlock("w", np.array([1.0, 2.0]))

    def loss():
        blk.grad = 2.0 * blk.value
        return float((blk.value**2).sum())

    finite_diff_check(loss, [blk], rng=np.random.default_rng(5))
    np.testing.assert_allclose(blk.grad, 2.0 * blk.value, atol=1e-12)
    np.testing.assert_allclose(blk.value, [1.0, 2.0], atol=1e-12)


def test_requires_blocks():
    with pytest.raises(UsageError):
        finite_diff_check(lambda: 0.0, [])


def test_samples_at_most_requested_coordinates():
    calls = {"n": 0}
    blk = ParamBlock("w", np.zeros(100))

    def loss():
        calls["n"] += 1
        blk.grad = np.ones(100)
        return float(blk.value.sum())

    finite_diff_check(loss, [blk], coords_per_block=10, rng=np.random.default_rng(6))
    # 1 initial + 2 per sampled coordinate + 1 restore
    assert calls["n"] == 1 + 2 * 10 + 1
