"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from ..errors import UsageError

__all__ = ["finite_diff_check"]


def finite_diff_check(loss_fn, blocks, h=1e-6, coords_per_block=200, rng=None, denom_floor=1e-4):
    """Compare analytic gradients against central finite differences.

    Args:
        loss_fn: zero-argument callable returning the scalar loss for the
            current block values and, as a side effect, filling ``block.grad``
            for every block. It must be deterministic (fixed dropout masks or
            eval mode), otherwise the differences measure noise.
        blocks: iterable of ParamBlock to check.
        h: central-difference step.
        coords_per_block: number of coordinates sampled per block (all of them
            when a block is smaller).
        rng: numpy Generator for coordinate sampling; fresh default when None.
        denom_floor: floor on the |numeric| denominator so dead coordinates
            (true gradient 0) do not divide by rounding noise.

    Returns:
        The maximum relative error ``|analytic - numeric| / max(|numeric|,
        denom_floor)`` over all sampled coordinates.
    """
    blocks = list(blocks)
    if not blocks:
        raise UsageError("finite_diff_check needs at least one parameter block")
    if rng is None:
        rng = np.random.default_rng()

    loss_fn()
    analytic = {blk.name: blk.grad.copy() for blk in blocks}

    worst = 0.0
    for blk in blocks:
        flat_value = blk.value.reshape(-1)
        n = flat_value.size
        if n <= coords_per_block:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=coords_per_block, replace=False)
        grad_flat = analytic[blk.name].reshape(-1)
        for idx in coords:
            original = flat_value[idx]
            flat_value[idx] = original + h
            loss_plus = loss_fn()
            flat_value[idx] = original - h
            loss_minus = loss_fn()
            flat_value[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            err = abs(grad_flat[idx] - numeric) / max(abs(numeric), denom_floor)
            if err > worst:
                worst = err
    # restore the analytic gradients the perturbed calls overwrote
    loss_fn()
    return worst
