"""Functional neural-network kernels with explicit forward/backward passes.

Every forward returns ``(output, cache)`` and the matching backward consumes
the upstream gradient plus that cache. All arithmetic is float64 numpy; there
is no autograd, each backward is written out analytically and is validated
against central finite differences in the test suite.

Public functions operate on single samples (the shapes given in the
docstrings). Each has a ``*_batch`` sibling that takes a leading batch axis;
the single-sample form is a thin wrapper so both share one implementation.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError, UsageError

__all__ = [
    "conv1d_forward",
    "conv1d_backward",
    "conv1d_forward_batch",
    "conv1d_backward_batch",
    "relu_forward",
    "relu_backward",
    "global_avg_pool_forward",
    "global_avg_pool_backward",
    "batchnorm_forward_batch",
    "batchnorm_backward_batch",
    "lstm_forward",
    "lstm_backward",
    "lstm_forward_batch",
    "lstm_backward_batch",
    "dropout_forward",
    "dropout_backward",
    "softmax_cross_entropy",
    "softmax_cross_entropy_batch",
    "sigmoid",
]


def _as_f64(x, name):
    arr = np.asarray(x, dtype=np.float64)
    return arr


def sigmoid(z):
    """Numerically stable logistic function."""
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# temporal convolution, zero "same" padding, stride 1
# ---------------------------------------------------------------------------

def conv1d_forward_batch(x, kernels, bias):
    """Batched 1-D convolution.

    Args:
        x: input, shape [B, C_in, L].
        kernels: shape [C_out, C_in, K].
        bias: shape [C_out].

    Returns:
        (output [B, C_out, L], cache). With ``pad_left = (K - 1) // 2`` the
        output is ``out[b,c,t] = bias[c] + sum_{i,k} kernels[c,i,k] *
        xpad[b,i,t+k]`` where ``xpad`` is x with pad_left leading and
        ``K - 1 - pad_left`` trailing zeros along time.
    """
    x = _as_f64(x, "x")
    kernels = _as_f64(kernels, "kernels")
    bias = _as_f64(bias, "bias")
    if x.ndim != 3:
        raise ShapeError(f"conv1d input must be 3-D [B, C_in, L], got ndim={x.ndim}")
    if kernels.ndim != 3:
        raise ShapeError(f"conv1d kernels must be 3-D [C_out, C_in, K], got ndim={kernels.ndim}")
    b_sz, c_in, length = x.shape
    c_out, c_in_k, width = kernels.shape
    if c_in_k != c_in:
        raise ShapeError(
            f"conv1d channel mismatch: input has C_in={c_in} but kernels expect C_in={c_in_k}"
        )
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias must have shape ({c_out},), got {bias.shape}")
    if width < 1 or width > length:
        raise ShapeError(f"conv1d kernel width K={width} must satisfy 1 <= K <= L={length}")

    pad_left = (width - 1) // 2
    pad_right = width - 1 - pad_left
    xpad = np.pad(x, ((0, 0), (0, 0), (pad_left, pad_right)))
    win = np.lib.stride_tricks.sliding_window_view(xpad, width, axis=-1)  # [B,C_in,L,K]
    cols = win.transpose(0, 2, 1, 3).reshape(b_sz, length, c_in * width)
    w2 = kernels.reshape(c_out, c_in * width)
    y = cols @ w2.T + bias  # [B, L, C_out]
    cache = (xpad, kernels, pad_left, length)
    return np.ascontiguousarray(y.transpose(0, 2, 1)), cache


def conv1d_backward_batch(grad_out, cache):
    """Gradients for :func:`conv1d_forward_batch`.

    Returns (grad_x [B,C_in,L], grad_kernels [C_out,C_in,K], grad_bias [C_out]).
    """
    xpad, kernels, pad_left, length = cache
    grad_out = _as_f64(grad_out, "grad_out")
    b_sz = xpad.shape[0]
    c_out, c_in, width = kernels.shape
    if grad_out.shape != (b_sz, c_out, length):
        raise ShapeError(
            f"conv1d upstream gradient must have shape {(b_sz, c_out, length)}, got {grad_out.shape}"
        )
    win = np.lib.stride_tricks.sliding_window_view(xpad, width, axis=-1)
    cols = win.transpose(0, 2, 1, 3).reshape(b_sz, length, c_in * width)
    gy = grad_out.transpose(0, 2, 1).reshape(b_sz * length, c_out)
    w2 = kernels.reshape(c_out, c_in * width)

    grad_bias = grad_out.sum(axis=(0, 2))
    grad_w2 = gy.T @ cols.reshape(b_sz * length, c_in * width)
    grad_cols = (gy @ w2).reshape(b_sz, length, c_in, width)

    grad_xpad = np.zeros_like(xpad)
    for k in range(width):
        grad_xpad[:, :, k : k + length] += grad_cols[:, :, :, k].transpose(0, 2, 1)
    grad_x = grad_xpad[:, :, pad_left : pad_left + length]
    return np.ascontiguousarray(grad_x), grad_w2.reshape(c_out, c_in, width), grad_bias


def conv1d_forward(x, kernels, bias):
    """Single-sample convolution: x [C_in, L] -> output [C_out, L]."""
    x = _as_f64(x, "x")
    if x.ndim != 2:
        raise ShapeError(f"conv1d input must be 2-D [C_in, L], got ndim={x.ndim}")
    y, cache = conv1d_forward_batch(x[None], kernels, bias)
    return y[0], cache


def conv1d_backward(grad_out, cache):
    """Single-sample gradients: returns (grad_x, grad_kernels, grad_bias)."""
    grad_out = _as_f64(grad_out, "grad_out")
    gx, gw, gb = conv1d_backward_batch(grad_out[None], cache)
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu_forward(x):
    """Elementwise max(x, 0). The cache is the strict positivity mask."""
    x = _as_f64(x, "x")
    return np.maximum(x, 0.0), x > 0.0


def relu_backward(grad_out, cache):
    """Pass upstream gradient where the input was > 0; subgradient 0 at 0."""
    mask = cache
    if grad_out.shape != mask.shape:
        raise ShapeError(
            f"relu upstream gradient shape {grad_out.shape} != input shape {mask.shape}"
        )
    return grad_out * mask


# ---------------------------------------------------------------------------
# global average pooling over time
# ---------------------------------------------------------------------------

def global_avg_pool_forward(x):
    """Mean over the trailing (time) axis: [..., C, L] -> [..., C]."""
    x = _as_f64(x, "x")
    if x.ndim < 2:
        raise ShapeError(f"global_avg_pool input must have >= 2 dims, got ndim={x.ndim}")
    return x.mean(axis=-1), (x.shape[-1],)


def global_avg_pool_backward(grad_out, cache):
    """Spread the upstream gradient uniformly: each input gets grad/L."""
    (length,) = cache
    grad_out = _as_f64(grad_out, "grad_out")
    return np.broadcast_to(grad_out[..., None] / length, grad_out.shape + (length,)).copy()


# ---------------------------------------------------------------------------
# LSTM (gate order i, f, g, o; stacked weights)
# ---------------------------------------------------------------------------

def lstm_forward_batch(x, weight_x, weight_h, bias, h0=None, c0=None):
    """Run an LSTM over a batched sequence.

    Args:
        x: input, shape [B, F, T] (F features, T time steps).
        weight_x: input weights, shape [4H, F], gate rows ordered (i, f, g, o).
        weight_h: recurrent weights, shape [4H, H].
        bias: shape [4H].
        h0, c0: optional initial state [B, H]; zeros when omitted.

    Returns:
        (h_T [B, H], cache). Recurrence per step:
        i,f,o = sigmoid(gates), g = tanh(gate),
        c_t = f * c_{t-1} + i * g, h_t = o * tanh(c_t).
    """
    x = _as_f64(x, "x")
    weight_x = _as_f64(weight_x, "weight_x")
    weight_h = _as_f64(weight_h, "weight_h")
    bias = _as_f64(bias, "bias")
    if x.ndim != 3:
        raise ShapeError(f"lstm input must be 3-D [B, F, T], got ndim={x.ndim}")
    b_sz, n_feat, n_steps = x.shape
    if n_steps < 1:
        raise ShapeError("lstm input must have at least one time step")
    four_h, n_feat_w = weight_x.shape
    if four_h % 4 != 0:
        raise ShapeError(f"lstm weight_x first axis must be 4*H, got {four_h}")
    hidden = four_h // 4
    if n_feat_w != n_feat:
        raise ShapeError(
            f"lstm feature mismatch: input has F={n_feat} but weight_x expects F={n_feat_w}"
        )
    if weight_h.shape != (four_h, hidden):
        raise ShapeError(f"lstm weight_h must have shape {(four_h, hidden)}, got {weight_h.shape}")
    if bias.shape != (four_h,):
        raise ShapeError(f"lstm bias must have shape ({four_h},), got {bias.shape}")

    h = np.zeros((b_sz, hidden)) if h0 is None else _as_f64(h0, "h0").copy()
    c = np.zeros((b_sz, hidden)) if c0 is None else _as_f64(c0, "c0").copy()
    steps = []
    for t in range(n_steps):
        x_t = x[:, :, t]
        z = x_t @ weight_x.T + h @ weight_h.T + bias
        zi, zf, zg, zo = np.split(z, 4, axis=1)
        gate_i = sigmoid(zi)
        gate_f = sigmoid(zf)
        gate_g = np.tanh(zg)
        gate_o = sigmoid(zo)
        c_new = gate_f * c + gate_i * gate_g
        tanh_c = np.tanh(c_new)
        h_new = gate_o * tanh_c
        steps.append((x_t, h, c, gate_i, gate_f, gate_g, gate_o, tanh_c))
        h, c = h_new, c_new
    cache = (steps, weight_x, weight_h, x.shape)
    return h, cache


def lstm_backward_batch(grad_h, cache):
    """Backprop through time for :func:`lstm_forward_batch`.

    Args:
        grad_h: gradient w.r.t. the final hidden state, shape [B, H].

    Returns:
        (grad_x [B,F,T], grad_weight_x, grad_weight_h, grad_bias).
    """
    steps, weight_x, weight_h, x_shape = cache
    grad_h = _as_f64(grad_h, "grad_h")
    b_sz, n_feat, n_steps = x_shape
    hidden = weight_h.shape[1]
    if grad_h.shape != (b_sz, hidden):
        raise ShapeError(f"lstm upstream gradient must have shape {(b_sz, hidden)}, got {grad_h.shape}")

    grad_x = np.zeros(x_shape)
    grad_wx = np.zeros_like(weight_x)
    grad_wh = np.zeros_like(weight_h)
    grad_b = np.zeros(weight_x.shape[0])
    dh = grad_h.copy()
    dc = np.zeros((b_sz, hidden))
    for t in range(n_steps - 1, -1, -1):
        x_t, h_prev, c_prev, gate_i, gate_f, gate_g, gate_o, tanh_c = steps[t]
        d_o = dh * tanh_c
        dc = dc + dh * gate_o * (1.0 - tanh_c**2)
        d_i = dc * gate_g
        d_g = dc * gate_i
        d_f = dc * c_prev
        dz = np.concatenate(
            [
                d_i * gate_i * (1.0 - gate_i),
                d_f * gate_f * (1.0 - gate_f),
                d_g * (1.0 - gate_g**2),
                d_o * gate_o * (1.0 - gate_o),
            ],
            axis=1,
        )
        grad_wx += dz.T @ x_t
        grad_wh += dz.T @ h_prev
        grad_b += dz.sum(axis=0)
        grad_x[:, :, t] = dz @ weight_x
        dh = dz @ weight_h
        dc = dc * gate_f
    return grad_x, grad_wx, grad_wh, grad_b


def lstm_forward(x, weight_x, weight_h, bias, h0=None, c0=None):
    """Single-sample LSTM: x [F, T] -> final hidden state [H]."""
    x = _as_f64(x, "x")
    if x.ndim != 2:
        raise ShapeError(f"lstm input must be 2-D [F, T], got ndim={x.ndim}")
    h0b = None if h0 is None else np.asarray(h0, dtype=np.float64)[None]
    c0b = None if c0 is None else np.asarray(c0, dtype=np.float64)[None]
    h, cache = lstm_forward_batch(x[None], weight_x, weight_h, bias, h0b, c0b)
    return h[0], cache


def lstm_backward(grad_h, cache):
    """Single-sample BPTT: returns (grad_x, grad_weight_x, grad_weight_h, grad_bias)."""
    grad_h = _as_f64(grad_h, "grad_h")
    gx, gwx, gwh, gb = lstm_backward_batch(grad_h[None], cache)
    return gx[0], gwx, gwh, gb


# ---------------------------------------------------------------------------
# per-channel batch normalization over (batch, time)
# ---------------------------------------------------------------------------

def batchnorm_forward_batch(x, gamma, beta, running_mean, running_var, mode,
                            momentum=0.9, eps=1e-5):
    """Normalize each channel over the batch and time axes.

    Args:
        x: input, shape [B, C, L].
        gamma, beta: per-channel scale and shift, shape [C].
        running_mean, running_var: per-channel running statistics, shape [C].
            Updated in place in train mode, read in eval mode.
        mode: 'train' uses batch statistics, 'eval' the running ones.

    Returns:
        (output [B, C, L], cache).
    """
    x = _as_f64(x, "x")
    if x.ndim != 3:
        raise ShapeError(f"batchnorm input must be 3-D [B, C, L], got ndim={x.ndim}")
    if mode not in ("train", "eval"):
        raise UsageError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    n_chan = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta),
                      ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (n_chan,):
            raise ShapeError(f"batchnorm {name} must have shape ({n_chan},), got {arr.shape}")
    if mode == "train":
        mean = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * inv_std[:, None]
    out = gamma[:, None] * xhat + beta[:, None]
    cache = (xhat, gamma, inv_std, mode, x.shape)
    return out, cache


def batchnorm_backward_batch(grad_out, cache):
    """Gradients for :func:`batchnorm_forward_batch`.

    Returns (grad_x, grad_gamma, grad_beta). In eval mode the statistics are
    constants so grad_x is a plain affine backprop.
    """
    xhat, gamma, inv_std, mode, x_shape = cache
    grad_out = _as_f64(grad_out, "grad_out")
    if grad_out.shape != x_shape:
        raise ShapeError(f"batchnorm upstream gradient must have shape {x_shape}, got {grad_out.shape}")
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2))
    grad_beta = grad_out.sum(axis=(0, 2))
    dxhat = grad_out * gamma[:, None]
    if mode == "eval":
        grad_x = dxhat * inv_std[:, None]
    else:
        n = x_shape[0] * x_shape[2]
        sum_dxhat = dxhat.sum(axis=(0, 2), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2), keepdims=True)
        grad_x = (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n) * inv_std[:, None]
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# inverted dropout
# ---------------------------------------------------------------------------

def dropout_forward(x, rate, mode, rng=None):
    """Inverted dropout.

    Train mode keeps each element with probability 1 - rate and scales kept
    elements by 1/(1 - rate) so the expectation is unchanged; eval mode is the
    identity. ``rate`` must lie in [0, 1).
    """
    x = _as_f64(x, "x")
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise UsageError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x.copy(), (None, rate)
    if rng is None:
        raise UsageError("dropout in train mode requires an rng")
    mask = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * mask * scale, (mask, rate)


def dropout_backward(grad_out, cache):
    """Route gradients through the kept elements with the same 1/(1-rate) scale."""
    mask, rate = cache
    grad_out = _as_f64(grad_out, "grad_out")
    if mask is None:
        return grad_out.copy()
    if grad_out.shape != mask.shape:
        raise ShapeError(
            f"dropout upstream gradient shape {grad_out.shape} != mask shape {mask.shape}"
        )
    return grad_out * mask / (1.0 - rate)


# ---------------------------------------------------------------------------
# softmax + cross-entropy (fused)
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits, true_class):
    """Stable softmax with cross-entropy loss for one sample.

    Args:
        logits: shape [C].
        true_class: integer label in [0, C).

    Returns:
        (probs [C], loss, grad_logits [C]) where grad_logits = probs - onehot.
    """
    logits = _as_f64(logits, "logits")
    if logits.ndim != 1:
        raise ShapeError(f"logits must be 1-D [C], got ndim={logits.ndim}")
    n_classes = logits.shape[0]
    true_class = int(true_class)
    if not 0 <= true_class < n_classes:
        raise UsageError(f"true_class {true_class} out of range for {n_classes} classes")
    shift = logits - logits.max()
    exp = np.exp(shift)
    total = exp.sum()
    probs = exp / total
    loss = np.log(total) - shift[true_class]
    grad = probs.copy()
    grad[true_class] -= 1.0
    return probs, float(loss), grad


def softmax_cross_entropy_batch(logits, labels):
    """Batched fused softmax/cross-entropy.

    Args:
        logits: shape [B, C].
        labels: integer labels, shape [B].

    Returns:
        (probs [B, C], mean_loss, grad_logits [B, C]) where the gradient is of
        the mean loss, i.e. (probs - onehot) / B.
    """
    logits = _as_f64(logits, "logits")
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D [B, C], got ndim={logits.ndim}")
    b_sz, n_classes = logits.shape
    if labels.shape != (b_sz,):
        raise ShapeError(f"labels must have shape ({b_sz},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise UsageError(f"labels out of range for {n_classes} classes")
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    rows = np.arange(b_sz)
    losses = np.log(total[:, 0]) - shift[rows, labels]
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= b_sz
    return probs, float(losses.mean()), grad
