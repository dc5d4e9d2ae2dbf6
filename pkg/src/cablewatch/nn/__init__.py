"""Hand-written numpy kernels, parameter blocks and gradient checking."""

from .gradcheck import finite_diff_check
from .ops import (
    batchnorm_backward_batch,
    batchnorm_forward_batch,
    conv1d_backward,
    conv1d_backward_batch,
    conv1d_forward,
    conv1d_forward_batch,
    dropout_backward,
    dropout_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    lstm_backward,
    lstm_backward_batch,
    lstm_forward,
    lstm_forward_batch,
    relu_backward,
    relu_forward,
    sigmoid,
    softmax_cross_entropy,
    softmax_cross_entropy_batch,
)
from .params import ParamBlock, adam_step, he_init

__all__ = [
    "ParamBlock",
    "adam_step",
    "he_init",
    "finite_diff_check",
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
