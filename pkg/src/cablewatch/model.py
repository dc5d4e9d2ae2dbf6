"""Two-branch LSTM-FCN classifier assembled from the numpy kernels.

The convolutional branch stacks temporal conv blocks (conv, optional batch
norm, ReLU) followed by global average pooling. The recurrent branch
dimension-shuffles each length-L segment into an L-feature single-step
sequence, runs a small LSTM and applies dropout to its final hidden state.
Both feature vectors are concatenated and fed to a softmax head.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import write_stable_npz
from .errors import ConfigError, DataError, ShapeError
from .nn import ops
from .nn.params import ParamBlock, he_init

__all__ = [
    "ModelConfig",
    "ModelParams",
    "build_model",
    "dimension_shuffle",
    "forward",
    "loss_and_grads",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    Defaults follow the 14-class raw-force setup; the ratio setup only
    changes ``num_classes`` to 7.
    """

    num_classes: int = 14
    input_length: int = 1600
    conv_filters: tuple = (128, 256, 128)
    conv_kernel_widths: tuple = (8, 5, 3)
    lstm_cells: int = 8
    dropout_rate: float = 0.8
    use_batch_norm: bool = False
    standardize: bool = False

    def __post_init__(self):
        self.conv_filters = tuple(int(f) for f in self.conv_filters)
        self.conv_kernel_widths = tuple(int(k) for k in self.conv_kernel_widths)

    def validate(self):
        """Raise ConfigError listing every violated field."""
        problems = []
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_length < 1:
            problems.append(f"input_length must be >= 1, got {self.input_length}")
        if len(self.conv_filters) != len(self.conv_kernel_widths):
            problems.append(
                f"conv_filters has {len(self.conv_filters)} entries but "
                f"conv_kernel_widths has {len(self.conv_kernel_widths)}"
            )
        if not self.conv_filters:
            problems.append("conv_filters must name at least one block")
        if any(f < 1 for f in self.conv_filters):
            problems.append(f"conv_filters must all be >= 1, got {self.conv_filters}")
        if any(k < 1 or k > self.input_length for k in self.conv_kernel_widths):
            problems.append(
                f"conv_kernel_widths must lie in [1, input_length], got {self.conv_kernel_widths}"
            )
        if self.lstm_cells < 1:
            problems.append(f"lstm_cells must be >= 1, got {self.lstm_cells}")
        if not 0.0 <= self.dropout_rate < 1.0:
            problems.append(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if problems:
            raise ConfigError("invalid model config: " + "; ".join(problems))

    def feature_width(self):
        """Width of the concatenated feature vector feeding the head."""
        return self.conv_filters[-1] + self.lstm_cells

    def param_count(self):
        """Total trainable parameter count, a pure function of the config."""
        total = 0
        c_in = 1
        for c_out, k in zip(self.conv_filters, self.conv_kernel_widths):
            total += c_out * c_in * k + c_out
            if self.use_batch_norm:
                total += 2 * c_out
            c_in = c_out
        h = self.lstm_cells
        total += 4 * h * self.input_length + 4 * h * h + 4 * h
        total += self.num_classes * self.feature_width() + self.num_classes
        return total


@dataclass
class ModelParams:
    """A built model: config, named parameter blocks and non-trainable buffers."""

    config: ModelConfig
    blocks: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    seed: int = 0

    def block_list(self):
        return list(self.blocks.values())

    def zero_grad(self):
        for blk in self.blocks.values():
            blk.zero_grad()

    def copy(self):
        return ModelParams(
            config=self.config,
            blocks={name: blk.copy() for name, blk in self.blocks.items()},
            buffers={name: arr.copy() for name, arr in self.buffers.items()},
            seed=self.seed,
        )


def build_model(config, seed=0):
    """Allocate and initialize every block for ``config``.

    Conv kernels and the head use He initialization (fan_in = C_in * K for
    convs, concatenated width for the head); biases start at zero except the
    LSTM forget-gate slice which starts at 1.0. LSTM weights are He-initialized
    with fan_in = input features + hidden size.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    blocks = {}
    buffers = {}

    c_in = 1
    for i, (c_out, k) in enumerate(zip(config.conv_filters, config.conv_kernel_widths), start=1):
        fan_in = c_in * k
        blocks[f"conv{i}_w"] = ParamBlock(f"conv{i}_w", he_init(fan_in, (c_out, c_in, k), rng))
        blocks[f"conv{i}_b"] = ParamBlock(f"conv{i}_b", np.zeros(c_out))
        if config.use_batch_norm:
            blocks[f"bn{i}_gamma"] = ParamBlock(f"bn{i}_gamma", np.ones(c_out))
            blocks[f"bn{i}_beta"] = ParamBlock(f"bn{i}_beta", np.zeros(c_out))
            buffers[f"bn{i}_mean"] = np.zeros(c_out)
            buffers[f"bn{i}_var"] = np.ones(c_out)
        c_in = c_out

    h = config.lstm_cells
    n_feat = config.input_length
    fan_in = n_feat + h
    blocks["lstm_W"] = ParamBlock("lstm_W", he_init(fan_in, (4 * h, n_feat), rng))
    blocks["lstm_U"] = ParamBlock("lstm_U", he_init(fan_in, (4 * h, h), rng))
    lstm_b = np.zeros(4 * h)
    lstm_b[h : 2 * h] = 1.0  # forget gate opens at init
    blocks["lstm_b"] = ParamBlock("lstm_b", lstm_b)

    width = config.feature_width()
    blocks["head_w"] = ParamBlock("head_w", he_init(width, (config.num_classes, width), rng))
    blocks["head_b"] = ParamBlock("head_b", np.zeros(config.num_classes))

    buffers["input_mean"] = np.zeros(1)
    buffers["input_std"] = np.ones(1)
    return ModelParams(config=config, blocks=blocks, buffers=buffers, seed=seed)


def dimension_shuffle(segment):
    """Reinterpret a univariate segment [1 x L] (or [L]) as [L x 1].

    The LSTM then sees L features presented in a single time step.
    """
    arr = np.asarray(segment, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] != 1:
        raise ShapeError(f"dimension_shuffle expects [1, L] or [L], got shape {arr.shape}")
    return arr.T.copy()


def _check_batch(params, segments):
    x = np.asarray(segments, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"segments must be [B, L] or [L], got ndim={x.ndim}")
    expect = params.config.input_length
    if x.shape[1] != expect:
        raise ShapeError(f"segment length {x.shape[1]} != configured input_length {expect}")
    return x


def forward(params, segments, mode="eval", rng=None):
    """Run the full network.

    Args:
        params: ModelParams from :func:`build_model`.
        segments: array [B, L] (or a single [L] segment).
        mode: 'train' (dropout active, batch-norm batch statistics) or 'eval'.
        rng: numpy Generator, required in train mode when dropout_rate > 0.

    Returns:
        (probs [B, num_classes], cache) with each row summing to 1.
    """
    cfg = params.config
    x = _check_batch(params, segments)
    if cfg.standardize:
        x = (x - params.buffers["input_mean"][0]) / params.buffers["input_std"][0]

    cache = {"mode": mode, "n": x.shape[0]}
    act = x[:, None, :]
    conv_caches = []
    n_blocks = len(cfg.conv_filters)
    for i in range(1, n_blocks + 1):
        act, c_conv = ops.conv1d_forward_batch(
            act, params.blocks[f"conv{i}_w"].value, params.blocks[f"conv{i}_b"].value
        )
        c_bn = None
        if cfg.use_batch_norm:
            act, c_bn = ops.batchnorm_forward_batch(
                act,
                params.blocks[f"bn{i}_gamma"].value,
                params.blocks[f"bn{i}_beta"].value,
                params.buffers[f"bn{i}_mean"],
                params.buffers[f"bn{i}_var"],
                mode,
            )
        act, c_relu = ops.relu_forward(act)
        conv_caches.append((c_conv, c_bn, c_relu))
    fcn_feat, c_gap = ops.global_avg_pool_forward(act)

    shuffled = x[:, :, None]  # [B, L features, 1 step]
    h_final, c_lstm = ops.lstm_forward_batch(
        shuffled, params.blocks["lstm_W"].value, params.blocks["lstm_U"].value,
        params.blocks["lstm_b"].value,
    )
    lstm_feat, c_drop = ops.dropout_forward(h_final, cfg.dropout_rate, mode, rng)

    feat = np.concatenate([fcn_feat, lstm_feat], axis=1)
    logits = feat @ params.blocks["head_w"].value.T + params.blocks["head_b"].value
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    probs = exp / exp.sum(axis=1, keepdims=True)

    cache.update(
        conv_caches=conv_caches, gap=c_gap, lstm=c_lstm, drop=c_drop,
        feat=feat, logits=logits, fcn_width=fcn_feat.shape[1],
    )
    return probs, cache


def loss_and_grads(params, segments, labels, mode="train", rng=None):
    """Mean cross-entropy over a batch plus gradients for every block.

    Overwrites ``block.grad`` on all blocks and returns (loss, probs).
    """
    cfg = params.config
    x = _check_batch(params, segments)
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise ShapeError(f"labels must have shape ({x.shape[0]},), got {labels.shape}")

    probs, cache = forward(params, x, mode=mode, rng=rng)
    _, loss, dlogits = ops.softmax_cross_entropy_batch(cache["logits"], labels)

    blocks = params.blocks
    feat = cache["feat"]
    blocks["head_w"].grad = dlogits.T @ feat
    blocks["head_b"].grad = dlogits.sum(axis=0)
    dfeat = dlogits @ blocks["head_w"].value

    width_fcn = cache["fcn_width"]
    dfcn = dfeat[:, :width_fcn]
    ddrop = dfeat[:, width_fcn:]

    dh = ops.dropout_backward(ddrop, cache["drop"])
    _, gwx, gwh, gb = ops.lstm_backward_batch(dh, cache["lstm"])
    blocks["lstm_W"].grad = gwx
    blocks["lstm_U"].grad = gwh
    blocks["lstm_b"].grad = gb

    dact = ops.global_avg_pool_backward(dfcn, cache["gap"])
    for i in range(len(cfg.conv_filters), 0, -1):
        c_conv, c_bn, c_relu = cache["conv_caches"][i - 1]
        dact = ops.relu_backward(dact, c_relu)
        if cfg.use_batch_norm:
            dact, dgamma, dbeta = ops.batchnorm_backward_batch(dact, c_bn)
            blocks[f"bn{i}_gamma"].grad = dgamma
            blocks[f"bn{i}_beta"].grad = dbeta
        dact, gw, gbias = ops.conv1d_backward_batch(dact, c_conv)
        blocks[f"conv{i}_w"].grad = gw
        blocks[f"conv{i}_b"].grad = gbias
    return loss, probs


def predict(params, segments):
    """Eval-mode class indices and probabilities.

    Argmax ties resolve to the lowest class index.
    """
    probs, _ = forward(params, segments, mode="eval")
    return probs.argmax(axis=1), probs


def save_checkpoint(params, path, metadata=None):
    """Write a versioned npz container; round-trips are value-exact."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(params.config),
        "seed": params.seed,
        "metadata": metadata or {},
        "block_names": list(params.blocks.keys()),
        "buffer_names": list(params.buffers.keys()),
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, blk in params.blocks.items():
        arrays[f"block_{name}"] = blk.value
    for name, arr in params.buffers.items():
        arrays[f"buffer_{name}"] = arr
    # byte-identical across repeated saves (fixed zip dates)
    write_stable_npz(path, arrays)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (ModelParams, metadata dict).
    """
    with np.load(path) as data:
        if "__meta__" not in data:
            raise DataError(f"{path} is not a model checkpoint (missing metadata)")
        meta = json.loads(bytes(data["__meta__"]).decode())
        version = meta.get("format_version")
        if version != CHECKPOINT_FORMAT_VERSION:
            raise DataError(
                f"unsupported checkpoint format version {version} "
                f"(this build reads version {CHECKPOINT_FORMAT_VERSION})"
            )
        cfg_dict = dict(meta["config"])
        cfg_dict["conv_filters"] = tuple(cfg_dict["conv_filters"])
        cfg_dict["conv_kernel_widths"] = tuple(cfg_dict["conv_kernel_widths"])
        config = ModelConfig(**cfg_dict)
        blocks = {
            name: ParamBlock(name, data[f"block_{name}"].copy())
            for name in meta["block_names"]
        }
        buffers = {name: data[f"buffer_{name}"].copy() for name in meta["buffer_names"]}
    params = ModelParams(config=config, blocks=blocks, buffers=buffers, seed=meta["seed"])
    return params, meta["metadata"]
