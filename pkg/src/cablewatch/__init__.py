"""Damage detection for monitored stay cables.

Trains a time-series classifier on intact-condition cable forces (and pair
force ratios) and flags the class whose test accuracy collapses.

The high-level entry points are re-exported here; the submodules hold the
full API:

- :mod:`cablewatch.data` — CSV ingest, screening, clipping, ratios,
  segmentation, dataset assembly
- :mod:`cablewatch.synth` — synthetic bridge worlds and fault injection
- :mod:`cablewatch.model` / :mod:`cablewatch.training` — the from-scratch
  LSTM-FCN and its training loop
- :mod:`cablewatch.diagnosis` — suspect flagging and the two-scenario
  verdict
- :mod:`cablewatch.estimator` — scikit-learn style classifier wrapper
- :mod:`cablewatch.cli` — the ``cablewatch`` command line tool
"""

from .data import (
    CableId,
    Dataset,
    DaySeries,
    OutlierPolicy,
    PairId,
    build_dataset,
    clip_outliers,
    compute_force_ratio,
    load_day_records,
    parse_cable_id,
    parse_pair_id,
    prepare_dataset,
    screen_days,
    segment_day,
)
from .diagnosis import (
    DiagnosisReport,
    SuspectSet,
    Verdict,
    build_report,
    combine_scenarios,
    flag_suspects,
    render_report,
    replay_published_tables,
)
from .errors import (
    CableWatchError,
    ConfigError,
    DataError,
    NonFiniteLossError,
    ShapeError,
    TrainingError,
    UsageError,
)
from .estimator import LSTMFCNClassifier
from .model import (
    ModelConfig,
    ModelParams,
    build_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .synth import BridgeSpec, FaultSpec, PairSpec, TrafficSpec, generate
from .training import TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "CableWatchError",
    "ShapeError",
    "ConfigError",
    "DataError",
    "UsageError",
    "TrainingError",
    "NonFiniteLossError",
    # data
    "CableId",
    "PairId",
    "parse_cable_id",
    "parse_pair_id",
    "DaySeries",
    "load_day_records",
    "OutlierPolicy",
    "clip_outliers",
    "screen_days",
    "compute_force_ratio",
    "segment_day",
    "Dataset",
    "build_dataset",
    "prepare_dataset",
    # synth
    "TrafficSpec",
    "PairSpec",
    "BridgeSpec",
    "FaultSpec",
    "generate",
    # model / training
    "ModelConfig",
    "ModelParams",
    "build_model",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate",
    # diagnosis
    "SuspectSet",
    "flag_suspects",
    "Verdict",
    "combine_scenarios",
    "DiagnosisReport",
    "build_report",
    "render_report",
    "replay_published_tables",
    # estimator
    "LSTMFCNClassifier",
]
