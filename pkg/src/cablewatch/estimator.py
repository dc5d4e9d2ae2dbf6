"""Scikit-learn estimator facade over the segment classifier.

Wraps model building, training and prediction behind the familiar
fit/predict/predict_proba surface so the classifier composes with sklearn
tooling (clone, cross-validation, pipelines). The heavy lifting lives in
:mod:`cablewatch.model` and :mod:`cablewatch.training`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import ModelConfig, build_model, forward
from .training import TrainConfig, train

__all__ = ["LSTMFCNClassifier"]


class LSTMFCNClassifier(BaseEstimator, ClassifierMixin):
    """Time-series segment classifier (convolutional + recurrent branches).

    Parameters mirror ModelConfig and TrainConfig; see those classes for
    semantics. ``epochs``/``batch_size`` defaults here are desk-friendly
    rather than the full-scale training defaults.
    """

    def __init__(self, conv_filters=(128, 256, 128), conv_kernel_widths=(8, 5, 3),
                 lstm_cells=8, dropout_rate=0.8, use_batch_norm=False,
                 standardize=False, epochs=100, batch_size=128, lr_initial=1e-3,
                 lr_final=1e-4, plateau_window=100, decay_on_plateau=True,
                 val_fraction=0.2, early_stop_patience=0, seed=0, verbose=0):
        self.conv_filters = conv_filters
        self.conv_kernel_widths = conv_kernel_widths
        self.lstm_cells = lstm_cells
        self.dropout_rate = dropout_rate
        self.use_batch_norm = use_batch_norm
        self.standardize = standardize
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.plateau_window = plateau_window
        self.decay_on_plateau = decay_on_plateau
        self.val_fraction = val_fraction
        self.early_stop_patience = early_stop_patience
        self.seed = seed
        self.verbose = verbose

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]

        config = ModelConfig(
            num_classes=len(self.classes_),
            input_length=X.shape[1],
            conv_filters=tuple(self.conv_filters),
            conv_kernel_widths=tuple(self.conv_kernel_widths),
            lstm_cells=self.lstm_cells,
            dropout_rate=self.dropout_rate,
            use_batch_norm=self.use_batch_norm,
            standardize=self.standardize,
        )
        params = build_model(config, seed=self.seed)
        train_config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_initial=self.lr_initial,
            lr_final=self.lr_final,
            plateau_window=self.plateau_window,
            decay_on_plateau=self.decay_on_plateau,
            val_fraction=self.val_fraction,
            early_stop_patience=self.early_stop_patience,
            seed=self.seed,
        )

        callback = None
        if self.verbose:
            def callback(stats):
                print(f"epoch {stats.epoch}: train_loss={stats.train_loss:.4f} "
                      f"val_acc={stats.val_acc:.3f}")

        result = train(params, X, encoded, train_config, callback=callback)
        self.params_ = result.best_params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_val_acc_ = result.best_val_acc
        return self

    def predict_proba(self, X, chunk=1024):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        out = np.empty((X.shape[0], len(self.classes_)))
        for lo in range(0, X.shape[0], chunk):
            probs, _ = forward(self.params_, X[lo : lo + chunk], mode="eval")
            out[lo : lo + chunk] = probs
        return out

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
