"""The two-branch convolutional LSTM detector assembled from layers.

Each input row is treated as a length-F sequence with a single channel:
two parallel conv branches (kernel 3 with 32 filters, kernel 5 with 64
filters, both ReLU + max-pooled) are fused along the channel axis, run
through a 64-unit then a 32-unit LSTM, a 100-unit ReLU dense layer, and a
sigmoid output head scoring each row in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from .errors import ConfigError, DimensionError
from .tensor import DEFAULT_DTYPE

LAYER_ORDER = ("conv_a", "conv_b", "lstm_1", "lstm_2", "dense_1", "dense_out")

CONV_A_KERNEL = 3
CONV_A_FILTERS = 32
CONV_B_KERNEL = 5
CONV_B_FILTERS = 64
LSTM_1_HIDDEN = 64
LSTM_2_HIDDEN = 32
DENSE_1_UNITS = 100


@dataclass
class ModelParams:
    """All weight tensors of the detector, keyed by layer name."""

    feature_count: int
    layers: dict[str, L.LayerParams]

    def weight(self, key: str) -> np.ndarray:
        layer, wname = key.split(".", 1)
        return self.layers[layer].weights[wname]

    def named_weights(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{wn}": w
                for ln, lp in self.layers.items()
                for wn, w in lp.weights.items()}


@dataclass(frozen=True)
class Prediction:
    probability: float
    label: int
    threshold: float


def layer_specs(feature_count: int) -> list[dict]:
    """Architecture table; only pooled sequence length depends on F."""
    return [
        {"kind": "conv1d", "name": "conv_a", "kernel_size": CONV_A_KERNEL,
         "in_channels": 1, "filters": CONV_A_FILTERS},
        {"kind": "conv1d", "name": "conv_b", "kernel_size": CONV_B_KERNEL,
         "in_channels": 1, "filters": CONV_B_FILTERS},
        {"kind": "lstm", "name": "lstm_1",
         "input_dim": CONV_A_FILTERS + CONV_B_FILTERS, "hidden": LSTM_1_HIDDEN},
        {"kind": "lstm", "name": "lstm_2", "input_dim": LSTM_1_HIDDEN, "hidden": LSTM_2_HIDDEN},
        {"kind": "dense", "name": "dense_1", "input_dim": LSTM_2_HIDDEN, "units": DENSE_1_UNITS},
        {"kind": "dense", "name": "dense_out", "input_dim": DENSE_1_UNITS, "units": 1},
    ]


def build_model(feature_count: int, seed: int, dtype=DEFAULT_DTYPE) -> ModelParams:
    """Deterministically initialize the full parameter set for F input features."""
    if feature_count < 2:
        raise ConfigError(f"need at least 2 features (pooling needs T >= 2), got {feature_count}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(LAYER_ORDER))
    params = {}
    for spec, child in zip(layer_specs(feature_count), children):
        params[spec["name"]] = L.init_params(spec, child, dtype=dtype)
    return ModelParams(feature_count=feature_count, layers=params)


def param_count(params: ModelParams) -> int:
    return sum(w.size for w in params.named_weights().values())


@dataclass
class ModelCache:
    """Per-layer caches for one forward pass; consumed by one backward pass."""

    conv_a: L.LayerCache
    relu_a: L.LayerCache
    pool_a: L.LayerCache
    conv_b: L.LayerCache
    relu_b: L.LayerCache
    pool_b: L.LayerCache
    lstm_1: L.LayerCache
    lstm_2: L.LayerCache
    dense_1: L.LayerCache
    dense_out: L.LayerCache


def forward_batch(params: ModelParams, X: np.ndarray):
    """Score a batch of rows.

    Args:
        params: model weights.
        X: (B, F) feature matrix; cast to the weight dtype on entry.

    Returns:
        (probabilities (B,), ModelCache)
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != params.feature_count:
        raise DimensionError(
            f"input shape {X.shape} does not match (B, {params.feature_count})")
    dtype = params.layers["dense_out"].weights["W"].dtype
    x = X.astype(dtype)[:, :, None]  # (B, F, 1): feature axis as time, one channel

    w = params.layers
    a, c_conv_a = L.conv1d_forward_batch(x, w["conv_a"].weights["kernel"], w["conv_a"].weights["bias"])
    a, c_relu_a = L.relu(a)
    a, c_pool_a = L.maxpool1d_batch(a)
    b, c_conv_b = L.conv1d_forward_batch(x, w["conv_b"].weights["kernel"], w["conv_b"].weights["bias"])
    b, c_relu_b = L.relu(b)
    b, c_pool_b = L.maxpool1d_batch(b)
    fused = L.fuse_branches(a, b)
    s1, c_lstm_1 = L.lstm_forward_batch(
        fused, w["lstm_1"].weights["W"], w["lstm_1"].weights["U"], w["lstm_1"].weights["b"],
        return_sequences=True)
    s2, c_lstm_2 = L.lstm_forward_batch(
        s1, w["lstm_2"].weights["W"], w["lstm_2"].weights["U"], w["lstm_2"].weights["b"],
        return_sequences=False)
    d1, c_dense_1 = L.dense_forward_batch(
        s2, w["dense_1"].weights["W"], w["dense_1"].weights["b"], "relu")
    out, c_dense_out = L.dense_forward_batch(
        d1, w["dense_out"].weights["W"], w["dense_out"].weights["b"], "sigmoid")
    cache = ModelCache(c_conv_a, c_relu_a, c_pool_a, c_conv_b, c_relu_b, c_pool_b,
                       c_lstm_1, c_lstm_2, c_dense_1, c_dense_out)
    return out[:, 0], cache


def backward_batch(params: ModelParams, cache: ModelCache, dp: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of all weights given dloss/dprobability per row (batch-summed)."""
    dp = np.asarray(dp)
    dy = dp[:, None]
    grads: dict[str, np.ndarray] = {}
    dx, grads["dense_out.W"], grads["dense_out.b"] = L.dense_backward_batch(cache.dense_out, dy)
    dx, grads["dense_1.W"], grads["dense_1.b"] = L.dense_backward_batch(cache.dense_1, dx)
    dx, grads["lstm_2.W"], grads["lstm_2.U"], grads["lstm_2.b"] = L.lstm_backward_batch(
        cache.lstm_2, dx)
    dx, grads["lstm_1.W"], grads["lstm_1.U"], grads["lstm_1.b"] = L.lstm_backward_batch(
        cache.lstm_1, dx)
    da, db = L.split_fused(dx, CONV_A_FILTERS)
    da = L.maxpool1d_backward_batch(cache.pool_a, da)
    da = L.relu_backward(cache.relu_a, da)
    _, grads["conv_a.kernel"], grads["conv_a.bias"] = L.conv1d_backward_batch(cache.conv_a, da)
    db = L.maxpool1d_backward_batch(cache.pool_b, db)
    db = L.relu_backward(cache.relu_b, db)
    _, grads["conv_b.kernel"], grads["conv_b.bias"] = L.conv1d_backward_batch(cache.conv_b, db)
    return grads


def forward(params: ModelParams, x: np.ndarray):
    """Score one sample given as an (F, 1) column; returns (probability, cache)."""
    x = np.asarray(x)
    if x.shape != (params.feature_count, 1):
        raise DimensionError(f"expected input shape ({params.feature_count}, 1), got {x.shape}")
    p, cache = forward_batch(params, x[:, 0][None])
    return float(p[0]), cache


def backward(params: ModelParams, cache: ModelCache, dloss_dp: float) -> dict[str, np.ndarray]:
    """Single-sample gradients; the fusion adjoint splits by column range."""
    return backward_batch(params, cache, np.asarray([dloss_dp]))


def predict_proba(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Probabilities for a batch, one forward pass, batch order preserved."""
    p, _ = forward_batch(params, X)
    return p


def predict(params: ModelParams, X: np.ndarray, threshold: float = 0.5) -> list[Prediction]:
    """Per-row probability and thresholded label (label 1 iff p >= threshold)."""
    p = predict_proba(params, X)
    return [Prediction(float(pi), int(pi >= threshold), threshold) for pi in p]
