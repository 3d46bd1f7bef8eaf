"""Forward and backward passes for every layer in the detector.

Each operation comes in two flavours: a single-sample form matching the
shapes used throughout the docs ((T, C) sequences, (D,) vectors) and a
`*_batch` form with a leading batch axis that the training loop uses. The
single-sample form is a B=1 view of the batched math, so there is exactly
one implementation of each gradient.

Conventions fixed here:
  - conv1d uses "same" zero padding, stride 1, odd kernel sizes.
  - maxpool1d uses pool=2, stride=2, drops a trailing odd element, and
    routes gradients to the earlier index on ties.
  - LSTM gates are packed [input, forget, cell-candidate, output] along
    the 4H axis; h0 = c0 = 0.
  - ReLU subgradient at exactly 0 is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UsageError, ValidationError
from .tensor import DEFAULT_DTYPE


@dataclass
class LayerParams:
    """Named weight tensors of one layer.

    `trainable=False` keeps the layer in forward/backward but excludes its
    weights from optimizer updates.
    """

    name: str
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    trainable: bool = True


class LayerCache:
    """Forward intermediates retained for exactly one backward call."""

    __slots__ = ("_vals", "_used")

    def __init__(self, **vals):
        self._vals = vals
        self._used = False

    def take(self) -> dict:
        if self._used:
            raise UsageError("layer cache already consumed by a backward pass; rerun forward")
        self._used = True
        return self._vals


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, sigma(z) in (0, 1)."""
    z = np.asarray(z)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# 1-D convolution, same padding, stride 1
# ---------------------------------------------------------------------------

def conv1d_forward_batch(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Convolve (B, T, C_in) with kernel (K, C_in, C_out) -> (B, T, C_out).

    y[b, t, o] = bias[o] + sum_{k, c} x[b, t + k - K//2, c] * kernel[k, c, o]
    with out-of-range x treated as zero.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"conv1d expects (B, T, C_in), got shape {x.shape}")
    K, c_in, c_out = kernel.shape
    if K % 2 != 1:
        raise DimensionError(f"conv1d kernel size must be odd, got {K}")
    if x.shape[2] != c_in:
        raise DimensionError(f"conv1d input channels {x.shape[2]} do not match kernel C_in {c_in}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d bias shape {bias.shape} does not match C_out {c_out}")
    B, T, _ = x.shape
    pad = K // 2
    xp = np.zeros((B, T + 2 * pad, c_in), dtype=x.dtype)
    xp[:, pad:pad + T, :] = x
    y = np.broadcast_to(bias, (B, T, c_out)).astype(x.dtype, copy=True)
    for k in range(K):
        y += xp[:, k:k + T, :] @ kernel[k]
    cache = LayerCache(xp=xp, kernel=kernel, T=T, pad=pad)
    return y, cache


def conv1d_backward_batch(cache: LayerCache, dy: np.ndarray):
    """Gradients of conv1d_forward_batch; weight grads are summed over the batch."""
    vals = cache.take()
    xp, kernel, T, pad = vals["xp"], vals["kernel"], vals["T"], vals["pad"]
    dy = np.asarray(dy)
    K = kernel.shape[0]
    dbias = dy.sum(axis=(0, 1))
    dkernel = np.zeros_like(kernel)
    dxp = np.zeros_like(xp)
    for k in range(K):
        dkernel[k] = np.tensordot(xp[:, k:k + T, :], dy, axes=([0, 1], [0, 1]))
        dxp[:, k:k + T, :] += dy @ kernel[k].T
    dx = dxp[:, pad:pad + T, :]
    return dx, dkernel, dbias


def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Single-sample conv1d: (T, C_in) -> (T, C_out)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"conv1d expects (T, C_in), got shape {x.shape}")
    y, cache = conv1d_forward_batch(x[None], kernel, bias)
    return y[0], cache


def conv1d_backward(cache: LayerCache, dy: np.ndarray):
    dx, dkernel, dbias = conv1d_backward_batch(cache, np.asarray(dy)[None])
    return dx[0], dkernel, dbias


# ---------------------------------------------------------------------------
# ReLU
# ---------------------------------------------------------------------------

def relu(x: np.ndarray):
    """y = max(0, x) pointwise; works for any shape."""
    x = np.asarray(x)
    return np.maximum(x, 0), LayerCache(mask=x > 0)


def relu_backward(cache: LayerCache, dy: np.ndarray) -> np.ndarray:
    mask = cache.take()["mask"]
    return np.asarray(dy) * mask


# ---------------------------------------------------------------------------
# Max pooling, pool=2, stride=2
# ---------------------------------------------------------------------------

def maxpool1d_batch(x: np.ndarray):
    """Pool (B, T, C) -> (B, T//2, C); a trailing odd element is dropped."""
    x = np.asarray(x)
    B, T, C = x.shape
    if T < 2:
        raise DimensionError(f"maxpool1d needs temporal length >= 2, got {T}")
    tp = T // 2
    pairs = x[:, :2 * tp, :].reshape(B, tp, 2, C)
    # np.argmax returns the first maximum, which is the earlier index on ties
    idx = pairs.argmax(axis=2)
    y = np.take_along_axis(pairs, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return y, LayerCache(idx=idx, T=T, C=C, B=B)


def maxpool1d_backward_batch(cache: LayerCache, dy: np.ndarray) -> np.ndarray:
    vals = cache.take()
    idx, T, C, B = vals["idx"], vals["T"], vals["C"], vals["B"]
    dy = np.asarray(dy)
    tp = T // 2
    dpairs = np.zeros((B, tp, 2, C), dtype=dy.dtype)
    np.put_along_axis(dpairs, idx[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros((B, T, C), dtype=dy.dtype)
    dx[:, :2 * tp, :] = dpairs.reshape(B, 2 * tp, C)
    return dx


def maxpool1d(x: np.ndarray):
    """Single-sample pooling: (T, C) -> (T//2, C)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"maxpool1d expects (T, C), got shape {x.shape}")
    y, cache = maxpool1d_batch(x[None])
    return y[0], cache


def maxpool1d_backward(cache: LayerCache, dy: np.ndarray) -> np.ndarray:
    return maxpool1d_backward_batch(cache, np.asarray(dy)[None])[0]


# ---------------------------------------------------------------------------
# Branch fusion (channel concatenation)
# ---------------------------------------------------------------------------

def fuse_branches(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate two equally long sequences along the channel axis.

    Columns [0, C_a) come from `a`, the rest from `b`; flattening the result
    row-major yields per-timestep [a_t || b_t] blocks.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise DimensionError(f"fuse_branches temporal shapes differ: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=-1)


def split_fused(dy: np.ndarray, width_a: int):
    """Adjoint of fuse_branches: split an upstream gradient by column range."""
    dy = np.asarray(dy)
    return dy[..., :width_a], dy[..., width_a:]


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

def _check_lstm_shapes(D: int, W: np.ndarray, U: np.ndarray, b: np.ndarray) -> int:
    if U.ndim != 2 or U.shape[1] != 4 * U.shape[0]:
        raise DimensionError(f"LSTM recurrent kernel must be (H, 4H), got {U.shape}")
    H = U.shape[0]
    if W.shape != (D, 4 * H):
        raise DimensionError(f"LSTM kernel shape {W.shape} does not match input D={D}, H={H}")
    if b.shape != (4 * H,):
        raise DimensionError(f"LSTM bias shape {b.shape} does not match 4H={4 * H}")
    return H


def lstm_forward_batch(x: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray,
                       return_sequences: bool):
    """Run the LSTM recurrence over (B, T, D) with h0 = c0 = 0.

    Gate packing along the 4H axis is [i, f, g, o]:
        i, f, o = sigmoid(-), g = tanh(-)
        c_t = f * c_{t-1} + i * g,  h_t = o * tanh(c_t)

    Returns (B, T, H) when return_sequences else (B, H).
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError(f"lstm expects (B, T, D), got shape {x.shape}")
    B, T, D = x.shape
    if T < 1:
        raise DimensionError("lstm needs at least one timestep")
    H = _check_lstm_shapes(D, W, U, b)
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    steps = []
    for t in range(T):
        x_t = x[:, t, :]
        z = x_t @ W + h @ U + b
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t, :] = h
        steps.append((x_t, h_prev, c_prev, i, f, g, o, tc))
    cache = LayerCache(steps=steps, W=W, U=U, H=H, shape=(B, T, D),
                       return_sequences=return_sequences)
    return (hs if return_sequences else h), cache


def lstm_backward_batch(cache: LayerCache, dy: np.ndarray):
    """Backpropagation through time; returns (dx, dW, dU, db), weight grads batch-summed."""
    vals = cache.take()
    steps, W, U, H = vals["steps"], vals["W"], vals["U"], vals["H"]
    B, T, D = vals["shape"]
    seq = vals["return_sequences"]
    dy = np.asarray(dy)
    dx = np.zeros((B, T, D), dtype=dy.dtype)
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H, dtype=W.dtype)
    dh_next = np.zeros((B, H), dtype=dy.dtype)
    dc_next = np.zeros((B, H), dtype=dy.dtype)
    for t in reversed(range(T)):
        x_t, h_prev, c_prev, i, f, g, o, tc = steps[t]
        if seq:
            dh = dh_next + dy[:, t, :]
        else:
            dh = dh_next + dy if t == T - 1 else dh_next
        do = dh * tc * o * (1.0 - o)
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g * i * (1.0 - i)
        df = dc * c_prev * f * (1.0 - f)
        dg = dc * i * (1.0 - g * g)
        dz = np.concatenate([di, df, dg, do], axis=1)
        dW += x_t.T @ dz
        dU += h_prev.T @ dz
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ W.T
        dh_next = dz @ U.T
        dc_next = dc * f
    return dx, dW, dU, db


def lstm_forward(x: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray,
                 return_sequences: bool):
    """Single-sample LSTM: (T, D) -> (T, H) or (H,)."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"lstm expects (T, D), got shape {x.shape}")
    y, cache = lstm_forward_batch(x[None], W, U, b, return_sequences)
    return y[0], cache


def lstm_backward(cache: LayerCache, dy: np.ndarray):
    dx, dW, dU, db = lstm_backward_batch(cache, np.asarray(dy)[None])
    return dx[0], dW, dU, db


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("relu", "sigmoid", "none")


def dense_forward_batch(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str):
    """y = act(x @ W + b) for x of shape (B, D)."""
    if activation not in _ACTIVATIONS:
        raise ValidationError(f"unknown activation {activation!r}, expected one of {_ACTIVATIONS}")
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"dense expects (B, D), got shape {x.shape}")
    if W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"dense input {x.shape} does not match weights {W.shape}")
    if b.shape != (W.shape[1],):
        raise DimensionError(f"dense bias shape {b.shape} does not match units {W.shape[1]}")
    z = x @ W + b
    if activation == "relu":
        y = np.maximum(z, 0)
    elif activation == "sigmoid":
        y = sigmoid(z)
    else:
        y = z
    return y, LayerCache(x=x, W=W, z=z, y=y, activation=activation)


def dense_backward_batch(cache: LayerCache, dy: np.ndarray):
    """Gradients of dense_forward_batch; returns (dx, dW, db), weight grads batch-summed."""
    vals = cache.take()
    x, W, z, y, activation = vals["x"], vals["W"], vals["z"], vals["y"], vals["activation"]
    dy = np.asarray(dy)
    if activation == "relu":
        dz = dy * (z > 0)
    elif activation == "sigmoid":
        dz = dy * y * (1.0 - y)
    else:
        dz = dy
    dW = x.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ W.T
    return dx, dW, db


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, activation: str):
    """Single-sample dense layer: (D,) -> (U,)."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError(f"dense expects (D,), got shape {x.shape}")
    y, cache = dense_forward_batch(x[None], W, b, activation)
    return y[0], cache


def dense_backward(cache: LayerCache, dy: np.ndarray):
    dx, dW, db = dense_backward_batch(cache, np.asarray(dy)[None])
    return dx[0], dW, db


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(layer_spec: dict, seed: int, dtype=DEFAULT_DTYPE) -> LayerParams:
    """Deterministically initialize one layer from its spec dict.

    Specs:
        {"kind": "conv1d", "name", "kernel_size", "in_channels", "filters"}
        {"kind": "lstm",   "name", "input_dim", "hidden"}
        {"kind": "dense",  "name", "input_dim", "units"}

    All weight matrices are Glorot-uniform (limit sqrt(6 / (fan_in + fan_out));
    conv kernels count the receptive field, fan_in = K * C_in and
    fan_out = K * C_out). Biases start at zero except the LSTM forget-gate
    slice [H, 2H), which starts at 1.0 to keep early gradients flowing.
    """
    rng = np.random.default_rng(seed)
    kind = layer_spec["kind"]
    name = layer_spec["name"]
    if kind == "conv1d":
        K = layer_spec["kernel_size"]
        c_in = layer_spec["in_channels"]
        c_out = layer_spec["filters"]
        kernel = _glorot(rng, (K, c_in, c_out), K * c_in, K * c_out, dtype)
        bias = np.zeros(c_out, dtype=dtype)
        return LayerParams(name, {"kernel": kernel, "bias": bias})
    if kind == "lstm":
        D = layer_spec["input_dim"]
        H = layer_spec["hidden"]
        W = _glorot(rng, (D, 4 * H), D, 4 * H, dtype)
        U = _glorot(rng, (H, 4 * H), H, 4 * H, dtype)
        b = np.zeros(4 * H, dtype=dtype)
        b[H:2 * H] = 1.0
        return LayerParams(name, {"W": W, "U": U, "b": b})
    if kind == "dense":
        D = layer_spec["input_dim"]
        units = layer_spec["units"]
        W = _glorot(rng, (D, units), D, units, dtype)
        b = np.zeros(units, dtype=dtype)
        return LayerParams(name, {"W": W, "b": b})
    raise ValidationError(f"unknown layer kind {kind!r}")
