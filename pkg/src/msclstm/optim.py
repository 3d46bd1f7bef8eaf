"""Binary cross-entropy loss and the Adam optimizer driving training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import UsageError, ValidationError
from .layers import LayerParams

BCE_EPS = 1e-7


def bce_loss(p, y):
    """Binary cross-entropy of predictions `p` against labels `y` in {0, 1}.

    Scalars give the single-sample loss; arrays give the batch mean. The
    returned gradient is d(loss)/dp of exactly that reduction, i.e.
    (p - y) / (p (1 - p)) divided by the element count, evaluated on the
    clamped probability (p is clamped to [1e-7, 1 - 1e-7] before the log).

    Returns:
        (loss, dloss_dp) with dloss_dp shaped like p.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if p_arr.shape != y_arr.shape:
        raise ValidationError(f"predictions shape {p_arr.shape} != labels shape {y_arr.shape}")
    if not np.isin(y_arr, (0.0, 1.0)).all():
        raise ValidationError("labels must be 0 or 1")
    pc = np.clip(p_arr, BCE_EPS, 1.0 - BCE_EPS)
    losses = -(y_arr * np.log(pc) + (1.0 - y_arr) * np.log1p(-pc))
    n = max(p_arr.size, 1)
    grad = (pc - y_arr) / (pc * (1.0 - pc)) / n
    if np.ndim(p) == 0:
        return float(losses), float(grad)
    return float(losses.mean()), grad


@dataclass
class OptimizerState:
    """Adam state: hyperparameters plus per-weight moment tensors."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: OptimizerState, layers: Iterable[LayerParams],
              grads: dict[str, np.ndarray]) -> None:
    """Apply one bias-corrected Adam update in place.

    `grads` is keyed "<layer>.<weight>". Layers with trainable=False are
    skipped entirely; a missing gradient for a trainable weight is a usage
    error.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for layer in layers:
        if not layer.trainable:
            continue
        for wname, w in layer.weights.items():
            key = f"{layer.name}.{wname}"
            if key not in grads:
                raise UsageError(f"missing gradient for trainable weight {key!r}")
            g = grads[key]
            if g.shape != w.shape:
                raise UsageError(f"gradient shape {g.shape} != weight shape {w.shape} for {key!r}")
            if key not in state.m:
                state.m[key] = np.zeros_like(w)
                state.v[key] = np.zeros_like(w)
            m = state.m[key]
            v = state.v[key]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * (g * g)
            w -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
