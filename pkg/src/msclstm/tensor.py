"""Dense tensor primitives every layer builds on.

Tensors are plain C-contiguous numpy arrays (row-major flat data). Training
runs in float32; float64 is used by the finite-difference gradient checks,
where float32 rounding would drown the 1e-3 tolerance. There is no
broadcasting beyond scalars and no strided views: reshape always yields a
row-major copy-on-view of the same flat data.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64

_ELEMENTWISE_OPS = ("add", "sub", "mul", "scale")


def tensor(values, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Build a C-contiguous real tensor from nested lists or an array."""
    return np.ascontiguousarray(np.asarray(values, dtype=dtype))


def zeros(shape, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return np.zeros(shape, dtype=dtype)


def elementwise(op: str, a: np.ndarray, b) -> np.ndarray:
    """Apply a pointwise op; `b` is a tensor of equal shape, or a scalar for `scale`.

    Raises DimensionError naming both shapes on mismatch.
    """
    if op not in _ELEMENTWISE_OPS:
        raise ValidationError(f"unknown elementwise op {op!r}, expected one of {_ELEMENTWISE_OPS}")
    a = np.asarray(a)
    if op == "scale":
        if np.ndim(b) != 0:
            raise DimensionError(f"scale expects a scalar, got shape {np.shape(b)}")
        return a * b
    b = np.asarray(b)
    if b.ndim == 0:
        pass  # scalar second operand is allowed for add/sub/mul too
    elif a.shape != b.shape:
        raise DimensionError(f"elementwise {op}: shape {a.shape} does not match shape {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    return a * b


def add(a, b):
    return elementwise("add", a, b)


def sub(a, b):
    return elementwise("sub", a, b)


def mul(a, b):
    return elementwise("mul", a, b)


def scale(a, s):
    return elementwise("scale", a, s)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rank-2 matrix product (m x k) @ (k x n) -> (m x n)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    return a @ b


def reshape(t: np.ndarray, new_shape) -> np.ndarray:
    """Reinterpret the flat row-major data under a new shape (element count preserved)."""
    t = np.asarray(t)
    new_shape = tuple(int(d) for d in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise DimensionError(f"cannot reshape {t.shape} ({t.size} elements) to {new_shape}")
    return np.ascontiguousarray(t).reshape(new_shape)


def is_finite(t: np.ndarray) -> bool:
    """True when every element is finite (no NaN/Inf)."""
    return bool(np.isfinite(t).all())


def assert_finite(t: np.ndarray, what: str = "tensor") -> None:
    """Training-time guard: raise ValidationError if `t` holds NaN or Inf."""
    if not is_finite(t):
        raise ValidationError(f"{what} contains non-finite values")
