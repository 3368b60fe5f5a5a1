"""Dense float64 primitives shared by every layer.

Tensors are plain ``numpy.ndarray`` objects in float64. The helpers here add
the shape checks and numerically stable forms the rest of the package relies
on; they never broadcast beyond what the callers need.
"""

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """A tensor picked up NaN or Inf."""


def as_tensor(x):
    return np.asarray(x, dtype=DTYPE)


def check_finite(x, name="tensor"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return x


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(x):
    """Logistic function in the branch form that never overflows exp."""
    x = as_tensor(x)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def tanh(x):
    return np.tanh(as_tensor(x))


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return a * b


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return a + b


def concat(*parts):
    """Concatenate along the last axis; leading axes must agree."""
    parts = [as_tensor(p) for p in parts]
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise DimensionError(f"concat: leading shapes {lead} and {p.shape[:-1]} differ")
    return np.concatenate(parts, axis=-1)


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "mul": mul,
    "add": add,
    "concat": concat,
}


def elementwise(op, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def softmax(logits, axis=-1):
    z = as_tensor(logits)
    if z.shape[axis] < 1:
        raise DimensionError("softmax over an empty axis")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = as_tensor(logits)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def orthogonal(rows, cols, rng):
    """Random matrix with orthonormal columns (tall) or rows (wide)."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return np.ascontiguousarray(q if rows >= cols else q.T)
