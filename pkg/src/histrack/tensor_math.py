"""Dense double-precision linear algebra and attention primitives.

A "matrix" here is a 2-D ``numpy.float64`` array. Every public op validates
shapes up front and guarantees a finite result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAYER_NORM_EPS = 1e-5
# additive logit used to exclude a key from attention
MASK_LOGIT = -1e30


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def make_rng(seed: int) -> np.random.Generator:
    """Return the package-wide generator (PCG64) for ``seed``.

    PCG64 streams are platform independent, so a seed fully determines every
    draw made from the returned generator.
    """
    return np.random.Generator(np.random.PCG64(seed))


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{name} contains non-finite values")
    return m


def _finite(m: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _finite(a @ b, "matmul")


def row_softmax(a) -> np.ndarray:
    """Numerically stable softmax over each row."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"row_softmax expects a 2-D array, got shape {a.shape}")
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return _finite(e / e.sum(axis=1, keepdims=True), "row_softmax")


def layer_norm(a, gain, shift, eps: float = LAYER_NORM_EPS) -> np.ndarray:
    a = as_matrix(a)
    gain = np.asarray(gain, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    if gain.shape != (a.shape[1],) or shift.shape != (a.shape[1],):
        raise ShapeError(
            f"gain/shift shapes {gain.shape}/{shift.shape} do not match {a.shape[1]} columns"
        )
    mean = a.mean(axis=1, keepdims=True)
    var = ((a - mean) ** 2).mean(axis=1, keepdims=True)
    return _finite((a - mean) / np.sqrt(var + eps) * gain + shift, "layer_norm")


@dataclass(frozen=True)
class LinearLayer:
    """Affine map ``x -> x W^T + b`` with ``W`` of shape (out_dim, in_dim)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weight, "weight")
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"bias length {b.shape[0]} != out_dim {w.shape[0]}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def xavier(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "LinearLayer":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-limit, limit, size=(out_dim, in_dim)), np.zeros(out_dim))

    @classmethod
    def identity(cls, dim: int) -> "LinearLayer":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int) -> "LinearLayer":
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))


def linear_forward(layer: LinearLayer, x) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != layer.in_dim:
        raise ShapeError(f"input has {x.shape[1]} features, layer expects {layer.in_dim}")
    return _finite(x @ layer.weight.T + layer.bias, "linear_forward")


def attention_logits(q, k) -> np.ndarray:
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    if q.shape[1] != k.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    return (q @ k.T) / np.sqrt(q.shape[1])


def scaled_dot_attention(q, k, v, key_mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Single-head scaled dot-product attention.

    Args:
        q: (n, c) queries.
        k: (m, c) keys.
        v: (m, d) values.
        key_mask: optional boolean vector of length m; False entries are
            excluded by adding a large negative logit.

    Returns:
        ``(out, weights)`` with ``weights`` of shape (n, m) and ``out = weights @ v``.
    """
    v = as_matrix(v, "v")
    logits = attention_logits(q, k)
    if logits.shape[1] != v.shape[0]:
        raise ShapeError(f"{logits.shape[1]} keys but {v.shape[0]} values")
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (v.shape[0],):
            raise ShapeError(f"key mask shape {key_mask.shape} != ({v.shape[0]},)")
        logits = np.where(key_mask[None, :], logits, MASK_LOGIT)
    weights = row_softmax(logits)
    return _finite(weights @ v, "scaled_dot_attention"), weights


def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)
