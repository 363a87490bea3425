"""Hand-rolled float64 layers with explicit forward/backward pairs.

Every forward returns (output, cache); the matching backward consumes the
upstream gradient and the cache. Keeping backprop by hand (instead of an
autodiff framework) is what lets the finite-difference harness certify
every layer's gradient, and lets tests corrupt a single backward rule to
prove the harness catches it.
"""

from __future__ import annotations

import math

import numpy as np

LN_EPS = 1e-5


def linear_fwd(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    din, dout = W.shape
    y = x.reshape(-1, din) @ W + b  # one GEMM regardless of leading dims
    return y.reshape(*x.shape[:-1], dout), x


def linear_bwd(dy: np.ndarray, x: np.ndarray, W: np.ndarray):
    din, dout = W.shape
    dy2 = dy.reshape(-1, dout)
    x2 = x.reshape(-1, din)
    dW = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = (dy2 @ W.T).reshape(x.shape)
    return dx, dW, db


def relu_fwd(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_bwd(dy: np.ndarray, x: np.ndarray):
    return dy * (x > 0.0)


def layernorm_fwd(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv
    return xhat * g + b, (xhat, inv, g)


def layernorm_bwd(dy: np.ndarray, cache):
    xhat, inv, g = cache
    d = xhat.shape[-1]
    dg = (dy * xhat).reshape(-1, d).sum(axis=0)
    db = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of softmax (last axis)."""
    return s * (ds - (ds * s).sum(axis=-1, keepdims=True))


def attention_fwd(Q: np.ndarray, K: np.ndarray, V: np.ndarray):
    """Scaled dot-product attention over the last two axes.

    einsum instead of stacked matmul: the per-head matrices here are tiny
    (1x9 or 4x4), where stacked-GEMM dispatch overhead dominates.
    """
    scale = 1.0 / math.sqrt(Q.shape[-1])
    logits = np.einsum("...qd,...kd->...qk", Q, K) * scale
    A = softmax(logits)
    out = np.einsum("...qk,...kd->...qd", A, V)
    return out, (Q, K, V, A, scale)


def attention_bwd(dout: np.ndarray, cache):
    Q, K, V, A, scale = cache
    dA = np.einsum("...qd,...kd->...qk", dout, V)
    dV = np.einsum("...qk,...qd->...kd", A, dout)
    dlogits = softmax_backward(A, dA)
    dQ = np.einsum("...qk,...kd->...qd", dlogits, K) * scale
    dK = np.einsum("...qk,...qd->...kd", dlogits, Q) * scale
    return dQ, dK, dV


def dropout_fwd(x: np.ndarray, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when rng is None (eval mode)."""
    if rng is None or rate <= 0.0:
        return x, None
    draw_dtype = np.float32 if x.dtype == np.float32 else np.float64
    keep = rng.random(x.shape, dtype=draw_dtype) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def dropout_bwd(dy: np.ndarray, cache):
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    position = np.arange(length)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-math.log(10000.0) / dim))
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: (dim + 1) // 2])
    return pe


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    """(..., L, d) -> (..., h, L, d/h)"""
    *lead, L, d = x.shape
    x = x.reshape(*lead, L, n_heads, d // n_heads)
    return x.swapaxes(-2, -3)


def merge_heads(x: np.ndarray) -> np.ndarray:
    """(..., h, L, dh) -> (..., L, h*dh)"""
    x = x.swapaxes(-2, -3)
    *lead, L, h, dh = x.shape
    return x.reshape(*lead, L, h * dh)
