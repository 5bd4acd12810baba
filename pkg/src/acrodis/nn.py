"""Minimal neural-net plumbing on numpy arrays.

Layers cache their forward inputs and implement an explicit ``backward`` that
accumulates parameter gradients and returns the input gradient, so a whole
model is differentiated by chaining ``backward`` calls in reverse order.
float64 throughout: desk-scale models are small enough that precision is
cheaper than debugging, and it keeps finite-difference checks tight.

A layer instance holds one forward's cache at a time; run backward before the
next forward that needs gradients (single-writer training contract).
"""

from __future__ import annotations

import numpy as np

INIT_STD = 0.02


class Parameter:
    """A named trainable array with an accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_last(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def dropout_forward(x, rate, rng=None, mask=None):
    """Inverted dropout; pass ``mask`` to replay a previous draw exactly."""
    if rate == 0.0:
        return x, None
    if mask is None:
        mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(dy, rate, mask):
    if rate == 0.0 or mask is None:
        return dy
    return dy * mask / (1.0 - rate)


class Linear:
    """Affine map over the last axis."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int, name: str):
        self.W = Parameter(f"{name}.W", rng.normal(0.0, INIT_STD, size=(in_dim, out_dim)))
        self.b = Parameter(f"{name}.b", np.zeros(out_dim))
        self._cache = None

    @property
    def params(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        shape = x.shape
        x2d = x.reshape(-1, shape[-1])
        self._cache = (x2d, shape)
        y = x2d @ self.W.value + self.b.value
        return y.reshape(*shape[:-1], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x2d, shape = self._cache
        dy2d = dy.reshape(-1, dy.shape[-1])
        self.W.grad += x2d.T @ dy2d
        self.b.grad += dy2d.sum(axis=0)
        dx = dy2d @ self.W.value.T
        return dx.reshape(shape)


class LayerNorm:
    """Normalization over the last axis with learned gain and bias."""

    def __init__(self, dim: int, name: str, eps: float = 1e-5):
        self.gain = Parameter(f"{name}.gain", np.ones(dim))
        self.bias = Parameter(f"{name}.bias", np.zeros(dim))
        self.eps = eps
        self._cache = None

    @property
    def params(self) -> list[Parameter]:
        return [self.gain, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        self._cache = (xhat, inv)
        return self.gain.value * xhat + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv = self._cache
        axes = tuple(range(dy.ndim - 1))
        self.gain.grad += (dy * xhat).sum(axis=axes)
        self.bias.grad += dy.sum(axis=axes)
        dxhat = dy * self.gain.value
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        return inv * (dxhat - m1 - xhat * m2)


class MultiHeadSelfAttention:
    """Scaled dot-product self-attention with a key padding mask."""

    MASK_BIAS = -1e30

    def __init__(self, rng: np.random.Generator, dim: int, heads: int, name: str):
        if dim % heads:
            raise ValueError(f"hidden dim {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.dh = dim, heads, dim // heads
        self.wq = Linear(rng, dim, dim, f"{name}.wq")
        self.wk = Linear(rng, dim, dim, f"{name}.wk")
        self.wv = Linear(rng, dim, dim, f"{name}.wv")
        self.wo = Linear(rng, dim, dim, f"{name}.wo")
        self._cache = None

    @property
    def params(self) -> list[Parameter]:
        return self.wq.params + self.wk.params + self.wv.params + self.wo.params

    def _split(self, x: np.ndarray) -> np.ndarray:
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.dh).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        B, h, T, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(B, T, h * dh)

    def forward(self, x: np.ndarray, key_mask: np.ndarray) -> np.ndarray:
        """``key_mask`` is (B, T) with 1.0 at real tokens, 0.0 at padding."""
        q = self._split(self.wq.forward(x))
        k = self._split(self.wk.forward(x))
        v = self._split(self.wv.forward(x))
        scale = 1.0 / np.sqrt(self.dh)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        scores = scores + (1.0 - key_mask)[:, None, None, :] * self.MASK_BIAS
        probs = softmax_last(scores)
        ctx = probs @ v
        self._cache = (q, k, v, probs, scale)
        return self.wo.forward(self._merge(ctx))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        q, k, v, probs, scale = self._cache
        dctx = self._split(self.wo.backward(dy))
        dprobs = dctx @ v.transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True)) * probs
        dq = (dscores @ k) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
        dx = self.wq.backward(self._merge(dq))
        dx += self.wk.backward(self._merge(dk))
        dx += self.wv.backward(self._merge(dv))
        return dx


class Adam:
    """Adaptive-moment optimizer with named parameter groups.

    Each group carries its own learning rate, mutable between steps (the
    plateau schedule rewrites them); moments and the shared step counter
    follow the usual bias-corrected update with betas (0.9, 0.999) and no
    weight decay.
    """

    def __init__(self, groups: dict[str, tuple[list[Parameter], float]],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.groups = {name: {"params": list(params), "lr": float(lr)} for name, (params, lr) in groups.items()}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._state = {}
        for g in self.groups.values():
            for p in g["params"]:
                self._state[id(p)] = (np.zeros_like(p.value), np.zeros_like(p.value))

    def set_lr(self, name: str, lr: float) -> None:
        self.groups[name]["lr"] = float(lr)

    def zero_grad(self) -> None:
        for g in self.groups.values():
            for p in g["params"]:
                p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for g in self.groups.values():
            lr = g["lr"]
            for p in g["params"]:
                m, v = self._state[id(p)]
                m *= self.beta1
                m += (1.0 - self.beta1) * p.grad
                v *= self.beta2
                v += (1.0 - self.beta2) * (p.grad * p.grad)
                p.value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
