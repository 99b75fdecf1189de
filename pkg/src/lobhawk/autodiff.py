"""Minimal tape-based reverse-mode differentiation over dense float64 blocks.

Values are numpy arrays of at most two dimensions. A fresh tape is built on
every forward pass (retracing is cheap at these model sizes) and cleared by
backward(). Also home to the RMSprop optimizer and the parameter checkpoint
format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Tensor", "ShapeError", "RmspropState", "rmsprop_step",
           "save_checkpoint", "load_checkpoint"]

_CKPT_VERSION = 1


class ShapeError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if grad.shape == shape:
        return grad
    nd_extra = grad.ndim - len(shape)
    if nd_extra:
        grad = grad.sum(axis=tuple(range(nd_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node on the tape: value, gradient slot, and backward closure."""

    __slots__ = ("value", "grad", "_parents", "_bw", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, parents=(), bw=None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim > 2:
            raise ShapeError(f"at most 2 dims supported, got shape {self.value.shape}")
        self.grad = None
        self._parents = parents
        self._bw = bw
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def check_finite(self) -> "Tensor":
        if not np.all(np.isfinite(self.value)):
            raise FloatingPointError(f"non-finite values in tensor {self.name or ''}")
        return self

    # ---- graph construction ------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out = Tensor(self.value + other.value, parents=(self, other))
        out._bw = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = _wrap(other)
        out = Tensor(self.value - other.value, parents=(self, other))
        out._bw = lambda g: (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))
        return out

    def __rsub__(self, other):
        return _wrap(other) - self

    def __mul__(self, other):
        other = _wrap(other)
        out = Tensor(self.value * other.value, parents=(self, other))
        a, b = self.value, other.value
        out._bw = lambda g: (_unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape))
        return out

    __rmul__ = __mul__

    def __neg__(self):
        out = Tensor(-self.value, parents=(self,))
        out._bw = lambda g: (-g,)
        return out

    def __truediv__(self, other):
        other = _wrap(other)
        out = Tensor(self.value / other.value, parents=(self, other))
        a, b = self.value, other.value
        out._bw = lambda g: (
            _unbroadcast(g / b, self.shape),
            _unbroadcast(-g * a / (b * b), other.shape),
        )
        return out

    def matmul(self, other):
        other = _wrap(other)
        if self.value.shape[-1] != other.value.shape[0]:
            raise ShapeError(f"matmul mismatch: {self.shape} @ {other.shape}")
        out = Tensor(self.value @ other.value, parents=(self, other))
        a, b = self.value, other.value

        def bw(g):
            if a.ndim == 2 and b.ndim == 1:
                return (np.outer(g, b), a.T @ g)
            if a.ndim == 1 and b.ndim == 2:
                return (g @ b.T, np.outer(a, g))
            if a.ndim == 1 and b.ndim == 1:
                return (g * b, g * a)
            return (g @ b.T, a.T @ g)

        out._bw = bw
        return out

    __matmul__ = matmul

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.value))
        out = Tensor(s, parents=(self,))
        out._bw = lambda g: (g * s * (1.0 - s),)
        return out

    def tanh(self):
        t = np.tanh(self.value)
        out = Tensor(t, parents=(self,))
        out._bw = lambda g: (g * (1.0 - t * t),)
        return out

    def softplus(self):
        out = Tensor(np.logaddexp(0.0, self.value), parents=(self,))
        s = 1.0 / (1.0 + np.exp(-self.value))
        out._bw = lambda g: (g * s,)
        return out

    def exp(self):
        e = np.exp(self.value)
        out = Tensor(e, parents=(self,))
        out._bw = lambda g: (g * e,)
        return out

    def log(self):
        out = Tensor(np.log(self.value), parents=(self,))
        v = self.value
        out._bw = lambda g: (g / v,)
        return out

    def relu(self):
        mask = self.value > 0
        out = Tensor(self.value * mask, parents=(self,))
        out._bw = lambda g: (g * mask,)
        return out

    def sum(self, axis=None):
        out = Tensor(self.value.sum(axis=axis), parents=(self,))
        shape = self.shape

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            g_exp = np.expand_dims(g, axis)
            return (np.broadcast_to(g_exp, shape).copy(),)

        out._bw = bw
        return out

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def slice(self, key):
        out = Tensor(self.value[key], parents=(self,))
        shape = self.shape

        def bw(g):
            full = np.zeros(shape)
            full[key] = g
            return (full,)

        out._bw = bw
        return out

    def __getitem__(self, key):
        return self.slice(key)

    def reshape(self, *shape):
        out = Tensor(self.value.reshape(*shape), parents=(self,))
        orig = self.shape
        out._bw = lambda g: (g.reshape(orig),)
        return out

    # ---- backward ----------------------------------------------------------

    def backward(self):
        if self.value.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        if not np.isfinite(self.value):
            raise FloatingPointError("backward on non-finite loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))

        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._bw is None or node.grad is None:
                continue
            grads = node._bw(node.grad)
            for parent, g in zip(node._parents, grads):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + g
            if node is not self and node._bw is not None:
                node._parents = ()
                node._bw = None


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: list[Tensor]) -> Tensor:
    """Concatenate 1-d tensors."""
    vals = [t.value for t in tensors]
    out = Tensor(np.concatenate(vals), parents=tuple(tensors))
    sizes = [v.shape[0] for v in vals]
    offs = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(g[offs[i]:offs[i + 1]] for i in range(len(sizes)))

    out._bw = bw
    return out


def stack_rows(tensors: list[Tensor]) -> Tensor:
    """Stack 1-d tensors into a 2-d (n, d) tensor."""
    out = Tensor(np.stack([t.value for t in tensors]), parents=tuple(tensors))
    out._bw = lambda g: tuple(g[i] for i in range(len(tensors)))
    return out


def logsumexp(t: Tensor, axis=None) -> Tensor:
    """Numerically stable log-sum-exp built from primitive ops."""
    mx = np.max(t.value, axis=axis, keepdims=True)
    shifted = t - Tensor(mx)
    s = shifted.exp().sum(axis=axis)
    if axis is not None:
        return s.log() + Tensor(np.squeeze(mx, axis=axis))
    return s.log() + Tensor(np.squeeze(mx))


# ---- optimizer --------------------------------------------------------------


@dataclass
class RmspropState:
    lr: float = 0.002
    rho: float = 0.99
    eps: float = 1e-8
    acc: dict = field(default_factory=dict)


def rmsprop_step(params: dict[str, Tensor], state: RmspropState) -> None:
    """In-place RMSprop update: s <- rho s + (1-rho) g^2; p -= lr g/(sqrt(s)+eps)."""
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        s = state.acc.get(name)
        if s is None:
            s = np.zeros_like(p.value)
        s = state.rho * s + (1.0 - state.rho) * g * g
        state.acc[name] = s
        p.value = p.value - state.lr * g / (np.sqrt(s) + state.eps)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---- checkpoints -------------------------------------------------------------


def save_checkpoint(params: dict[str, np.ndarray], path: str | Path,
                    meta: dict | None = None) -> None:
    """Versioned JSON header + little-endian float64 blobs, in header order."""
    arrays = {k: (v.value if isinstance(v, Tensor) else np.asarray(v, dtype=np.float64))
              for k, v in params.items()}
    header = {
        "version": _CKPT_VERSION,
        "params": [{"name": k, "shape": list(a.shape)} for k, a in arrays.items()],
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for a in arrays.values():
            fh.write(a.astype("<f8").tobytes(order="C"))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with Path(path).open("rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        if header["version"] != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        params = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            params[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return params, header.get("meta", {})
