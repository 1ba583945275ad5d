"""Minimal reverse-mode autodiff over numpy arrays.

Everything is float64 (complex128 for spectral intermediates). Each op
records a VJP closure on the output; ``backward`` walks the graph once in
reverse topological order and accumulates (never overwrites) leaf
gradients. FFTs follow the numpy convention: unnormalized forward,
1/n on the inverse.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

_GRAD_ENABLED = True
CHECK_FINITE = False

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class GraphError(RuntimeError):
    """Backward called on a tensor without a usable recorded graph."""


@contextmanager
def no_grad():
    """Disable graph recording inside the block (rollouts, validation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if np.iscomplexobj(arr):
            if requires_grad:
                raise ValueError("complex leaves are not supported; store re/im pairs")
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        if CHECK_FINITE and not np.isfinite(arr).all():
            raise FloatingPointError("non-finite values in tensor input")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple] | None = None
        self._consumed = False

    # construction -----------------------------------------------------
    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], vjp) -> "Tensor":
        if CHECK_FINITE and not np.isfinite(data).all():
            raise FloatingPointError("non-finite values produced by an op")
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out._consumed = False
        if _GRAD_ENABLED and any(p.requires_grad or p._vjp is not None for p in parents):
            out._parents = parents
            out._vjp = vjp
        else:
            out._parents = ()
            out._vjp = None
        return out

    # basic protocol ----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return slice_tensor(self, key)

    def backward(self) -> None:
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(data, (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,))


def power(a, exponent) -> Tensor:
    """Pointwise x**p for a python scalar p."""
    a = _as_tensor(a)
    p = float(exponent)
    data = a.data ** p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return Tensor._from_op(data, (a,), vjp)


def sin(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def gelu(a) -> Tensor:
    """Exact erf-based GELU."""
    a = _as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return Tensor._from_op(data, (a,), vjp)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return Tensor._from_op(data, (a,), vjp)


# shape ops ---------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.shape
    data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(old),)

    return Tensor._from_op(data, (a,), vjp)


def moveaxis(a, source, destination) -> Tensor:
    a = _as_tensor(a)
    data = np.moveaxis(a.data, source, destination)

    def vjp(g):
        return (np.moveaxis(g, destination, source),)

    return Tensor._from_op(data, (a,), vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(data, tuple(parts), vjp)


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    data = np.stack([p.data for p in parts], axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._from_op(data, tuple(parts), vjp)


def slice_tensor(a, key) -> Tensor:
    a = _as_tensor(a)
    data = a.data[key]

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return (out,)

    return Tensor._from_op(data, (a,), vjp)


def take(a, indices, axis: int) -> Tensor:
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def vjp(g):
        out = np.zeros_like(a.data)
        key = (slice(None),) * axis + (idx,)
        np.add.at(out, key, g)
        return (out,)

    return Tensor._from_op(data, (a,), vjp)


def embed(a, key, shape) -> Tensor:
    """Scatter ``a`` into a zero array of ``shape`` at ``key`` (adjoint of slicing)."""
    a = _as_tensor(a)
    data = np.zeros(shape, dtype=a.data.dtype)
    data[key] = a.data

    def vjp(g):
        return (g[key],)

    return Tensor._from_op(data, (a,), vjp)


# reductions --------------------------------------------------------------

def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return Tensor._from_op(np.asarray(data), (a,), vjp)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        return (np.broadcast_to(gg, a.shape).copy() / count,)

    return Tensor._from_op(np.asarray(data), (a,), vjp)


# linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """np.matmul semantics for 1D/2D operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    data = np.matmul(a.data, b.data)

    def vjp(g):
        ad, bd = a.data, b.data
        if ad.ndim == 1 and bd.ndim == 1:  # inner product
            return (g * bd, g * ad)
        if ad.ndim == 1:  # (k,) @ (k, n)
            return (np.matmul(bd, g), np.outer(ad, g))
        if bd.ndim == 1:  # (m, k) @ (k,)
            return (np.outer(g, bd), np.matmul(ad.T, g))
        return (np.matmul(g, bd.T), np.matmul(ad.T, g))

    return Tensor._from_op(data, (a, b), vjp)


def channel_matmul(x, w) -> Tensor:
    """Contract the channel axis: out[b, o, ...] = sum_i w[i, o] * x[b, i, ...]."""
    x, w = _as_tensor(x), _as_tensor(w)
    data = np.einsum("bi...,io->bo...", x.data, w.data)

    def vjp(g):
        gx = np.einsum("bo...,io->bi...", g, w.data)
        x2 = x.data.reshape(x.data.shape[0], x.data.shape[1], -1)
        g2 = g.reshape(g.shape[0], g.shape[1], -1)
        gw = np.einsum("bis,bos->io", x2, g2)
        return gx, gw

    return Tensor._from_op(data, (x, w), vjp)


# spectral ops ------------------------------------------------------------

def _rfft_last_weights(m: int, n: int) -> np.ndarray:
    w = np.full(m, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for {ndim} dimensions")
        out.append(ax % ndim)
    return tuple(out)


def rfft(a, axes: tuple[int, ...]) -> Tensor:
    """Unnormalized real FFT over trailing spatial axes (last axis halved)."""
    a = _as_tensor(a)
    if np.iscomplexobj(a.data):
        raise TypeError("rfft expects a real tensor")
    axes = _normalize_axes(axes, a.ndim)
    if axes != tuple(range(a.ndim - len(axes), a.ndim)):
        raise ValueError("rfft axes must be the trailing axes")
    n_last = a.shape[axes[-1]]
    data = np.fft.rfftn(a.data, axes=axes)

    def vjp(g):
        for ax in axes[:-1]:
            g = np.fft.ifft(g, axis=ax) * a.shape[ax]
        m = g.shape[axes[-1]]
        w = 1.0 / _rfft_last_weights(m, n_last)
        wshape = [1] * g.ndim
        wshape[axes[-1]] = m
        return (n_last * np.fft.irfft(g * w.reshape(wshape), n_last, axis=axes[-1]),)

    return Tensor._from_op(data, (a,), vjp)


def irfft(a, axes: tuple[int, ...], out_lens: tuple[int, ...]) -> Tensor:
    """Inverse of :func:`rfft`; applies the 1/n normalization."""
    a = _as_tensor(a)
    axes = _normalize_axes(axes, a.ndim)
    if axes != tuple(range(a.ndim - len(axes), a.ndim)):
        raise ValueError("irfft axes must be the trailing axes")
    if len(out_lens) != len(axes):
        raise ValueError("one output length per axis required")
    n_last = int(out_lens[-1])
    m = a.shape[axes[-1]]
    if n_last // 2 + 1 != m:
        raise ValueError(f"out length {n_last} inconsistent with half-spectrum size {m}")
    for ax, n in zip(axes[:-1], out_lens[:-1]):
        if a.shape[ax] != n:
            raise ValueError("leading spectral axes must match their output lengths")
    data = np.fft.irfftn(a.data, s=out_lens, axes=axes)

    def vjp(g):
        w = _rfft_last_weights(m, n_last)
        wshape = [1] * g.ndim
        wshape[axes[-1]] = m
        c = np.fft.rfft(g, axis=axes[-1]) * (w.reshape(wshape) / n_last)
        for ax in axes[:-1]:
            c = np.fft.fft(c, axis=ax) / a.shape[ax]
        return (c,)

    return Tensor._from_op(data, (a,), vjp)


def real(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(np.ascontiguousarray(a.data.real), (a,),
                           lambda g: (g.astype(np.complex128),))


def imag(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor._from_op(np.ascontiguousarray(a.data.imag), (a,),
                           lambda g: ((1j * g).astype(np.complex128),))


def as_complex(re, im) -> Tensor:
    """Join two real tensors into one complex tensor (re + i*im)."""
    re, im = _as_tensor(re), _as_tensor(im)
    data = re.data + 1j * im.data

    def vjp(g):
        return g.real, g.imag

    return Tensor._from_op(data, (re, im), vjp)


def spectral_contract(xhat, w_re, w_im) -> Tensor:
    """Per-mode complex channel mixing: out[b,o,m] = sum_i xhat[b,i,m] * W[i,o,m].

    The complex weights are carried as a real pair so optimizer state stays real.
    """
    xhat, w_re, w_im = _as_tensor(xhat), _as_tensor(w_re), _as_tensor(w_im)
    weights = w_re.data + 1j * w_im.data
    data = np.einsum("bi...,io...->bo...", xhat.data, weights)

    def vjp(g):
        gx = np.einsum("bo...,io...->bi...", g, np.conj(weights))
        gw = np.einsum("bo...,bi...->io...", g, np.conj(xhat.data))
        return gx, gw.real, gw.imag

    return Tensor._from_op(data, (xhat, w_re, w_im), vjp)


# backward ----------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse accumulation from a scalar; frees the graph afterwards."""
    if loss.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("graph already consumed by a previous backward pass")
    if loss._vjp is None and not loss.requires_grad:
        raise GraphError("no recorded graph to differentiate")

    order = _topo_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not (parent.requires_grad or parent._vjp is not None):
                continue
            acc = grads.get(id(parent))
            if acc is None:
                # own the buffer: vjps may return g itself or a view of it
                if pg is g or pg.base is not None:
                    pg = pg.copy()
                grads[id(parent)] = pg
            else:
                acc += pg
    # release the graph; a second backward through these nodes is an error
    for node in order:
        if node._vjp is not None:
            node._vjp = None
            node._parents = ()
            node._consumed = True
    loss._consumed = True


def grad(loss: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
    """Backward pass returning gradients for ``leaves`` (zeros when unused)."""
    for p in leaves:
        p.zero_grad()
    backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in leaves]
