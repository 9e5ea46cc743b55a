"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is implicit: every op wires its output to the grad-requiring
inputs and attaches a closure that pushes the output gradient back.
Creation order gives a topological order, so `backward` sweeps nodes in
exact reverse creation order, which keeps runs bitwise reproducible.

Multiply-accumulate counts (for the complexity accounting) are recorded
only by `matmul` and the two convolution ops, under the convention
1 MAC = 2 FLOPs.
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import erf

from .errors import NonFiniteError, RangeError, ShapeError

_ids = itertools.count()
_nan_checks = True

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def set_nan_checks(enabled: bool) -> bool:
    """Toggle the per-op finiteness scan; returns the previous setting."""
    global _nan_checks
    previous = _nan_checks
    _nan_checks = bool(enabled)
    return previous


class MacCounter:
    """Accumulates multiply-accumulate counts recorded while active."""

    def __init__(self) -> None:
        self.macs = 0

    @property
    def flops(self) -> int:
        return 2 * self.macs


_mac_counters: list[MacCounter] = []


@contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Context manager instrumenting matmul/conv MACs executed inside."""
    counter = MacCounter()
    _mac_counters.append(counter)
    try:
        yield counter
    finally:
        _mac_counters.remove(counter)


def _record_macs(n: int) -> None:
    for counter in _mac_counters:
        counter.macs += n


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 op: str = "leaf", backward: Callable | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if _nan_checks and not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by op '{op}'")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._id = next(_ids)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def _accum(self, g: np.ndarray) -> None:
        """Accumulate a gradient the tensor must not take ownership of."""
        if self.grad is None:
            self.grad = np.array(g, copy=True)
        else:
            self.grad += g

    def _accum_owned(self, g: np.ndarray) -> None:
        """Accumulate a freshly allocated (or dead-buffer) gradient.

        Backward closures call this when `g` is either a new array or the
        consumed output gradient, which the reverse-order sweep guarantees
        is never read again; skipping the defensive copy is then safe.
        """
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad += g

    def backward(self, leaves: Sequence["Tensor"] | None = None) -> None:
        """Reverse sweep from a scalar output.

        Grads of every node reached in this sweep are reset first, so each
        backward call stands alone. `leaves`, when given, are guaranteed a
        grad buffer afterwards (zeros if they do not influence the output).
        """
        if self.size != 1:
            raise ShapeError(f"backward requires a scalar output, got shape {self.shape}")
        nodes: list[Tensor] = []
        seen: set[int] = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._parents)
        nodes.sort(key=lambda t: t._id, reverse=True)
        for node in nodes:
            node.grad = None
        self.grad = np.ones_like(self.data)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        if leaves is not None:
            for leaf in leaves:
                if leaf.grad is None:
                    leaf.grad = np.zeros_like(leaf.data)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_(self, p)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    req = a.requires_grad or b.requires_grad
    parents = tuple(p for p in (a, b) if p.requires_grad)
    out = Tensor(a.data + b.data, requires_grad=req, parents=parents, op="add")
    if req:
        def backward(g):
            donated = False
            if a.requires_grad:
                ga = _unbroadcast(g, a.shape)
                donated = ga is g
                a._accum_owned(ga)
            if b.requires_grad:
                gb = _unbroadcast(g, b.shape)
                if gb is g and donated:
                    b._accum(g)  # the buffer now belongs to a
                else:
                    b._accum_owned(gb)
        out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    req = a.requires_grad or b.requires_grad
    parents = tuple(p for p in (a, b) if p.requires_grad)
    out = Tensor(a.data - b.data, requires_grad=req, parents=parents, op="sub")
    if req:
        def backward(g):
            if a.requires_grad:
                a._accum_owned(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum_owned(_unbroadcast(-g, b.shape))
        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    req = a.requires_grad or b.requires_grad
    parents = tuple(p for p in (a, b) if p.requires_grad)
    out = Tensor(a.data * b.data, requires_grad=req, parents=parents, op="mul")
    if req:
        def backward(g):
            if a.requires_grad:
                a._accum_owned(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum_owned(_unbroadcast(g * a.data, b.shape))
        out._backward = backward
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    req = a.requires_grad or b.requires_grad
    parents = tuple(p for p in (a, b) if p.requires_grad)
    out = Tensor(a.data / b.data, requires_grad=req, parents=parents, op="div")
    if req:
        def backward(g):
            if a.requires_grad:
                a._accum_owned(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum_owned(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))
        out._backward = backward
    return out


def neg(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data, requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="neg")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(-g)
    return out


def pow_(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)
    out = Tensor(a.data ** p, requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="pow")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g * p * a.data ** (p - 1.0))
    return out


def sqrt(a) -> Tensor:
    return pow_(a, 0.5)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data), requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="exp")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g * out.data)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data), requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="log")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g / a.data)
    return out


def abs_(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.abs(a.data), requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="abs")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g * np.sign(a.data))
    return out


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU; smooth, so finite differences stay clean."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _SQRT1_2))
    out = Tensor(a.data * cdf, requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="gelu")
    if a.requires_grad:
        def backward(g):
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
            a._accum_owned(g * (cdf + a.data * pdf))
        out._backward = backward
    return out


def sum_(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims),
                 requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="sum")
    if a.requires_grad:
        def backward(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accum_owned(np.broadcast_to(gg, a.shape).copy())
        out._backward = backward
    return out


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="reshape")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g.reshape(a.shape))
    return out


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    out = Tensor(a.data.T, requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op="transpose")
    if a.requires_grad:
        out._backward = lambda g: a._accum_owned(g.T)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    req = any(t.requires_grad for t in tensors)
    parents = tuple(t for t in tensors if t.requires_grad)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 requires_grad=req, parents=parents, op="concat")
    if req:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def backward(g):
            for piece, t in zip(np.split(g, splits, axis=axis), tensors):
                if t.requires_grad:
                    t._accum_owned(piece)
        out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    _record_macs(a.shape[0] * a.shape[1] * b.shape[1])
    req = a.requires_grad or b.requires_grad
    parents = tuple(p for p in (a, b) if p.requires_grad)
    out = Tensor(a.data @ b.data, requires_grad=req, parents=parents, op="matmul")
    if req:
        def backward(g):
            if a.requires_grad:
                a._accum_owned(g @ b.data.T)
            if b.requires_grad:
                b._accum_owned(a.data.T @ g)
        out._backward = backward
    return out


def _softmax(a, axis: int, op: str) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"{op} expects a matrix, got shape {a.shape}")
    if a.shape[1 - axis] < 1 or a.shape[axis] < 1:
        raise ShapeError(f"{op} over an empty dimension, shape {a.shape}")
    y = a.data - a.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)
    out = Tensor(y, requires_grad=a.requires_grad,
                 parents=(a,) if a.requires_grad else (), op=op)
    if a.requires_grad:
        def backward(g):
            gy = g * y
            gy -= y * gy.sum(axis=axis, keepdims=True)
            a._accum_owned(gy)
        out._backward = backward
    return out


def softmax_rows(a) -> Tensor:
    """Row-wise softmax with per-row max subtraction (overflow safe)."""
    return _softmax(a, 1, "softmax_rows")


def softmax_cols(a) -> Tensor:
    """Column-wise softmax; same stability shift, normalized along axis 0."""
    return _softmax(a, 0, "softmax_cols")


def linear(w, m, bias) -> Tensor:
    """w @ m + bias[:, None]; the fused form of a 1x1 channel map.

    Records the same MACs as the underlying matmul (bias adds are free
    under the accounting convention)."""
    w, m, bias = as_tensor(w), as_tensor(m), as_tensor(bias)
    if w.ndim != 2 or m.ndim != 2 or w.shape[1] != m.shape[0]:
        raise ShapeError(f"linear shapes incompatible: w {w.shape}, m {m.shape}")
    if bias.shape != (w.shape[0],):
        raise ShapeError(f"linear bias shape {bias.shape} != ({w.shape[0]},)")
    _record_macs(w.shape[0] * w.shape[1] * m.shape[1])
    out_data = w.data @ m.data
    out_data += bias.data[:, None]
    req = w.requires_grad or m.requires_grad or bias.requires_grad
    parents = tuple(p for p in (w, m, bias) if p.requires_grad)
    out = Tensor(out_data, requires_grad=req, parents=parents, op="linear")
    if req:
        def backward(g):
            if w.requires_grad:
                w._accum_owned(g @ m.data.T)
            if m.requires_grad:
                m._accum_owned(w.data.T @ g)
            if bias.requires_grad:
                bias._accum_owned(g.sum(axis=1))
        out._backward = backward
    return out


def layer_norm_channels(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize each column of a (C, N) matrix over its channel axis, then
    apply the per-channel affine (gamma, beta)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2:
        raise ShapeError(f"layer_norm_channels expects a matrix, got shape {x.shape}")
    c = x.shape[0]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"affine shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    mu = x.data.mean(axis=0, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=0, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std
    out_data = gamma.data[:, None] * y
    out_data += beta.data[:, None]
    req = x.requires_grad or gamma.requires_grad or beta.requires_grad
    parents = tuple(p for p in (x, gamma, beta) if p.requires_grad)
    out = Tensor(out_data, requires_grad=req, parents=parents, op="layer_norm")
    if req:
        def backward(g):
            if gamma.requires_grad:
                gamma._accum_owned((g * y).sum(axis=1))
            if beta.requires_grad:
                beta._accum_owned(g.sum(axis=1))
            if x.requires_grad:
                dy = g * gamma.data[:, None]
                dx = dy - dy.mean(axis=0, keepdims=True)
                dx -= y * (dy * y).mean(axis=0, keepdims=True)
                dx *= inv_std
                x._accum_owned(dx)
        out._backward = backward
    return out


def _conv_out_extent(extent: int, stride: int) -> int:
    # kernel 3, zero padding 1
    return (extent + 2 - 3) // stride + 1


def conv2d(x, w, bias, stride: int = 1) -> Tensor:
    """3x3 convolution, zero padding 1, stride 1 or 2, channel-first layout."""
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    if x.ndim != 3 or w.ndim != 4 or w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d expects x (C,H,W) and w (O,C,3,3), got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d channel mismatch: x has {x.shape[0]}, w expects {w.shape[1]}")
    if bias.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({w.shape[0]},)")
    if stride not in (1, 2):
        raise RangeError(f"conv2d stride must be 1 or 2, got {stride}")
    c_in, h, wd = x.shape
    c_out = w.shape[0]
    h_out, w_out = _conv_out_extent(h, stride), _conv_out_extent(wd, stride)
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
    patches = np.empty((c_in, 3, 3, h_out, w_out))
    for di in range(3):
        for dj in range(3):
            patches[:, di, dj] = xp[:, di:di + stride * (h_out - 1) + 1:stride,
                                    dj:dj + stride * (w_out - 1) + 1:stride]
    cols = patches.reshape(c_in * 9, h_out * w_out)
    w_mat = w.data.reshape(c_out, c_in * 9)
    _record_macs(c_out * c_in * 9 * h_out * w_out)
    out_data = (w_mat @ cols + bias.data[:, None]).reshape(c_out, h_out, w_out)
    req = x.requires_grad or w.requires_grad or bias.requires_grad
    parents = tuple(p for p in (x, w, bias) if p.requires_grad)
    out = Tensor(out_data, requires_grad=req, parents=parents, op="conv2d")
    if req:
        def backward(g):
            g_mat = g.reshape(c_out, h_out * w_out)
            if bias.requires_grad:
                bias._accum_owned(g_mat.sum(axis=1))
            if w.requires_grad:
                w._accum_owned((g_mat @ cols.T).reshape(w.shape))
            if x.requires_grad:
                dcols = (w_mat.T @ g_mat).reshape(c_in, 3, 3, h_out, w_out)
                dxp = np.zeros_like(xp)
                for di in range(3):
                    for dj in range(3):
                        dxp[:, di:di + stride * (h_out - 1) + 1:stride,
                            dj:dj + stride * (w_out - 1) + 1:stride] += dcols[:, di, dj]
                x._accum_owned(dxp[:, 1:h + 1, 1:wd + 1])
        out._backward = backward
    return out


def depthwise_conv2d(x, w, bias, stride: int = 1) -> Tensor:
    """Per-channel 3x3 convolution (zero padding 1), stride 1 or 2."""
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    if x.ndim != 3 or w.ndim != 3 or w.shape[1:] != (3, 3):
        raise ShapeError(f"depthwise_conv2d expects x (C,H,W) and w (C,3,3), got {x.shape} and {w.shape}")
    if w.shape[0] != x.shape[0]:
        raise ShapeError(f"depthwise channel mismatch: x has {x.shape[0]}, w has {w.shape[0]}")
    if bias.shape != (x.shape[0],):
        raise ShapeError(f"depthwise bias shape {bias.shape} != ({x.shape[0]},)")
    if stride not in (1, 2):
        raise RangeError(f"depthwise stride must be 1 or 2, got {stride}")
    c, h, wd = x.shape
    h_out, w_out = _conv_out_extent(h, stride), _conv_out_extent(wd, stride)
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1)))
    _record_macs(c * 9 * h_out * w_out)
    out_data = np.broadcast_to(bias.data[:, None, None], (c, h_out, w_out)).copy()
    views = {}
    for di in range(3):
        for dj in range(3):
            view = xp[:, di:di + stride * (h_out - 1) + 1:stride,
                      dj:dj + stride * (w_out - 1) + 1:stride]
            views[di, dj] = view
            out_data += w.data[:, di, dj, None, None] * view
    req = x.requires_grad or w.requires_grad or bias.requires_grad
    parents = tuple(p for p in (x, w, bias) if p.requires_grad)
    out = Tensor(out_data, requires_grad=req, parents=parents, op="depthwise_conv2d")
    if req:
        def backward(g):
            if bias.requires_grad:
                bias._accum_owned(g.sum(axis=(1, 2)))
            if w.requires_grad:
                dw = np.empty_like(w.data)
                for di in range(3):
                    for dj in range(3):
                        dw[:, di, dj] = (g * views[di, dj]).sum(axis=(1, 2))
                w._accum_owned(dw)
            if x.requires_grad:
                dxp = np.zeros_like(xp)
                for di in range(3):
                    for dj in range(3):
                        dxp[:, di:di + stride * (h_out - 1) + 1:stride,
                            dj:dj + stride * (w_out - 1) + 1:stride] += \
                            w.data[:, di, dj, None, None] * g
                x._accum_owned(dxp[:, 1:h + 1, 1:wd + 1])
        out._backward = backward
    return out


def upsample2x_nearest(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"upsample2x_nearest expects (C,H,W), got shape {x.shape}")
    c, h, w = x.shape
    out = Tensor(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2),
                 requires_grad=x.requires_grad,
                 parents=(x,) if x.requires_grad else (), op="upsample2x")
    if x.requires_grad:
        out._backward = lambda g: x._accum_owned(g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))
    return out


def gradcheck(f: Callable[[Tensor], Tensor], x0: Tensor, eps: float = 1e-5) -> float:
    """Compare the analytic gradient of a scalar-valued `f` against central
    finite differences at `x0`; returns the max elementwise relative error
    with denominator max(|analytic|, |numeric|, 1e-8)."""
    if not 1e-6 <= eps <= 1e-3:
        raise RangeError(f"gradcheck eps must lie in [1e-6, 1e-3], got {eps}")
    base = np.array(x0.data, dtype=np.float64, copy=True)
    x = Tensor(base.copy(), requires_grad=True)
    out = f(x)
    if out.size != 1:
        raise ShapeError(f"gradcheck target must be scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NonFiniteError("gradcheck: f is non-finite at x0")
    out.backward(leaves=[x])
    analytic = x.grad.copy()

    def value_at(arr: np.ndarray) -> float:
        return float(f(Tensor(arr, requires_grad=False)).data)

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        plus = value_at(base)
        flat[i] = saved - eps
        minus = value_at(base)
        flat[i] = saved
        num_flat[i] = (plus - minus) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
