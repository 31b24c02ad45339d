"""Reverse-mode automatic differentiation over dense numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional gradient.  Every operation
records its inputs and a backward closure on the output tensor, so the
executed program forms a DAG that can be replayed in reverse exactly once
per forward pass.  ``backward()`` must be started from a scalar.

Default precision is float32; the gradient-check suites build float64
graphs by passing float64 arrays in.  A graph and its tensors belong to
one thread; independent graphs on independent threads do not share state.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording; forward values are unchanged."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype not in (np.float32, np.float64):
        return arr.astype(DEFAULT_DTYPE)
    return arr


class Tensor:
    """Dense n-d array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._prev = ()
        self._consumed = False

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- backward pass ---------------------------------------------------

    def backward(self):
        """Propagate gradients from this scalar through the recorded graph.

        The graph is consumed: running backward a second time without a new
        forward pass raises.
        """
        if self.size != 1:
            raise RuntimeError(f"backward() requires a scalar, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward() already ran for this graph; run a new forward pass")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))

        for node in topo:
            if node._consumed:
                raise RuntimeError("graph reuses a node from an already-consumed graph")

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()
        # Release the graph; interior nodes cannot be back-propped again.
        for node in topo:
            if node._backward is not None or node._prev:
                node._consumed = True
                node._backward = None
                node._prev = ()

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, -_lift(other, self.dtype))

    def __rsub__(self, other):
        return add(-self, _lift(other, self.dtype))


def _lift(x, dtype):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _make(data, prev, backward_builder):
    """Create an op output; record the graph only when gradients are live."""
    track = is_grad_enabled() and any(p.requires_grad for p in prev)
    out = Tensor(data, requires_grad=track)
    if track:
        out._prev = tuple(prev)
        out._backward = backward_builder(out)
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        # own a copy: g may alias another node's grad buffer
        t.grad = np.array(g, dtype=t.dtype)
    else:
        t.grad += g


def _accum_owned(t: Tensor, g: np.ndarray):
    """Accumulate a gradient buffer the caller just allocated and will not
    reuse; ownership transfers on first accumulation (no copy)."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if g.dtype == t.dtype else g.astype(t.dtype)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape))
            _accum(b, _unbroadcast(out.grad, b.shape))
        return run

    return _make(a.data + b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(out):
        def run():
            _accum_owned(a, _unbroadcast(out.grad * b.data, a.shape))
            _accum_owned(b, _unbroadcast(out.grad * a.data, b.shape))
        return run

    return _make(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(out):
        def run():
            _accum_owned(a, out.grad * np.asarray(s, dtype=a.dtype))
        return run

    return _make(a.data * np.asarray(s, dtype=a.dtype), (a,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(out):
        def run():
            _accum_owned(x, out.grad * mask)
        return run

    return _make(np.where(mask, x.data, 0), (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(out):
        def run():
            _accum_owned(x, out.grad * (1.0 - y * y))
        return run

    return _make(y, (x,), bwd)


# -- linear algebra ----------------------------------------------------------


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: (..., N) @ (P, N)^T + (P,)."""
    n = x.shape[-1]
    if w.ndim != 2 or w.shape[1] != n:
        raise ValueError(f"dense: weights {w.shape} do not match input {x.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"dense: bias {b.shape} does not match weights {w.shape}")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    def bwd(out):
        def run():
            g = out.grad
            g2 = g.reshape(-1, g.shape[-1])
            x2 = x.data.reshape(-1, n)
            _accum_owned(x, (g @ w.data).reshape(x.shape))
            _accum_owned(w, g2.T @ x2)
            if b is not None:
                _accum_owned(b, g2.sum(axis=0))
        return run

    prev = (x, w) if b is None else (x, w, b)
    return _make(y, prev, bwd)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: (..., M, K) @ (..., K, N) with identical batch dims."""
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"bmm: incompatible shapes {a.shape} and {b.shape}")

    def bwd(out):
        def run():
            g = out.grad
            _accum_owned(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
            _accum_owned(b, np.matmul(np.swapaxes(a.data, -1, -2), g))
        return run

    return _make(np.matmul(a.data, b.data), (a, b), bwd)


# -- convolutions ------------------------------------------------------------


def _conv_patches(xp: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """(B, C, H+2p, W+2p) -> (B, C*k*k, H*W) im2col matrix."""
    b, c = xp.shape[0], xp.shape[1]
    cols = np.empty((b, c, k * k, h, w), dtype=xp.dtype)
    i = 0
    for dy in range(k):
        for dx in range(k):
            cols[:, :, i] = xp[:, :, dy:dy + h, dx:dx + w]
            i += 1
    return cols.reshape(b, c * k * k, h * w)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded cross-correlation.

    x: (C, H, W) or (B, C, H, W); kernels: (M, C, K, K) with K in {1, 3};
    bias: (M,) optional.  Gradients flow to all tensor arguments.
    """
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ValueError(f"conv2d: kernels must be (M, C, K, K), got {kernels.shape}")
    k = kernels.shape[2]
    if k not in (1, 3):
        raise ValueError(f"conv2d: kernel size {k} not supported (K in {{1, 3}})")
    if x.ndim not in (3, 4):
        raise ValueError(f"conv2d: input must be (C, H, W) or (B, C, H, W), got {x.shape}")
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    b_sz, c, h, w = xd.shape
    m = kernels.shape[0]
    if kernels.shape[1] != c:
        raise ValueError(
            f"conv2d: input channels {c} do not match kernel channels "
            f"{kernels.shape[1]} (input {x.shape}, kernels {kernels.shape})"
        )
    if bias is not None and bias.shape != (m,):
        raise ValueError(f"conv2d: bias {bias.shape} does not match kernels {kernels.shape}")

    kmat = kernels.data.reshape(m, c * k * k)
    if k == 1:
        cols = xd.reshape(b_sz, c, h * w)
    else:
        pad = k // 2
        xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = _conv_patches(xp, k, h, w)
    y = np.matmul(kmat, cols).reshape(b_sz, m, h, w)
    if bias is not None:
        y = y + bias.data[:, None, None]
    if squeeze:
        y = y[0]

    def bwd(out):
        def run():
            g = (out.grad[None] if squeeze else out.grad).reshape(b_sz, m, h * w)
            _accum_owned(kernels,
                         np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
                         .reshape(kernels.shape))
            gcols = np.matmul(kmat.T, g)
            if k == 1:
                gx = gcols.reshape(b_sz, c, h, w)
            else:
                pad = k // 2
                gxp = np.zeros((b_sz, c, h + 2 * pad, w + 2 * pad), dtype=g.dtype)
                gc = gcols.reshape(b_sz, c, k * k, h, w)
                i = 0
                for dy in range(k):
                    for dx in range(k):
                        gxp[:, :, dy:dy + h, dx:dx + w] += gc[:, :, i]
                        i += 1
                gx = gxp[:, :, pad:pad + h, pad:pad + w]
            _accum_owned(x, gx[0] if squeeze else gx)
            if bias is not None:
                _accum_owned(bias, g.sum(axis=(0, 2)))
        return run

    prev = (x, kernels) if bias is None else (x, kernels, bias)
    return _make(y, prev, bwd)


def _corr3(padded: np.ndarray, kern: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Accumulate the 3x3 cross-correlation of pre-padded input into `out`."""
    h, w = out.shape[-2:]
    tmp = np.empty_like(out)
    for u in range(3):
        for v in range(3):
            c = kern[u, v]
            if c != 0:
                np.multiply(padded[..., u:u + h, v:v + w], c, out=tmp)
                out += tmp
    return out


def _pad1(arr: np.ndarray) -> np.ndarray:
    pad = [(0, 0)] * (arr.ndim - 2) + [(1, 1), (1, 1)]
    return np.pad(arr, pad)


def depthwise_conv3x3(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Same-padded cross-correlation of each channel with one fixed 3x3 kernel.

    `kernel` is a constant (no gradient); x may have any leading dims before
    the trailing (H, W) spatial axes.
    """
    kernel = np.asarray(kernel)
    if kernel.shape != (3, 3):
        raise ValueError(f"depthwise_conv3x3: kernel must be 3x3, got {kernel.shape}")
    kern = kernel.astype(x.dtype)

    def bwd(out):
        def run():
            _accum_owned(x, _corr3(_pad1(out.grad), kern[::-1, ::-1],
                                   np.zeros_like(out.grad)))
        return run

    return _make(_corr3(_pad1(x.data), kern, np.zeros_like(x.data)), (x,), bwd)


SOBEL_X_KERNEL = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y_KERNEL = SOBEL_X_KERNEL.T.copy()


def _sobel_x_of(padded: np.ndarray, h: int, w: int) -> np.ndarray:
    csum = padded[..., 0:h, :] + 2.0 * padded[..., 1:h + 1, :] + padded[..., 2:h + 2, :]
    return csum[..., :, 2:] - csum[..., :, :w]


def _sobel_y_of(padded: np.ndarray, h: int, w: int) -> np.ndarray:
    rsum = padded[..., :, 0:w] + 2.0 * padded[..., :, 1:w + 1] + padded[..., :, 2:w + 2]
    return rsum[..., 2:, :] - rsum[..., :h, :]


def sobel_perception(x: Tensor) -> Tensor:
    """Fixed perception: concat([x, sobel_x(x), sobel_y(x)]) over channels.

    Equivalent to stacking the identity and two depthwise_conv3x3 passes;
    fused (and factored through the separable [1,2,1]/[-1,0,1] form) because
    it sits inside every automaton step.  Backward uses the antisymmetry of
    the Sobel kernels: the 180-degree flip negates them.
    """
    if x.ndim < 3:
        raise ValueError(f"sobel_perception: need (..., C, H, W), got {x.shape}")
    c = x.shape[-3]
    h, w = x.shape[-2:]
    xp = _pad1(x.data)
    y = np.concatenate(
        [x.data, _sobel_x_of(xp, h, w), _sobel_y_of(xp, h, w)], axis=-3)

    def bwd(out):
        def run():
            g = out.grad
            gx = g[..., :c, :, :] - _sobel_x_of(_pad1(g[..., c:2 * c, :, :]), h, w) \
                - _sobel_y_of(_pad1(g[..., 2 * c:, :, :]), h, w)
            _accum_owned(x, gx)
        return run

    return _make(y, (x,), bwd)


# -- normalization and shaping ------------------------------------------------


def instance_norm(x: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalize each channel over its spatial extent (the trailing 2 axes).

    No learned affine terms; epsilon guards zero-variance channels.
    """
    if x.ndim < 3:
        raise ValueError(f"instance_norm: need (..., C, H, W), got {x.shape}")
    ax = (-2, -1)
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(epsilon, dtype=x.dtype))
    y = xc * inv

    def bwd(out):
        def run():
            g = out.grad
            gm = g.mean(axis=ax, keepdims=True)
            gym = (g * y).mean(axis=ax, keepdims=True)
            _accum_owned(x, inv * (g - gm - y * gym))
        return run

    return _make(y, (x,), bwd)


def softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(out):
        def run():
            g = out.grad
            _accum_owned(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))
        return run

    return _make(y, (x,), bwd)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements; scalar output."""
    if a.shape != b.shape:
        raise ValueError(f"mse: shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def bwd(out):
        def run():
            g = out.grad * diff * (2.0 / n)
            _accum(a, g.astype(a.dtype, copy=False))
            _accum_owned(b, -g.astype(b.dtype, copy=False))
        return run

    return _make(np.mean(diff * diff), (a, b), bwd)


def mean_over_axes(x: Tensor, axes) -> Tensor:
    axes = (axes,) if isinstance(axes, int) else tuple(axes)
    for ax in axes:
        if not -x.ndim <= ax < x.ndim:
            raise ValueError(f"mean_over_axes: axis {ax} out of range for shape {x.shape}")
    axes = tuple(sorted(ax % x.ndim for ax in axes))
    if len(set(axes)) != len(axes):
        raise ValueError(f"mean_over_axes: duplicate axes {axes}")
    count = 1
    for ax in axes:
        count *= x.shape[ax]

    def bwd(out):
        def run():
            g = np.expand_dims(out.grad, axes)
            _accum(x, np.broadcast_to(g, x.shape) / count)
        return run

    return _make(x.data.mean(axis=axes), (x,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    nd = tensors[0].ndim
    if not -nd <= axis < nd:
        raise ValueError(f"concat: axis {axis} out of range")
    axis = axis % nd
    sizes = [t.shape[axis] for t in tensors]

    def bwd(out):
        def run():
            offset = 0
            idx = [slice(None)] * nd
            for t, s in zip(tensors, sizes):
                idx[axis] = slice(offset, offset + s)
                _accum(t, out.grad[tuple(idx)])
                offset += s
        return run

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(out):
        def run():
            _accum(x, out.grad.reshape(x.shape))
        return run

    return _make(x.data.reshape(shape), (x,), bwd)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"slice_axis: axis {axis} out of range for shape {x.shape}")
    axis = axis % x.ndim
    idx = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))

    def bwd(out):
        def run():
            g = np.zeros_like(x.data)
            g[idx] = out.grad
            _accum_owned(x, g)
        return run

    return _make(x.data[idx].copy(), (x,), bwd)
