"""Differentiable primitives.

Every function takes Tensors (or array-likes, which are treated as constants)
and returns a Tensor whose backward closure accumulates into its inputs.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, as_tensor, make_node

# Smallest |pre-activation| seen by kinked ops while a monitor is active.
_kink_monitors: list = []


@contextmanager
def track_kinks():
    """Record the closest approach of any input to a non-differentiable point."""
    box = [np.inf]
    _kink_monitors.append(box)
    try:
        yield box
    finally:
        _kink_monitors.remove(box)


def _report_kink(values: np.ndarray) -> None:
    # exact zeros are structural (e.g. zero padding, black pixels with zero
    # bias) and cannot be moved by jittering the checked input
    if not _kink_monitors:
        return
    mags = np.abs(values[values != 0.0])
    if mags.size:
        closest = float(np.min(mags))
        for box in _kink_monitors:
            box[0] = min(box[0], closest)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return make_node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return make_node(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return make_node(a.data * b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node(-a.data, (a,), lambda g: a._accumulate(-g))


def matmul(a, b) -> Tensor:
    """``np.matmul`` semantics, including batched stacks of matrices."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return make_node(out, (a, b), backward)


# activations

def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)
    _report_kink(x.data)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return make_node(out, (x,), lambda g: x._accumulate(np.where(pos, g, slope * g)))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    e = np.exp(x.data[~pos])
    out[~pos] = e / (1.0 + e)
    return make_node(out, (x,), lambda g: x._accumulate(g * out * (1.0 - out)))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: x._accumulate(g * (1.0 - out * out)))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return make_node(out, (x,), backward)


def l2_normalize(x, axis: int = -1, epsilon: float = 1e-12) -> Tensor:
    """Scale to unit norm along ``axis``; slices with norm below ``epsilon`` pass through."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    small = norm < epsilon
    safe = np.where(small, 1.0, norm)
    out = np.where(small, x.data, x.data / safe)

    def backward(g):
        proj = out * (g * out).sum(axis=axis, keepdims=True)
        x._accumulate(np.where(small, g, (g - proj) / safe))

    return make_node(out, (x,), backward)


# reductions

def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape))

    return make_node(out, (x,), backward)


def mean_over_axis(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size / max(out.size, 1)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g / count, x.shape))

    return make_node(out, (x,), backward)


def abs_sum(x, axis=None) -> Tensor:
    """Sum of absolute values (an L1 norm)."""
    x = as_tensor(x)
    _report_kink(x.data)
    sign = np.sign(x.data)
    out = np.abs(x.data).sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        x._accumulate(g * sign)

    return make_node(out, (x,), backward)


def min_over_axis(x, axis: int = -1) -> Tensor:
    """Minimum along ``axis``; the gradient flows to the first minimizer only."""
    x = as_tensor(x)
    idx = np.argmin(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        x._accumulate(full)

    return make_node(out, (x,), backward)


# structural

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    return make_node(out, (x,), lambda g: x._accumulate(g.reshape(x.shape)))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    out = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)
    return make_node(out, (x,), lambda g: x._accumulate(np.transpose(g, inverse)))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return make_node(out, tuple(tensors), backward)


def slice_(x, index) -> Tensor:
    """Basic or advanced indexing; repeated indices accumulate gradients."""
    x = as_tensor(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        x._accumulate(full)

    return make_node(np.array(out, copy=True), (x,), backward)


def gather_rows(x, rows) -> Tensor:
    """``x[rows]`` along the first axis, with a fast scatter-add backward."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    out = x.data[rows]

    def backward(g):
        full = np.zeros_like(x.data)
        flat = full.reshape(x.shape[0], -1)
        gflat = g.reshape(len(rows), -1)
        for col in range(flat.shape[1]):
            flat[:, col] = np.bincount(rows, weights=gflat[:, col], minlength=x.shape[0])
        x._accumulate(full)

    return make_node(out, (x,), backward)


def segment_mean(x, segment_ids, n_segments: int) -> Tensor:
    """Mean of rows of ``x`` grouped by ``segment_ids``; empty segments give zeros."""
    x = as_tensor(x)
    ids = np.asarray(segment_ids, dtype=np.intp)
    if x.ndim != 2 or len(ids) != x.shape[0]:
        raise ShapeError("segment_mean", x.shape, ids.shape)
    counts = np.bincount(ids, minlength=n_segments).astype(np.float64)
    out = np.zeros((n_segments, x.shape[1]))
    for col in range(x.shape[1]):
        out[:, col] = np.bincount(ids, weights=x.data[:, col], minlength=n_segments)
    denom = np.maximum(counts, 1.0)[:, None]
    out /= denom

    def backward(g):
        x._accumulate((g / denom)[ids])

    return make_node(out, (x,), backward)


# convolution and pooling

def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp, shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh, sw, sh * stride, sw * stride), writeable=False,
    )


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weight`` (O, C, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d", x.shape, weight.shape)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d", x.shape, weight.shape)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = np.ascontiguousarray(_windows(xp, kh, kw, stride, ho, wo))
    out = np.tensordot(cols, weight.data, axes=([1, 2, 3], [1, 2, 3])).transpose(0, 3, 1, 2)
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError("conv2d bias", bias.shape, (o,))
        out = out + bias.data[None, :, None, None]
        parents = (x, weight, bias)
    out = np.ascontiguousarray(out)

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5])))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.tensordot(weight.data, g, axes=([0], [1]))  # (C, kh, kw, N, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                        gcols[:, i, j].transpose(1, 0, 2, 3))
            x._accumulate(gxp[:, :, padding:padding + h, padding:padding + w])

    return make_node(out, parents, backward)


def max_pool2d(x, kernel: int = 2, stride: int | None = None) -> Tensor:
    x = as_tensor(x)
    stride = stride or kernel
    if x.ndim != 4:
        raise ShapeError("max_pool2d", x.shape)
    n, c, h, w = x.shape
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    win = _windows(x.data, kernel, kernel, stride, ho, wo)
    flat = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        di, dj = np.divmod(arg, kernel)
        ii = np.arange(ho)[None, None, :, None] * stride + di
        jj = np.arange(wo)[None, None, None, :] * stride + dj
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        np.add.at(gx, (nn, cc, ii, jj), g)
        x._accumulate(gx)

    return make_node(out, (x,), backward)
