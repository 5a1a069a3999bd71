"""
Differentiable ops over DiffArray.

Binary ops accept equal shapes or a size-1 operand (scalar broadcast); any
other broadcasting is explicit through ``broadcast_to``.
"""

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ContractViolation
from .tensor import DiffArray, make_result

Operand = Union[DiffArray, float, int, np.ndarray]

_GELU_C = np.sqrt(2.0 / np.pi)


def as_diff(x: Operand, like: Optional[DiffArray] = None) -> DiffArray:
    """Wrap constants; python scalars take the dtype of ``like``."""
    if isinstance(x, DiffArray):
        return x
    dtype = like.dtype if like is not None and np.isscalar(x) else None
    return DiffArray(np.asarray(x, dtype=dtype))


def _pair(a: Operand, b: Operand, op: str) -> Tuple[DiffArray, DiffArray]:
    if isinstance(a, DiffArray):
        a_, b_ = a, as_diff(b, like=a)
    else:
        b_ = as_diff(b)
        a_ = as_diff(a, like=b_)
    if a_.shape != b_.shape and a_.size != 1 and b_.size != 1:
        raise ContractViolation(op, f"shapes {a_.shape} and {b_.shape} differ; use broadcast_to")
    return a_, b_


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce a gradient back to a scalar operand's shape."""
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> DiffArray:
    a, b = _pair(a, b, 'add')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(a.values + b.values, (a, b), backward, 'add')


def sub(a: Operand, b: Operand) -> DiffArray:
    a, b = _pair(a, b, 'sub')

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(a.values - b.values, (a, b), backward, 'sub')


def mul(a: Operand, b: Operand) -> DiffArray:
    a, b = _pair(a, b, 'mul')

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return make_result(a.values * b.values, (a, b), backward, 'mul')


def div(a: Operand, b: Operand) -> DiffArray:
    a, b = _pair(a, b, 'div')
    out = a.values / b.values

    def backward(g):
        ga = g / b.values
        gb = -g * out / b.values
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result(out, (a, b), backward, 'div')


def exp(x: DiffArray) -> DiffArray:
    out = np.exp(x.values)

    def backward(g):
        return (g * out,)

    return make_result(out, (x,), backward, 'exp')


def gelu(x: DiffArray) -> DiffArray:
    """GELU, tanh approximation."""
    v = x.values
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    th = np.tanh(inner)
    out = 0.5 * v * (1.0 + th)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * v ** 2)
        local = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th ** 2) * d_inner
        return (g * local,)

    return make_result(out, (x,), backward, 'gelu')


def prelu(x: DiffArray, alpha: DiffArray, axis: int = 1) -> DiffArray:
    """PReLU with one slope per channel along ``axis`` (or a single shared slope)."""
    if alpha.ndim != 1 or (alpha.size != 1 and alpha.size != x.shape[axis]):
        raise ContractViolation('prelu', f"alpha shape {alpha.shape} does not fit input {x.shape}")
    view = [1] * x.ndim
    if alpha.size != 1:
        view[axis] = alpha.size
    a = alpha.values.reshape(view)
    positive = x.values > 0
    out = np.where(positive, x.values, a * x.values)

    def backward(g):
        gx = np.where(positive, g, a * g)
        ga_full = np.where(positive, 0.0, x.values * g)
        if alpha.size == 1:
            ga = np.asarray(ga_full.sum()).reshape(1)
        else:
            axes = tuple(i for i in range(x.ndim) if i != axis)
            ga = ga_full.sum(axis=axes)
        return gx, ga.astype(alpha.dtype, copy=False)

    return make_result(out, (x, alpha), backward, 'prelu')


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: DiffArray, b: DiffArray) -> DiffArray:
    """(..., m, k) @ (k, n), or batched (..., m, k) @ (..., k, n) with equal batch dims."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractViolation('matmul', f"incompatible shapes {a.shape} @ {b.shape}")
    shared_weight = b.ndim == 2
    if not shared_weight and a.shape[:-2] != b.shape[:-2]:
        raise ContractViolation('matmul', f"batch dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.values, b.values)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.values, -1, -2))
        if shared_weight:
            k, n = b.shape
            gb = a.values.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.matmul(np.swapaxes(a.values, -1, -2), g)
        return ga, gb

    return make_result(out, (a, b), backward, 'matmul')


def conv1d(
    x: DiffArray,
    weight: DiffArray,
    bias: Optional[DiffArray] = None,
    groups: int = 1,
) -> DiffArray:
    """
    1-D convolution with zero "same" padding.

    Args:
        x: (B, C_in, T)
        weight: (C_out, C_in / groups, K)
        bias: optional (C_out,)
        groups: channel groups; groups == C_in gives a depthwise conv
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ContractViolation('conv1d', f"expected (B, C, T) input and 3-D weight, got {x.shape}, {weight.shape}")
    batch, c_in, length = x.shape
    c_out, c_in_g, k = weight.shape
    if groups < 1 or c_in % groups or c_out % groups or c_in // groups != c_in_g:
        raise ContractViolation(
            'conv1d', f"groups={groups} incompatible with input {c_in} / weight {weight.shape}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise ContractViolation('conv1d', f"bias shape {bias.shape} != ({c_out},)")

    left = (k - 1) // 2
    parents = (x, weight) if bias is None else (x, weight, bias)

    if k == 1 and groups == 1:
        w2 = weight.values[:, :, 0]
        out = np.matmul(w2, x.values)
        if bias is not None:
            out = out + bias.values[None, :, None]

        def backward_pointwise(g):
            gx = np.matmul(w2.T, g)
            gw = np.einsum('bot,bit->oi', g, x.values)[:, :, None]
            grads = [gx, gw]
            if bias is not None:
                grads.append(g.sum(axis=(0, 2)))
            return grads

        return make_result(out, parents, backward_pointwise, 'conv1d')

    c_out_g = c_out // groups
    padded = np.pad(x.values, ((0, 0), (0, 0), (left, k - 1 - left)))
    windows = sliding_window_view(padded, k, axis=2)
    windows = windows.reshape(batch, groups, c_in_g, length, k)
    wg = weight.values.reshape(groups, c_out_g, c_in_g, k)
    out = np.einsum('bgitk,goik->bgot', windows, wg, optimize=True).reshape(batch, c_out, length)
    if bias is not None:
        out = out + bias.values[None, :, None]

    def backward(g):
        gg = g.reshape(batch, groups, c_out_g, length)
        gw = np.einsum('bgitk,bgot->goik', windows, gg, optimize=True).reshape(weight.shape)
        gwin = np.einsum('bgot,goik->bgitk', gg, wg, optimize=True).reshape(batch, c_in, length, k)
        gpad = np.zeros_like(padded)
        for tap in range(k):
            gpad[:, :, tap:tap + length] += gwin[..., tap]
        grads = [gpad[:, :, left:left + length], gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    return make_result(out, parents, backward, 'conv1d')


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------

def transpose(x: DiffArray, axes: Sequence[int]) -> DiffArray:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ContractViolation('transpose', f"axes {axes} are not a permutation of {x.ndim} dims")
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_result(np.transpose(x.values, axes), (x,), backward, 'transpose')


def reshape(x: DiffArray, shape: Sequence[int]) -> DiffArray:
    shape = tuple(shape)
    try:
        out = x.values.reshape(shape)
    except ValueError as exc:
        raise ContractViolation('reshape', f"cannot reshape {x.shape} to {shape}") from exc

    def backward(g):
        return (g.reshape(x.shape),)

    return make_result(out, (x,), backward, 'reshape')


def broadcast_to(x: DiffArray, shape: Sequence[int]) -> DiffArray:
    """Expand size-1 axes to ``shape`` (ranks must match)."""
    shape = tuple(shape)
    if len(shape) != x.ndim or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise ContractViolation('broadcast_to', f"cannot broadcast {x.shape} to {shape}")
    expanded = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s != t)

    def backward(g):
        return (g.sum(axis=expanded, keepdims=True) if expanded else g,)

    return make_result(np.broadcast_to(x.values, shape), (x,), backward, 'broadcast_to')


def concat(xs: Sequence[DiffArray], axis: int = 0) -> DiffArray:
    if not xs:
        raise ContractViolation('concat', "need at least one input")
    ndim = xs[0].ndim
    axis = axis % ndim
    for x in xs:
        if x.ndim != ndim or x.shape[:axis] + x.shape[axis + 1:] != xs[0].shape[:axis] + xs[0].shape[axis + 1:]:
            raise ContractViolation('concat', f"shape {x.shape} does not match {xs[0].shape} off axis {axis}")
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([x.values for x in xs], axis=axis), tuple(xs), backward, 'concat')


def slice_(x: DiffArray, index) -> DiffArray:
    """Basic slicing (ints and slices)."""
    if not isinstance(index, tuple):
        index = (index,)
    for item in index:
        if not isinstance(item, (slice, int, type(Ellipsis))):
            raise ContractViolation('slice', f"only basic slicing is supported, got {type(item).__name__}")
    out = x.values[index]
    if out.size == 0:
        raise ContractViolation('slice', f"empty slice {index} of {x.shape}")

    def backward(g):
        full = np.zeros_like(x.values)
        full[index] = g
        return (full,)

    return make_result(np.array(out), (x,), backward, 'slice')


def take_rows(table: DiffArray, ids: np.ndarray) -> DiffArray:
    """Embedding lookup: table (V, C), integer ids of any shape -> ids.shape + (C,)."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2 or ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractViolation('take_rows', f"ids out of range for table {table.shape}")

    def backward(g):
        full = np.zeros_like(table.values)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return make_result(table.values[ids], (table,), backward, 'take_rows')


def gather_rows(x: DiffArray, index: np.ndarray) -> DiffArray:
    """Per-batch row gather: x (B, N, C), index (B, M) -> (B, M, C)."""
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 3 or index.ndim != 2 or index.shape[0] != x.shape[0]:
        raise ContractViolation('gather_rows', f"bad shapes {x.shape} / index {index.shape}")
    if index.min() < 0 or index.max() >= x.shape[1]:
        raise ContractViolation('gather_rows', "index out of range")
    batch_idx = np.arange(x.shape[0])[:, None]

    def backward(g):
        full = np.zeros_like(x.values)
        np.add.at(full, (np.broadcast_to(batch_idx, index.shape), index), g)
        return (full,)

    return make_result(x.values[batch_idx, index], (x,), backward, 'gather_rows')


def repeat_frames(x: DiffArray, factor: int) -> DiffArray:
    """Nearest-neighbour replication along the last axis: (B, C, T) -> (B, C, T * factor)."""
    if factor == 1:
        return x
    b, c, t = x.shape
    expanded = broadcast_to(reshape(x, (b, c, t, 1)), (b, c, t, factor))
    return reshape(expanded, (b, c, t * factor))


# ---------------------------------------------------------------------------
# Reductions and normalisers
# ---------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape, axis, keepdims) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(np.asarray(g).reshape((1,) * len(shape)), shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if not keepdims:
        g = np.expand_dims(g, tuple(a % len(shape) for a in axes))
    return np.broadcast_to(g, shape)


def sum_(x: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    out = np.asarray(x.values.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        return (np.array(_expand_reduced(g, x.shape, axis, keepdims)),)

    return make_result(out, (x,), backward, 'sum')


def mean(x: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    out = np.asarray(x.values.mean(axis=axis, keepdims=keepdims))
    count = x.size // max(out.size, 1)

    def backward(g):
        return (np.array(_expand_reduced(g, x.shape, axis, keepdims)) / count,)

    return make_result(out, (x,), backward, 'mean')


def rms(x: DiffArray, axis: int = 1, eps: float = 1e-8) -> DiffArray:
    """Root-mean-square along ``axis``, kept as a size-1 axis."""
    n = x.shape[axis]
    out = np.sqrt(np.mean(x.values ** 2, axis=axis, keepdims=True) + eps)

    def backward(g):
        return (g * x.values / (n * out),)

    return make_result(out, (x,), backward, 'rms')


def softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward, 'softmax')


def log_softmax(x: DiffArray, axis: int = -1) -> DiffArray:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward, 'log_softmax')


# ---------------------------------------------------------------------------
# Composites
# ---------------------------------------------------------------------------

def layer_norm(x: DiffArray, axis: int = -1, eps: float = 1e-6) -> DiffArray:
    """Parameter-free layer norm built from the mean / rms statistics."""
    centered = sub(x, broadcast_to(mean(x, axis=axis, keepdims=True), x.shape))
    return div(centered, broadcast_to(rms(centered, axis=axis, eps=eps), x.shape))


def mse(pred: DiffArray, target: Operand) -> DiffArray:
    target = as_diff(target, like=pred)
    if target.shape != pred.shape:
        raise ContractViolation('mse', f"shapes {pred.shape} and {target.shape} differ")
    diff = sub(pred, target)
    return mean(mul(diff, diff))
