"""
Parameter containers and building blocks on top of the op set.

Modules hold DiffArray leaves with requires_grad=True. Parameter names are
dotted attribute paths ("blocks.0.pw1.weight") in attribute definition order,
so the same construction code always yields the same name list.
"""

import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..exceptions import CheckpointError, ContractViolation
from . import ops
from .tensor import DiffArray

logger = logging.getLogger(__name__)

MASK_BIAS = -1e9


class Module:
    """Base class: recursive parameter discovery and state dicts."""

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, DiffArray)):
                        yield f"{name}.{i}", item
            elif isinstance(value, (Module, DiffArray)):
                yield name, value

    def named_parameters(self, prefix: str = '') -> Dict[str, DiffArray]:
        params: Dict[str, DiffArray] = {}
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Module):
                params.update(value.named_parameters(prefix=f"{full}."))
            elif value.requires_grad:
                params[full] = value
        return params

    def parameters(self) -> List[DiffArray]:
        return list(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        if missing:
            raise CheckpointError("checkpoint is missing parameters", details={'missing': missing[:10]})
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(
                    f"shape mismatch for {name}",
                    details={'expected': list(p.shape), 'found': list(value.shape)},
                )
            p.values = value.astype(p.dtype, copy=True)
            p.grad = None


def param(values: np.ndarray, name: Optional[str] = None) -> DiffArray:
    return DiffArray(values, requires_grad=True, name=name)


def init_normal(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


def bias_to(bias: DiffArray, shape: Tuple[int, ...], axis: int) -> DiffArray:
    """Broadcast a 1-D per-channel vector along ``axis`` of ``shape``."""
    view = [1] * len(shape)
    view[axis] = bias.size
    return ops.broadcast_to(ops.reshape(bias, view), shape)


class Linear(Module):
    """y = x @ W + b over the last axis."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False, dtype=np.float32):
        w = np.zeros((d_in, d_out), dtype) if zero_init else init_normal(rng, (d_in, d_out), d_in, dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(d_out, dtype)) if bias else None
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: DiffArray) -> DiffArray:
        if x.shape[-1] != self.d_in:
            raise ContractViolation('linear', f"expected last dim {self.d_in}, got {x.shape}")
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = ops.add(y, bias_to(self.bias, y.shape, y.ndim - 1))
        return y


class Conv1d(Module):
    """Same-padded 1-D convolution over (B, C, T)."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 groups: int = 1, zero_init: bool = False, dtype=np.float32):
        shape = (c_out, c_in // groups, kernel)
        fan_in = (c_in // groups) * kernel
        w = np.zeros(shape, dtype) if zero_init else init_normal(rng, shape, fan_in, dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(c_out, dtype))
        self.groups = groups
        self.c_in = c_in
        self.c_out = c_out

    def __call__(self, x: DiffArray) -> DiffArray:
        if x.ndim != 3 or x.shape[1] != self.c_in:
            raise ContractViolation('conv1d', f"expected (B, {self.c_in}, T), got {x.shape}")
        return ops.conv1d(x, self.weight, self.bias, groups=self.groups)


class LayerNorm(Module):
    """Layer norm over the last axis, optionally with a learned affine."""

    def __init__(self, width: int, affine: bool = True, eps: float = 1e-6, dtype=np.float32):
        self.eps = eps
        self.width = width
        self.scale = param(np.ones(width, dtype)) if affine else None
        self.shift = param(np.zeros(width, dtype)) if affine else None

    def __call__(self, x: DiffArray) -> DiffArray:
        y = ops.layer_norm(x, axis=-1, eps=self.eps)
        if self.scale is None:
            return y
        y = ops.mul(y, bias_to(self.scale, y.shape, y.ndim - 1))
        return ops.add(y, bias_to(self.shift, y.shape, y.ndim - 1))


class MLP(Module):
    """Linear -> GELU -> Linear."""

    def __init__(self, width: int, hidden: int, rng: np.random.Generator,
                 out: Optional[int] = None, zero_init_out: bool = False, dtype=np.float32):
        self.fc1 = Linear(width, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, out or width, rng, zero_init=zero_init_out, dtype=dtype)

    def __call__(self, x: DiffArray) -> DiffArray:
        return self.fc2(ops.gelu(self.fc1(x)))


def _split_heads(x: DiffArray, heads: int) -> DiffArray:
    b, n, w = x.shape
    x = ops.reshape(x, (b, n, heads, w // heads))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (b * heads, n, w // heads))


def _merge_heads(x: DiffArray, batch: int, heads: int) -> DiffArray:
    _, n, d = x.shape
    x = ops.reshape(x, (batch, heads, n, d))
    x = ops.transpose(x, (0, 2, 1, 3))
    return ops.reshape(x, (batch, n, heads * d))


def mask_bias(mask: np.ndarray, queries: int, heads: int, dtype) -> np.ndarray:
    """(B, M) boolean key mask -> (B * heads, queries, M) additive bias."""
    mask = np.asarray(mask, dtype=bool)
    bias = np.where(mask, 0.0, MASK_BIAS).astype(dtype)
    bias = np.repeat(bias[:, None, None, :], heads, axis=1)
    bias = np.broadcast_to(bias, (mask.shape[0], heads, queries, mask.shape[1]))
    return bias.reshape(mask.shape[0] * heads, queries, mask.shape[1])


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention with ``heads`` heads.

    Self-attention when ``context`` is None; otherwise queries come from ``x``
    and keys/values from ``context``. ``mask`` is a (B, M) boolean array over
    the key positions (True = attend). ``attend`` also returns the attention
    weights as a (B, heads, N, M) array.
    """

    def __init__(self, width: int, heads: int, rng: np.random.Generator,
                 context_width: Optional[int] = None, dtype=np.float32):
        if width % heads:
            raise ContractViolation('attention', f"heads {heads} must divide width {width}")
        ctx = context_width or width
        self.heads = heads
        self.width = width
        self.q = Linear(width, width, rng, dtype=dtype)
        self.k = Linear(ctx, width, rng, dtype=dtype)
        self.v = Linear(ctx, width, rng, dtype=dtype)
        self.o = Linear(width, width, rng, dtype=dtype)

    def __call__(self, x: DiffArray, context: Optional[DiffArray] = None,
                 mask: Optional[np.ndarray] = None) -> DiffArray:
        return self.attend(x, context, mask)[0]

    def attend(self, x: DiffArray, context: Optional[DiffArray] = None,
               mask: Optional[np.ndarray] = None) -> Tuple[DiffArray, np.ndarray]:
        context = x if context is None else context
        batch, queries, _ = x.shape
        keys = context.shape[1]
        if context.shape[0] != batch:
            raise ContractViolation('attention', f"batch mismatch {x.shape} vs {context.shape}")
        if mask is not None and np.shape(mask) != (batch, keys):
            raise ContractViolation('attention', f"mask shape {np.shape(mask)} != {(batch, keys)}")

        q = _split_heads(self.q(x), self.heads)
        k = _split_heads(self.k(context), self.heads)
        v = _split_heads(self.v(context), self.heads)
        scale = 1.0 / np.sqrt(self.width // self.heads)
        scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 2, 1))), scale)
        if mask is not None:
            scores = ops.add(scores, DiffArray(mask_bias(mask, queries, self.heads, scores.dtype)))
        weights = ops.softmax(scores, axis=-1)
        out = _merge_heads(ops.matmul(weights, v), batch, self.heads)
        return self.o(out), weights.values.reshape(batch, self.heads, queries, keys)


def sinusoidal_encoding(positions: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """
    Interleaved sinusoidal encoding: even channels sin, odd channels cos.

    positions: (N,) real values (timesteps or frame indices). Returns (N, dim).
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1)
    half = -(-dim // 2)
    freqs = max_period ** (-np.arange(half) / half)
    angles = positions[:, None] * freqs[None, :]
    out = np.empty((positions.size, dim))
    out[:, 0::2] = np.sin(angles)[:, :len(range(0, dim, 2))]
    out[:, 1::2] = np.cos(angles)[:, :len(range(1, dim, 2))]
    return out


class TransformerBlock(Module):
    """Pre-norm self-attention block: x + Attn(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, width: int, heads: int, rng: np.random.Generator,
                 mlp_ratio: int = 4, dtype=np.float32):
        self.norm1 = LayerNorm(width, dtype=dtype)
        self.attn = MultiHeadAttention(width, heads, rng, dtype=dtype)
        self.norm2 = LayerNorm(width, dtype=dtype)
        self.mlp = MLP(width, width * mlp_ratio, rng, dtype=dtype)

    def __call__(self, x: DiffArray, mask: Optional[np.ndarray] = None) -> DiffArray:
        x = ops.add(x, self.attn(self.norm1(x), mask=mask))
        return ops.add(x, self.mlp(self.norm2(x)))
