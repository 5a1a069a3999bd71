"""
DiffArray and reverse-mode backward pass.

A DiffArray wraps a numpy array together with the closure that maps an
upstream gradient to gradients of its parents. Graphs are built eagerly by the
ops in ``semvoc.grad.ops``; ``backward`` walks them in reverse topological
order and accumulates into dense buffers.
"""

import contextlib
import logging
import threading
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ContractViolation, GradientError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'enabled', True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording the graph (inference, sampling)."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class DiffArray:
    """N-dimensional real array participating in reverse-mode differentiation."""

    __slots__ = ('values', 'grad', 'requires_grad', 'op', 'name', '_parents', '_backward')

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype=None,
    ) -> None:
        arr = np.asarray(values, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if any(extent <= 0 for extent in arr.shape):
            raise ContractViolation('DiffArray', f"extents must be positive, got {arr.shape}")
        self.values: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.op = 'leaf'
        self.name = name
        self._parents: Tuple['DiffArray', ...] = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    @property
    def size(self) -> int:
        return self.values.size

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DiffArray(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.slice_(self, index)


def make_result(
    values: np.ndarray,
    parents: Sequence[DiffArray],
    backward_fn: BackwardFn,
    op: str,
) -> DiffArray:
    """Wrap an op's forward output and record its backward closure."""
    out = DiffArray(values)
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    out.values.flags.writeable = False
    return out


def _topological_order(root: DiffArray) -> List[DiffArray]:
    order: List[DiffArray] = []
    visited = set()
    stack: List[Tuple[DiffArray, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(
    loss: DiffArray,
    params: Optional[Mapping[str, DiffArray]] = None,
) -> Dict[str, np.ndarray]:
    """
    Back-propagate a scalar loss.

    Gradients of requires_grad leaves are accumulated into ``leaf.grad``.

    Args:
        loss: scalar DiffArray
        params: optional named parameters; each gets a gradient entry, zeros
            when the loss does not depend on it

    Returns:
        Mapping name -> gradient array for ``params`` (empty without params)
    """
    if loss.size != 1:
        raise ContractViolation('backward', f"loss must be scalar, got shape {loss.shape}")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue

        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ContractViolation(
                    node.op, f"gradient shape {pg.shape} does not match input shape {parent.shape}"
                )
            if not np.all(np.isfinite(pg)):
                logger.error("Non-finite gradient produced by %s", node.op)
                raise GradientError(node.op)
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg

    if params is None:
        return {}

    grads: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        if p.grad is None:
            p.grad = np.zeros_like(p.values)
        grads[name] = p.grad
    return grads
