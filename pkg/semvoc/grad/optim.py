"""
AdamW, learning-rate schedule and gradient clipping.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..exceptions import ContractViolation
from .tensor import DiffArray

logger = logging.getLogger(__name__)


@dataclass
class OptState:
    """AdamW moments and hyperparameters."""

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ContractViolation('adamw', f"learning rate must be positive, got {self.lr}")


def adamw_step(
    params: Mapping[str, DiffArray],
    grads: Mapping[str, np.ndarray],
    state: OptState,
    lr: Optional[float] = None,
) -> OptState:
    """
    One AdamW update with bias correction and decoupled weight decay.

    Parameter values are replaced in place; ``lr`` overrides ``state.lr`` for
    this step (schedules).
    """
    lr = state.lr if lr is None else lr
    if lr <= 0:
        raise ContractViolation('adamw', f"learning rate must be positive, got {lr}")
    for name, p in params.items():
        if name not in grads:
            raise ContractViolation('adamw', f"missing gradient for {name}")
        if grads[name].shape != p.shape:
            raise ContractViolation('adamw', f"gradient shape {grads[name].shape} != {p.shape} for {name}")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.values)
            v = np.zeros_like(p.values)
        elif m.shape != p.shape:
            raise ContractViolation('adamw', f"moment shape {m.shape} != {p.shape} for {name}")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v

        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        decayed = p.values * (1.0 - lr * state.weight_decay) if state.weight_decay else p.values
        p.values = (decayed - lr * update).astype(p.dtype, copy=False)
    return state


def scheduled_lr(
    step: int,
    base_lr: float,
    warmup_steps: int = 0,
    warmup_start_ratio: float = 1.0,
    decay_after: int = 0,
) -> float:
    """Linear warmup from base_lr * warmup_start_ratio, then inverse-sqrt decay past ``decay_after``."""
    if warmup_steps and step < warmup_steps:
        return base_lr * (warmup_start_ratio + (1.0 - warmup_start_ratio) * step / warmup_steps)
    if decay_after and step > decay_after:
        return base_lr * float(np.sqrt(decay_after / step))
    return base_lr


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))
    if max_norm <= 0 or total <= max_norm:
        return dict(grads), total
    scale = max_norm / (total + 1e-12)
    return {name: g * scale for name, g in grads.items()}, total
