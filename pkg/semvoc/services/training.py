"""
Shared optimisation loop for every trainable stage.
"""

import logging
import sys
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from ..config.env_validation import env_flag
from ..config.logging_config import PerformanceLogger
from ..exceptions import GradientError
from ..grad.layers import Module
from ..grad.optim import OptState, adamw_step, clip_grad_norm, scheduled_lr
from ..grad.tensor import DiffArray, backward
from ..models.configs import TrainSchedule

logger = logging.getLogger(__name__)

StepFn = Callable[[int, np.random.Generator], DiffArray]


def progress_enabled() -> bool:
    return env_flag('SEMVOC_PROGRESS', True) and sys.stderr.isatty()


def train_loop(
    model: Module,
    loss_fn: StepFn,
    schedule: TrainSchedule,
    stage: str,
    rng: Optional[np.random.Generator] = None,
) -> List[float]:
    """
    Run ``schedule.steps`` AdamW updates of ``model`` on ``loss_fn(step, rng)``.

    Applies warmup / inverse-sqrt decay and global-norm gradient clipping.
    Returns the per-step loss history.
    """
    rng = rng if rng is not None else np.random.default_rng(schedule.seed)
    params = model.named_parameters()
    state = OptState(lr=schedule.lr, weight_decay=schedule.weight_decay)
    history: List[float] = []

    with PerformanceLogger(logger, f"train {stage}", stage=stage, steps=schedule.steps):
        bar = tqdm(range(schedule.steps), desc=stage, disable=not progress_enabled(), leave=False)
        for step in bar:
            model.zero_grad()
            loss = loss_fn(step, rng)
            value = float(loss.values)
            if not np.isfinite(value):
                raise GradientError(stage, f"non-finite loss at step {step}")
            grads = backward(loss, params)
            grads, norm = clip_grad_norm(grads, schedule.max_grad_norm)
            lr = scheduled_lr(step, schedule.lr, schedule.warmup_steps,
                              schedule.warmup_start_ratio, schedule.decay_after)
            adamw_step(params, grads, state, lr=lr)
            history.append(value)

            if step % schedule.log_every == 0 or step == schedule.steps - 1:
                logger.info(
                    "%s step %d loss %.6f grad_norm %.3f lr %.2e", stage, step, value, norm, lr,
                    extra={'stage': stage, 'step': step, 'loss': value},
                )
                bar.set_postfix(loss=f"{value:.4f}")
    return history


def moving_average(history: List[float], window: int = 50) -> np.ndarray:
    values = np.asarray(history, dtype=np.float64)
    if values.size == 0:
        return values
    window = max(1, min(window, values.size))
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode='valid')


def history_summary(history: List[float], every: int = 100, window: int = 50) -> dict:
    """Compact loss record stored in checkpoint metadata."""
    values = np.asarray(history, dtype=np.float64)
    if values.size == 0:
        return {}
    head = values[:window]
    tail = values[-window:]
    return {
        'loss_first': float(values[0]),
        'loss_start_avg': float(head.mean()),
        'loss_end_avg': float(tail.mean()),
        'loss_curve': [float(v) for v in values[::max(1, every)]],
        'steps': int(values.size),
    }
