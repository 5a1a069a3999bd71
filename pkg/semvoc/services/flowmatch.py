"""
Flow-matching paths, losses and the Euler sampler.

Paths are straight lines x_t = (1 - t) x0 + t x1 from noise x0 ~ N(0, sigma^2 I)
to data x1. Models either predict the velocity x1 - x0 or the clean endpoint
x1; the sampler integrates both kinds on the uniform grid t_k = k / N and
applies classifier-free guidance in prediction space.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from ..config.profiles import DATA_TIME_EPS
from ..dsp.energy import sample_weights
from ..dsp.stft import StftPlan
from ..exceptions import ContractViolation, SamplingError
from ..grad import ops
from ..grad.tensor import DiffArray, no_grad
from ..models.configs import SamplerConfig

logger = logging.getLogger(__name__)

Prediction = Union[DiffArray, np.ndarray]
FlowModel = Callable[[np.ndarray, np.ndarray, object], Prediction]


@dataclass
class FlowSample:
    """One point on the noise-to-data path; t has one entry per batch row."""

    x0: np.ndarray
    x1: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    v_star: np.ndarray


def _expand_time(t: np.ndarray, like: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=like.dtype)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (like.ndim - t.ndim))


def make_path_sample(
    x1: np.ndarray,
    rng: np.random.Generator,
    t: Optional[Union[float, np.ndarray]] = None,
    sigma: float = 1.0,
) -> FlowSample:
    """
    Draw x0 and build the interpolant at time ``t``.

    ``t`` may be a scalar, a per-row array, or None for t ~ U(0, 1) per row.
    """
    x1 = np.asarray(x1)
    if not np.issubdtype(x1.dtype, np.floating):
        x1 = x1.astype(np.float64)
    if t is None:
        t = rng.uniform(0.0, 1.0, size=x1.shape[:1] if x1.ndim else ())
    t = np.asarray(t, dtype=x1.dtype)
    if np.any(t < 0) or np.any(t > 1):
        raise ContractViolation('make_path_sample', f"t must lie in [0, 1], got {t}")
    x0 = (sigma * rng.standard_normal(x1.shape)).astype(x1.dtype)
    tt = _expand_time(t, x1)
    x_t = (1 - tt) * x0 + tt * x1
    return FlowSample(x0=x0, x1=x1, t=t, x_t=x_t, v_star=x1 - x0)


def fm_velocity_loss(v_hat: DiffArray, sample: FlowSample) -> DiffArray:
    """Mean squared error between predicted and target velocity."""
    if v_hat.shape != sample.v_star.shape:
        raise ContractViolation('fm_velocity_loss', f"shapes {v_hat.shape} and {sample.v_star.shape} differ")
    return ops.mse(v_hat, sample.v_star.astype(v_hat.dtype, copy=False))


def fm_data_loss(
    x1_hat: DiffArray,
    x1: np.ndarray,
    weights: np.ndarray,
    plan: Union[StftPlan, int],
) -> DiffArray:
    """
    Energy-weighted MSE on the clean-data prediction.

    Each sample's squared error is scaled by the weight of its frame
    (sample n belongs to frame n // hop). Works on (L,) or (B, L) signals
    with (T,) or (B, T) weights.
    """
    hop = plan.hop if isinstance(plan, StftPlan) else int(plan)
    x1 = np.asarray(x1)
    if x1_hat.shape != x1.shape:
        raise ContractViolation('fm_data_loss', f"shapes {x1_hat.shape} and {x1.shape} differ")
    weights = np.asarray(weights)
    length = x1.shape[-1]
    frames = -(-length // hop)
    if weights.shape != x1.shape[:-1] + (frames,):
        raise ContractViolation(
            'fm_data_loss', f"expected {frames} frame weights per signal, got shape {weights.shape}"
        )
    per_sample = np.stack([sample_weights(w, hop, length) for w in weights.reshape(-1, frames)])
    per_sample = per_sample.reshape(x1.shape).astype(x1_hat.dtype)
    diff = ops.sub(x1_hat, x1.astype(x1_hat.dtype, copy=False))
    return ops.mean(ops.mul(ops.mul(diff, diff), per_sample))


def _predict(model: FlowModel, x: np.ndarray, t: np.ndarray, cond) -> np.ndarray:
    out = model(x, t, cond)
    values = out.values if isinstance(out, DiffArray) else np.asarray(out)
    if values.shape != x.shape:
        raise ContractViolation('euler_sample', f"model output {values.shape} != state {x.shape}")
    return values


def guided_prediction(
    model: FlowModel, x: np.ndarray, t: np.ndarray, cond, uncond, scale: float
) -> np.ndarray:
    """Classifier-free guidance; the unconditional branch runs only when scale != 1."""
    c = _predict(model, x, t, cond)
    if scale == 1.0:
        return c
    u = _predict(model, x, t, uncond)
    return u + scale * (c - u)


def euler_sample(
    model: FlowModel,
    cond,
    cfg: SamplerConfig,
    shape: Optional[Tuple[int, ...]] = None,
    uncond=None,
    x0: Optional[np.ndarray] = None,
    dtype=np.float32,
    eps_t: float = DATA_TIME_EPS,
) -> np.ndarray:
    """
    Integrate the flow ODE from t = 0 to 1 in ``cfg.steps`` uniform steps.

    Velocity models: x <- x + v / N. Data models: x <- x + a (x1_hat - x)
    with a = 1 / max(N - k, eps_t * N), the same update as dividing
    (x1_hat - x) by max(1 - t, eps_t); the last step lands on x1_hat.
    """
    if cfg.steps < 1:
        raise SamplingError("steps must be at least 1")
    if x0 is None:
        if shape is None:
            raise ContractViolation('euler_sample', "either shape or x0 is required")
        rng = np.random.default_rng(cfg.seed)
        x0 = cfg.sigma * rng.standard_normal(shape)
    x = np.array(x0, dtype=dtype)
    n = cfg.steps
    batch = x.shape[0] if x.ndim else 1

    with no_grad():
        for k in range(n):
            t = np.full(batch, k / n, dtype=x.dtype)
            pred = guided_prediction(model, x, t, cond, uncond, cfg.guidance_scale)
            if cfg.prediction_kind == 'velocity':
                x = x + pred / n
            else:
                alpha = 1.0 / max(n - k, eps_t * n)
                x = np.array(pred) if alpha >= 1.0 else x + alpha * (pred - x)
            x = x.astype(dtype, copy=False)
            if not np.all(np.isfinite(x)):
                logger.error("Non-finite sampler state", extra={'stage': 'sample', 'step': k})
                raise SamplingError("non-finite state", step=k)
    return x


def split_rng(seed: int, count: int) -> Sequence[np.random.Generator]:
    """Independent per-element generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]
