"""Per-frame energy weights for the weighted data-prediction loss."""

import numpy as np

from ..config.profiles import ENERGY_GAMMA, ENERGY_WEIGHT_MAX, ENERGY_WEIGHT_MIN
from ..exceptions import SignalError


def frame_energy(
    waveform: np.ndarray,
    hop: int,
    gamma: float = ENERGY_GAMMA,
    w_min: float = ENERGY_WEIGHT_MIN,
    w_max: float = ENERGY_WEIGHT_MAX,
) -> np.ndarray:
    """
    Weights w_i = clip((E_i / mean E) ** gamma, w_min, w_max), renormalized to mean 1.

    Frame i is the block [i * hop, (i + 1) * hop); the last one may be partial.
    A silent waveform gets all-ones weights.
    """
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.ndim != 1 or waveform.size == 0:
        raise SignalError("frame_energy needs a non-empty mono waveform",
                          details={'shape': list(waveform.shape)})
    frames = -(-waveform.size // hop)
    padded = np.zeros(frames * hop)
    padded[:waveform.size] = waveform ** 2
    counts = np.full(frames, hop, dtype=np.float64)
    counts[-1] = waveform.size - (frames - 1) * hop
    energy = padded.reshape(frames, hop).sum(axis=1) / counts

    mean_energy = energy.mean()
    if mean_energy <= 0:
        return np.ones(frames)
    w = np.clip((energy / mean_energy) ** gamma, w_min, w_max)
    return w / w.mean()


def sample_weights(weights: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Expand per-frame weights to per-sample weights (sample n -> frame n // hop)."""
    return np.repeat(np.asarray(weights), hop)[:length]
