"""
Log-mel spectrograms and patch tiling.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import librosa
import numpy as np

from ..config.profiles import MEL_LOG_FLOOR
from ..exceptions import SignalError
from .stft import Signal, StftPlan, stft

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MelConfig:
    """Mel filterbank settings over an STFT plan; f_max None means Nyquist."""

    plan: StftPlan
    n_mels: int = 64
    f_min: float = 0.0
    f_max: Optional[float] = None
    log_floor: float = MEL_LOG_FLOOR

    def __post_init__(self) -> None:
        nyquist = self.plan.sample_rate / 2
        f_max = nyquist if self.f_max is None else float(self.f_max)
        if f_max > nyquist:
            raise SignalError("f_max above Nyquist", details={'f_max': f_max, 'nyquist': nyquist})
        if not 0 <= self.f_min < f_max:
            raise SignalError("f_min must lie in [0, f_max)", details={'f_min': self.f_min, 'f_max': f_max})
        if self.n_mels < 1 or self.log_floor <= 0:
            raise SignalError("n_mels and log_floor must be positive",
                              details={'n_mels': self.n_mels, 'log_floor': self.log_floor})
        object.__setattr__(self, 'f_max', f_max)

    def filterbank(self) -> np.ndarray:
        return _filterbank(self.plan.sample_rate, self.plan.fft_size, self.n_mels, self.f_min, self.f_max)

    def center_frequencies(self) -> np.ndarray:
        return librosa.mel_frequencies(self.n_mels + 2, fmin=self.f_min, fmax=self.f_max, htk=True)[1:-1]


@lru_cache(maxsize=16)
def _filterbank(sample_rate: int, fft_size: int, n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    # Unnormalized triangles peaking at 1
    fb = librosa.filters.mel(sr=sample_rate, n_fft=fft_size, n_mels=n_mels,
                             fmin=f_min, fmax=f_max, htk=True, norm=None).astype(np.float64)
    fb.flags.writeable = False
    return fb


def mel(signal: Signal, cfg: MelConfig) -> np.ndarray:
    """log(floor + filterbank @ |STFT|): (n_mels, T), or (B, n_mels, T) for batches."""
    magnitude = stft(signal, cfg.plan).magnitude()
    return np.log(cfg.log_floor + np.matmul(cfg.filterbank(), magnitude))


def _check_patch(patch: Tuple[int, int]) -> Tuple[int, int]:
    pf, pt = patch
    if pf <= 0 or pt <= 0:
        raise SignalError("patch extents must be positive", details={'patch': list(patch)})
    return pf, pt


def patchify(frames: np.ndarray, patch: Tuple[int, int], floor: float = MEL_LOG_FLOOR,
             pad: Optional[float] = None) -> np.ndarray:
    """
    Tile an (F, T) mel map into flattened patches.

    The map is right-padded to whole patches with ``pad``, or log(floor)
    when no pad value is given. Patches are
    ordered time-major (outer) then frequency (inner); each is flattened
    row-major over (freq, time). Returns (num_patches, pf * pt).
    """
    pf, pt = _check_patch(patch)
    n_f, n_t = frames.shape
    gf, gt = -(-n_f // pf), -(-n_t // pt)
    fill = np.log(floor) if pad is None else pad
    padded = np.full((gf * pf, gt * pt), fill, dtype=frames.dtype)
    padded[:n_f, :n_t] = frames
    tiles = padded.reshape(gf, pf, gt, pt).transpose(2, 0, 1, 3)
    return tiles.reshape(gt * gf, pf * pt)


def unpatchify(patches: np.ndarray, patch: Tuple[int, int], shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of ``patchify``; crops the padding back to ``shape``."""
    pf, pt = _check_patch(patch)
    n_f, n_t = shape
    gf, gt = -(-n_f // pf), -(-n_t // pt)
    if patches.shape != (gt * gf, pf * pt):
        raise SignalError("patch array does not match target shape",
                          details={'patches': list(patches.shape), 'shape': list(shape)})
    tiles = patches.reshape(gt, gf, pf, pt).transpose(1, 2, 0, 3)
    return tiles.reshape(gf * pf, gt * pt)[:n_f, :n_t]


def patch_grid(shape: Tuple[int, int], patch: Tuple[int, int]) -> Tuple[int, int]:
    """(frequency patches, time patches) for a map of ``shape``."""
    pf, pt = _check_patch(patch)
    return -(-shape[0] // pf), -(-shape[1] // pt)
