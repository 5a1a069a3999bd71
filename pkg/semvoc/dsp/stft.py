"""
Short-time Fourier analysis and overlap-add synthesis.

Frames are centered: the signal is reflect-padded by fft_size // 2 on the
left, frame i covers padded[i * hop : i * hop + fft_size] and there are
ceil(len / hop) frames. Synthesis divides by the overlap-added squared window,
so istft(stft(x)) reproduces x wherever the window sum is non-zero.

All functions accept a single signal (L,) or a batch (B, L); coefficient
arrays are (K, T) or (B, K, T) with K = fft_size // 2 + 1.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy.signal import get_window

from ..exceptions import SignalError
from .wav_io import AudioClip

logger = logging.getLogger(__name__)

OVERLAP = 4
WSS_FLOOR = 1e-10


@dataclass(frozen=True)
class StftPlan:
    """One spectral resolution: Hann window of fft_size = 4 * hop."""

    hop: int
    sample_rate: int
    fft_size: int = 0
    window: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.hop <= 0 or self.sample_rate <= 0:
            raise SignalError("hop and sample_rate must be positive",
                              details={'hop': self.hop, 'sample_rate': self.sample_rate})
        fft_size = self.fft_size or OVERLAP * self.hop
        if fft_size != OVERLAP * self.hop:
            raise SignalError(f"fft_size must be {OVERLAP} x hop",
                              details={'hop': self.hop, 'fft_size': fft_size})
        object.__setattr__(self, 'fft_size', fft_size)
        window = get_window('hann', fft_size, fftbins=True)
        window.flags.writeable = False
        object.__setattr__(self, 'window', window)

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def frame_count(self, length: int) -> int:
        return -(-length // self.hop)

    def to_dict(self) -> dict:
        return {'hop': self.hop, 'fft_size': self.fft_size, 'sample_rate': self.sample_rate}


@dataclass
class SpectroFrame:
    """Non-negative-frequency STFT coefficients, real and imaginary parts."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self) -> None:
        if self.real.shape != self.imag.shape:
            raise SignalError("real and imag parts differ in shape",
                              details={'real': list(self.real.shape), 'imag': list(self.imag.shape)})

    @property
    def bins(self) -> int:
        return self.real.shape[-2]

    @property
    def frames(self) -> int:
        return self.real.shape[-1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag)


Signal = Union[AudioClip, np.ndarray]


@lru_cache(maxsize=64)
def _reflect_index(length: int, hop: int, fft_size: int) -> np.ndarray:
    """Source sample for every position of the padded signal."""
    frames = -(-length // hop)
    left = fft_size // 2
    right = (frames - 1) * hop + fft_size - left - length
    index = np.pad(np.arange(length), (left, right), mode='reflect')
    index.flags.writeable = False
    return index


def _as_batch(signal: Signal) -> Tuple[np.ndarray, bool]:
    samples = signal.samples if isinstance(signal, AudioClip) else np.asarray(signal)
    if not np.issubdtype(samples.dtype, np.floating):
        samples = samples.astype(np.float64)
    if samples.ndim == 1:
        return samples[None, :], True
    if samples.ndim != 2:
        raise SignalError("stft expects a mono signal or a (batch, samples) array",
                          details={'shape': list(samples.shape)})
    return samples, False


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """(B, T, N) frames -> (B, (T - 1) * hop + N) sum."""
    batch, count, size = frames.shape
    parts = size // hop
    blocks = frames.reshape(batch, count, parts, hop)
    out = np.zeros((batch, count + parts - 1, hop), dtype=frames.dtype)
    for j in range(parts):
        out[:, j:j + count, :] += blocks[:, :, j, :]
    return out.reshape(batch, -1)


def _frame(padded: np.ndarray, plan: StftPlan) -> np.ndarray:
    return sliding_window_view(padded, plan.fft_size, axis=-1)[:, ::plan.hop, :]


@lru_cache(maxsize=64)
def window_sum_square(plan: StftPlan, frames: int) -> np.ndarray:
    """Overlap-added squared window for ``frames`` frames."""
    sq = np.broadcast_to(plan.window ** 2, (1, frames, plan.fft_size))
    wss = overlap_add(np.ascontiguousarray(sq), plan.hop)[0]
    wss.flags.writeable = False
    return wss


def _bin_weights(plan: StftPlan, dtype=np.float64) -> np.ndarray:
    c = np.full(plan.bins, 2.0, dtype=dtype)
    c[0] = 1.0
    c[-1] = 1.0
    return c


def _window(plan: StftPlan, dtype) -> np.ndarray:
    return plan.window.astype(dtype, copy=False)


def _safe_wss(plan: StftPlan, frames: int, dtype) -> np.ndarray:
    wss = window_sum_square(plan, frames)
    return np.where(wss > WSS_FLOOR, wss, 1.0).astype(dtype, copy=False)


def stft(signal: Signal, plan: StftPlan) -> SpectroFrame:
    """Centered, reflect-padded STFT with a periodic Hann window."""
    batch, single = _as_batch(signal)
    length = batch.shape[-1]
    if length < plan.fft_size:
        raise SignalError("signal shorter than one analysis window",
                          details={'length': length, 'fft_size': plan.fft_size})
    if isinstance(signal, AudioClip) and signal.sample_rate != plan.sample_rate:
        raise SignalError("sample rate does not match plan",
                          details={'clip': signal.sample_rate, 'plan': plan.sample_rate})

    padded = batch[:, _reflect_index(length, plan.hop, plan.fft_size)]
    spec = sp_fft.rfft(_frame(padded, plan) * _window(plan, batch.dtype), axis=-1)
    spec = np.swapaxes(spec, -1, -2)
    if single:
        spec = spec[0]
    return SpectroFrame(np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag))


def istft(coef: SpectroFrame, plan: StftPlan, length: int) -> np.ndarray:
    """Windowed overlap-add inverse normalized by the window sum-square."""
    if coef.bins != plan.bins:
        raise SignalError("coefficient bins do not match plan",
                          details={'bins': coef.bins, 'expected': plan.bins})
    single = coef.real.ndim == 2
    spec = coef.real + 1j * coef.imag
    if single:
        spec = spec[None]
    count = spec.shape[-1]
    frames = sp_fft.irfft(np.swapaxes(spec, -1, -2), n=plan.fft_size, axis=-1)
    frames = frames * _window(plan, frames.dtype)
    buf = overlap_add(frames, plan.hop) / _safe_wss(plan, count, frames.dtype)

    start = plan.fft_size // 2
    out = np.zeros((buf.shape[0], length), dtype=buf.dtype)
    avail = min(length, buf.shape[1] - start)
    out[:, :avail] = buf[:, start:start + avail]
    return out[0] if single else out


def istft_adjoint(grad: np.ndarray, plan: StftPlan, frames: int) -> SpectroFrame:
    """Adjoint of ``istft`` (real inner product over real and imaginary parts)."""
    single = grad.ndim == 1
    g = grad[None] if single else grad
    dtype = g.dtype
    wss = _safe_wss(plan, frames, dtype)
    full = np.zeros((g.shape[0], wss.shape[0]), dtype=dtype)
    start = plan.fft_size // 2
    avail = min(g.shape[1], full.shape[1] - start)
    full[:, start:start + avail] = g[:, :avail]
    full = full / wss

    gf = _frame(full, plan)[:, :frames] * _window(plan, dtype)
    spec = sp_fft.rfft(gf, axis=-1) * (_bin_weights(plan, dtype) / plan.fft_size)
    spec = np.swapaxes(spec, -1, -2)
    if single:
        spec = spec[0]
    return SpectroFrame(np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag))


def stft_adjoint(coef: SpectroFrame, plan: StftPlan, length: int) -> np.ndarray:
    """Adjoint of ``stft``: maps coefficient-space vectors back to signals."""
    single = coef.real.ndim == 2
    spec = coef.real + 1j * coef.imag
    if single:
        spec = spec[None]
    dtype = coef.real.dtype
    spec = np.swapaxes(spec, -1, -2) / _bin_weights(plan, dtype)
    dframes = sp_fft.irfft(spec, n=plan.fft_size, axis=-1) * (plan.fft_size * _window(plan, dtype))
    dpadded = overlap_add(dframes, plan.hop)

    index = _reflect_index(length, plan.hop, plan.fft_size)
    out = np.zeros((dpadded.shape[0], length), dtype=dpadded.dtype)
    np.add.at(out.T, index, dpadded.T)
    return out[0] if single else out


def cola_deviation(plan: StftPlan, frames: int = 64) -> float:
    """Max deviation of the squared-window overlap-add from its interior mean."""
    wss = window_sum_square(plan, frames)
    interior = wss[plan.fft_size:-plan.fft_size]
    return float(np.max(np.abs(interior - interior.mean())))
