"""
16-bit PCM mono WAV reading and writing.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.io import wavfile

from ..exceptions import AudioFormatError, SignalError

logger = logging.getLogger(__name__)

PCM16_SCALE = 32768.0


@dataclass
class AudioClip:
    """Mono waveform with its sample rate and optional corpus label."""

    samples: np.ndarray
    sample_rate: int
    label: Optional[str] = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise SignalError(
                "AudioClip must be mono", details={'shape': list(self.samples.shape)}
            )
        if self.sample_rate <= 0:
            raise SignalError("Sample rate must be positive", details={'sample_rate': self.sample_rate})

    @property
    def seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


def write_wav(path: Union[str, Path], clip: AudioClip) -> Path:
    """Write ``clip`` as PCM16; values are clamped to [-1, 1)."""
    path = Path(path)
    quantized = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype('<i2')
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), clip.sample_rate, quantized)
    logger.debug("Wrote %d samples to %s", len(quantized), path)
    return path


def read_wav(path: Union[str, Path], label: Optional[str] = None) -> AudioClip:
    """Read a PCM16 mono WAV, normalizing by 32768."""
    path = Path(path)
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, EOFError) as e:
        raise AudioFormatError(str(path), f"unreadable WAV: {e}") from e
    if data.ndim != 1:
        raise AudioFormatError(str(path), f"expected mono, found {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise AudioFormatError(str(path), f"expected 16-bit PCM, found {data.dtype}")
    return AudioClip(data.astype(np.float64) / PCM16_SCALE, int(rate), label)
