"""
Deterministic synthetic corpus.

Every clip is a function of (master seed, class index, clip index) only.
Clips are peak-normalized to 0.7 before Gaussian noise is added at the
requested SNR. The manifest is JSON lines with one row per clip.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import signal as sps

from ..config.logging_config import PerformanceLogger
from ..dsp.wav_io import AudioClip, read_wav, write_wav
from ..exceptions import CorpusError
from ..models.configs import ClassSpec, CorpusSpec
from ..models.reports import ManifestRow

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.jsonl'
PEAK = 0.7
FREQ_JITTER = 0.03
AM_RATE_HZ = 4.0
AM_DEPTH = 0.8
HARMONICS = 5
BURST_PERIOD_S = 0.4
CLICK_DIVISOR = 20.0
CLICK_DECAY_S = 0.002


def clip_seed(master_seed: int, class_index: int, clip_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, class_index, clip_index]).generate_state(1)[0])


def _tone(spec: ClassSpec, t: np.ndarray, sr: int, rng: np.random.Generator) -> np.ndarray:
    f = spec.frequency
    if spec.kind != 'sine':
        f *= 1.0 + rng.uniform(-FREQ_JITTER, FREQ_JITTER)
    phase = rng.uniform(0, 2 * np.pi)
    duration = t[-1] if t.size > 1 else 1.0 / sr

    if spec.kind == 'sine':
        return np.sin(2 * np.pi * f * t + phase)
    if spec.kind == 'chirp-up':
        return sps.chirp(t, f0=f / 2, t1=duration, f1=2 * f, method='logarithmic', phi=np.degrees(phase))
    if spec.kind == 'chirp-down':
        return sps.chirp(t, f0=2 * f, t1=duration, f1=f / 2, method='logarithmic', phi=np.degrees(phase))
    if spec.kind == 'am-tone':
        return (1 + AM_DEPTH * np.sin(2 * np.pi * AM_RATE_HZ * t)) * np.sin(2 * np.pi * f * t + phase)
    if spec.kind == 'square':
        return sps.square(2 * np.pi * f * t + phase)
    if spec.kind == 'harmonic-stack':
        ks = [k for k in range(1, HARMONICS + 1) if k * f < sr / 2]
        return sum(np.sin(2 * np.pi * k * f * t + k * phase) / k for k in ks)
    if spec.kind == 'noise-burst':
        sos = sps.butter(4, [f / np.sqrt(2), min(f * np.sqrt(2), 0.49 * sr)], btype='bandpass', fs=sr, output='sos')
        noise = sps.sosfilt(sos, rng.standard_normal(t.size))
        offset = rng.uniform(0, BURST_PERIOD_S)
        gate = (((t + offset) % BURST_PERIOD_S) < BURST_PERIOD_S / 2).astype(float)
        return noise * sps.lfilter(np.hanning(33) / np.hanning(33).sum(), [1.0], gate)
    if spec.kind == 'click-train':
        period = max(1, int(round(sr / (f / CLICK_DIVISOR))))
        impulses = np.zeros(t.size)
        impulses[int(rng.integers(0, period))::period] = 1.0
        decay = np.exp(-np.arange(int(CLICK_DECAY_S * sr * 5)) / (CLICK_DECAY_S * sr))
        return np.convolve(impulses, decay)[:t.size] * np.sin(2 * np.pi * f * t + phase)
    raise CorpusError(f"unknown generator kind {spec.kind}")


def synth_clip(spec: ClassSpec, seed: int, seconds: float, sample_rate: int, snr_db: float) -> AudioClip:
    """One normalized, noisy clip of the given class."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.asarray(_tone(spec, t, sample_rate, rng), dtype=np.float64)
    peak = np.max(np.abs(x)) if n else 0.0
    if peak > 0:
        x = PEAK * x / peak
    power = float(np.mean(x ** 2)) if n else 0.0
    x = x + np.sqrt(power / 10 ** (snr_db / 10)) * rng.standard_normal(n)
    return AudioClip(x, sample_rate, label=spec.name)


def held_out_indices(spec: CorpusSpec, class_index: int) -> set:
    """Clip indices of one class held out for the test split."""
    count = max(1, int(round(spec.test_fraction * spec.clips_per_class)))
    if count >= spec.clips_per_class:
        count = spec.clips_per_class - 1
    rng = np.random.default_rng([spec.seed, class_index, spec.clips_per_class])
    return set(rng.permutation(spec.clips_per_class)[:count].tolist())


def synth_corpus(spec: CorpusSpec, out_dir: Union[str, Path]) -> List[ManifestRow]:
    """Write every clip as 16-bit WAV plus the manifest; returns the manifest rows."""
    out = Path(out_dir)
    try:
        (out / 'wav').mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusError("cannot create corpus directory", path=str(out), original_error=e) from e

    rows: List[ManifestRow] = []
    with PerformanceLogger(logger, 'synth corpus', stage='synth-data', clips=len(spec.classes) * spec.clips_per_class):
        for ci, cls in enumerate(spec.classes):
            held_out = held_out_indices(spec, ci) if spec.clips_per_class > 1 else set()
            for k in range(spec.clips_per_class):
                seed = clip_seed(spec.seed, ci, k)
                clip = synth_clip(cls, seed, spec.clip_seconds, spec.sample_rate, spec.snr_db)
                clip_id = f"{cls.name}_{k:04d}"
                rel = Path('wav') / f"{clip_id}.wav"
                try:
                    write_wav(out / rel, clip)
                except OSError as e:
                    raise CorpusError("cannot write clip", path=str(out / rel), original_error=e) from e
                rows.append(ManifestRow(clip_id=clip_id, path=rel.as_posix(), label=cls.name,
                                        caption=cls.caption, seed=seed,
                                        split='test' if k in held_out else 'train'))

    frame = pd.DataFrame([r.to_json_dict() for r in rows])
    frame.to_json(out / MANIFEST, orient='records', lines=True)
    logger.info("Wrote %d clips to %s", len(rows), out, extra={'stage': 'synth-data'})
    return rows


def read_manifest(corpus_dir: Union[str, Path]) -> pd.DataFrame:
    path = Path(corpus_dir) / MANIFEST
    if not path.exists():
        raise CorpusError("corpus manifest not found", path=str(path))
    try:
        frame = pd.read_json(path, orient='records', lines=True, dtype={'clip_id': str, 'seed': 'int64'})
    except ValueError as e:
        raise CorpusError("unreadable corpus manifest", path=str(path), original_error=e) from e
    missing = {'clip_id', 'path', 'class', 'caption', 'seed', 'split'} - set(frame.columns)
    if missing:
        raise CorpusError(f"manifest is missing columns {sorted(missing)}", path=str(path))
    return frame


def load_corpus(corpus_dir: Union[str, Path], split: Optional[str] = None
                ) -> Tuple[List[ManifestRow], List[AudioClip]]:
    """Manifest rows and their clips, optionally restricted to one split."""
    corpus_dir = Path(corpus_dir)
    frame = read_manifest(corpus_dir)
    if split is not None:
        frame = frame[frame['split'] == split]
    rows = [ManifestRow(**{k: v.item() if hasattr(v, 'item') else v for k, v in record.items()})
            for record in frame.to_dict(orient='records')]
    clips = [read_wav(corpus_dir / row.path, label=row.label) for row in rows]
    return rows, clips


def split_rows(rows: Sequence[ManifestRow], split: str) -> List[int]:
    return [i for i, r in enumerate(rows) if r.split == split]
