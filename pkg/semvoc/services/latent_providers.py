"""
Latent providers: the encoders the vocoder is conditioned on.

Every provider maps an AudioClip to a LatentSeq of shape (1, D, T) with
T = ceil(len / hop_max), so the vocoder is agnostic to which one produced it.
"""

import logging
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import uniform_filter1d

from ..dsp.mel import MelConfig, mel
from ..dsp.stft import StftPlan
from ..dsp.wav_io import AudioClip
from ..exceptions import CheckpointError, ConfigurationError, ContractViolation, ProviderMismatchError
from ..grad.checkpoint import Checkpoint, decode_text, encode_text, read_entries, write_entries
from ..utils.concurrent import ConcurrentProcessor
from .mae_engine import MaeEncoder

logger = logging.getLogger(__name__)

ORACLE = 'semantic-oracle'
MEL = 'acoustic-mel'
MAE = 'toy-mae'

PROVIDER_TAGS = {'oracle': ORACLE, 'mel': MEL, 'mae': MAE}

ORACLE_PROJECTION_DIM = 48
ORACLE_CLASS_DIM = 16
ORACLE_SMOOTHING = 5


@dataclass
class LatentSeq:
    """(B, D, T) latents with their frame rate and provider tag."""

    data: np.ndarray
    frame_rate: float
    provider: str

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim == 2:
            self.data = self.data[None]
        if self.data.ndim != 3:
            raise ContractViolation('LatentSeq', f"expected (B, D, T) latents, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ContractViolation('LatentSeq', "latents contain non-finite values")

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    def pooled(self) -> np.ndarray:
        """(B, D) time-averaged latents."""
        return self.data.mean(axis=2)

    def __getitem__(self, index) -> 'LatentSeq':
        return LatentSeq(self.data[index:index + 1] if isinstance(index, int) else self.data[index],
                         self.frame_rate, self.provider)

    @classmethod
    def stack(cls, seqs: Sequence['LatentSeq']) -> 'LatentSeq':
        if not seqs:
            raise ContractViolation('LatentSeq.stack', "nothing to stack")
        first = seqs[0]
        for s in seqs:
            if s.provider != first.provider:
                raise ProviderMismatchError(first.provider, s.provider)
            if s.frame_rate != first.frame_rate or s.data.shape[1:] != first.data.shape[1:]:
                raise ContractViolation('LatentSeq.stack', "frame rate or shape differs between sequences")
        return cls(np.concatenate([s.data for s in seqs]), first.frame_rate, first.provider)


def latent_frames(num_samples: int, hop_max: int) -> int:
    return -(-num_samples // hop_max)


def save_latents(path: Union[str, Path], seq: LatentSeq) -> Path:
    return write_entries(path, {
        'latents': seq.data.astype(np.float32),
        'frame_rate': np.array([seq.frame_rate], dtype=np.float32),
        'provider': encode_text(seq.provider),
    })


def load_latents(path: Union[str, Path]) -> LatentSeq:
    entries = read_entries(path)
    missing = {'latents', 'frame_rate', 'provider'} - set(entries)
    if missing:
        raise CheckpointError(f"{path} is not a latent dump", details={'missing': sorted(missing)})
    return LatentSeq(entries['latents'], float(entries['frame_rate'][0]), decode_text(entries['provider']))


class BaseLatentProvider(ABC):
    """Abstract base class for latent providers"""

    tag: str = ''

    def __init__(self, sample_rate: int, hop: int):
        self.sample_rate = sample_rate
        self.hop = hop

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    @property
    @abstractmethod
    def dim(self) -> int:
        """Latent channel count D"""

    @abstractmethod
    def encode_frames(self, clip: AudioClip) -> np.ndarray:
        """(D, T) latents for one clip"""

    def _check_clip(self, clip: AudioClip) -> None:
        if clip.sample_rate != self.sample_rate:
            raise ConfigurationError('sample_rate', clip.sample_rate,
                                     f"provider {self.tag} expects {self.sample_rate} Hz")

    def encode(self, clip: AudioClip) -> LatentSeq:
        self._check_clip(clip)
        return LatentSeq(self.encode_frames(clip)[None], self.frame_rate, self.tag)

    def encode_many(self, clips: Sequence[AudioClip], max_workers: int = 1) -> LatentSeq:
        """Encode clips (optionally in parallel) and stack them in input order."""
        processor = ConcurrentProcessor(max_workers=max_workers)
        results, errors = processor.process_indexed(list(clips), self.encode)
        if errors:
            first = min(errors)
            raise errors[first]
        return LatentSeq.stack([results[i] for i in range(len(clips))])

    def metadata(self) -> dict:
        return {'provider': self.tag, 'frame_rate': self.frame_rate, 'dim': self.dim}


class OracleSemanticProvider(BaseLatentProvider):
    """
    Deterministic semantic stand-in: smoothed random projection of log-mel
    frames concatenated with a class embedding broadcast over time.
    """

    tag = ORACLE

    def __init__(self, sample_rate: int, hop: int, n_mels: int = 64, seed: int = 0,
                 projection_dim: int = ORACLE_PROJECTION_DIM, class_dim: int = ORACLE_CLASS_DIM,
                 smoothing: int = ORACLE_SMOOTHING):
        super().__init__(sample_rate, hop)
        self.seed = seed
        self.class_dim = class_dim
        self.smoothing = smoothing
        self.mel_cfg = MelConfig(plan=StftPlan(hop, sample_rate), n_mels=n_mels)
        gaussian = np.random.default_rng(seed).standard_normal((n_mels, projection_dim))
        self.projection, _ = np.linalg.qr(gaussian)

    @property
    def dim(self) -> int:
        return self.projection.shape[1] + self.class_dim

    def class_embedding(self, label: Optional[str]) -> np.ndarray:
        """Unit-norm seeded vector per label; zeros when the label is unknown."""
        if not label:
            return np.zeros(self.class_dim)
        rng = np.random.default_rng([self.seed, zlib.crc32(label.encode('utf-8'))])
        v = rng.standard_normal(self.class_dim)
        return v / np.linalg.norm(v)

    def metadata(self) -> dict:
        return {**super().metadata(), 'n_mels': self.mel_cfg.n_mels, 'seed': self.seed}

    def encode_frames(self, clip: AudioClip) -> np.ndarray:
        projected = self.projection.T @ mel(clip, self.mel_cfg)
        projected = uniform_filter1d(projected, size=self.smoothing, axis=1, mode='nearest')
        rms = float(np.sqrt(np.mean(projected ** 2)))
        embedding = self.class_embedding(clip.label) * rms
        frames = projected.shape[1]
        return np.concatenate([projected, np.repeat(embedding[:, None], frames, axis=1)], axis=0)


class AcousticMelProvider(BaseLatentProvider):
    """Log-mel frames used directly as latent channels."""

    tag = MEL

    def __init__(self, sample_rate: int, hop: int, n_mels: int = 64):
        super().__init__(sample_rate, hop)
        self.mel_cfg = MelConfig(plan=StftPlan(hop, sample_rate), n_mels=n_mels)

    @property
    def dim(self) -> int:
        return self.mel_cfg.n_mels

    def encode_frames(self, clip: AudioClip) -> np.ndarray:
        return mel(clip, self.mel_cfg)

    def metadata(self) -> dict:
        return {**super().metadata(), 'n_mels': self.mel_cfg.n_mels}


class ToyMaeProvider(BaseLatentProvider):
    """Encoder half of a trained toy-MAE, run without masking."""

    tag = MAE

    def __init__(self, ckpt: Checkpoint):
        if ckpt.kind != 'mae':
            raise CheckpointError(f"expected a mae checkpoint, found {ckpt.kind or 'untyped'}")
        self.encoder = MaeEncoder(ckpt)
        super().__init__(self.encoder.sample_rate, self.encoder.hop * self.encoder.cfg.patch_time)

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def encode_frames(self, clip: AudioClip) -> np.ndarray:
        return self.encoder.encode_frames(clip)


def encode_semantic_oracle(clip: AudioClip, seed: int = 0, hop: int = 100, n_mels: int = 64) -> LatentSeq:
    return OracleSemanticProvider(clip.sample_rate, hop, n_mels=n_mels, seed=seed).encode(clip)


def encode_acoustic_mel(clip: AudioClip, hop: int = 100, n_mels: int = 64) -> LatentSeq:
    return AcousticMelProvider(clip.sample_rate, hop, n_mels=n_mels).encode(clip)


class LatentProvider:
    """Latent provider factory and wrapper"""

    def __init__(self, provider_type: str = 'oracle', sample_rate: int = 8000, hop: int = 100,
                 n_mels: int = 64, seed: int = 0, mae_checkpoint: Optional[Checkpoint] = None):
        if provider_type == 'oracle':
            self.provider: BaseLatentProvider = OracleSemanticProvider(sample_rate, hop, n_mels, seed)
        elif provider_type == 'mel':
            self.provider = AcousticMelProvider(sample_rate, hop, n_mels)
        elif provider_type == 'mae':
            if mae_checkpoint is None:
                raise ConfigurationError('mae_checkpoint', None, "the mae provider requires a trained encoder")
            self.provider = ToyMaeProvider(mae_checkpoint)
            if self.provider.frame_rate != sample_rate / hop:
                raise ProviderMismatchError(
                    f"{sample_rate / hop:g} frames/s", f"{self.provider.frame_rate:g} frames/s",
                    "toy-MAE frame rate does not match the vocoder",
                )
        else:
            raise ConfigurationError('provider', provider_type, f"expected one of {sorted(PROVIDER_TAGS)}")
        self.provider_type = provider_type

    @property
    def tag(self) -> str:
        return self.provider.tag

    @property
    def dim(self) -> int:
        return self.provider.dim

    @property
    def frame_rate(self) -> float:
        return self.provider.frame_rate

    def encode(self, clip: AudioClip) -> LatentSeq:
        return self.provider.encode(clip)

    def encode_many(self, clips: Sequence[AudioClip], max_workers: int = 1) -> LatentSeq:
        return self.provider.encode_many(clips, max_workers=max_workers)

    def metadata(self) -> dict:
        return self.provider.metadata()


def tag_for(provider_type: str) -> str:
    if provider_type not in PROVIDER_TAGS:
        raise ConfigurationError('provider', provider_type, f"expected one of {sorted(PROVIDER_TAGS)}")
    return PROVIDER_TAGS[provider_type]


LATENT_INDEX = 'index.jsonl'


def dump_latent_dir(out_dir: Union[str, Path], records: Sequence[dict], latents: LatentSeq) -> Path:
    """One latent file per record plus index.jsonl; records carry clip_id, label, caption and split."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(records) != latents.batch:
        raise ContractViolation('dump_latent_dir', f"{len(records)} records for {latents.batch} latent rows")
    rows = []
    for i, record in enumerate(records):
        name = f"{record['clip_id']}.fvck"
        save_latents(out / name, latents[i])
        rows.append({**record, 'file': name, 'provider': latents.provider})
    pd.DataFrame(rows).to_json(out / LATENT_INDEX, orient='records', lines=True)
    return out / LATENT_INDEX


def load_latent_dir(latent_dir: Union[str, Path], split: Optional[str] = None) -> Tuple[pd.DataFrame, LatentSeq]:
    """Index rows (optionally one split) and their stacked latents, in index order."""
    latent_dir = Path(latent_dir)
    index_path = latent_dir / LATENT_INDEX
    if not index_path.exists():
        raise CheckpointError(f"no latent index in {latent_dir}", details={'path': str(index_path)})
    frame = pd.read_json(index_path, orient='records', lines=True, dtype={'clip_id': str})
    if split is not None:
        frame = frame[frame['split'] == split].reset_index(drop=True)
    if frame.empty:
        raise CheckpointError(f"latent index in {latent_dir} has no rows for split {split}")
    seqs = [load_latents(latent_dir / name) for name in frame['file']]
    return frame, LatentSeq.stack(seqs)


def provider_type_for(tag: str) -> str:
    for name, value in PROVIDER_TAGS.items():
        if value == tag:
            return name
    raise ConfigurationError('provider', tag, f"unknown provider tag; expected one of {sorted(PROVIDER_TAGS.values())}")
