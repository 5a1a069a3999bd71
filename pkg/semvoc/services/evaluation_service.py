"""
Evaluation kit: linear probes, Fréchet distance on fixed features,
reconstruction distances, PCA projections and the caption judge.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigh
from sklearn.decomposition import PCA
from sklearn.model_selection import train_test_split

from ..dsp.mel import MelConfig, mel
from ..dsp.stft import StftPlan, stft
from ..dsp.wav_io import AudioClip
from ..exceptions import EvaluationError, SignalError
from ..grad import ops
from ..grad.checkpoint import Checkpoint
from ..grad.tensor import DiffArray, backward
from ..models.configs import ProbeConfig, VocoderConfig, VocoderTrainConfig
from ..models.reports import FrechetRow, ProbeResult, ProjectionRow, ReconRow
from ..utils.concurrent import parallel_map
from .latent_providers import LatentProvider, LatentSeq
from .vocoder_engine import train_vocoder

logger = logging.getLogger(__name__)

FD_FEATURE_DIM = 16
JUDGE_SEGMENTS = 4
EIGEN_TOL = 1e-9

Features = Union[np.ndarray, LatentSeq]


def _as_features(x: Features) -> np.ndarray:
    if isinstance(x, LatentSeq):
        return x.pooled()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x.mean(axis=2)
    if x.ndim != 2:
        raise EvaluationError(f"expected (N, F) features, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# Linear probe
# ---------------------------------------------------------------------------

@dataclass
class LogisticModel:
    """Multinomial logistic regression on standardized features."""

    weight: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    classes: List[str]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.mean) / self.std) @ self.weight + self.bias

    def predict(self, x: np.ndarray) -> List[str]:
        return [self.classes[i] for i in np.argmax(self.logits(x), axis=1)]


def fit_logistic(x: np.ndarray, labels: Sequence[str], steps: int = 2000, lr: float = 0.1,
                 classes: Optional[List[str]] = None) -> LogisticModel:
    """Full-batch gradient descent on the softmax cross-entropy."""
    classes = classes or sorted(set(labels))
    if len(classes) < 2:
        raise EvaluationError("a probe needs at least two classes", details={'classes': classes})
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[l] for l in labels])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    z = DiffArray((x - mean) / std)
    onehot = np.eye(len(classes))[y]

    weight = DiffArray(np.zeros((x.shape[1], len(classes))), requires_grad=True, name='probe.weight')
    bias = DiffArray(np.zeros(len(classes)), requires_grad=True, name='probe.bias')
    params = {'weight': weight, 'bias': bias}
    for _ in range(steps):
        weight.zero_grad()
        bias.zero_grad()
        logits = ops.add(ops.matmul(z, weight), ops.broadcast_to(ops.reshape(bias, (1, -1)), (len(y), len(classes))))
        loss = ops.mul(ops.mean(ops.mul(ops.log_softmax(logits, axis=1), onehot)), -float(len(classes)))
        grads = backward(loss, params)
        weight.values = weight.values - lr * grads['weight']
        bias.values = bias.values - lr * grads['bias']
    return LogisticModel(weight.values.copy(), bias.values.copy(), mean, std, list(classes))


def linear_probe(
    latents: Features,
    labels: Sequence[str],
    cfg: Optional[ProbeConfig] = None,
    provider: str = '',
    source: str = 'encoder',
) -> ProbeResult:
    """Stratified split, logistic regression on the train part, accuracy on the rest."""
    cfg = cfg or ProbeConfig()
    x = _as_features(latents)
    labels = list(labels)
    if isinstance(latents, LatentSeq) and not provider:
        provider = latents.provider
    if len(labels) != x.shape[0]:
        raise EvaluationError(f"{len(labels)} labels for {x.shape[0]} feature rows")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise EvaluationError("a probe needs at least two classes", details={'classes': classes})
    try:
        train_idx, test_idx = train_test_split(
            np.arange(len(labels)), test_size=cfg.test_fraction, random_state=cfg.seed, stratify=labels,
        )
    except ValueError as e:
        raise EvaluationError(f"cannot split for probing: {e}") from e

    model = fit_logistic(x[train_idx], [labels[i] for i in train_idx], cfg.steps, cfg.lr, classes)
    predicted = model.predict(x[test_idx])
    truth = [labels[i] for i in test_idx]
    correct = np.array([p == t for p, t in zip(predicted, truth)])
    per_class = {
        c: float(correct[[t == c for t in truth]].mean())
        for c in classes if any(t == c for t in truth)
    }
    result = ProbeResult(
        accuracy=float(correct.sum()) / len(truth),
        per_class_accuracy=per_class,
        split_seed=cfg.seed,
        provider=provider,
        n_train=len(train_idx),
        n_test=len(test_idx),
        source=source,
    )
    logger.info("Probe accuracy %.4f on %d test rows (%s)", result.accuracy, result.n_test, provider,
                extra={'stage': 'probe'})
    return result


# ---------------------------------------------------------------------------
# Fréchet distance
# ---------------------------------------------------------------------------

@dataclass
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise EvaluationError(f"covariance {self.cov.shape} does not match mean of length {d}")
        if not np.allclose(self.cov, self.cov.T, atol=EIGEN_TOL):
            raise EvaluationError("covariance is not symmetric")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, features: np.ndarray) -> 'FeatureStats':
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise EvaluationError(f"need at least two feature rows, got shape {x.shape}")
        cov = np.cov(x, rowvar=False)
        cov = np.atleast_2d(cov)
        return cls(x.mean(axis=0), 0.5 * (cov + cov.T), x.shape[0])


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = eigh(mat)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^1/2), via symmetric eigendecompositions."""
    if a.dim != b.dim:
        raise EvaluationError(f"feature dimensions differ: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    eig = eigh(0.5 * (inner + inner.T), eigvals_only=True)
    cross = float(np.sum(np.sqrt(np.clip(eig, 0.0, None))))
    diff = a.mean - b.mean
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross)
    return max(value, 0.0)


class FrechetFeaturizer:
    """Mean-pooled log-mel projected to a seeded orthonormal basis."""

    def __init__(self, mel_cfg: MelConfig, dim: int = FD_FEATURE_DIM, seed: int = 0):
        self.mel_cfg = mel_cfg
        gaussian = np.random.default_rng(seed).standard_normal((mel_cfg.n_mels, dim))
        self.basis, _ = np.linalg.qr(gaussian)

    def __call__(self, clip: AudioClip) -> np.ndarray:
        return mel(clip, self.mel_cfg).mean(axis=1) @ self.basis

    def features(self, clips: Sequence[AudioClip], max_workers: int = 1) -> np.ndarray:
        return np.stack(parallel_map(self, list(clips), max_workers=max_workers))


def internal_frechet(generated: Sequence[AudioClip], reference: Sequence[AudioClip],
                     featurizer: FrechetFeaturizer, max_workers: int = 1) -> float:
    gen = FeatureStats.from_features(featurizer.features(generated, max_workers))
    ref = FeatureStats.from_features(featurizer.features(reference, max_workers))
    return frechet_distance(gen, ref)


def frechet_row(system: str, split: str, provider: str, generated: Sequence[AudioClip],
                reference: Sequence[AudioClip], featurizer: FrechetFeaturizer, max_workers: int = 1) -> FrechetRow:
    return FrechetRow(
        system=system, split=split, provider=provider,
        frechet_distance=internal_frechet(generated, reference, featurizer, max_workers),
        n_generated=len(generated), n_reference=len(reference),
    )


# ---------------------------------------------------------------------------
# Reconstruction distances
# ---------------------------------------------------------------------------

def recon_metrics(reference: AudioClip, generated: AudioClip, mel_cfg: MelConfig,
                  plans: Sequence[StftPlan]) -> Dict[str, float]:
    """Mean |log-mel| difference, mean multi-resolution magnitude L1, waveform L1."""
    n = min(len(reference), len(generated))
    if n == 0:
        raise EvaluationError("clips do not overlap")
    ref = AudioClip(np.asarray(reference.samples)[:n], reference.sample_rate)
    gen = AudioClip(np.asarray(generated.samples)[:n], generated.sample_rate)
    try:
        mel_distance = float(np.mean(np.abs(mel(ref, mel_cfg) - mel(gen, mel_cfg))))
        stft_distance = float(np.mean([
            np.mean(np.abs(stft(ref.samples, p).magnitude() - stft(gen.samples, p).magnitude())) for p in plans
        ]))
    except SignalError as e:
        raise EvaluationError(f"cannot compare clips: {e.message}") from e
    return {
        'mel_distance': mel_distance,
        'stft_distance': stft_distance,
        'waveform_l1': float(np.mean(np.abs(ref.samples - gen.samples))),
    }


def recon_rows(system: str, references: Sequence[AudioClip], generated: Sequence[AudioClip],
               clip_ids: Sequence[str], splits: Sequence[str], mel_cfg: MelConfig,
               plans: Sequence[StftPlan]) -> List[ReconRow]:
    rows = []
    for ref, gen, clip_id, split in zip(references, generated, clip_ids, splits):
        rows.append(ReconRow(clip_id=clip_id, label=ref.label or '', split=split, system=system,
                             **recon_metrics(ref, gen, mel_cfg, plans)))
    return rows


# ---------------------------------------------------------------------------
# PCA projection
# ---------------------------------------------------------------------------

def pca_project(latents: Features, labels: Sequence[str],
                clip_ids: Optional[Sequence[str]] = None) -> Tuple[np.ndarray, np.ndarray, List[ProjectionRow]]:
    """
    2-D coordinates from the top two principal directions of the pooled latents.

    Each direction is signed so that its largest-magnitude component is positive.
    Returns (coords (N, 2), explained variance ratios (2,), rows).
    """
    x = _as_features(latents)
    if x.shape[0] < 3:
        raise EvaluationError(f"PCA projection needs at least 3 clips, got {x.shape[0]}")
    if len(labels) != x.shape[0]:
        raise EvaluationError(f"{len(labels)} labels for {x.shape[0]} clips")
    pca = PCA(n_components=2, svd_solver='full')
    pca.fit(x)
    components = pca.components_.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    coords = (x - pca.mean_) @ components.T
    total = float(np.var(x, axis=0, ddof=1).sum())
    explained = pca.explained_variance_ / total if total > 0 else np.zeros(2)
    ids = list(clip_ids) if clip_ids is not None else [str(i) for i in range(x.shape[0])]
    rows = [
        ProjectionRow(clip_id=ids[i], label=labels[i], pc1=float(coords[i, 0]), pc2=float(coords[i, 1]),
                      explained_pc1=float(explained[0]), explained_pc2=float(explained[1]))
        for i in range(x.shape[0])
    ]
    return coords, explained, rows


def centroid_separation(coords: np.ndarray, labels: Sequence[str]) -> Tuple[float, float]:
    """(mean pairwise centroid distance, mean distance of points to their class centroid)."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    centroids = np.stack([coords[labels == c].mean(axis=0) for c in classes])
    intra = float(np.mean([np.linalg.norm(coords[i] - centroids[classes.index(l)]) for i, l in enumerate(labels)]))
    pairs = [np.linalg.norm(centroids[i] - centroids[j])
             for i in range(len(classes)) for j in range(i + 1, len(classes))]
    inter = float(np.mean(pairs)) if pairs else 0.0
    return inter, intra


# ---------------------------------------------------------------------------
# Caption judge
# ---------------------------------------------------------------------------

def judge_features(clip: AudioClip, mel_cfg: MelConfig, segments: int = JUDGE_SEGMENTS) -> np.ndarray:
    """Log-mel averaged over equal time segments, concatenated in time order."""
    frames = mel(clip, mel_cfg)
    parts = np.array_split(np.arange(frames.shape[1]), segments)
    return np.concatenate([frames[:, idx].mean(axis=1) for idx in parts if idx.size])


class CaptionJudge:
    """Logistic probe on reference-audio features used to label generated audio."""

    def __init__(self, mel_cfg: MelConfig, steps: int = 2000, lr: float = 0.1, max_workers: int = 1):
        self.mel_cfg = mel_cfg
        self.steps = steps
        self.lr = lr
        self.max_workers = max_workers
        self.model: Optional[LogisticModel] = None

    def _features(self, clips: Sequence[AudioClip]) -> np.ndarray:
        return np.stack(parallel_map(lambda c: judge_features(c, self.mel_cfg), list(clips), self.max_workers))

    def fit(self, clips: Sequence[AudioClip], labels: Sequence[str]) -> 'CaptionJudge':
        self.model = fit_logistic(self._features(clips), list(labels), self.steps, self.lr)
        return self

    def predict(self, clips: Sequence[AudioClip]) -> List[str]:
        if self.model is None:
            raise EvaluationError("caption judge used before fit")
        return self.model.predict(self._features(clips))

    def accuracy(self, clips: Sequence[AudioClip], labels: Sequence[str]) -> float:
        if not clips:
            raise EvaluationError("no clips to judge")
        predicted = self.predict(clips)
        return float(np.mean([p == l for p, l in zip(predicted, labels)]))


# ---------------------------------------------------------------------------
# Reconstruction baseline
# ---------------------------------------------------------------------------

def train_recon_baseline(
    clips: Sequence[AudioClip],
    provider: LatentProvider,
    cfg: VocoderConfig,
    train: VocoderTrainConfig,
    latents: Optional[LatentSeq] = None,
) -> Checkpoint:
    """The vocoder backbone trained as a deterministic regressor (zero input, t = 0, plain MSE)."""
    recon = train.model_copy(update={'objective': 'recon', 'energy_weighting': False})
    return train_vocoder(clips, provider, cfg, recon, latents=latents)
