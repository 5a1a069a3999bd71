"""
Toy masked autoencoder over log-mel patches.

Only the visible patches go through the encoder. The decoder embeds them,
scatters learned mask tokens back into their positions, mixes the sequence
with one attention block and predicts every patch; the loss is taken on the
masked patches only. Inference runs the encoder on all patches.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..dsp.mel import MelConfig, mel, patch_grid, patchify
from ..dsp.stft import StftPlan
from ..dsp.wav_io import AudioClip
from ..exceptions import ConfigurationError, CorpusError
from ..grad import ops
from ..grad.checkpoint import Checkpoint
from ..grad.layers import LayerNorm, Linear, Module, TransformerBlock, param, sinusoidal_encoding
from ..grad.tensor import DiffArray, no_grad
from ..models.configs import MaeConfig, TrainSchedule
from .training import history_summary, train_loop

logger = logging.getLogger(__name__)

ENCODER_PREFIXES = ('embed.', 'encoder.', 'norm.')


class ToyMae(Module):
    def __init__(self, cfg: MaeConfig, patch_dim: int, rng: np.random.Generator,
                 encoder_only: bool = False, dtype=np.float32):
        width = cfg.encoder_width
        self.cfg = cfg
        self.patch_dim = patch_dim
        self.embed = Linear(patch_dim, width, rng, dtype=dtype)
        self.encoder = [TransformerBlock(width, cfg.heads, rng, dtype=dtype) for _ in range(cfg.encoder_depth)]
        self.norm = LayerNorm(width, dtype=dtype)
        if not encoder_only:
            dw = cfg.decoder_width
            self.decoder_embed = Linear(width, dw, rng, dtype=dtype)
            self.mask_token = param((0.02 * rng.standard_normal(dw)).astype(dtype))
            self.decoder = TransformerBlock(dw, cfg.heads, rng, mlp_ratio=2, dtype=dtype)
            self.head = Linear(dw, patch_dim, rng, dtype=dtype)

    @staticmethod
    def _positions(batch: int, count: int, width: int, dtype) -> DiffArray:
        pe = sinusoidal_encoding(np.arange(count), width).astype(dtype)
        return DiffArray(np.broadcast_to(pe, (batch, count, width)))

    def encode(self, patches: DiffArray, ids_keep: Optional[np.ndarray] = None) -> DiffArray:
        """(B, N, P) patches -> (B, N or kept, W) tokens."""
        batch, count, _ = patches.shape
        x = self.embed(patches)
        x = ops.add(x, self._positions(batch, count, x.shape[-1], x.dtype))
        if ids_keep is not None:
            x = ops.gather_rows(x, ids_keep)
        for block in self.encoder:
            x = block(x)
        return self.norm(x)

    def reconstruct(self, patches: DiffArray, ids_keep: np.ndarray, ids_restore: np.ndarray) -> DiffArray:
        batch, count, _ = patches.shape
        visible = self.decoder_embed(self.encode(patches, ids_keep))
        width = visible.shape[-1]
        hidden = count - visible.shape[1]
        tokens = visible
        if hidden:
            masks = ops.broadcast_to(ops.reshape(self.mask_token, (1, 1, width)), (batch, hidden, width))
            tokens = ops.concat([visible, masks], axis=1)
        tokens = ops.gather_rows(tokens, ids_restore)
        tokens = ops.add(tokens, self._positions(batch, count, width, tokens.dtype))
        return self.head(self.decoder(tokens))


def random_masking(rng: np.random.Generator, batch: int, count: int, visible: int
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ids_keep (B, visible), ids_restore (B, N) and a (B, N) mask with 1 = hidden."""
    ids_shuffle = np.argsort(rng.random((batch, count)), axis=1)
    ids_restore = np.argsort(ids_shuffle, axis=1)
    mask = np.ones((batch, count))
    mask[:, :visible] = 0.0
    mask = np.take_along_axis(mask, ids_restore, axis=1)
    return ids_shuffle[:, :visible], ids_restore, mask


def mel_config_for(sample_rate: int, hop: int, n_mels: int = 64) -> MelConfig:
    return MelConfig(plan=StftPlan(hop, sample_rate), n_mels=n_mels)


def standardized_patches(frames: np.ndarray, mel_cfg: MelConfig, patch: Tuple[int, int],
                         mean: float, std: float) -> np.ndarray:
    """Patches of a standardized log-mel map, padded with the standardized silence floor."""
    pad = (np.log(mel_cfg.log_floor) - mean) / std
    return patchify((frames - mean) / std, patch, pad=pad)


def clip_patches(clip: AudioClip, mel_cfg: MelConfig, patch: Tuple[int, int],
                 mean: float, std: float) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Standardized patch matrix for one clip and its (freq, time) patch grid."""
    frames = mel(clip, mel_cfg)
    return standardized_patches(frames, mel_cfg, patch, mean, std), patch_grid(frames.shape, patch)


def train_toy_mae(
    clips: Sequence[AudioClip],
    cfg: MaeConfig,
    sample_rate: int,
    hop: int,
    n_mels: int = 64,
    dtype=np.float32,
) -> Checkpoint:
    """Masked-patch reconstruction training; returns an encoder-only checkpoint."""
    if not clips:
        raise CorpusError("toy-MAE training needs a non-empty corpus")
    mel_cfg = mel_config_for(sample_rate, hop, n_mels)
    patch = (cfg.patch_freq, cfg.patch_time)
    mels = [mel(c, mel_cfg) for c in clips]
    mean = float(np.mean([m.mean() for m in mels]))
    std = float(np.sqrt(np.mean([((m - mean) ** 2).mean() for m in mels]))) or 1.0
    data = np.stack([standardized_patches(m, mel_cfg, patch, mean, std) for m in mels]).astype(dtype)

    count, patch_dim = data.shape[1], data.shape[2]
    visible = cfg.visible_count(count)
    if visible < 1:
        raise ConfigurationError('mask_ratio', cfg.mask_ratio, f"leaves no visible patch out of {count}")

    rng = np.random.default_rng(cfg.seed)
    model = ToyMae(cfg, patch_dim, rng, dtype=dtype)
    batch = min(cfg.batch_size, len(clips))
    hidden_count = batch * (count - visible)

    def step_loss(step: int, step_rng: np.random.Generator) -> DiffArray:
        idx = step_rng.choice(len(clips), size=batch, replace=False)
        target = data[idx]
        ids_keep, ids_restore, mask = random_masking(step_rng, batch, count, visible)
        pred = model.reconstruct(DiffArray(target), ids_keep, ids_restore)
        weight = np.broadcast_to((mask * (batch * count / hidden_count))[..., None], target.shape)
        diff = ops.sub(pred, target)
        return ops.mean(ops.mul(ops.mul(diff, diff), weight.astype(dtype)))

    schedule = TrainSchedule(steps=cfg.steps, batch_size=batch, lr=cfg.lr, seed=cfg.seed,
                             log_every=cfg.log_every, warmup_steps=min(100, cfg.steps // 10))
    history = train_loop(model, step_loss, schedule, stage='train-mae', rng=rng)

    tensors = {k: v for k, v in model.state_dict().items() if k.startswith(ENCODER_PREFIXES)}
    meta = {
        'kind': 'mae',
        'provider': 'toy-mae',
        'config': cfg.model_dump(),
        'seed': cfg.seed,
        'sample_rate': sample_rate,
        'hop': hop,
        'n_mels': n_mels,
        'patch_dim': patch_dim,
        'mel_mean': mean,
        'mel_std': std,
        'history': history_summary(history, cfg.log_every),
    }
    return Checkpoint(tensors, meta)


class MaeEncoder:
    """Inference wrapper around an encoder-only checkpoint."""

    def __init__(self, ckpt: Checkpoint):
        meta = ckpt.meta
        self.cfg = MaeConfig(**meta['config'])
        self.sample_rate = int(meta['sample_rate'])
        self.hop = int(meta['hop'])
        self.mel_cfg = mel_config_for(self.sample_rate, self.hop, int(meta['n_mels']))
        self.mean = float(meta['mel_mean'])
        self.std = float(meta['mel_std'])
        self.model = ToyMae(self.cfg, int(meta['patch_dim']), np.random.default_rng(0), encoder_only=True)
        self.model.load_state_dict(ckpt.tensors)

    @property
    def dim(self) -> int:
        return self.cfg.encoder_width

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / (self.hop * self.cfg.patch_time)

    def encode_frames(self, clip: AudioClip) -> np.ndarray:
        """(W, time patches) latents, averaged over frequency patches."""
        patches, (gf, gt) = clip_patches(clip, self.mel_cfg, (self.cfg.patch_freq, self.cfg.patch_time),
                                         self.mean, self.std)
        with no_grad():
            tokens = self.model.encode(DiffArray(patches[None].astype(np.float32))).values[0]
        return tokens.reshape(gt, gf, -1).mean(axis=1).T
