"""
Toy text-to-latent diffusion transformer.

Latent frames are the token sequence (channels as features). Each block
applies adaLN-Zero modulated self-attention, un-gated cross-attention over
the caption embeddings and an adaLN-Zero modulated MLP. The network predicts
the flow velocity; sampling pairs every caption with the empty caption for
classifier-free guidance.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config.logging_config import PerformanceLogger
from ..exceptions import ConfigurationError, ContractViolation, CorpusError, ProviderMismatchError
from ..grad import ops
from ..grad.checkpoint import Checkpoint
from ..grad.layers import LayerNorm, Linear, MLP, Module, MultiHeadAttention, param, sinusoidal_encoding
from ..grad.tensor import DiffArray
from ..models.configs import BUCKET_HZ, DitConfig, DitTrainConfig, SamplerConfig, default_classes
from .flowmatch import euler_sample, fm_velocity_loss, make_path_sample
from .latent_providers import LatentSeq
from .training import history_summary, train_loop

logger = logging.getLogger(__name__)

PAD = '<pad>'
UNK = '<unk>'
PAD_ID = 0
UNK_ID = 1
TIME_SCALE = 1000.0
STD_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# Captions
# ---------------------------------------------------------------------------

def default_vocabulary() -> List[str]:
    words = [c.name for c in default_classes()] + list(BUCKET_HZ)
    return list(dict.fromkeys(words))


@dataclass
class CaptionTokens:
    """(B, M) right-padded token ids with a boolean attention mask."""

    ids: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        self.ids = np.atleast_2d(np.asarray(self.ids, dtype=np.int64))
        self.mask = np.atleast_2d(np.asarray(self.mask, dtype=bool))
        if self.ids.shape != self.mask.shape:
            raise ContractViolation('CaptionTokens', f"ids {self.ids.shape} and mask {self.mask.shape} differ")

    @property
    def batch(self) -> int:
        return self.ids.shape[0]

    def take(self, index: np.ndarray) -> 'CaptionTokens':
        return CaptionTokens(self.ids[index], self.mask[index])

    @classmethod
    def stack(cls, items: Sequence['CaptionTokens']) -> 'CaptionTokens':
        return cls(np.concatenate([t.ids for t in items]), np.concatenate([t.mask for t in items]))


class Vocabulary:
    """Whitespace tokenizer over a fixed word list; ids 0 and 1 are PAD and UNK."""

    def __init__(self, words: Iterable[str], max_len: int):
        self.words = [PAD, UNK] + [w for w in dict.fromkeys(words) if w not in (PAD, UNK)]
        self.index = {w: i for i, w in enumerate(self.words)}
        self.max_len = max_len

    def __len__(self) -> int:
        return len(self.words)

    def tokenize(self, caption: str) -> CaptionTokens:
        words = caption.split() or [UNK]
        if len(words) > self.max_len:
            logger.warning("Caption %r truncated to %d tokens", caption, self.max_len)
            words = words[:self.max_len]
        ids = np.full(self.max_len, PAD_ID, dtype=np.int64)
        ids[:len(words)] = [self.index.get(w, UNK_ID) for w in words]
        mask = np.zeros(self.max_len, dtype=bool)
        mask[:len(words)] = True
        return CaptionTokens(ids[None], mask[None])

    def batch(self, captions: Sequence[str]) -> CaptionTokens:
        return CaptionTokens.stack([self.tokenize(c) for c in captions])


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

def _modulate(h: DiffArray, shift: DiffArray, scale: DiffArray) -> DiffArray:
    """h * (1 + scale) + shift with (B, W) modulation broadcast over tokens."""
    b, n, w = h.shape
    scale = ops.broadcast_to(ops.reshape(scale, (b, 1, w)), h.shape)
    shift = ops.broadcast_to(ops.reshape(shift, (b, 1, w)), h.shape)
    return ops.add(ops.mul(h, ops.add(scale, 1.0)), shift)


def _gate(h: DiffArray, gate: DiffArray) -> DiffArray:
    b, n, w = h.shape
    return ops.mul(h, ops.broadcast_to(ops.reshape(gate, (b, 1, w)), h.shape))


def _chunks(x: DiffArray, count: int) -> List[DiffArray]:
    width = x.shape[1] // count
    return [ops.slice_(x, (slice(None), slice(i * width, (i + 1) * width))) for i in range(count)]


class DitBlock(Module):
    def __init__(self, width: int, heads: int, mlp_ratio: int, rng: np.random.Generator, dtype=np.float32):
        self.ada = Linear(width, 6 * width, rng, zero_init=True, dtype=dtype)
        self.norm1 = LayerNorm(width, affine=False, dtype=dtype)
        self.attn = MultiHeadAttention(width, heads, rng, dtype=dtype)
        self.norm_cross = LayerNorm(width, dtype=dtype)
        self.cross = MultiHeadAttention(width, heads, rng, context_width=width, dtype=dtype)
        self.norm2 = LayerNorm(width, affine=False, dtype=dtype)
        self.mlp = MLP(width, width * mlp_ratio, rng, dtype=dtype)

    def __call__(self, x: DiffArray, t_emb: DiffArray, context: DiffArray, mask: np.ndarray) -> DiffArray:
        shift1, scale1, gate1, shift2, scale2, gate2 = _chunks(self.ada(ops.gelu(t_emb)), 6)
        x = ops.add(x, _gate(self.attn(_modulate(self.norm1(x), shift1, scale1)), gate1))
        x = ops.add(x, self.cross(self.norm_cross(x), context=context, mask=mask))
        return ops.add(x, _gate(self.mlp(_modulate(self.norm2(x), shift2, scale2)), gate2))


class DitModel(Module):
    """Token embeddings, time MLP, DiT blocks and a zero-initialized output layer."""

    def __init__(self, cfg: DitConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        width = cfg.width
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.vocab = Vocabulary(cfg.vocabulary or default_vocabulary(), cfg.max_caption_len)
        self.token_table = param((rng.standard_normal((len(self.vocab), width)) / np.sqrt(width)).astype(dtype))
        self.time_mlp = MLP(cfg.time_embed_dim, width, rng, out=width, dtype=dtype)
        self.latent_in = Linear(cfg.latent_dim, width, rng, dtype=dtype)
        self.blocks = [DitBlock(width, cfg.heads, cfg.mlp_ratio, rng, dtype=dtype) for _ in range(cfg.blocks)]
        self.final_ada = Linear(width, 2 * width, rng, zero_init=True, dtype=dtype)
        self.final_norm = LayerNorm(width, affine=False, dtype=dtype)
        self.out = Linear(width, cfg.latent_dim, rng, zero_init=True, dtype=dtype)

    def embed(self, tokens: CaptionTokens) -> DiffArray:
        """(B, M, W) caption embeddings."""
        if np.any(tokens.ids >= len(self.vocab)) or np.any(tokens.ids < 0):
            raise ContractViolation('embed_text', "token id outside the vocabulary")
        b, m = tokens.ids.shape
        rows = ops.take_rows(self.token_table, tokens.ids.reshape(-1))
        return ops.reshape(rows, (b, m, self.cfg.width))

    def __call__(self, x: Union[np.ndarray, DiffArray], t: np.ndarray, tokens: CaptionTokens) -> DiffArray:
        return dit_forward(x, t, tokens, self)


def embed_text(caption: str, model: DitModel) -> Tuple[CaptionTokens, DiffArray]:
    tokens = model.vocab.tokenize(caption)
    return tokens, model.embed(tokens)


def dit_forward(x: Union[np.ndarray, DiffArray], t: np.ndarray, tokens: CaptionTokens, model: DitModel) -> DiffArray:
    """Velocity prediction with the shape of the (B, D, T) input."""
    x = x if isinstance(x, DiffArray) else DiffArray(np.asarray(x, dtype=model.dtype))
    if x.ndim != 3 or x.shape[1] != model.cfg.latent_dim:
        raise ContractViolation('dit_forward', f"expected (B, {model.cfg.latent_dim}, T), got {x.shape}")
    batch, _, frames = x.shape
    if tokens.batch != batch:
        raise ContractViolation('dit_forward', f"{tokens.batch} captions for a batch of {batch}")
    if tokens.ids.shape[1] != model.cfg.max_caption_len:
        raise ContractViolation('dit_forward', f"caption length {tokens.ids.shape[1]} != {model.cfg.max_caption_len}")

    width = model.cfg.width
    t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch,))
    t_emb = model.time_mlp(DiffArray(sinusoidal_encoding(t * TIME_SCALE, model.cfg.time_embed_dim).astype(x.dtype)))
    context = model.embed(tokens)

    h = model.latent_in(ops.transpose(x, (0, 2, 1)))
    pos = np.broadcast_to(sinusoidal_encoding(np.arange(frames), width).astype(x.dtype), (batch, frames, width))
    h = ops.add(h, DiffArray(pos))
    for block in model.blocks:
        h = block(h, t_emb, context, tokens.mask)
    shift, scale = _chunks(model.final_ada(ops.gelu(t_emb)), 2)
    h = model.out(_modulate(model.final_norm(h), shift, scale))
    return ops.transpose(h, (0, 2, 1))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def latent_stats(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel mean/std over (clips, frames); flat channels get std 1."""
    mean = data.mean(axis=(0, 2))
    std = data.std(axis=(0, 2))
    return mean, np.where(std < STD_FLOOR, 1.0, std)


def train_dit(
    pairs: Sequence[Tuple[LatentSeq, str]],
    cfg: DitConfig,
    train: DitTrainConfig,
    dtype=np.float32,
) -> Checkpoint:
    """Velocity flow matching on (latents, caption) pairs with caption dropout."""
    if not pairs:
        raise CorpusError("DiT training needs at least one (latents, caption) pair")
    providers = sorted({seq.provider for seq, _ in pairs})
    if len(providers) > 1:
        raise ProviderMismatchError(providers[0], providers[1], "DiT training pairs mix latent providers")
    stacked = LatentSeq.stack([seq for seq, _ in pairs])
    if stacked.dim != cfg.latent_dim:
        raise ConfigurationError('latent_dim', cfg.latent_dim, f"latents have {stacked.dim} channels")

    if not cfg.vocabulary:
        cfg = cfg.model_copy(update={'vocabulary': default_vocabulary()})
    model = DitModel(cfg, seed=train.seed, dtype=dtype)
    captions = [caption for _, caption in pairs]
    tokens = model.vocab.batch(captions)
    empty = model.vocab.tokenize('')
    unknown = sorted({w for c in captions for w in c.split() if w not in model.vocab.index})
    if unknown:
        logger.warning("Caption words outside the vocabulary map to UNK: %s", unknown)

    mean, std = latent_stats(stacked.data)
    data = stacked.data
    if train.standardize:
        data = (data - mean[None, :, None]) / std[None, :, None]
    data = data.astype(dtype)
    count = data.shape[0]
    batch = train.batch_size

    def step_loss(step: int, rng: np.random.Generator) -> DiffArray:
        idx = rng.choice(count, size=batch, replace=count < batch)
        x1 = data[idx]
        step_tokens = tokens.take(idx)
        drop = rng.random(batch) < train.drop_prob
        if drop.any():
            step_tokens = CaptionTokens(np.where(drop[:, None], empty.ids, step_tokens.ids),
                                        np.where(drop[:, None], empty.mask, step_tokens.mask))
        sample = make_path_sample(x1, rng, sigma=train.sigma)
        return fm_velocity_loss(dit_forward(sample.x_t, sample.t, step_tokens, model), sample)

    logger.info("Training DiT on %d pairs (provider %s, %d parameters)",
                count, providers[0], model.parameter_count(), extra={'stage': 'train-dit'})
    history = train_loop(model, step_loss, train, 'train-dit', rng=np.random.default_rng(train.seed))

    meta = {
        'kind': 'dit',
        'provider': providers[0],
        'frame_rate': stacked.frame_rate,
        'frames': stacked.frames,
        'config': cfg.model_dump(mode='json'),
        'train': train.model_dump(mode='json'),
        'latent_mean': [float(v) for v in mean],
        'latent_std': [float(v) for v in std],
        'standardized': train.standardize,
        'seed': train.seed,
        'history': history_summary(history, train.log_every),
    }
    return Checkpoint(model.state_dict(), meta)


def load_dit(ckpt: Checkpoint) -> DitModel:
    if ckpt.kind != 'dit':
        raise ConfigurationError('checkpoint', ckpt.kind, "expected a dit checkpoint")
    model = DitModel(DitConfig(**ckpt.meta['config']), seed=ckpt.meta.get('seed', 0))
    model.load_state_dict(ckpt.tensors)
    return model


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def generate_latents(
    captions: Union[str, Sequence[str]],
    ckpt: Checkpoint,
    sampler: SamplerConfig,
    model: Optional[DitModel] = None,
    frames: Optional[int] = None,
) -> LatentSeq:
    """
    Sample latents for one caption or a list of captions.

    Row i starts from noise seeded with ``sampler.seed + i``. Checkpoints
    trained on standardized latents are mapped back through their stored
    per-channel statistics; raw-scale checkpoints are returned as sampled.
    """
    if sampler.prediction_kind != 'velocity':
        raise ContractViolation('generate_latents', "the DiT predicts velocity; use a velocity sampler")
    captions = [captions] if isinstance(captions, str) else list(captions)
    if not captions:
        raise ContractViolation('generate_latents', "no captions given")
    model = model or load_dit(ckpt)
    frames = frames or int(ckpt.meta['frames'])
    dim = model.cfg.latent_dim

    cond = model.vocab.batch(captions)
    uncond = model.vocab.batch([''] * len(captions)) if sampler.guidance_scale != 1.0 else None
    x0 = np.stack([sampler.sigma * np.random.default_rng(sampler.seed + i).standard_normal((dim, frames))
                   for i in range(len(captions))])

    with PerformanceLogger(logger, 'generate latents', stage='sample', captions=len(captions)):
        x = euler_sample(lambda x, t, c: dit_forward(x, t, c, model), cond, sampler,
                         uncond=uncond, x0=x0, dtype=model.dtype)
    data = x.astype(np.float64)
    if ckpt.meta.get('standardized', False):
        mean = np.asarray(ckpt.meta['latent_mean'])
        std = np.asarray(ckpt.meta['latent_std'])
        data = data * std[None, :, None] + mean[None, :, None]
    return LatentSeq(data, float(ckpt.meta['frame_rate']), ckpt.provider)


# ---------------------------------------------------------------------------
# Finite-difference check on a tiny configuration
# ---------------------------------------------------------------------------

TINY_CONFIG = dict(latent_dim=3, width=16, blocks=1, heads=2, mlp_ratio=2, time_embed_dim=8, max_caption_len=3)


def tiny_gradcheck(seed: int = 0):
    """fm_velocity_loss through dit_forward on a float64 one-block model."""
    from ..grad.gradcheck import check_module

    model = DitModel(DitConfig(**TINY_CONFIG), seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.values = 0.3 * rng.standard_normal(p.shape)
    x1 = rng.standard_normal((2, 3, 5))
    sample = make_path_sample(x1, rng, t=np.array([0.25, 0.8]))
    tokens = model.vocab.batch(['sine low', 'square'])

    def loss() -> DiffArray:
        return fm_velocity_loss(dit_forward(sample.x_t, sample.t, tokens, model), sample)

    return check_module('dit', loss, model.named_parameters(), seed=seed)
