"""
Flow-matching vocoder: latents in, waveform out.

The generator predicts the clean waveform x1 from a noisy waveform x_t, the
flow time t and conditioned latents L'. Each of R branches analyses x_t with
its own STFT plan, runs a stack of FiLM-modulated ConvNeXt blocks over the
coefficients and resynthesises a waveform with iSTFT; the R waveforms are
averaged.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config.logging_config import PerformanceLogger
from ..dsp.energy import frame_energy
from ..dsp.stft import StftPlan
from ..dsp.wav_io import AudioClip
from ..exceptions import ConfigurationError, ContractViolation, CorpusError, ProviderMismatchError
from ..grad import ops
from ..grad.checkpoint import Checkpoint
from ..grad.layers import Conv1d, Linear, MLP, Module, param, sinusoidal_encoding
from ..grad.spectral import istft_op, stft_op
from ..grad.tensor import DiffArray, no_grad
from ..models.configs import SamplerConfig, VocoderConfig, VocoderTrainConfig
from .flowmatch import euler_sample, fm_data_loss, make_path_sample
from .latent_providers import LatentProvider, LatentSeq
from .training import history_summary, train_loop

logger = logging.getLogger(__name__)

TIME_SCALE = 1000.0
PRELU_INIT = 0.25


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

class BiasNorm(Module):
    """y = x * exp(gamma) / RMS(x - b), statistics over the channel axis of (B, C, T)."""

    def __init__(self, channels: int, eps: float = 1e-8, dtype=np.float32):
        self.bias = param(np.zeros(channels, dtype))
        self.log_scale = param(np.zeros(1, dtype))
        self.eps = eps

    def __call__(self, x: DiffArray) -> DiffArray:
        b = ops.broadcast_to(ops.reshape(self.bias, (1, -1, 1)), x.shape)
        denom = ops.broadcast_to(ops.rms(ops.sub(x, b), axis=1, eps=self.eps), x.shape)
        return ops.mul(ops.div(x, denom), ops.exp(self.log_scale))


class ChannelLayerNorm(Module):
    """Layer norm over the channel axis of (B, C, T) with a per-channel affine."""

    def __init__(self, channels: int, eps: float = 1e-6, dtype=np.float32):
        self.scale = param(np.ones(channels, dtype))
        self.shift = param(np.zeros(channels, dtype))
        self.eps = eps

    def __call__(self, x: DiffArray) -> DiffArray:
        y = ops.layer_norm(x, axis=1, eps=self.eps)
        y = ops.mul(y, ops.broadcast_to(ops.reshape(self.scale, (1, -1, 1)), x.shape))
        return ops.add(y, ops.broadcast_to(ops.reshape(self.shift, (1, -1, 1)), x.shape))


class ConvNeXtBlock(Module):
    """Depthwise conv, optional modulation, pointwise expand / PReLU / project, residual."""

    def __init__(self, channels: int, kernel: int, expansion: int, rng: np.random.Generator,
                 dtype=np.float32):
        hidden = channels * expansion
        self.dw = Conv1d(channels, channels, kernel, rng, groups=channels, dtype=dtype)
        self.pw1 = Conv1d(channels, hidden, 1, rng, dtype=dtype)
        self.alpha = param(np.full(hidden, PRELU_INIT, dtype))
        self.pw2 = Conv1d(hidden, channels, 1, rng, dtype=dtype)

    def __call__(self, x: DiffArray, modulate: Optional[Callable[[DiffArray], DiffArray]] = None) -> DiffArray:
        h = self.dw(x)
        if modulate is not None:
            h = modulate(h)
        h = self.pw2(ops.prelu(self.pw1(h), self.alpha, axis=1))
        return ops.add(x, h)


def time_features(t: np.ndarray, dim: int, dtype) -> DiffArray:
    """SinPE of the flow time, scaled so t in [0, 1] spans useful frequencies."""
    return DiffArray(sinusoidal_encoding(np.asarray(t) * TIME_SCALE, dim).astype(dtype))


def film_modulate(
    x_hidden: DiffArray,
    t_features: DiffArray,
    latents: DiffArray,
    p_time: Callable[[DiffArray], DiffArray],
    p_latents: Callable[[DiffArray], DiffArray],
) -> DiffArray:
    """x' = x * (1 + P_time(t)) + P_latents(L'), t_emb broadcast over time."""
    t_emb = p_time(t_features)
    batch, width, frames = x_hidden.shape
    if t_emb.shape != (batch, width):
        raise ContractViolation('film_modulate', f"t_emb {t_emb.shape} does not match hidden {x_hidden.shape}")
    lat = p_latents(latents)
    if lat.shape != x_hidden.shape:
        raise ContractViolation('film_modulate', f"latent term {lat.shape} does not match hidden {x_hidden.shape}")
    gain = ops.broadcast_to(ops.reshape(ops.add(t_emb, 1.0), (batch, width, 1)), x_hidden.shape)
    return ops.add(ops.mul(x_hidden, gain), lat)


class FilmProjection(Module):
    """Per-block P_time (linear) and P_latents (1x1 conv), both zero-initialized."""

    def __init__(self, width: int, time_dim: int, cond_width: int, rng: np.random.Generator, dtype=np.float32):
        self.p_time = Linear(time_dim, width, rng, zero_init=True, dtype=dtype)
        self.p_latents = Conv1d(cond_width, width, 1, rng, zero_init=True, dtype=dtype)

    def modulator(self, t_features: DiffArray, latents: DiffArray) -> Callable[[DiffArray], DiffArray]:
        return lambda h: film_modulate(h, t_features, latents, self.p_time, self.p_latents)


class Conditioner(Module):
    """Projection conv, BiasNorm (or layer norm), ConvNeXt stack."""

    def __init__(self, cfg: VocoderConfig, rng: np.random.Generator, dtype=np.float32):
        width = cfg.conditioner_width
        self.latent_dim = cfg.latent_dim
        self.proj = Conv1d(cfg.latent_dim, width, cfg.kernel_size, rng, dtype=dtype)
        self.norm = BiasNorm(width, dtype=dtype) if cfg.norm == 'biasnorm' else ChannelLayerNorm(width, dtype=dtype)
        self.blocks = [ConvNeXtBlock(width, cfg.kernel_size, cfg.expansion, rng, dtype=dtype)
                       for _ in range(cfg.conditioner_blocks)]

    def __call__(self, latents: DiffArray) -> DiffArray:
        if latents.ndim != 3 or latents.shape[1] != self.latent_dim:
            raise ContractViolation('condition_latents',
                                    f"expected (B, {self.latent_dim}, T) latents, got {latents.shape}")
        h = self.norm(self.proj(latents))
        for block in self.blocks:
            h = block(h)
        return h


class Branch(Module):
    """One spectral resolution: STFT -> embed -> modulated ConvNeXt stack -> head -> iSTFT."""

    def __init__(self, plan: StftPlan, width: int, ratio: int, cfg: VocoderConfig,
                 rng: np.random.Generator, dtype=np.float32):
        coef = 2 * plan.bins
        self.plan = plan
        self.ratio = ratio
        self.embed = Conv1d(coef, width, cfg.kernel_size, rng, dtype=dtype)
        self.blocks = [ConvNeXtBlock(width, cfg.kernel_size, cfg.expansion, rng, dtype=dtype)
                       for _ in range(cfg.branch_blocks)]
        self.films = [FilmProjection(width, cfg.time_embed_dim, cfg.conditioner_width, rng, dtype=dtype)
                      for _ in range(cfg.branch_blocks)]
        self.head = Conv1d(width, coef, 1, rng, zero_init=True, dtype=dtype)

    def coefficients(self, x_t: DiffArray, t_features: DiffArray, cond: DiffArray) -> DiffArray:
        h = self.embed(stft_op(x_t, self.plan))
        cond_r = ops.repeat_frames(cond, self.ratio)
        if cond_r.shape[2] != h.shape[2]:
            raise ContractViolation('branch', f"latent frames {cond_r.shape[2]} != STFT frames {h.shape[2]}")
        for block, film in zip(self.blocks, self.films):
            h = block(h, film.modulator(t_features, cond_r))
        return self.head(h)

    def __call__(self, x_t: DiffArray, t_features: DiffArray, cond: DiffArray) -> DiffArray:
        return istft_op(self.coefficients(x_t, t_features, cond), self.plan, x_t.shape[1])


class VocoderModel(Module):
    """Conditioner, shared time MLP and R branches."""

    def __init__(self, cfg: VocoderConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.conditioner = Conditioner(cfg, rng, dtype=dtype)
        self.time_mlp = MLP(cfg.time_embed_dim, 2 * cfg.time_embed_dim, rng, dtype=dtype)
        self.plans = [StftPlan(h, cfg.sample_rate) for h in cfg.hops]
        self.branches = [
            Branch(plan, width, cfg.hop_max // plan.hop, cfg, rng, dtype=dtype)
            for plan, width in zip(self.plans, cfg.branch_widths)
        ]

    def condition(self, latents: np.ndarray) -> DiffArray:
        return self.conditioner(DiffArray(np.asarray(latents, dtype=self.dtype)))

    def predict(self, x_t: DiffArray, t: np.ndarray, cond: DiffArray) -> DiffArray:
        """x1 estimate, averaged over branches and trimmed to the input length."""
        batch, length = x_t.shape
        hop_max = self.cfg.hop_max
        padded_len = -(-length // hop_max) * hop_max
        if padded_len != length:
            pad = DiffArray(np.zeros((batch, padded_len - length), dtype=x_t.dtype))
            x_t = ops.concat([x_t, pad], axis=1)
        if cond.shape[2] * hop_max != padded_len:
            raise ContractViolation('predict_waveform',
                                    f"{cond.shape[2]} latent frames do not cover {padded_len} samples")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (batch,))
        t_features = self.time_mlp(time_features(t, self.cfg.time_embed_dim, x_t.dtype))

        outputs = [branch(x_t, t_features, cond) for branch in self.branches]
        total = outputs[0]
        for out in outputs[1:]:
            total = ops.add(total, out)
        y = ops.mul(total, 1.0 / len(outputs)) if len(outputs) > 1 else total
        return y if padded_len == length else ops.slice_(y, (slice(None), slice(0, length)))


def condition_latents(latents: LatentSeq, model: VocoderModel) -> DiffArray:
    return model.condition(latents.data)


def predict_waveform(x_t: DiffArray, t: np.ndarray, cond: DiffArray, model: VocoderModel) -> DiffArray:
    return model.predict(x_t, t, cond)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def segment_length(cfg: VocoderConfig, seconds: float) -> int:
    samples = int(round(seconds * cfg.sample_rate))
    return (samples // cfg.hop_max) * cfg.hop_max


def _training_waves(clips: Sequence[AudioClip], seg_len: int) -> List[np.ndarray]:
    """Clip samples, each long enough for one training segment."""
    waves = []
    for clip in clips:
        if len(clip) < seg_len:
            raise CorpusError(f"clip of {len(clip)} samples is shorter than the {seg_len}-sample training segment")
        waves.append(np.asarray(clip.samples))
    return waves


def train_vocoder(
    clips: Sequence[AudioClip],
    provider: LatentProvider,
    cfg: VocoderConfig,
    train: VocoderTrainConfig,
    latents: Optional[LatentSeq] = None,
    dtype=np.float32,
) -> Checkpoint:
    """
    Train the generator on random segments of ``clips``.

    ``objective='flow'`` is the flow-matching data-prediction loss with
    energy weights at hop_max; ``objective='recon'`` trains the same backbone
    as a deterministic regressor (zero input, t = 0, plain MSE).
    """
    if not clips:
        raise CorpusError("vocoder training needs a non-empty corpus")
    if abs(provider.frame_rate - cfg.frame_rate) > 1e-9:
        raise ProviderMismatchError(
            f"{cfg.frame_rate:g} frames/s", f"{provider.frame_rate:g} frames/s",
            "latent frame rate must equal sample_rate / hop_max",
        )
    if provider.dim != cfg.latent_dim:
        raise ConfigurationError('latent_dim', cfg.latent_dim, f"provider {provider.tag} emits {provider.dim}")

    seg_len = segment_length(cfg, train.segment_seconds)
    if seg_len < 4 * cfg.hop_max:
        raise ConfigurationError('segment_seconds', train.segment_seconds, "segment shorter than the largest window")
    seg_frames = seg_len // cfg.hop_max
    if latents is None:
        latents = provider.encode_many(clips)
    waves = _training_waves(clips, seg_len)
    lat = latents.data

    model = VocoderModel(cfg, seed=train.seed, dtype=dtype)
    batch = min(train.batch_size, len(clips))

    def draw(rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        idx = rng.choice(len(clips), size=batch, replace=len(clips) < batch)
        x1 = np.empty((batch, seg_len), dtype=dtype)
        cond = np.empty((batch, lat.shape[1], seg_frames), dtype=dtype)
        for row, i in enumerate(idx):
            max_start = min(len(waves[i]) - seg_len, (lat.shape[2] - seg_frames) * cfg.hop_max)
            start = int(rng.integers(0, max_start // cfg.hop_max + 1)) if max_start > 0 else 0
            x1[row] = waves[i][start * cfg.hop_max:start * cfg.hop_max + seg_len]
            cond[row] = lat[i, :, start:start + seg_frames]
        return x1, cond

    def flow_loss(step: int, rng: np.random.Generator) -> DiffArray:
        x1, cond = draw(rng)
        sample = make_path_sample(x1, rng, sigma=train.sigma)
        pred = model.predict(DiffArray(sample.x_t), sample.t, model.condition(cond))
        if train.energy_weighting:
            weights = np.stack([frame_energy(row, cfg.hop_max) for row in x1])
        else:
            weights = np.ones((batch, seg_frames))
        return fm_data_loss(pred, x1, weights, cfg.hop_max)

    def recon_loss(step: int, rng: np.random.Generator) -> DiffArray:
        x1, cond = draw(rng)
        zeros = DiffArray(np.zeros_like(x1))
        pred = model.predict(zeros, np.zeros(batch), model.condition(cond))
        return ops.mse(pred, x1)

    stage = 'train-vocoder' if train.objective == 'flow' else 'train-recon'
    logger.info("Training %s on %d clips (provider %s, %d parameters)",
                stage, len(clips), provider.tag, model.parameter_count(), extra={'stage': stage})
    history = train_loop(model, flow_loss if train.objective == 'flow' else recon_loss,
                         train, stage, rng=np.random.default_rng(train.seed))

    meta = {
        'kind': 'vocoder',
        'objective': train.objective,
        'provider': provider.tag,
        'frame_rate': provider.frame_rate,
        'provider_meta': provider.metadata(),
        'config': cfg.model_dump(mode='json'),
        'train': train.model_dump(mode='json'),
        'plans': [p.to_dict() for p in model.plans],
        'seed': train.seed,
        'history': history_summary(history, train.log_every),
    }
    return Checkpoint(model.state_dict(), meta)


def load_vocoder(ckpt: Checkpoint) -> VocoderModel:
    if ckpt.kind != 'vocoder':
        raise ConfigurationError('checkpoint', ckpt.kind, "expected a vocoder checkpoint")
    model = VocoderModel(VocoderConfig(**ckpt.meta['config']), seed=ckpt.meta.get('seed', 0))
    model.load_state_dict(ckpt.tensors)
    return model


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def _check_tag(latents: LatentSeq, ckpt: Checkpoint) -> None:
    if latents.provider != ckpt.provider:
        raise ProviderMismatchError(ckpt.provider, latents.provider, "latents and vocoder come from different providers")


def initial_noise(batch: int, length: int, seed: int, sigma: float = 1.0) -> np.ndarray:
    """Per-row noise drawn from seed + row, independent of batch composition."""
    return np.stack([sigma * np.random.default_rng(seed + i).standard_normal(length) for i in range(batch)])


def vocode_batch(
    latents: LatentSeq,
    ckpt: Checkpoint,
    sampler: SamplerConfig,
    model: Optional[VocoderModel] = None,
) -> np.ndarray:
    """(B, T * hop_max) waveforms for a batch of latents."""
    _check_tag(latents, ckpt)
    model = model or load_vocoder(ckpt)
    length = latents.frames * model.cfg.hop_max

    with no_grad(), PerformanceLogger(logger, 'vocode', stage='vocode', clips=latents.batch):
        cond = model.condition(latents.data)
        if ckpt.meta.get('objective') == 'recon':
            zeros = DiffArray(np.zeros((latents.batch, length), dtype=model.dtype))
            return np.array(model.predict(zeros, np.zeros(latents.batch), cond).values)
        uncond = model.condition(np.zeros_like(latents.data)) if sampler.guidance_scale != 1.0 else None

        def flow_model(x, t, c):
            return model.predict(DiffArray(x), t, c)

        x0 = initial_noise(latents.batch, length, sampler.seed, sampler.sigma)
        return euler_sample(flow_model, cond, sampler, uncond=uncond, x0=x0, dtype=model.dtype)


def vocode(latents: LatentSeq, ckpt: Checkpoint, sampler: SamplerConfig,
           model: Optional[VocoderModel] = None) -> AudioClip:
    """Synthesize one clip from a single latent sequence."""
    if latents.batch != 1:
        raise ContractViolation('vocode', f"expected one latent sequence, got batch {latents.batch}")
    wave = vocode_batch(latents, ckpt, sampler, model=model)[0]
    return AudioClip(wave.astype(np.float64), int(ckpt.meta['config']['sample_rate']))


# ---------------------------------------------------------------------------
# Finite-difference check on a tiny configuration
# ---------------------------------------------------------------------------

TINY_CONFIG = dict(sample_rate=800, hops=(16, 8), branch_widths=(6, 4), branch_blocks=2,
                   conditioner_width=6, conditioner_blocks=1, time_embed_dim=6, latent_dim=3,
                   kernel_size=3, expansion=2)


def randomize_parameters(model: Module, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Replace every parameter (including zero-initialized ones) with small random values."""
    for p in model.parameters():
        p.values = (scale * rng.standard_normal(p.shape)).astype(p.dtype)


def tiny_gradcheck(seed: int = 0):
    """fm_data_loss through predict_waveform on a float64 two-block model."""
    from ..grad.gradcheck import check_module

    cfg = VocoderConfig(**TINY_CONFIG)
    model = VocoderModel(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    randomize_parameters(model, rng)
    length = 4 * cfg.hop_max
    x1 = rng.standard_normal((2, length))
    lat = rng.standard_normal((2, cfg.latent_dim, length // cfg.hop_max))
    sample = make_path_sample(x1, rng, t=np.array([0.3, 0.7]))
    weights = np.stack([frame_energy(row, cfg.hop_max) for row in x1])

    def loss() -> DiffArray:
        pred = model.predict(DiffArray(sample.x_t), sample.t, model.condition(lat))
        return fm_data_loss(pred, x1, weights, cfg.hop_max)

    return check_module('vocoder', loss, model.named_parameters(), seed=seed)


def branch_outputs(model: VocoderModel, x_t: np.ndarray, t: np.ndarray, latents: np.ndarray) -> Dict[int, np.ndarray]:
    """Per-branch waveforms (before averaging), keyed by hop."""
    with no_grad():
        cond = model.condition(latents)
        tf = model.time_mlp(time_features(np.asarray(t).reshape(-1), model.cfg.time_embed_dim, model.dtype))
        x = DiffArray(np.asarray(x_t, dtype=model.dtype))
        return {b.plan.hop: np.array(b(x, tf, cond).values) for b in model.branches}
