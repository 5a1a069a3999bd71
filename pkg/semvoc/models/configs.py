"""
Pydantic configuration models for every pipeline stage.

Defaults are the desk-scale operating points; ``from_profile`` constructors
pull the shape constants from ``semvoc.config.profiles``.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config.profiles import (
    CAPTION_DROP_PROB,
    DIT_GUIDANCE_SCALE,
    DIT_STEPS,
    VOCODER_STEPS,
    default_log_every,
    get_profile,
)

GeneratorKind = Literal[
    'sine', 'chirp-up', 'chirp-down', 'am-tone', 'square', 'harmonic-stack', 'noise-burst', 'click-train'
]
Bucket = Literal['low', 'mid', 'high']

BUCKET_HZ = {'low': 220.0, 'mid': 440.0, 'high': 880.0}


class SamplerConfig(BaseModel):
    """Euler ODE sampler settings shared by the vocoder and the DiT."""
    model_config = ConfigDict(frozen=True)

    steps: int = Field(VOCODER_STEPS, ge=1)
    guidance_scale: float = 1.0
    sigma: float = Field(1.0, gt=0)
    prediction_kind: Literal['velocity', 'data'] = 'data'
    seed: int = 0


def dit_sampler(**overrides) -> SamplerConfig:
    """Sampler defaults for latent generation."""
    values = {'steps': DIT_STEPS, 'guidance_scale': DIT_GUIDANCE_SCALE, 'prediction_kind': 'velocity'}
    values.update(overrides)
    return SamplerConfig(**values)


class VocoderConfig(BaseModel):
    """Generator architecture: conditioner plus R multi-resolution branches."""

    sample_rate: int = 8000
    hops: Tuple[int, ...] = (100, 50, 25)
    branch_widths: Tuple[int, ...] = (96, 64, 48)
    branch_blocks: int = Field(4, ge=1)
    conditioner_width: int = 64
    conditioner_blocks: int = Field(2, ge=0)
    time_embed_dim: int = 32
    latent_dim: int = 64
    kernel_size: int = 7
    expansion: int = Field(2, ge=1)
    norm: Literal['biasnorm', 'layernorm'] = 'biasnorm'

    @model_validator(mode='after')
    def check_branches(self) -> 'VocoderConfig':
        if not self.hops or len(self.hops) != len(self.branch_widths):
            raise ValueError("hops and branch_widths must be non-empty and equally long")
        if any(h <= 0 for h in self.hops) or any(w <= 0 for w in self.branch_widths):
            raise ValueError("hops and widths must be positive")
        hop_max = max(self.hops)
        if any(hop_max % h for h in self.hops):
            raise ValueError(f"hop ratios must be integers w.r.t. hop_max={hop_max}")
        return self

    @property
    def hop_max(self) -> int:
        return max(self.hops)

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_max

    @classmethod
    def from_profile(cls, name: str = 'desk', **overrides) -> 'VocoderConfig':
        profile = get_profile(name)
        values = {key: profile[key] for key in (
            'sample_rate', 'hops', 'branch_widths', 'branch_blocks', 'conditioner_width',
            'conditioner_blocks', 'time_embed_dim', 'latent_dim')}
        values.update(overrides)
        return cls(**values)


class TrainSchedule(BaseModel):
    """Optimizer, schedule and logging settings common to all training loops."""

    steps: int = Field(20000, ge=1)
    batch_size: int = Field(4, ge=1)
    lr: float = Field(1e-3, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    warmup_steps: int = Field(0, ge=0)
    warmup_start_ratio: float = Field(0.1, gt=0, le=1)
    decay_after: int = Field(0, ge=0)
    max_grad_norm: float = Field(1.0, ge=0)
    seed: int = 0
    log_every: int = Field(default_factory=default_log_every, ge=1)


class VocoderTrainConfig(TrainSchedule):
    lr: float = Field(2e-3, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    warmup_steps: int = Field(500, ge=0)
    decay_after: int = Field(7500, ge=0)
    segment_seconds: float = Field(1.6, gt=0)
    sigma: float = Field(1.0, gt=0)
    energy_weighting: bool = True
    objective: Literal['flow', 'recon'] = 'flow'


class DitConfig(BaseModel):
    """Text-to-latent transformer shape."""

    latent_dim: int = 64
    width: int = 64
    blocks: int = Field(2, ge=1)
    heads: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    time_embed_dim: int = 32
    max_caption_len: int = Field(4, ge=1)
    vocabulary: List[str] = Field(default_factory=list)

    @model_validator(mode='after')
    def check_heads(self) -> 'DitConfig':
        if self.width % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide width ({self.width})")
        return self

    @classmethod
    def from_profile(cls, name: str = 'desk', **overrides) -> 'DitConfig':
        profile = get_profile(name)
        values = {
            'latent_dim': profile['latent_dim'],
            'width': profile['dit_width'],
            'blocks': profile['dit_blocks'],
            'heads': profile['dit_heads'],
            'time_embed_dim': profile['time_embed_dim'],
        }
        values.update(overrides)
        return cls(**values)


class DitTrainConfig(TrainSchedule):
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(16, ge=1)
    warmup_steps: int = Field(200, ge=0)
    drop_prob: float = Field(CAPTION_DROP_PROB, ge=0, le=1)
    sigma: float = Field(1.0, gt=0)
    standardize: bool = False


class MaeConfig(BaseModel):
    """Toy masked-autoencoder encoder over log-mel patches."""

    mask_ratio: float = Field(0.75, gt=0, lt=1)
    patch_freq: int = Field(64, ge=1)
    patch_time: int = Field(1, ge=1)
    encoder_depth: int = Field(2, ge=1)
    encoder_width: int = 64
    heads: int = Field(4, ge=1)
    decoder_width: int = 32
    steps: int = Field(2000, ge=1)
    batch_size: int = Field(8, ge=1)
    lr: float = Field(1e-3, gt=0)
    seed: int = 0
    log_every: int = Field(default_factory=default_log_every, ge=1)

    @field_validator('encoder_width', 'decoder_width')
    @classmethod
    def check_width(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("widths must be positive")
        return v

    @model_validator(mode='after')
    def check_heads(self) -> 'MaeConfig':
        if self.encoder_width % self.heads or self.decoder_width % self.heads:
            raise ValueError("heads must divide encoder and decoder widths")
        return self

    def visible_count(self, num_patches: int) -> int:
        return int(num_patches * (1.0 - self.mask_ratio))


class ClassSpec(BaseModel):
    name: str
    kind: GeneratorKind
    bucket: Optional[Bucket] = None

    @property
    def caption(self) -> str:
        return f"{self.name} {self.bucket}" if self.bucket else self.name

    @property
    def frequency(self) -> float:
        return BUCKET_HZ[self.bucket or 'mid']


def default_classes() -> List[ClassSpec]:
    return [
        ClassSpec(name='sine', kind='sine', bucket='mid'),
        ClassSpec(name='chirp-up', kind='chirp-up', bucket='mid'),
        ClassSpec(name='chirp-down', kind='chirp-down', bucket='mid'),
        ClassSpec(name='am-tone', kind='am-tone', bucket='low'),
        ClassSpec(name='square', kind='square', bucket='low'),
        ClassSpec(name='harmonic-stack', kind='harmonic-stack', bucket='high'),
        ClassSpec(name='noise-burst', kind='noise-burst', bucket='high'),
        ClassSpec(name='click-train', kind='click-train', bucket='low'),
    ]


class CorpusSpec(BaseModel):
    """Deterministic synthetic corpus description."""

    classes: List[ClassSpec] = Field(default_factory=default_classes)
    clips_per_class: int = Field(50, ge=1)
    clip_seconds: float = Field(1.6, gt=0)
    sample_rate: int = Field(8000, gt=0)
    snr_db: float = 30.0
    seed: int = 0
    test_fraction: float = Field(0.2, gt=0, lt=1)

    @field_validator('classes')
    @classmethod
    def check_classes(cls, v: List[ClassSpec]) -> List[ClassSpec]:
        if not v:
            raise ValueError("corpus needs at least one class")
        names = [c.caption for c in v]
        if len(set(names)) != len(names):
            raise ValueError("class captions must be unique")
        return v

    @property
    def num_samples(self) -> int:
        return int(round(self.clip_seconds * self.sample_rate))


class ProbeConfig(BaseModel):
    steps: int = Field(2000, ge=1)
    lr: float = Field(0.1, gt=0)
    test_fraction: float = Field(0.2, gt=0, lt=1)
    seed: int = 0


class SweepConfig(BaseModel):
    cfg_grid: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.5, 5.0])
    step_grid: List[int] = Field(default_factory=lambda: [10, 25, 50, 100])
    vocoder_steps: int = Field(VOCODER_STEPS, ge=1)
    seed: int = 0

    @field_validator('cfg_grid', 'step_grid')
    @classmethod
    def non_empty(cls, v):
        if not v:
            raise ValueError("grid must not be empty")
        return v
