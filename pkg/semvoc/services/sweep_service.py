"""
Caption-to-waveform generation and the guidance / step sweep.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from ..config.logging_config import PerformanceLogger
from ..dsp.wav_io import AudioClip
from ..exceptions import ConfigurationError
from ..grad.checkpoint import Checkpoint
from ..models.configs import SamplerConfig, SweepConfig, dit_sampler
from ..models.reports import SweepRow
from .dit_engine import DitModel, generate_latents, load_dit
from .evaluation_service import CaptionJudge, FrechetFeaturizer, internal_frechet
from .latent_providers import LatentSeq
from .vocoder_engine import VocoderModel, load_vocoder, vocode_batch

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 16


def vocode_chunked(latents: LatentSeq, voc_ckpt: Checkpoint, sampler: SamplerConfig,
                   model: Optional[VocoderModel] = None, chunk: int = DEFAULT_CHUNK,
                   labels: Optional[Sequence[str]] = None) -> List[AudioClip]:
    """Vocode a latent batch in chunks; row i keeps the noise seed ``sampler.seed + i``."""
    model = model or load_vocoder(voc_ckpt)
    clips: List[AudioClip] = []
    sr = int(voc_ckpt.meta['config']['sample_rate'])
    for start in range(0, latents.batch, chunk):
        part = latents[start:start + chunk]
        chunk_sampler = sampler.model_copy(update={'seed': sampler.seed + start})
        waves = vocode_batch(part, voc_ckpt, chunk_sampler, model=model)
        for i, wave in enumerate(waves):
            label = labels[start + i] if labels is not None else None
            clips.append(AudioClip(wave.astype(np.float64), sr, label=label))
    return clips


def generate_audio(
    captions: Sequence[str],
    dit_ckpt: Checkpoint,
    voc_ckpt: Checkpoint,
    latent_sampler: SamplerConfig,
    wave_sampler: SamplerConfig,
    dit_model: Optional[DitModel] = None,
    voc_model: Optional[VocoderModel] = None,
    chunk: int = DEFAULT_CHUNK,
) -> List[AudioClip]:
    """Caption -> DiT latents -> vocoder waveform, one clip per caption."""
    dit_model = dit_model or load_dit(dit_ckpt)
    voc_model = voc_model or load_vocoder(voc_ckpt)
    clips: List[AudioClip] = []
    for start in range(0, len(captions), chunk):
        part = list(captions[start:start + chunk])
        lat_sampler = latent_sampler.model_copy(update={'seed': latent_sampler.seed + start})
        latents = generate_latents(part, dit_ckpt, lat_sampler, model=dit_model)
        wav_sampler = wave_sampler.model_copy(update={'seed': wave_sampler.seed + start})
        clips.extend(vocode_chunked(latents, voc_ckpt, wav_sampler, model=voc_model, chunk=chunk))
    return clips


def sweep(
    dit_ckpt: Checkpoint,
    voc_ckpt: Checkpoint,
    cfg: SweepConfig,
    captions: Sequence[str],
    labels: Sequence[str],
    reference: Sequence[AudioClip],
    judge: CaptionJudge,
    featurizer: FrechetFeaturizer,
    split: str = 'test',
    max_workers: int = 1,
) -> List[SweepRow]:
    """One row per (guidance scale, latent steps) grid point."""
    if not cfg.cfg_grid or not cfg.step_grid:
        raise ConfigurationError('grid', None, "sweep grids must not be empty")
    if len(captions) != len(labels):
        raise ConfigurationError('captions', len(captions), f"{len(labels)} labels given")
    dit_model = load_dit(dit_ckpt)
    voc_model = load_vocoder(voc_ckpt)
    wave_sampler = SamplerConfig(steps=cfg.vocoder_steps, seed=cfg.seed)

    rows: List[SweepRow] = []
    for scale in cfg.cfg_grid:
        for steps in cfg.step_grid:
            with PerformanceLogger(logger, 'sweep point', stage='sweep', guidance_scale=scale, steps=steps):
                latent_sampler = dit_sampler(steps=steps, guidance_scale=scale, seed=cfg.seed)
                clips = generate_audio(captions, dit_ckpt, voc_ckpt, latent_sampler, wave_sampler,
                                       dit_model=dit_model, voc_model=voc_model)
                row = SweepRow(
                    guidance_scale=scale,
                    steps=steps,
                    split=split,
                    frechet_distance=internal_frechet(clips, reference, featurizer, max_workers),
                    caption_accuracy=judge.accuracy(clips, labels),
                    n_clips=len(clips),
                )
            logger.info("sweep s=%g steps=%d fd=%.4f acc=%.3f", scale, steps, row.frechet_distance,
                        row.caption_accuracy, extra={'stage': 'sweep'})
            rows.append(row)
    return rows
