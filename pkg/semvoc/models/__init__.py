from .configs import (
    BUCKET_HZ,
    ClassSpec,
    CorpusSpec,
    DitConfig,
    DitTrainConfig,
    MaeConfig,
    ProbeConfig,
    SamplerConfig,
    SweepConfig,
    TrainSchedule,
    VocoderConfig,
    VocoderTrainConfig,
    default_classes,
    dit_sampler,
)
from .reports import FrechetRow, ManifestRow, ProbeResult, ProjectionRow, ReconRow, SweepRow

__all__ = [
    'BUCKET_HZ', 'ClassSpec', 'CorpusSpec', 'DitConfig', 'DitTrainConfig', 'FrechetRow',
    'MaeConfig', 'ManifestRow', 'ProbeConfig', 'ProbeResult', 'ProjectionRow', 'ReconRow',
    'SamplerConfig', 'SweepConfig', 'SweepRow', 'TrainSchedule', 'VocoderConfig',
    'VocoderTrainConfig', 'default_classes', 'dit_sampler',
]
