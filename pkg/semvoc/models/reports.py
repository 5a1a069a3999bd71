from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field


class ManifestRow(BaseModel):
    """One corpus clip as written to manifest.jsonl"""
    model_config = ConfigDict(populate_by_name=True)

    clip_id: str
    path: str
    label: str = Field(..., alias='class')
    caption: str
    seed: int
    split: str = 'train'

    def to_json_dict(self) -> dict:
        return self.model_dump(by_alias=True)


class ProbeResult(BaseModel):
    """Linear-probe outcome on one split"""
    accuracy: float = Field(..., ge=0, le=1)
    per_class_accuracy: Dict[str, float]
    split_seed: int
    provider: str
    n_train: int
    n_test: int
    source: str = 'encoder'


class ReconRow(BaseModel):
    clip_id: str
    label: str
    split: str
    system: str
    mel_distance: float
    stft_distance: float
    waveform_l1: float


class FrechetRow(BaseModel):
    system: str
    split: str
    provider: str
    frechet_distance: float
    n_generated: int
    n_reference: int


class SweepRow(BaseModel):
    guidance_scale: float
    steps: int
    split: str
    frechet_distance: float
    caption_accuracy: float
    n_clips: int


class ProjectionRow(BaseModel):
    clip_id: str
    label: str
    pc1: float
    pc2: float
    explained_pc1: Optional[float] = None
    explained_pc2: Optional[float] = None
