from .energy import frame_energy, sample_weights
from .mel import MelConfig, mel, patch_grid, patchify, unpatchify
from .stft import (
    SpectroFrame,
    StftPlan,
    cola_deviation,
    istft,
    istft_adjoint,
    stft,
    stft_adjoint,
)
from .wav_io import AudioClip, read_wav, write_wav

__all__ = [
    'AudioClip', 'MelConfig', 'SpectroFrame', 'StftPlan',
    'cola_deviation', 'frame_energy', 'istft', 'istft_adjoint', 'mel',
    'patch_grid', 'patchify', 'read_wav', 'sample_weights', 'stft',
    'stft_adjoint', 'unpatchify', 'write_wav',
]
