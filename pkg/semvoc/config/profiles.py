"""
Model Profiles for semvoc

Canonical definitions of the desk-scale and paper-scale model shapes.
Import from any module that needs these to avoid circular imports and ensure
a single source of truth.
"""

import os

# Desk scale keeps the 4:2:1 hop ratio of the full-size recipe at 8 kHz
DESK_PROFILE = {
    'sample_rate': 8000,
    'hops': (100, 50, 25),
    'branch_widths': (96, 64, 48),
    'branch_blocks': 4,
    'conditioner_width': 64,
    'conditioner_blocks': 2,
    'time_embed_dim': 32,
    'latent_dim': 64,
    'n_mels': 64,
    'segment_seconds': 1.6,
    'dit_blocks': 2,
    'dit_width': 64,
    'dit_heads': 4,
}

PAPER_PROFILE = {
    'sample_rate': 24000,
    'hops': (320, 160, 80),
    'branch_widths': (768, 512, 384),
    'branch_blocks': 8,
    'conditioner_width': 512,
    'conditioner_blocks': 4,
    'time_embed_dim': 128,
    'latent_dim': 768,
    'n_mels': 64,
    'segment_seconds': 1.6,
    'dit_blocks': 24,
    'dit_width': 1024,
    'dit_heads': 16,
}

PROFILES = {
    'desk': DESK_PROFILE,
    'paper': PAPER_PROFILE,
}

# Sampling operating points
VOCODER_STEPS = 200
DIT_STEPS = 100
DIT_GUIDANCE_SCALE = 3.5
CAPTION_DROP_PROB = 0.1

# Energy-aware loss weighting
ENERGY_GAMMA = 0.5
ENERGY_WEIGHT_MIN = 0.1
ENERGY_WEIGHT_MAX = 10.0

MEL_LOG_FLOOR = 1e-5
DATA_TIME_EPS = 1e-3


def default_profile_name() -> str:
    """Profile selected by SEMVOC_PROFILE, falling back to desk."""
    name = os.getenv('SEMVOC_PROFILE', 'desk').lower()
    return name if name in PROFILES else 'desk'


def default_log_every() -> int:
    """Training log interval from SEMVOC_LOG_EVERY (default 100)."""
    try:
        return max(1, int(os.getenv('SEMVOC_LOG_EVERY', '100')))
    except ValueError:
        return 100


def get_profile(name: str) -> dict:
    """Return a copy of the named profile's constants."""
    from ..exceptions import ConfigurationError

    if name not in PROFILES:
        raise ConfigurationError('profile', name, f"expected one of {sorted(PROFILES)}")
    return dict(PROFILES[name])
