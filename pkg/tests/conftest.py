"""
Pytest Configuration and Fixtures

Provides shared fixtures for testing semvoc components.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Set test environment
os.environ['SEMVOC_LOG_LEVEL'] = 'ERROR'  # Reduce log noise in tests
os.environ['SEMVOC_PROFILE'] = 'desk'
os.environ['SEMVOC_MAX_WORKERS'] = '2'
os.environ['SEMVOC_PROGRESS'] = 'false'


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help="run training-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


# ============================================================================
# Signal Fixtures
# ============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def sine_clip():
    """0.5 s of a 440 Hz sine at 8 kHz"""
    from semvoc.dsp.wav_io import AudioClip

    t = np.arange(4000) / 8000.0
    return AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), 8000, label='sine')


@pytest.fixture
def tiny_corpus_spec():
    """Two classes, few short clips: enough for splits and probes"""
    from semvoc.models.configs import ClassSpec, CorpusSpec

    return CorpusSpec(
        classes=[
            ClassSpec(name='sine', kind='sine', bucket='mid'),
            ClassSpec(name='square', kind='square', bucket='low'),
        ],
        clips_per_class=5,
        clip_seconds=0.2,
        sample_rate=8000,
        seed=0,
    )


@pytest.fixture
def tiny_corpus(tmp_path, tiny_corpus_spec):
    """A written tiny corpus directory"""
    from semvoc.services.corpus_service import synth_corpus

    out = tmp_path / 'corpus'
    synth_corpus(tiny_corpus_spec, out)
    return out


# ============================================================================
# Environment
# ============================================================================

@pytest.fixture
def reset_environment(monkeypatch):
    """Clear SEMVOC_* overrides a test may set"""
    for key in list(os.environ):
        if key.startswith('SEMVOC_') and key not in ('SEMVOC_LOG_LEVEL', 'SEMVOC_PROFILE'):
            monkeypatch.delenv(key, raising=False)
    yield
