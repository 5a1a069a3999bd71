"""
Tests for the flow-matching vocoder (semvoc/services/vocoder_engine.py).

Everything runs on the tiny configuration: 800 Hz audio, hops (16, 8).
"""

import numpy as np
import pytest

from semvoc.dsp.wav_io import AudioClip
from semvoc.exceptions import ConfigurationError, ContractViolation, CorpusError, ProviderMismatchError
from semvoc.grad.checkpoint import Checkpoint
from semvoc.grad.tensor import DiffArray
from semvoc.models.configs import SamplerConfig, VocoderConfig, VocoderTrainConfig
from semvoc.services.latent_providers import MEL, ORACLE, LatentProvider, LatentSeq
from semvoc.services.vocoder_engine import (
    TINY_CONFIG,
    BiasNorm,
    VocoderModel,
    branch_outputs,
    initial_noise,
    load_vocoder,
    randomize_parameters,
    segment_length,
    tiny_gradcheck,
    train_vocoder,
    vocode,
    vocode_batch,
)


@pytest.fixture
def tiny_cfg():
    return VocoderConfig(**TINY_CONFIG)


@pytest.fixture
def tiny_train():
    return VocoderTrainConfig(steps=2, batch_size=2, segment_seconds=0.16, warmup_steps=0, log_every=1)


@pytest.fixture
def mel_provider(tiny_cfg):
    return LatentProvider('mel', sample_rate=tiny_cfg.sample_rate, hop=tiny_cfg.hop_max, n_mels=tiny_cfg.latent_dim)


@pytest.fixture
def clips():
    t = np.arange(320) / 800.0
    return [AudioClip(0.5 * np.sin(2 * np.pi * f * t), 800, label='sine') for f in (50.0, 100.0, 150.0)]


@pytest.fixture
def trained(clips, mel_provider, tiny_cfg, tiny_train):
    return train_vocoder(clips, mel_provider, tiny_cfg, tiny_train)


@pytest.mark.unit
class TestConfig:

    def test_hop_ratios_must_be_integers(self):
        with pytest.raises(ValueError):
            VocoderConfig(hops=(100, 30), branch_widths=(8, 8))

    def test_branch_lists_must_match(self):
        with pytest.raises(ValueError):
            VocoderConfig(hops=(100, 50), branch_widths=(8,))

    def test_frame_rate(self, tiny_cfg):
        assert tiny_cfg.hop_max == 16
        assert tiny_cfg.frame_rate == 50.0

    def test_segment_length_is_whole_frames(self, tiny_cfg):
        assert segment_length(tiny_cfg, 0.17) == 128


@pytest.mark.unit
class TestModel:

    def test_zero_initialized_heads_predict_silence(self, tiny_cfg, rng):
        model = VocoderModel(tiny_cfg, seed=0)
        cond = model.condition(rng.standard_normal((2, 3, 4)))
        out = model.predict(DiffArray(rng.standard_normal((2, 64)).astype(np.float32)), np.array([0.2, 0.8]), cond)
        assert out.shape == (2, 64)
        np.testing.assert_array_equal(out.values, 0.0)

    def test_short_input_is_padded_and_trimmed(self, tiny_cfg, rng):
        model = VocoderModel(tiny_cfg, seed=0, dtype=np.float64)
        randomize_parameters(model, rng)
        cond = model.condition(rng.standard_normal((1, 3, 4)))
        out = model.predict(DiffArray(rng.standard_normal((1, 60))), np.array([0.5]), cond)
        assert out.shape == (1, 60)
        assert np.all(np.isfinite(out.values))

    def test_latent_frames_must_cover_input(self, tiny_cfg, rng):
        model = VocoderModel(tiny_cfg, seed=0)
        cond = model.condition(rng.standard_normal((1, 3, 3)))
        with pytest.raises(ContractViolation):
            model.predict(DiffArray(np.zeros((1, 64), dtype=np.float32)), np.array([0.5]), cond)

    def test_latent_dim_checked(self, tiny_cfg):
        with pytest.raises(ContractViolation):
            VocoderModel(tiny_cfg).condition(np.zeros((1, 5, 4)))

    def test_branches_average_to_prediction(self, tiny_cfg, rng):
        model = VocoderModel(tiny_cfg, seed=0, dtype=np.float64)
        randomize_parameters(model, rng)
        x = rng.standard_normal((1, 64))
        lat = rng.standard_normal((1, 3, 4))
        per_branch = branch_outputs(model, x, np.array([0.4]), lat)
        assert set(per_branch) == {16, 8}
        full = model.predict(DiffArray(x), np.array([0.4]), model.condition(lat)).values
        np.testing.assert_allclose(full, (per_branch[16] + per_branch[8]) / 2, atol=1e-12)

    def test_biasnorm_output_scale(self, rng):
        norm = BiasNorm(4, dtype=np.float64)
        y = norm(DiffArray(5.0 * rng.standard_normal((2, 4, 6)))).values
        np.testing.assert_allclose(np.sqrt(np.mean(y ** 2, axis=1)), 1.0, rtol=1e-6)

    def test_layernorm_variant(self, rng):
        cfg = VocoderConfig(**{**TINY_CONFIG, 'norm': 'layernorm'})
        cond = VocoderModel(cfg).condition(rng.standard_normal((1, 3, 4)))
        assert cond.shape == (1, cfg.conditioner_width, 4)


@pytest.mark.gradcheck
def test_tiny_vocoder_gradients():
    result = tiny_gradcheck(seed=0)
    assert result.passed, result.to_dict()


@pytest.mark.unit
class TestTraining:

    def test_checkpoint_metadata(self, trained, tiny_cfg):
        assert trained.kind == 'vocoder'
        assert trained.provider == MEL
        assert trained.meta['objective'] == 'flow'
        assert [p['hop'] for p in trained.meta['plans']] == [16, 8]
        assert trained.meta['history']['steps'] == 2

    def test_reload_matches(self, trained, tmp_path):
        loaded = Checkpoint.load(trained.save(tmp_path / 'v.fvck'), kind='vocoder')
        model = load_vocoder(loaded)
        assert model.cfg.hops == (16, 8)

    def test_provider_dim_mismatch(self, clips, tiny_cfg, tiny_train):
        provider = LatentProvider('mel', sample_rate=800, hop=16, n_mels=5)
        with pytest.raises(ConfigurationError):
            train_vocoder(clips, provider, tiny_cfg, tiny_train)

    def test_frame_rate_mismatch(self, clips, tiny_cfg, tiny_train):
        provider = LatentProvider('mel', sample_rate=800, hop=8, n_mels=3)
        with pytest.raises(ProviderMismatchError):
            train_vocoder(clips, provider, tiny_cfg, tiny_train)

    def test_clip_shorter_than_segment(self, mel_provider, tiny_cfg, tiny_train):
        short = [AudioClip(np.zeros(100), 800)]
        with pytest.raises(CorpusError, match="shorter"):
            train_vocoder(short, mel_provider, tiny_cfg, tiny_train)

    def test_empty_corpus(self, mel_provider, tiny_cfg, tiny_train):
        with pytest.raises(CorpusError):
            train_vocoder([], mel_provider, tiny_cfg, tiny_train)

    def test_recon_objective(self, clips, mel_provider, tiny_cfg, tiny_train):
        ckpt = train_vocoder(clips, mel_provider, tiny_cfg, tiny_train.model_copy(update={'objective': 'recon'}))
        assert ckpt.meta['objective'] == 'recon'
        latents = mel_provider.encode(clips[0])
        a = vocode_batch(latents, ckpt, SamplerConfig(steps=3, seed=0))
        b = vocode_batch(latents, ckpt, SamplerConfig(steps=3, seed=9))
        np.testing.assert_array_equal(a, b)


@pytest.mark.unit
class TestInference:

    def test_initial_noise_rows_are_independent_of_batch(self):
        big = initial_noise(3, 10, seed=4)
        small = initial_noise(1, 10, seed=5)
        np.testing.assert_array_equal(big[1], small[0])

    def test_vocode_shape(self, trained, clips, mel_provider):
        clip = vocode(mel_provider.encode(clips[0]), trained, SamplerConfig(steps=2))
        assert clip.sample_rate == 800
        assert len(clip) == 20 * 16

    def test_vocode_is_deterministic(self, trained, clips, mel_provider):
        latents = mel_provider.encode_many(clips[:2])
        a = vocode_batch(latents, trained, SamplerConfig(steps=2, seed=1, guidance_scale=2.0))
        b = vocode_batch(latents, trained, SamplerConfig(steps=2, seed=1, guidance_scale=2.0))
        np.testing.assert_array_equal(a, b)

    def test_provider_tag_mismatch(self, trained):
        latents = LatentSeq(np.zeros((1, 3, 4)), 50.0, ORACLE)
        with pytest.raises(ProviderMismatchError):
            vocode_batch(latents, trained, SamplerConfig(steps=1))

    def test_vocode_needs_single_sequence(self, trained):
        with pytest.raises(ContractViolation):
            vocode(LatentSeq(np.zeros((2, 3, 4)), 50.0, MEL), trained, SamplerConfig(steps=1))
