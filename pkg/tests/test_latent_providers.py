"""Tests for the latent providers, latent dumps and the toy masked autoencoder."""

import numpy as np
import pytest

from semvoc.dsp.wav_io import AudioClip
from semvoc.exceptions import CheckpointError, ConfigurationError, ContractViolation, CorpusError, ProviderMismatchError
from semvoc.grad.checkpoint import Checkpoint
from semvoc.models.configs import MaeConfig
from semvoc.services.latent_providers import (
    MAE,
    MEL,
    ORACLE,
    LatentProvider,
    LatentSeq,
    dump_latent_dir,
    encode_acoustic_mel,
    encode_semantic_oracle,
    load_latent_dir,
    load_latents,
    provider_type_for,
    save_latents,
    tag_for,
)
from semvoc.services.mae_engine import (
    ENCODER_PREFIXES,
    clip_patches,
    mel_config_for,
    random_masking,
    standardized_patches,
    train_toy_mae,
)


@pytest.fixture
def tone():
    def make(freq, label, seconds=0.5):
        t = np.arange(int(8000 * seconds)) / 8000
        return AudioClip(0.5 * np.sin(2 * np.pi * freq * t), 8000, label=label)
    return make


@pytest.fixture
def tiny_mae_config():
    return MaeConfig(patch_freq=8, patch_time=1, encoder_depth=1, encoder_width=16, heads=2,
                     decoder_width=8, steps=3, batch_size=2, log_every=1)


@pytest.mark.unit
class TestLatentSeq:

    def test_two_dims_gain_batch(self):
        seq = LatentSeq(np.zeros((4, 6)), 80.0, MEL)
        assert (seq.batch, seq.dim, seq.frames) == (1, 4, 6)

    def test_rejects_non_finite(self):
        with pytest.raises(ContractViolation):
            LatentSeq(np.full((1, 2, 3), np.nan), 80.0, MEL)

    def test_pooled_and_index(self, rng):
        seq = LatentSeq(rng.standard_normal((3, 2, 5)), 80.0, ORACLE)
        np.testing.assert_allclose(seq.pooled(), seq.data.mean(axis=2))
        assert seq[1].batch == 1
        np.testing.assert_array_equal(seq[1].data[0], seq.data[1])

    def test_stack_rejects_mixed_providers(self):
        a = LatentSeq(np.zeros((1, 2, 3)), 80.0, ORACLE)
        b = LatentSeq(np.zeros((1, 2, 3)), 80.0, MEL)
        with pytest.raises(ProviderMismatchError) as info:
            LatentSeq.stack([a, b])
        assert info.value.exit_code == 6

    def test_stack_rejects_frame_mismatch(self):
        a = LatentSeq(np.zeros((1, 2, 3)), 80.0, MEL)
        b = LatentSeq(np.zeros((1, 2, 4)), 80.0, MEL)
        with pytest.raises(ContractViolation):
            LatentSeq.stack([a, b])

    def test_save_and_load(self, tmp_path, rng):
        seq = LatentSeq(rng.standard_normal((1, 3, 4)), 80.0, ORACLE)
        loaded = load_latents(save_latents(tmp_path / 'z.fvck', seq))
        assert loaded.provider == ORACLE
        assert loaded.frame_rate == 80.0
        np.testing.assert_allclose(loaded.data, seq.data, rtol=1e-6)


@pytest.mark.unit
class TestOracleProvider:

    def test_shape(self, sine_clip):
        seq = encode_semantic_oracle(sine_clip, hop=100, n_mels=64)
        assert seq.provider == ORACLE
        assert seq.dim == 48 + 16
        assert seq.frames == 40
        assert seq.frame_rate == 80.0

    def test_small_mel_caps_projection(self, sine_clip):
        assert encode_semantic_oracle(sine_clip, hop=100, n_mels=20).dim == 20 + 16

    def test_deterministic(self, sine_clip):
        a = encode_semantic_oracle(sine_clip, seed=3)
        b = encode_semantic_oracle(sine_clip, seed=3)
        np.testing.assert_array_equal(a.data, b.data)

    def test_class_channels_depend_on_label(self, tone):
        a = encode_semantic_oracle(tone(440, 'sine')).data[0, 48:]
        b = encode_semantic_oracle(tone(440, 'square')).data[0, 48:]
        assert not np.allclose(a, b)
        # constant over time
        np.testing.assert_allclose(a, a[:, :1].repeat(a.shape[1], axis=1))

    def test_unlabelled_clip_has_zero_class_channels(self, tone):
        seq = encode_semantic_oracle(tone(440, None))
        np.testing.assert_array_equal(seq.data[0, 48:], 0.0)

    def test_sample_rate_mismatch(self):
        provider = LatentProvider('oracle', sample_rate=16000, hop=100)
        with pytest.raises(ConfigurationError):
            provider.encode(AudioClip(np.zeros(4000), 8000))


@pytest.mark.unit
class TestMelProvider:

    def test_latents_are_log_mel(self, sine_clip):
        seq = encode_acoustic_mel(sine_clip, hop=100, n_mels=32)
        assert seq.provider == MEL
        assert seq.data.shape == (1, 32, 40)

    def test_encode_many_keeps_order(self, tone):
        provider = LatentProvider('mel', sample_rate=8000, hop=100, n_mels=16)
        clips = [tone(f, 'sine') for f in (220, 440, 880)]
        stacked = provider.encode_many(clips, max_workers=3)
        for i, clip in enumerate(clips):
            np.testing.assert_allclose(stacked.data[i], provider.encode(clip).data[0])


@pytest.mark.unit
class TestProviderFactory:

    def test_unknown_provider(self):
        with pytest.raises(ConfigurationError):
            LatentProvider('wavlm')

    def test_mae_needs_checkpoint(self):
        with pytest.raises(ConfigurationError):
            LatentProvider('mae')

    def test_tags(self):
        assert tag_for('oracle') == ORACLE
        assert provider_type_for(MAE) == 'mae'
        with pytest.raises(ConfigurationError):
            provider_type_for('nope')


@pytest.mark.unit
class TestLatentDir:

    def test_dump_and_load_split(self, tmp_path, rng):
        seq = LatentSeq(rng.standard_normal((3, 2, 4)), 80.0, MEL)
        records = [
            {'clip_id': 'sine_0000', 'label': 'sine', 'caption': 'sine mid', 'split': 'train'},
            {'clip_id': 'sine_0001', 'label': 'sine', 'caption': 'sine mid', 'split': 'test'},
            {'clip_id': 'sine_0002', 'label': 'sine', 'caption': 'sine mid', 'split': 'train'},
        ]
        dump_latent_dir(tmp_path / 'lat', records, seq)
        frame, loaded = load_latent_dir(tmp_path / 'lat', split='train')
        assert list(frame['clip_id']) == ['sine_0000', 'sine_0002']
        np.testing.assert_allclose(loaded.data, seq.data[[0, 2]], rtol=1e-6)

    def test_record_count_must_match(self, tmp_path):
        with pytest.raises(ContractViolation):
            dump_latent_dir(tmp_path, [{'clip_id': 'a'}], LatentSeq(np.zeros((2, 1, 1)), 1.0, MEL))

    def test_missing_index(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_latent_dir(tmp_path)


@pytest.mark.unit
class TestToyMae:

    def test_random_masking(self, rng):
        ids_keep, ids_restore, mask = random_masking(rng, 2, 10, 3)
        assert ids_keep.shape == (2, 3)
        assert mask.sum(axis=1).tolist() == [7.0, 7.0]
        for b in range(2):
            assert np.all(mask[b, ids_keep[b]] == 0)
            assert sorted(ids_restore[b]) == list(range(10))

    def test_padding_uses_standardized_floor(self, rng):
        mel_cfg = mel_config_for(8000, 50, n_mels=16)
        patches = standardized_patches(rng.standard_normal((16, 5)), mel_cfg, (8, 2), mean=-3.0, std=2.0)
        assert patches.shape == (3 * 2, 16)
        last_column = patches.reshape(3, 2, 8, 2)[-1, :, :, 1]
        np.testing.assert_allclose(last_column, (np.log(mel_cfg.log_floor) + 3.0) / 2.0)

    def test_silent_clip_gives_uniform_patches(self):
        mel_cfg = mel_config_for(8000, 50, n_mels=16)
        patches, grid = clip_patches(AudioClip(np.zeros(1600), 8000), mel_cfg, (8, 3), mean=-4.0, std=1.5)
        assert grid == (2, 11)
        np.testing.assert_allclose(patches, (np.log(mel_cfg.log_floor) + 4.0) / 1.5)

    def test_empty_corpus(self, tiny_mae_config):
        with pytest.raises(CorpusError):
            train_toy_mae([], tiny_mae_config, 8000, 50, n_mels=16)

    def test_mask_ratio_leaving_nothing(self, tone):
        cfg = MaeConfig(patch_freq=16, patch_time=64, mask_ratio=0.9, encoder_width=16, heads=2,
                        decoder_width=8, steps=1)
        with pytest.raises(ConfigurationError):
            train_toy_mae([tone(440, 'sine', 0.2)], cfg, 8000, 50, n_mels=16)

    def test_train_and_encode(self, tmp_path, tone, tiny_mae_config):
        clips = [tone(f, 'sine', 0.2) for f in (220, 440, 660)]
        ckpt = train_toy_mae(clips, tiny_mae_config, 8000, 50, n_mels=16)
        assert ckpt.kind == 'mae'
        assert all(name.startswith(ENCODER_PREFIXES) for name in ckpt.tensors)
        assert ckpt.meta['history']['steps'] == 3

        loaded = Checkpoint.load(ckpt.save(tmp_path / 'mae.fvck'), kind='mae')
        provider = LatentProvider('mae', sample_rate=8000, hop=50, mae_checkpoint=loaded)
        seq = provider.encode(clips[0])
        assert seq.provider == MAE
        assert seq.data.shape == (1, 16, 32)
        assert np.all(np.isfinite(seq.data))

    def test_frame_rate_mismatch(self, tone, tiny_mae_config):
        ckpt = train_toy_mae([tone(440, 'sine', 0.2)], tiny_mae_config.model_copy(update={'steps': 1}),
                             8000, 50, n_mels=16)
        with pytest.raises(ProviderMismatchError):
            LatentProvider('mae', sample_rate=8000, hop=100, mae_checkpoint=ckpt)
