"""Tests for the text-to-latent transformer (semvoc/services/dit_engine.py)."""

import numpy as np
import pytest

from semvoc.exceptions import ConfigurationError, ContractViolation, CorpusError, ProviderMismatchError
from semvoc.grad.checkpoint import Checkpoint
from semvoc.grad.tensor import DiffArray
from semvoc.models.configs import DitConfig, DitTrainConfig, SamplerConfig, dit_sampler
from semvoc.services.dit_engine import (
    PAD_ID,
    TINY_CONFIG,
    UNK_ID,
    DitModel,
    Vocabulary,
    default_vocabulary,
    dit_forward,
    embed_text,
    generate_latents,
    latent_stats,
    load_dit,
    tiny_gradcheck,
    train_dit,
)
from semvoc.services.flowmatch import euler_sample
from semvoc.services.latent_providers import MEL, ORACLE, LatentSeq


@pytest.fixture
def tiny_cfg():
    return DitConfig(**TINY_CONFIG)


@pytest.fixture
def pairs(rng):
    pairs = []
    for label, offset in (('sine mid', 2.0), ('square low', -1.0)):
        for _ in range(3):
            pairs.append((LatentSeq(offset + 0.1 * rng.standard_normal((1, 3, 5)), 80.0, ORACLE), label))
    return pairs


@pytest.fixture
def trained(pairs, tiny_cfg):
    return train_dit(pairs, tiny_cfg, DitTrainConfig(steps=2, batch_size=2, warmup_steps=0, log_every=1))


@pytest.mark.unit
class TestVocabulary:

    def test_default_words(self):
        words = default_vocabulary()
        assert words[:2] == ['sine', 'chirp-up']
        assert words[-3:] == ['low', 'mid', 'high']

    def test_reserved_ids(self):
        vocab = Vocabulary(['sine', 'low'], max_len=4)
        tokens = vocab.tokenize('sine loud low')
        assert tokens.ids.tolist() == [[2, UNK_ID, 3, PAD_ID]]
        assert tokens.mask.tolist() == [[True, True, True, False]]

    def test_truncation(self):
        tokens = Vocabulary(['a'], max_len=2).tokenize('a a a')
        assert tokens.ids.shape == (1, 2)
        assert tokens.mask.all()

    def test_empty_caption_is_one_unknown(self):
        tokens = Vocabulary(['a'], max_len=3).tokenize('')
        assert tokens.ids.tolist() == [[UNK_ID, PAD_ID, PAD_ID]]

    def test_batch(self):
        assert Vocabulary(['a'], max_len=3).batch(['a', 'b', '']).batch == 3


@pytest.mark.unit
class TestModel:

    def test_heads_must_divide_width(self):
        with pytest.raises(ValueError):
            DitConfig(width=10, heads=4)

    def test_zero_initialized_output(self, tiny_cfg, rng):
        model = DitModel(tiny_cfg, seed=0)
        tokens = model.vocab.batch(['sine low', 'square'])
        out = dit_forward(rng.standard_normal((2, 3, 5)), np.array([0.1, 0.9]), tokens, model)
        assert out.shape == (2, 3, 5)
        np.testing.assert_array_equal(out.values, 0.0)

    def test_caption_count_checked(self, tiny_cfg):
        model = DitModel(tiny_cfg)
        with pytest.raises(ContractViolation):
            dit_forward(np.zeros((2, 3, 4)), np.zeros(2), model.vocab.batch(['sine']), model)

    def test_latent_dim_checked(self, tiny_cfg):
        model = DitModel(tiny_cfg)
        with pytest.raises(ContractViolation):
            dit_forward(np.zeros((1, 4, 4)), np.zeros(1), model.vocab.batch(['sine']), model)

    def test_embed_text(self, tiny_cfg):
        model = DitModel(tiny_cfg)
        tokens, emb = embed_text('sine mid', model)
        assert emb.shape == (1, tiny_cfg.max_caption_len, tiny_cfg.width)
        assert tokens.mask.sum() == 2

    def test_caption_changes_output(self, tiny_cfg, rng):
        model = DitModel(tiny_cfg, seed=0, dtype=np.float64)
        for p in model.parameters():
            p.values = 0.3 * rng.standard_normal(p.shape)
        x = rng.standard_normal((1, 3, 5))
        a = dit_forward(x, np.array([0.5]), model.vocab.batch(['sine']), model).values
        b = dit_forward(x, np.array([0.5]), model.vocab.batch(['square']), model).values
        assert not np.allclose(a, b)


@pytest.mark.gradcheck
def test_tiny_dit_gradients():
    result = tiny_gradcheck(seed=0)
    assert result.passed, result.to_dict()


@pytest.mark.unit
class TestTraining:

    def test_latent_stats(self, rng):
        data = 3.0 + 2.0 * rng.standard_normal((4, 2, 500))
        data[:, 1] = 7.0
        mean, std = latent_stats(data)
        assert mean[0] == pytest.approx(3.0, abs=0.1)
        assert std[0] == pytest.approx(2.0, abs=0.1)
        assert std[1] == 1.0

    def test_raw_scale_by_default(self, trained):
        assert DitTrainConfig().standardize is False
        assert trained.meta['standardized'] is False

    def test_checkpoint_metadata(self, trained):
        assert trained.kind == 'dit'
        assert trained.provider == ORACLE
        assert trained.meta['frames'] == 5
        assert trained.meta['latent_mean'][0] != 0.0
        assert len(trained.meta['latent_std']) == 3
        assert trained.meta['config']['vocabulary'] == default_vocabulary()

    def test_no_pairs(self, tiny_cfg):
        with pytest.raises(CorpusError):
            train_dit([], tiny_cfg, DitTrainConfig(steps=1))

    def test_mixed_providers(self, pairs, tiny_cfg):
        pairs = pairs + [(LatentSeq(np.zeros((1, 3, 5)), 80.0, MEL), 'sine mid')]
        with pytest.raises(ProviderMismatchError):
            train_dit(pairs, tiny_cfg, DitTrainConfig(steps=1))

    def test_latent_dim_mismatch(self, pairs):
        with pytest.raises(ConfigurationError):
            train_dit(pairs, DitConfig(**{**TINY_CONFIG, 'latent_dim': 4}), DitTrainConfig(steps=1))


@pytest.mark.unit
class TestCrossAttention:

    def test_padding_gets_zero_weight(self, tiny_cfg, rng):
        model = DitModel(tiny_cfg, seed=1)
        tokens = model.vocab.batch(['sine', 'square low'])
        assert tokens.mask.tolist() == [[True, False, False], [True, True, False]]
        h = DiffArray(rng.standard_normal((2, 5, tiny_cfg.width)).astype(np.float32))
        _, weights = model.blocks[0].cross.attend(h, context=model.embed(tokens), mask=tokens.mask)
        assert weights.shape == (2, tiny_cfg.heads, 5, 3)
        for row, mask in zip(weights, tokens.mask):
            assert np.all(row[..., ~mask] == 0.0)
            np.testing.assert_allclose(row[..., mask].sum(axis=-1), 1.0, rtol=1e-5)

    def test_forward_keeps_no_per_call_state(self, tiny_cfg, rng):
        attn = DitModel(tiny_cfg, seed=1).blocks[0].cross
        before = set(vars(attn))
        h = DiffArray(rng.standard_normal((1, 4, tiny_cfg.width)).astype(np.float32))
        attn(h, context=h)
        assert set(vars(attn)) == before


@pytest.mark.unit
class TestGeneration:

    def test_shapes_and_tag(self, trained, tmp_path):
        ckpt = Checkpoint.load(trained.save(tmp_path / 'dit.fvck'), kind='dit')
        seq = generate_latents(['sine mid', 'square low'], ckpt, dit_sampler(steps=3))
        assert seq.data.shape == (2, 3, 5)
        assert seq.provider == ORACLE
        assert seq.frame_rate == 80.0

    def test_rows_do_not_depend_on_batch(self, trained):
        model = load_dit(trained)
        sampler = dit_sampler(steps=2, seed=10)
        both = generate_latents(['sine mid', 'square low'], trained, sampler, model=model)
        alone = generate_latents(['square low'], trained, sampler.model_copy(update={'seed': 11}), model=model)
        np.testing.assert_allclose(both.data[1], alone.data[0], rtol=1e-5, atol=1e-6)

    def test_rows_follow_batch_permutation(self, trained, rng):
        model = load_dit(trained)
        captions = ['sine mid', 'square low', 'sine low']
        cond = model.vocab.batch(captions)
        uncond = model.vocab.batch([''] * 3)
        x0 = rng.standard_normal((3, 3, 5))
        perm = np.array([2, 0, 1])

        def velocity(x, t, c):
            return dit_forward(x, t, c, model)

        sampler = dit_sampler(steps=3, guidance_scale=3.5)
        out = euler_sample(velocity, cond, sampler, uncond=uncond, x0=x0, dtype=model.dtype)
        permuted = euler_sample(velocity, cond.take(perm), sampler, uncond=uncond.take(perm), x0=x0[perm],
                                dtype=model.dtype)
        np.testing.assert_allclose(permuted, out[perm], rtol=1e-5, atol=1e-6)

    def test_destandardized_at_init(self, tiny_cfg, pairs):
        # zero output layer: samples are pure noise mapped through the stored statistics
        train = DitTrainConfig(steps=1, batch_size=2, lr=1e-12, warmup_steps=0, standardize=True)
        ckpt = train_dit(pairs, tiny_cfg, train)
        assert ckpt.meta['standardized'] is True
        seq = generate_latents('sine mid', ckpt, dit_sampler(steps=1, sigma=1e-9, guidance_scale=1.0))
        np.testing.assert_allclose(seq.data[0].mean(axis=1), ckpt.meta['latent_mean'], atol=1e-3)

    def test_default_checkpoint_stays_raw_scale(self, tiny_cfg, pairs):
        # zero output layer and near-zero noise: raw-scale output sits at the origin
        ckpt = train_dit(pairs, tiny_cfg, DitTrainConfig(steps=1, batch_size=2, lr=1e-12, warmup_steps=0))
        assert ckpt.meta['standardized'] is False
        assert abs(ckpt.meta['latent_mean'][0]) > 0.1
        seq = generate_latents('sine mid', ckpt, dit_sampler(steps=1, sigma=1e-9, guidance_scale=1.0))
        np.testing.assert_allclose(seq.data, 0.0, atol=1e-6)

    def test_requires_velocity_sampler(self, trained):
        with pytest.raises(ContractViolation):
            generate_latents('sine', trained, SamplerConfig(steps=2, prediction_kind='data'))

    def test_frames_override(self, trained):
        assert generate_latents('sine', trained, dit_sampler(steps=1), frames=7).frames == 7
