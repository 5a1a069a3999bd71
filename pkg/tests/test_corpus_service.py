"""Tests for the deterministic synthetic corpus."""

import numpy as np
import pytest

from semvoc.exceptions import CorpusError
from semvoc.models.configs import ClassSpec, CorpusSpec, default_classes
from semvoc.services.corpus_service import (
    PEAK,
    clip_seed,
    held_out_indices,
    load_corpus,
    read_manifest,
    split_rows,
    synth_clip,
    synth_corpus,
)


@pytest.mark.unit
class TestSynthClip:

    @pytest.mark.parametrize("spec", default_classes(), ids=lambda c: c.name)
    def test_every_kind_is_finite_and_bounded(self, spec):
        clip = synth_clip(spec, seed=1, seconds=0.5, sample_rate=8000, snr_db=30.0)
        assert len(clip) == 4000
        assert clip.label == spec.name
        assert np.all(np.isfinite(clip.samples))
        assert np.max(np.abs(clip.samples)) < 1.0
        assert np.max(np.abs(clip.samples)) > 0.3 * PEAK

    def test_same_seed_same_clip(self):
        spec = ClassSpec(name='chirp-up', kind='chirp-up', bucket='mid')
        a = synth_clip(spec, 5, 0.2, 8000, 30.0)
        b = synth_clip(spec, 5, 0.2, 8000, 30.0)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_noise_follows_snr(self):
        spec = ClassSpec(name='sine', kind='sine', bucket='mid')
        clean = synth_clip(spec, 0, 1.0, 8000, 200.0).samples
        noisy = synth_clip(spec, 0, 1.0, 8000, 10.0).samples
        snr = 10 * np.log10(np.mean(clean ** 2) / np.mean((noisy - clean) ** 2))
        assert snr == pytest.approx(10.0, abs=0.5)

    def test_clip_seed_depends_on_every_index(self):
        seeds = {clip_seed(0, 0, 0), clip_seed(1, 0, 0), clip_seed(0, 1, 0), clip_seed(0, 0, 1)}
        assert len(seeds) == 4


@pytest.mark.unit
class TestSplits:

    def test_held_out_fraction(self):
        spec = CorpusSpec(clips_per_class=10, test_fraction=0.2)
        assert len(held_out_indices(spec, 0)) == 2

    def test_at_least_one_train_clip(self):
        spec = CorpusSpec(clips_per_class=2, test_fraction=0.9)
        assert len(held_out_indices(spec, 0)) == 1

    def test_split_differs_per_class(self):
        spec = CorpusSpec(clips_per_class=20)
        picks = {frozenset(held_out_indices(spec, ci)) for ci in range(8)}
        assert len(picks) > 1


@pytest.mark.unit
class TestCorpus:

    def test_manifest_and_files(self, tiny_corpus, tiny_corpus_spec):
        frame = read_manifest(tiny_corpus)
        assert len(frame) == 10
        assert set(frame['class']) == {'sine', 'square'}
        assert set(frame['caption']) == {'sine mid', 'square low'}
        assert list(frame['clip_id'][:2]) == ['sine_0000', 'sine_0001']
        assert all((tiny_corpus / p).exists() for p in frame['path'])
        assert (frame['split'] == 'test').sum() == 2

    def test_load_split(self, tiny_corpus):
        rows, clips = load_corpus(tiny_corpus, split='train')
        assert len(rows) == len(clips) == 8
        assert all(r.split == 'train' for r in rows)
        assert clips[0].sample_rate == 8000
        assert clips[0].label == rows[0].label

    def test_rerun_is_identical(self, tmp_path, tiny_corpus, tiny_corpus_spec):
        synth_corpus(tiny_corpus_spec, tmp_path / 'again')
        first = (tiny_corpus / 'wav' / 'square_0003.wav').read_bytes()
        second = (tmp_path / 'again' / 'wav' / 'square_0003.wav').read_bytes()
        assert first == second

    def test_split_rows(self, tiny_corpus):
        rows, _ = load_corpus(tiny_corpus)
        test_idx = split_rows(rows, 'test')
        assert len(test_idx) == 2
        assert all(rows[i].split == 'test' for i in test_idx)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CorpusError) as info:
            read_manifest(tmp_path)
        assert info.value.exit_code == 10

    def test_duplicate_captions_rejected(self):
        with pytest.raises(ValueError):
            CorpusSpec(classes=[ClassSpec(name='a', kind='sine'), ClassSpec(name='a', kind='square')])
