"""
semvoc command line.

    python -m semvoc <command> [--config FILE] [--out-dir DIR] [flags]

Every command prints its resolved configuration as JSON on stdout before it
runs. Failures print a single ``error <CODE>: <message>`` line on stderr and
exit with the code registered for that error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Type

import numpy as np
import pandas as pd
from dotenv import load_dotenv
from pydantic import BaseModel

from .config.env_validation import VALID_LOG_LEVELS, validate_environment
from .config.logging_config import setup_logging
from .config.profiles import DIT_GUIDANCE_SCALE, DIT_STEPS, VOCODER_STEPS, default_profile_name, get_profile
from .config.run_config import build, check_known, merge_settings, read_config_file, resolved_config
from .dsp.mel import MelConfig
from .dsp.stft import StftPlan
from .dsp.wav_io import write_wav
from .exceptions import ConfigurationError, EvaluationError, GradientError, SemVocError, get_error_info
from .grad.checkpoint import Checkpoint
from .grad.gradcheck import run_op_suite
from .models.configs import (
    CorpusSpec,
    DitConfig,
    DitTrainConfig,
    MaeConfig,
    ProbeConfig,
    SamplerConfig,
    SweepConfig,
    VocoderConfig,
    VocoderTrainConfig,
    dit_sampler,
)
from .services import dit_engine, vocoder_engine
from .services.corpus_service import load_corpus, synth_corpus
from .services.dit_engine import generate_latents, load_dit, train_dit
from .services.evaluation_service import (
    CaptionJudge,
    FrechetFeaturizer,
    centroid_separation,
    frechet_row,
    linear_probe,
    pca_project,
    recon_rows,
    train_recon_baseline,
)
from .services.latent_providers import (
    LatentProvider,
    dump_latent_dir,
    load_latent_dir,
    load_latents,
    provider_type_for,
    tag_for,
)
from .services.mae_engine import train_toy_mae
from .services.sweep_service import generate_audio, sweep, vocode_chunked
from .services.vocoder_engine import train_vocoder
from .utils.concurrent import default_workers

logger = logging.getLogger(__name__)

RESERVED_ARGS = {'command', 'func', 'config', 'out_dir', 'log_level'}
FILE_ONLY_KEYS = ('n_mels', 'oracle_seed', 'voc_cfg_scale')


class RunLayout:
    """Artifact tree under --out-dir: corpus/, ckpt/, gen/, reports/, latents/."""

    def __init__(self, root: str):
        self.root = Path(root)

    def dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    @property
    def corpus(self) -> Path:
        return self.root / 'corpus'

    @property
    def ckpt(self) -> Path:
        return self.dir('ckpt')

    @property
    def gen(self) -> Path:
        return self.dir('gen')

    @property
    def reports(self) -> Path:
        return self.dir('reports')

    def latents(self, provider_tag: str) -> Path:
        return self.root / 'latents' / provider_tag


# ---------------------------------------------------------------------------
# Settings helpers
# ---------------------------------------------------------------------------

def _settings(args: argparse.Namespace, models: Iterable[Type[BaseModel]]) -> Dict[str, Any]:
    file_values = read_config_file(args.config)
    check_known(file_values, list(models), extra=[*vars(args), *FILE_ONLY_KEYS])
    flags = {k: v for k, v in vars(args).items() if k not in RESERVED_ARGS}
    return merge_settings(file_values, flags)


def _emit(command: str, **sections: Any) -> None:
    print(resolved_config(command, **sections), flush=True)


def _setting(settings: Dict[str, Any], key: str, default: Any) -> Any:
    """Value of key, or default only when the key is unset (0 is a value)."""
    value = settings.get(key)
    return default if value is None else value


def _profile(settings: Dict[str, Any]) -> str:
    return settings.get('profile') or default_profile_name()


def _vocoder_config(settings: Dict[str, Any], **fixed: Any) -> VocoderConfig:
    base = VocoderConfig.from_profile(_profile(settings)).model_dump()
    base.update({k: v for k, v in settings.items() if k in VocoderConfig.model_fields})
    base.update(fixed)
    return build(VocoderConfig, base)


def _n_mels(settings: Dict[str, Any]) -> int:
    return int(settings.get('n_mels') or get_profile(_profile(settings))['n_mels'])


def _workers(settings: Dict[str, Any]) -> int:
    return int(settings.get('workers') or default_workers())


def _provider(settings: Dict[str, Any], voc_cfg: VocoderConfig, provider_type: str) -> LatentProvider:
    mae = None
    if provider_type == 'mae':
        path = settings.get('mae_ckpt')
        if not path:
            raise ConfigurationError('mae_ckpt', None, "the mae provider needs --mae-ckpt")
        mae = Checkpoint.load(path, kind='mae')
    return LatentProvider(provider_type, voc_cfg.sample_rate, voc_cfg.hop_max, _n_mels(settings),
                          seed=int(settings.get('oracle_seed') or 0), mae_checkpoint=mae)


def _inherit_provider_settings(settings: Dict[str, Any], voc_ckpt: Checkpoint) -> None:
    """Fill n_mels and oracle_seed from the vocoder checkpoint unless given explicitly."""
    stored = voc_ckpt.meta.get('provider_meta', {})
    for key, meta_key in (('n_mels', 'n_mels'), ('oracle_seed', 'seed')):
        if settings.get(key) is None and meta_key in stored:
            settings[key] = stored[meta_key]


def _mel_config(voc_cfg: VocoderConfig, n_mels: int) -> MelConfig:
    return MelConfig(plan=StftPlan(voc_cfg.hop_max, voc_cfg.sample_rate), n_mels=n_mels)


def _write_report(rows: Sequence[BaseModel], path: Path, jsonl: bool = True) -> pd.DataFrame:
    frame = pd.DataFrame([r.model_dump(mode='json') for r in rows])
    frame.to_csv(path, index=False)
    if jsonl:
        frame.to_json(path.with_suffix('.jsonl'), orient='records', lines=True)
    logger.info("Wrote %d rows to %s", len(frame), path)
    return frame


def _corpus_dir(settings: Dict[str, Any], layout: RunLayout) -> Path:
    return Path(settings.get('corpus') or layout.corpus)


def _slug(text: str) -> str:
    return '-'.join(text.split()) or 'unconditional'


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth_data(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [CorpusSpec])
    spec = build(CorpusSpec, settings, sample_rate=settings.get('sample_rate')
                 or get_profile(_profile(settings))['sample_rate'])
    corpus_dir = _corpus_dir(settings, layout)
    _emit('synth-data', corpus=spec, paths={'corpus': str(corpus_dir)})
    rows = synth_corpus(spec, corpus_dir)
    logger.info("Corpus ready: %d clips (%d test)", len(rows), sum(r.split == 'test' for r in rows))


def cmd_train_mae(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [MaeConfig, VocoderConfig])
    cfg = build(MaeConfig, settings)
    voc_cfg = _vocoder_config(settings)
    out = Path(settings.get('out') or layout.ckpt / 'mae.fvck')
    _emit('train-mae', mae=cfg, sample_rate=voc_cfg.sample_rate, hop=voc_cfg.hop_max,
          n_mels=_n_mels(settings), paths={'corpus': str(_corpus_dir(settings, layout)), 'out': str(out)})
    _, clips = load_corpus(_corpus_dir(settings, layout), split='train')
    train_toy_mae(clips, cfg, voc_cfg.sample_rate, voc_cfg.hop_max, _n_mels(settings)).save(out)


def cmd_encode(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [VocoderConfig])
    voc_cfg = _vocoder_config(settings)
    provider = _provider(settings, voc_cfg, settings['provider'])
    out = Path(settings.get('out') or layout.latents(provider.tag))
    _emit('encode', provider=provider.metadata(), vocoder=voc_cfg,
          paths={'corpus': str(_corpus_dir(settings, layout)), 'out': str(out)})
    rows, clips = load_corpus(_corpus_dir(settings, layout))
    latents = provider.encode_many(clips, max_workers=_workers(settings))
    records = [{'clip_id': r.clip_id, 'label': r.label, 'caption': r.caption, 'split': r.split} for r in rows]
    dump_latent_dir(out, records, latents)


def cmd_train_vocoder(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [VocoderConfig, VocoderTrainConfig])
    provider_type = settings['provider']
    provisional = _vocoder_config(settings)
    provider = _provider(settings, provisional, provider_type)
    voc_cfg = _vocoder_config(settings, latent_dim=provider.dim)
    train = build(VocoderTrainConfig, settings)
    suffix = '-recon' if train.objective == 'recon' else ''
    out = Path(settings.get('out') or layout.ckpt / f"vocoder-{provider_type}{suffix}.fvck")
    _emit('train-vocoder', vocoder=voc_cfg, train=train, provider=provider.metadata(),
          paths={'corpus': str(_corpus_dir(settings, layout)), 'out': str(out)})
    _, clips = load_corpus(_corpus_dir(settings, layout), split='train')
    if train.objective == 'recon':
        ckpt = train_recon_baseline(clips, provider, voc_cfg, train)
    else:
        ckpt = train_vocoder(clips, provider, voc_cfg, train)
    ckpt.save(out)


def cmd_train_dit(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [DitConfig, DitTrainConfig])
    provider_type = settings['provider']
    latent_dir = Path(settings.get('latents') or layout.latents(tag_for(provider_type)))
    frame, seqs = load_latent_dir(latent_dir, split='train')
    base = DitConfig.from_profile(_profile(settings), latent_dim=seqs.dim).model_dump()
    base.update({k: v for k, v in settings.items() if k in DitConfig.model_fields and k != 'latent_dim'})
    cfg = build(DitConfig, base)
    train = build(DitTrainConfig, settings)
    out = Path(settings.get('out') or layout.ckpt / f"dit-{provider_type}.fvck")
    _emit('train-dit', dit=cfg, train=train, paths={'latents': str(latent_dir), 'out': str(out)})
    pairs = [(seqs[i], caption) for i, caption in enumerate(frame['caption'])]
    train_dit(pairs, cfg, train).save(out)


def _wave_sampler(settings: Dict[str, Any], steps_key: str = 'steps') -> SamplerConfig:
    values = dict(settings)
    values['steps'] = _setting(settings, steps_key, VOCODER_STEPS)
    values['guidance_scale'] = _setting(settings, 'voc_cfg_scale', 1.0)
    values['prediction_kind'] = 'data'
    return build(SamplerConfig, values)


def cmd_sample(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [SamplerConfig])
    dit_ckpt = Checkpoint.load(settings['dit'], kind='dit')
    voc_ckpt = Checkpoint.load(settings['voc'], kind='vocoder')
    latent_sampler = dit_sampler(
        steps=_setting(settings, 'steps_latent', DIT_STEPS),
        guidance_scale=_setting(settings, 'guidance_scale', DIT_GUIDANCE_SCALE),
        seed=settings.get('seed') or 0,
    )
    wave_sampler = _wave_sampler(settings, 'steps_wav')
    captions: List[str] = settings['caption']
    out = settings.get('out')
    _emit('sample', latent_sampler=latent_sampler, wave_sampler=wave_sampler, captions=captions,
          paths={'dit': settings['dit'], 'voc': settings['voc'], 'out': str(out or layout.gen)})
    clips = generate_audio(captions, dit_ckpt, voc_ckpt, latent_sampler, wave_sampler)
    if out and len(clips) == 1 and str(out).endswith('.wav'):
        write_wav(out, clips[0])
        return
    target = Path(out) if out else layout.gen
    for i, (caption, clip) in enumerate(zip(captions, clips)):
        write_wav(target / f"sample_{i:03d}_{_slug(caption)}.wav", clip)


def cmd_vocode(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [SamplerConfig])
    sampler = build(SamplerConfig, settings)
    ckpt = Checkpoint.load(settings['ckpt'], kind='vocoder')
    latents = load_latents(settings['latents'])
    out = Path(settings.get('out') or layout.gen / f"{Path(settings['latents']).stem}.wav")
    _emit('vocode', sampler=sampler, paths={'latents': settings['latents'], 'ckpt': settings['ckpt'],
                                            'out': str(out)})
    clips = vocode_chunked(latents, ckpt, sampler)
    if len(clips) == 1:
        write_wav(out, clips[0])
    else:
        for i, clip in enumerate(clips):
            write_wav(out.with_name(f"{out.stem}_{i:03d}.wav"), clip)


def cmd_eval(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [SamplerConfig])
    voc_ckpt = Checkpoint.load(settings['voc'], kind='vocoder')
    voc_cfg = VocoderConfig(**voc_ckpt.meta['config'])
    _inherit_provider_settings(settings, voc_ckpt)
    provider = _provider(settings, voc_cfg, provider_type_for(voc_ckpt.provider))
    split = 'test' if settings.get('held_out') else None
    split_name = split or 'all'
    sampler = _wave_sampler(settings)
    n_mels = _n_mels(settings)
    _emit('eval', sampler=sampler, provider=provider.metadata(), split=split_name, n_mels=n_mels,
          paths={'voc': settings['voc'], 'recon': settings.get('recon_ckpt'), 'dit': settings.get('dit')})

    corpus_dir = _corpus_dir(settings, layout)
    rows, clips = load_corpus(corpus_dir, split=split)
    if not clips:
        raise EvaluationError(f"no clips in split {split_name}")
    workers = _workers(settings)
    mel_cfg = _mel_config(voc_cfg, n_mels)
    plans = [StftPlan(h, voc_cfg.sample_rate) for h in voc_cfg.hops]
    featurizer = FrechetFeaturizer(mel_cfg, seed=int(settings.get('seed') or 0))
    ids = [r.clip_id for r in rows]
    splits = [r.split for r in rows]
    latents = provider.encode_many(clips, max_workers=workers)

    systems = {'flow-matching': voc_ckpt}
    if settings.get('recon_ckpt'):
        systems['reconstruction'] = Checkpoint.load(settings['recon_ckpt'], kind='vocoder')
    recon, frechet = [], []
    for name, ckpt in systems.items():
        generated = vocode_chunked(latents, ckpt, sampler, labels=[c.label for c in clips])
        recon.extend(recon_rows(name, clips, generated, ids, splits, mel_cfg, plans))
        frechet.append(frechet_row(name, split_name, provider.tag, generated, clips, featurizer, workers))

    summary: Dict[str, Any] = {}
    if settings.get('dit'):
        dit_ckpt = Checkpoint.load(settings['dit'], kind='dit')
        _, train_clips = load_corpus(corpus_dir, split='train')
        judge = CaptionJudge(mel_cfg, max_workers=workers).fit(train_clips, [c.label for c in train_clips])
        latent_sampler = dit_sampler(seed=int(settings.get('seed') or 0))
        captions = [r.caption for r in rows]
        generated = generate_audio(captions, dit_ckpt, voc_ckpt, latent_sampler, sampler)
        frechet.append(frechet_row('text-to-audio', split_name, provider.tag, generated, clips, featurizer, workers))
        summary['caption_accuracy'] = judge.accuracy(generated, [r.label for r in rows])

    recon_frame = _write_report(recon, layout.reports / f"recon-{provider.tag}.csv")
    _write_report(frechet, layout.reports / f"frechet-{provider.tag}.csv")
    summary.update({
        'systems': recon_frame.groupby('system')[['mel_distance', 'stft_distance', 'waveform_l1']]
        .mean().to_dict(orient='index'),
        'frechet': {row.system: row.frechet_distance for row in frechet},
    })
    pd.Series(summary, dtype=object).to_json(layout.reports / f"eval-{provider.tag}.json", indent=2)
    logger.info("Evaluation summary: %s", summary)


def _probe_inputs(settings: Dict[str, Any], layout: RunLayout):
    """Latents, labels and provider tag for probing, either from an encoder dump or the DiT."""
    if settings.get('source') == 'generated':
        if not settings.get('dit'):
            raise ConfigurationError('dit', None, "--source generated needs --dit")
        dit_ckpt = Checkpoint.load(settings['dit'], kind='dit')
        rows, _ = load_corpus(_corpus_dir(settings, layout))
        sampler = dit_sampler(seed=int(settings.get('seed') or 0))
        latents = generate_latents([r.caption for r in rows], dit_ckpt, sampler, model=load_dit(dit_ckpt))
        return latents, [r.label for r in rows], [r.clip_id for r in rows]
    latent_dir = Path(settings.get('latents') or layout.latents(tag_for(settings['provider'])))
    frame, latents = load_latent_dir(latent_dir)
    return latents, frame['label'].astype(str).tolist(), frame['clip_id'].astype(str).tolist()


def cmd_probe(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [ProbeConfig])
    seeds = [int(s) for s in str(settings.get('split_seeds') or '0,1,2').split(',') if s.strip()]
    cfg = build(ProbeConfig, settings)
    source = settings.get('source') or 'encoder'
    _emit('probe', probe=cfg, split_seeds=seeds, source=source)
    latents, labels, _ = _probe_inputs(settings, layout)
    results = [linear_probe(latents, labels, cfg.model_copy(update={'seed': s}), source=source) for s in seeds]
    _write_report(results, layout.reports / f"probe-{latents.provider}-{source}.csv")
    logger.info("Mean probe accuracy %.4f over %d splits", float(np.mean([r.accuracy for r in results])), len(seeds))


def cmd_project(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [])
    _emit('project', source=settings.get('source') or 'encoder', provider=settings.get('provider'))
    latents, labels, ids = _probe_inputs(settings, layout)
    coords, explained, rows = pca_project(latents, labels, ids)
    _write_report(rows, layout.reports / f"projection-{latents.provider}.csv", jsonl=False)
    inter, intra = centroid_separation(coords, labels)
    logger.info("PCA explained %.3f / %.3f; centroid distance %.4f vs spread %.4f",
                explained[0], explained[1], inter, intra)


def cmd_sweep(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [SweepConfig])
    cfg = build(SweepConfig, settings)
    _emit('sweep', sweep=cfg, paths={'dit': settings['dit'], 'voc': settings['voc']})
    dit_ckpt = Checkpoint.load(settings['dit'], kind='dit')
    voc_ckpt = Checkpoint.load(settings['voc'], kind='vocoder')
    voc_cfg = VocoderConfig(**voc_ckpt.meta['config'])
    _inherit_provider_settings(settings, voc_ckpt)
    mel_cfg = _mel_config(voc_cfg, _n_mels(settings))
    workers = _workers(settings)
    corpus_dir = _corpus_dir(settings, layout)
    test_rows, test_clips = load_corpus(corpus_dir, split='test')
    _, train_clips = load_corpus(corpus_dir, split='train')
    judge = CaptionJudge(mel_cfg, max_workers=workers).fit(train_clips, [c.label for c in train_clips])
    rows = sweep(dit_ckpt, voc_ckpt, cfg, [r.caption for r in test_rows], [r.label for r in test_rows],
                 test_clips, judge, FrechetFeaturizer(mel_cfg, seed=cfg.seed), max_workers=workers)
    _write_report(rows, layout.reports / 'sweep.csv')


def cmd_grad_check(args: argparse.Namespace, layout: RunLayout) -> None:
    settings = _settings(args, [])
    seeds = [int(s) for s in str(settings.get('seeds') or '0,1,2').split(',') if s.strip()]
    _emit('grad-check', seeds=seeds)
    results = run_op_suite(seeds=seeds)
    results += [vocoder_engine.tiny_gradcheck(seed=seeds[0]), dit_engine.tiny_gradcheck(seed=seeds[0])]
    frame = pd.DataFrame([r.to_dict() for r in results])
    frame.to_csv(layout.reports / 'gradcheck.csv', index=False)
    failed = frame[~frame['passed']]
    if not failed.empty:
        raise GradientError('grad-check', f"{len(failed)} checks above tolerance: {', '.join(failed['name'])}")
    logger.info("All %d gradient checks passed", len(frame))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="flat key=value config file; flags override it")
    common.add_argument('--out-dir', default=os.getenv('SEMVOC_OUT_DIR', 'runs'),
                        help="artifact root (default: runs)")
    common.add_argument('--profile', choices=['desk', 'paper'], help="model profile (default: SEMVOC_PROFILE or desk)")
    common.add_argument('--seed', type=int, help="master seed (default: 0)")
    common.add_argument('--workers', type=int, help="clip-level worker threads")
    common.add_argument('--log-level', help="override SEMVOC_LOG_LEVEL")
    return common


def _sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--steps', type=int, help="Euler steps")
    p.add_argument('--cfg-scale', dest='guidance_scale', type=float, help="guidance scale")
    p.add_argument('--sigma', type=float, help="initial noise scale")
    p.add_argument('--prediction', dest='prediction_kind', choices=['velocity', 'data'])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='semvoc', description="Semantic-latent flow-matching vocoder pipeline")
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common()

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add('synth-data', cmd_synth_data, "write the synthetic corpus")
    p.add_argument('--corpus', help="corpus directory (default: <out-dir>/corpus)")
    p.add_argument('--clips-per-class', type=int)
    p.add_argument('--clip-seconds', type=float)
    p.add_argument('--sample-rate', type=int)
    p.add_argument('--snr-db', type=float)

    p = add('train-mae', cmd_train_mae, "train the toy-MAE latent provider")
    p.add_argument('--corpus')
    p.add_argument('--steps', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--mask-ratio', type=float)
    p.add_argument('--out', help="checkpoint path (default: <out-dir>/ckpt/mae.fvck)")

    p = add('encode', cmd_encode, "dump latents of every corpus clip")
    p.add_argument('--corpus')
    p.add_argument('--provider', choices=['oracle', 'mel', 'mae'], default='oracle')
    p.add_argument('--mae-ckpt')
    p.add_argument('--out', help="latent directory (default: <out-dir>/latents/<tag>)")

    p = add('train-vocoder', cmd_train_vocoder, "train the flow-matching vocoder (or the recon baseline)")
    p.add_argument('--corpus')
    p.add_argument('--provider', choices=['oracle', 'mel', 'mae'], default='oracle')
    p.add_argument('--mae-ckpt')
    p.add_argument('--steps', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--segment-seconds', type=float, help="training segment length (default: 1.6)")
    p.add_argument('--norm', choices=['biasnorm', 'layernorm'])
    p.add_argument('--objective', choices=['flow', 'recon'])
    p.add_argument('--no-energy', dest='energy_weighting', action='store_const', const=False)
    p.add_argument('--out')

    p = add('train-dit', cmd_train_dit, "train the text-to-latent transformer")
    p.add_argument('--latents', help="latent directory from `encode`")
    p.add_argument('--provider', choices=['oracle', 'mel', 'mae'], default='oracle')
    p.add_argument('--steps', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--drop-prob', type=float)
    p.add_argument('--out')

    p = add('sample', cmd_sample, "caption -> latents -> waveform")
    p.add_argument('--caption', action='append', required=True)
    p.add_argument('--dit', required=True)
    p.add_argument('--voc', required=True)
    p.add_argument('--steps-latent', type=int)
    p.add_argument('--steps-wav', type=int)
    p.add_argument('--cfg', dest='guidance_scale', type=float, help="latent guidance scale (default: 3.5)")
    p.add_argument('--sigma', type=float)
    p.add_argument('--out', help="wav path for one caption, else a directory")

    p = add('vocode', cmd_vocode, "latent file -> waveform")
    p.add_argument('--latents', required=True)
    p.add_argument('--ckpt', required=True)
    _sampler_flags(p)
    p.add_argument('--out')

    p = add('eval', cmd_eval, "reconstruction and Fréchet reports")
    p.add_argument('--corpus')
    p.add_argument('--voc', required=True)
    p.add_argument('--recon-ckpt')
    p.add_argument('--dit')
    p.add_argument('--mae-ckpt')
    p.add_argument('--held-out', action='store_const', const=True, help="test split only")
    p.add_argument('--steps', type=int, help="vocoder Euler steps")

    for name, func, help_text in (('probe', cmd_probe, "linear probe on latents"),
                                  ('project', cmd_project, "2-D PCA projection of latents")):
        p = add(name, func, help_text)
        p.add_argument('--latents')
        p.add_argument('--provider', choices=['oracle', 'mel', 'mae'], default='oracle')
        p.add_argument('--source', choices=['encoder', 'generated'])
        p.add_argument('--dit')
        p.add_argument('--corpus')
        if name == 'probe':
            p.add_argument('--split-seeds', help="comma-separated split seeds (default: 0,1,2)")
            p.add_argument('--steps', type=int)
            p.add_argument('--lr', type=float)

    p = add('sweep', cmd_sweep, "guidance / step grid")
    p.add_argument('--corpus')
    p.add_argument('--dit', required=True)
    p.add_argument('--voc', required=True)
    p.add_argument('--cfg-grid', help="comma-separated guidance scales")
    p.add_argument('--step-grid', help="comma-separated latent step counts")
    p.add_argument('--vocoder-steps', type=int)

    p = add('grad-check', cmd_grad_check, "finite-difference gradient suite")
    p.add_argument('--seeds', help="comma-separated seeds (default: 0,1,2)")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    layout = RunLayout(args.out_dir)
    if args.log_level is not None and args.log_level.strip().upper() not in VALID_LOG_LEVELS:
        e = ConfigurationError('log_level', args.log_level, f"expected one of {', '.join(sorted(VALID_LOG_LEVELS))}")
        print(f"error {e.error_code}: {e.message}", file=sys.stderr)
        return e.exit_code
    setup_logging(log_level=args.log_level, log_dir=os.getenv('SEMVOC_LOG_DIR') or str(layout.root / 'logs'))

    try:
        validate_environment()
    except RuntimeError as e:
        print(f"error CONFIG_ERROR: {str(e).splitlines()[0]}", file=sys.stderr)
        return get_error_info('CONFIG_ERROR')['exit_code']

    try:
        args.func(args, layout)
    except SemVocError as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"error {e.error_code}: {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.debug("Unhandled error in %s", args.command, exc_info=True)
        print(f"error INTERNAL_ERROR: {e}", file=sys.stderr)
        return get_error_info('INTERNAL_ERROR')['exit_code']
    return 0
