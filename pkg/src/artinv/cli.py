"""Command-line surface: dataset synthesis, training, inversion, evaluation,
and generator benchmarking.

Configuration comes from an INI-style file (sections [frontend], [network],
[training], [decode]) with individual flags overriding file values; every
output directory receives the fully resolved configuration that produced it.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import dataclasses
import glob
import os
import sys

import numpy as np

from . import bench, checkpoint as ckpt, corpus as corpus_io
from . import generate as gen
from . import metrics as metrics_mod
from . import training as training_mod
from .frontend import AudioClip, FrontendConfig, FrontendError
from .generate import DecodeRule
from .model import ConfigError, NetworkConfig, NetworkParams, receptive_field
from .tensorfile import read_tensor, write_tensor
from .trajectory import CHANNEL_NAMES, NormStats, TrajectorySet, downsample


class UsageError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    frontend: FrontendConfig
    network: NetworkConfig
    training: training_mod.TrainConfig
    rule: DecodeRule


_SECTIONS = {
    "frontend": FrontendConfig,
    "network": NetworkConfig,
    "training": training_mod.TrainConfig,
    "decode": DecodeRule,
}


def _coerce(cls, key, raw):
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    if key not in field_types:
        raise ConfigError(f"unknown field {key!r} in section [{_section_of(cls)}]")
    t = field_types[key]
    if raw is None:
        return None
    if isinstance(raw, str):
        if t in ("int", int):
            return int(raw)
        if t in ("float", float):
            return float(raw)
        if "float | None" in str(t) or "Optional" in str(t):
            return None if raw.lower() in ("none", "off") else float(raw)
        return raw
    return raw


def _section_of(cls):
    for name, c in _SECTIONS.items():
        if c is cls:
            return name
    return cls.__name__


def resolve_run_config(config_path=None, overrides=None) -> RunConfig:
    """Merge defaults <- config file <- flag overrides, validating eagerly."""
    values = {name: {} for name in _SECTIONS}
    if config_path:
        if not os.path.exists(config_path):
            raise UsageError(f"config file not found: {config_path}")
        parser = configparser.ConfigParser()
        parser.read(config_path)
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                values[section][key] = _coerce(_SECTIONS[section], key, raw)
    for section, kv in (overrides or {}).items():
        for key, raw in kv.items():
            if raw is not None:
                values[section][key] = _coerce(_SECTIONS[section], key, raw)
    built = {}
    for section, cls in _SECTIONS.items():
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values[section]) - known
        if unknown:
            raise ConfigError(f"unknown field(s) in [{section}]: {sorted(unknown)}")
        built[section] = cls(**values[section])
    return RunConfig(frontend=built["frontend"], network=built["network"],
                     training=built["training"], rule=built["decode"])


def write_run_config(path, cfg: RunConfig):
    parser = configparser.ConfigParser()
    for section, obj in (("frontend", cfg.frontend), ("network", cfg.network),
                         ("training", cfg.training), ("decode", cfg.rule)):
        parser[section] = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            parser[section][f.name] = "none" if v is None else str(v)
    with open(path, "w") as fh:
        parser.write(fh)


@contextlib.contextmanager
def _thread_limit(threads):
    if threads is None:
        yield
        return
    from threadpoolctl import threadpool_limits
    with threadpool_limits(limits=threads):
        yield


def _ensure_out_dir(path, force, must_be_empty=False):
    if os.path.isdir(path) and os.listdir(path) and must_be_empty and not force:
        raise UsageError(f"output directory {path} already exists and is not empty; "
                         f"pass --force to overwrite")
    os.makedirs(path, exist_ok=True)


# --- subcommands -------------------------------------------------------------

def cmd_synth(args):
    cfg = resolve_run_config(args.config, _overrides_from(args))
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.force:
        raise UsageError(f"output directory {args.out} already exists and is not "
                         f"empty; pass --force to regenerate")
    corpus_io.make_synthetic_corpus(
        args.out, seed=args.seed, speakers=args.speakers,
        utterances_per_speaker=args.utterances, duration_s=args.duration,
        train_fraction=args.train_fraction, force=args.force)
    write_run_config(os.path.join(args.out, "run_config.ini"), cfg)
    print(f"wrote synthetic corpus: {args.speakers} speaker(s) x "
          f"{args.utterances} utterance(s) under {args.out}")
    return 0


def _overrides_from(args):
    overrides = {name: {} for name in _SECTIONS}
    for section, key, attr in [
        ("network", "layers_per_stack", "layers_per_stack"),
        ("network", "stacks", "stacks"),
        ("network", "kernel_size", "kernel_size"),
        ("network", "residual_channels", "residual_channels"),
        ("network", "gate_channels", "gate_channels"),
        ("network", "skip_channels", "skip_channels"),
        ("network", "dtype", "dtype"),
        ("training", "epochs", "steps"),
        ("training", "adam_alpha", "learning_rate"),
        ("training", "seed", "seed"),
        ("decode", "kind", "rule"),
        ("decode", "seed", "seed"),
        ("decode", "temperature", "temperature"),
    ]:
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[section][key] = getattr(args, attr)
    return overrides


def cmd_train(args):
    cfg = resolve_run_config(args.config, _overrides_from(args))
    if cfg.network.cond_channels != cfg.frontend.bands:
        raise ConfigError(
            f"cond_channels ({cfg.network.cond_channels}) must match the mel band "
            f"count ({cfg.frontend.bands})")
    manifest = corpus_io.load_manifest(args.corpus)
    utt_filter = args.utterances.split(",") if args.utterances else None
    items, norm_stats, cond_stats = corpus_io.prepare_training_data(
        manifest, cfg.frontend, grid_levels=cfg.network.grid_levels,
        utterance_ids=utt_filter)
    _ensure_out_dir(args.out, force=True)
    write_run_config(os.path.join(args.out, "run_config.ini"), cfg)
    stats_dir = os.path.join(args.out, "norm_stats")
    os.makedirs(stats_dir, exist_ok=True)
    for spk, stats in norm_stats.items():
        stats.save(os.path.join(stats_dir, f"{spk}.txt"))
    header = {
        "cond_mean": [float(v) for v in cond_stats.mean],
        "cond_std": [float(v) for v in cond_stats.std],
        "norm_stats": {spk: {"min": [float(v) for v in s.mins],
                             "max": [float(v) for v in s.maxs]}
                       for spk, s in norm_stats.items()},
        "frontend": cfg.frontend.to_dict(),
    }
    result = training_mod.train(items, cfg.network, cfg.training, args.out,
                                extra_header=header, resume_from=args.resume)
    final = result.loss_curve[-1] if result.loss_curve else None
    if final:
        print(f"trained {final[0]} step(s); final nll {final[1]:.4f}")
    print(f"checkpoint: {result.checkpoint_path}")
    return 0


def _load_checkpoint_bundle(path):
    params, _, header = training_mod.load_trainer_checkpoint(path)
    cond_stats = corpus_io.CondStats(
        mean=np.asarray(header["cond_mean"], dtype=np.float64),
        std=np.asarray(header["cond_std"], dtype=np.float64))
    norm_stats = {spk: NormStats(mins=np.asarray(s["min"]), maxs=np.asarray(s["max"]),
                                 speaker_id=spk)
                  for spk, s in header.get("norm_stats", {}).items()}
    frontend_cfg = (FrontendConfig.from_dict(header["frontend"])
                    if "frontend" in header else FrontendConfig())
    return params, cond_stats, norm_stats, frontend_cfg, header


def _resolve_norm_stats(args, embedded, speaker_id):
    if args.stats:
        if os.path.isdir(args.stats):
            path = os.path.join(args.stats, f"{speaker_id}.txt")
            if not os.path.exists(path):
                raise UsageError(f"no norm stats file for speaker {speaker_id!r} "
                                 f"under {args.stats}")
            return NormStats.load(path)
        return NormStats.load(args.stats)
    if speaker_id in embedded:
        return embedded[speaker_id]
    raise UsageError(f"no normalization stats for speaker {speaker_id!r}; "
                     f"pass --stats or use a checkpoint that embeds them")


def cmd_invert(args):
    cfg = resolve_run_config(args.config, _overrides_from(args))
    params, cond_stats, embedded_stats, frontend_cfg, _ = _load_checkpoint_bundle(
        args.checkpoint)
    manifest = corpus_io.load_manifest(args.corpus) if args.corpus else None
    paths = []
    for pattern in args.inputs:
        paths.extend(sorted(glob.glob(pattern)))
    if not paths:
        print("warning: no input files matched", file=sys.stderr)
        return 0
    _ensure_out_dir(args.out, force=args.force, must_be_empty=True)
    write_run_config(os.path.join(args.out, "run_config.ini"), cfg)
    rule = cfg.rule
    for path in paths:
        utt_id = os.path.splitext(os.path.basename(path))[0]
        speaker_id = args.speaker
        reference = None
        if manifest is not None:
            for u in manifest.utterances:
                if os.path.splitext(os.path.basename(u.audio_path))[0] == utt_id \
                        or u.id == utt_id:
                    utt_id = u.id
                    speaker_id = u.speaker_id
                    ref400 = corpus_io.load_reference_trajectory(manifest, u)
                    reference = downsample(ref400, int(round(ref400.frame_rate / 100.0)))
                    break
        if speaker_id is None:
            raise UsageError(f"cannot determine the speaker for {path}; "
                             f"pass --speaker or --corpus")
        stats = _resolve_norm_stats(args, embedded_stats, speaker_id)
        if path.endswith(".wav"):
            source = AudioClip.from_wav(path)
        else:
            source = read_tensor(path)
        traj = gen.invert(source, params, cond_stats, stats, rule, frontend_cfg)
        out_path = os.path.join(args.out, f"{utt_id}.traj")
        corpus_io.save_trajectory(out_path, traj)
        gen.write_overlay_csv(os.path.join(args.out, f"{utt_id}.overlay.csv"),
                              traj.channels, traj.frame_rate, CHANNEL_NAMES,
                              reference.channels if reference is not None else None)
        print(f"inverted {path} -> {out_path} ({traj.channels.shape[0]} frames)")
    return 0


def cmd_evaluate(args):
    cfg = resolve_run_config(args.config, _overrides_from(args))
    manifest = corpus_io.load_manifest(args.corpus)
    pred_files = {os.path.splitext(os.path.basename(p))[0]: p
                  for p in sorted(glob.glob(os.path.join(args.pred, "*.traj")))}
    diagnostics = []
    scored = []
    matched = set()
    for u in manifest.utterances:
        if u.id not in pred_files:
            continue
        matched.add(u.id)
        predicted = read_tensor(pred_files[u.id])
        ref400 = corpus_io.load_reference_trajectory(manifest, u)
        reference = downsample(ref400, int(round(ref400.frame_rate / 100.0)))
        scored.append(metrics_mod.score_utterance(
            u.id, u.speaker_id, predicted, reference.channels, diagnostics))
    unpaired = sorted(set(pred_files) - matched)
    for utt in unpaired:
        diagnostics.append(f"{utt}: prediction has no matching corpus utterance; excluded")
    if not scored:
        raise UsageError("no predicted/reference pairs to evaluate")
    report = metrics_mod.aggregate(scored, manifest.speakers, diagnostics)
    _ensure_out_dir(args.out, force=args.force, must_be_empty=True)
    write_run_config(os.path.join(args.out, "run_config.ini"), cfg)
    metrics_mod.write_report_csv(report, os.path.join(args.out, "report.csv"))
    metrics_mod.write_summary_csv(report, os.path.join(args.out, "summary.csv"))
    text = metrics_mod.format_report(report, reference_footer=args.reference_footer)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    if unpaired:
        print(f"{len(unpaired)} unpaired prediction(s) excluded", file=sys.stderr)
    return 0


def cmd_benchmark(args):
    cfg = resolve_run_config(args.config, _overrides_from(args))
    report = bench.run_benchmark(cfg.network, timesteps=args.timesteps,
                                 seed=args.seed or 0, rule=cfg.rule,
                                 verify_timesteps=args.verify_timesteps)
    text = report.format()
    print(text, end="")
    if args.out:
        _ensure_out_dir(args.out, force=True)
        write_run_config(os.path.join(args.out, "run_config.ini"), cfg)
        with open(os.path.join(args.out, "benchmark.txt"), "w") as fh:
            fh.write(text)
    return 0


# --- parser -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="artinv",
        description="Acoustic-to-articulatory inversion: synthesize corpora, "
                    "train, invert, evaluate, and benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--utterances", type=int, default=4)
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--train-fraction", type=float, default=0.75)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth, seed=0)

    p = sub.add_parser("train", help="train on a corpus manifest")
    common(p)
    p.add_argument("--corpus", required=True, help="corpus manifest path")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--utterances", help="comma-separated utterance ids to train on")
    p.add_argument("--steps", type=int, default=None, help="optimizer steps")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--layers-per-stack", dest="layers_per_stack", type=int)
    p.add_argument("--stacks", type=int)
    p.add_argument("--kernel-size", dest="kernel_size", type=int)
    p.add_argument("--residual-channels", dest="residual_channels", type=int)
    p.add_argument("--gate-channels", dest="gate_channels", type=int)
    p.add_argument("--skip-channels", dest="skip_channels", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("invert", help="invert audio (or mel tensors) to trajectories")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="write into an existing non-empty output directory")
    p.add_argument("inputs", nargs="*", help="wav files, mel tensor files, or globs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", help="manifest for speaker lookup and overlays")
    p.add_argument("--speaker", help="speaker id when no corpus is given")
    p.add_argument("--stats", help="norm-stats file or directory")
    p.add_argument("--rule", choices=("mean", "mode", "sample"))
    p.add_argument("--temperature", type=float, default=None)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("evaluate", help="score predictions against references")
    common(p)
    p.add_argument("--force", action="store_true",
                   help="write into an existing non-empty output directory")
    p.add_argument("--pred", required=True, help="directory of predicted .traj files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--reference-footer", action="store_true",
                   help="append published reference means to the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="naive vs cached generation op counts")
    common(p, out_required=False)
    p.add_argument("--out")
    p.add_argument("--timesteps", type=int, default=1000)
    p.add_argument("--verify-timesteps", dest="verify_timesteps", type=int, default=16)
    p.add_argument("--layers-per-stack", dest="layers_per_stack", type=int)
    p.add_argument("--stacks", type=int)
    p.add_argument("--kernel-size", dest="kernel_size", type=int)
    p.add_argument("--residual-channels", dest="residual_channels", type=int)
    p.add_argument("--gate-channels", dest="gate_channels", type=int)
    p.add_argument("--skip-channels", dest="skip_channels", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--rule", choices=("mean", "mode"))
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (UsageError, ConfigError, FrontendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
