"""Corpus layout, manifest handling, train/test splitting, and a synthetic
corpus generator for desk-scale verification.

A corpus is a directory with a plain-text manifest at its root and one
subdirectory per speaker holding RIFF/WAVE audio plus trajectory tensor files
with sidecar metadata. The manifest has one tagged record per line:

    speaker id=spk00 group=L1 gender=M
    utterance id=spk00_u000 speaker=spk00 audio=spk00/u000.wav \
        traj=spk00/u000.traj split=train

The synthetic generator produces paired utterances with a fixed, documented
articulatory-to-acoustic coupling: each channel is a sum of band-limited
(<= 8 Hz) random sinusoids, and the audio is a 220 Hz harmonic tone whose
per-harmonic amplitude is exp(B @ y) for a fixed cosine coupling matrix B
over the range-normalized trajectory values y. The coupling is deliberately
frozen so end-to-end overfitting tests keep meaning across versions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .frontend import AudioClip, FrontendConfig, log_mel
from .tensorfile import read_tensor, write_tensor
from .trajectory import (CHANNEL_COUNT, CHANNEL_NAMES, NormStats, TrajectorySet,
                         downsample, fit_norm_stats, normalize)
from .training import TrainItem
from .wavfile import write_wav
from . import mixture


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Speaker:
    id: str
    group: str   # L1 | L2
    gender: str  # M | F


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker_id: str
    audio_path: str
    trajectory_path: str
    split: str   # train | test


@dataclass
class CorpusManifest:
    root: str
    speakers: list = field(default_factory=list)
    utterances: list = field(default_factory=list)

    def speaker(self, speaker_id) -> Speaker:
        for s in self.speakers:
            if s.id == speaker_id:
                return s
        raise CorpusError(f"unknown speaker {speaker_id!r}")

    def split_utterances(self, split) -> list:
        return [u for u in self.utterances if u.split == split]

    def utterance(self, utt_id) -> Utterance:
        for u in self.utterances:
            if u.id == utt_id:
                return u
        raise CorpusError(f"unknown utterance {utt_id!r}")


def _parse_fields(tokens, line_no):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise CorpusError(f"manifest line {line_no}: malformed field {tok!r}")
        key, val = tok.split("=", 1)
        out[key] = val
    return out


def load_manifest(path, validate_paths=True) -> CorpusManifest:
    root = os.path.dirname(os.path.abspath(path))
    manifest = CorpusManifest(root=root)
    speaker_ids = set()
    utt_ids = set()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tag, *rest = line.split()
            fields_ = _parse_fields(rest, line_no)
            if tag == "speaker":
                _require(fields_, ("id", "group", "gender"), line_no)
                if fields_["group"] not in ("L1", "L2"):
                    raise CorpusError(f"manifest line {line_no}: group must be L1 or L2")
                if fields_["gender"] not in ("M", "F"):
                    raise CorpusError(f"manifest line {line_no}: gender must be M or F")
                if fields_["id"] in speaker_ids:
                    raise CorpusError(f"duplicate speaker id {fields_['id']!r}")
                speaker_ids.add(fields_["id"])
                manifest.speakers.append(Speaker(fields_["id"], fields_["group"],
                                                 fields_["gender"]))
            elif tag == "utterance":
                _require(fields_, ("id", "speaker", "audio", "traj", "split"), line_no)
                if fields_["id"] in utt_ids:
                    raise CorpusError(f"duplicate utterance id {fields_['id']!r}")
                if fields_["speaker"] not in speaker_ids:
                    raise CorpusError(
                        f"utterance {fields_['id']!r} references undeclared speaker "
                        f"{fields_['speaker']!r}")
                if fields_["split"] not in ("train", "test"):
                    raise CorpusError(
                        f"utterance {fields_['id']!r}: split must be train or test")
                utt_ids.add(fields_["id"])
                manifest.utterances.append(Utterance(
                    fields_["id"], fields_["speaker"], fields_["audio"],
                    fields_["traj"], fields_["split"]))
            else:
                raise CorpusError(f"manifest line {line_no}: unknown record tag {tag!r}")
    if validate_paths:
        for u in manifest.utterances:
            for rel in (u.audio_path, u.trajectory_path):
                if not os.path.exists(os.path.join(root, rel)):
                    raise CorpusError(f"utterance {u.id!r}: missing file {rel}")
    return manifest


def _require(fields_, names, line_no):
    missing = [n for n in names if n not in fields_]
    if missing:
        raise CorpusError(f"manifest line {line_no}: missing field(s) {missing}")


def save_manifest(manifest: CorpusManifest, path):
    with open(path, "w") as fh:
        fh.write("# corpus manifest\n")
        for s in manifest.speakers:
            fh.write(f"speaker id={s.id} group={s.group} gender={s.gender}\n")
        for u in manifest.utterances:
            fh.write(f"utterance id={u.id} speaker={u.speaker_id} "
                     f"audio={u.audio_path} traj={u.trajectory_path} split={u.split}\n")


def save_trajectory(path, traj: TrajectorySet):
    write_tensor(path, traj.channels.astype(np.float64))
    with open(path + ".meta", "w") as fh:
        fh.write(f"speaker={traj.speaker_id}\n")
        fh.write(f"frame_rate={traj.frame_rate!r}\n")
        fh.write(f"channels={','.join(CHANNEL_NAMES)}\n")


def load_trajectory(path) -> TrajectorySet:
    channels = read_tensor(path)
    meta = {}
    with open(path + ".meta") as fh:
        for line in fh:
            if "=" in line:
                key, val = line.strip().split("=", 1)
                meta[key] = val
    return TrajectorySet(channels, frame_rate=float(meta["frame_rate"]),
                         speaker_id=meta.get("speaker", ""))


# --- synthetic corpus -------------------------------------------------------

_HALF_SPANS = np.array([8.0, 7.0, 9.0, 6.0, 10.0, 7.0, 5.0, 6.0, 4.0, 8.0])
_HARMONIC_F0 = 220.0
_HARMONIC_COUNT = 34
_AUDIO_SCALE = 1.0 / 256.0


def _coupling_matrix():
    m = np.arange(1, _HARMONIC_COUNT + 1)[:, None]
    c = np.arange(1, CHANNEL_COUNT + 1)[None, :]
    return 0.25 * np.cos(1.7 * m * c + 0.3 * c)


def _synthetic_trajectory(rng, duration_s, frame_rate=400.0):
    T = int(round(duration_s * frame_rate))
    t = np.arange(T) / frame_rate
    channels = np.zeros((T, CHANNEL_COUNT))
    for ch in range(CHANNEL_COUNT):
        weights = rng.uniform(0.5, 1.0, size=3)
        weights *= 0.95 * _HALF_SPANS[ch] / weights.sum()
        freqs = rng.uniform(0.2, 3.0, size=3)
        phases = rng.uniform(0.0, 2 * np.pi, size=3)
        for w, f, p in zip(weights, freqs, phases):
            channels[:, ch] += w * np.sin(2 * np.pi * f * t + p)
    return TrajectorySet(channels, frame_rate=frame_rate)


def _synthetic_audio(traj: TrajectorySet, sample_rate):
    y = traj.channels / _HALF_SPANS
    n = int(round(traj.channels.shape[0] / traj.frame_rate * sample_rate))
    ts = np.arange(n) / sample_rate
    frame_times = np.arange(traj.channels.shape[0]) / traj.frame_rate
    B = _coupling_matrix()
    log_amps = y @ B.T
    audio = np.zeros(n)
    for m in range(_HARMONIC_COUNT):
        amp = np.interp(ts, frame_times, np.exp(log_amps[:, m]))
        audio += amp * np.sin(2 * np.pi * (m + 1) * _HARMONIC_F0 * ts + 0.5 * (m + 1))
    return audio * _AUDIO_SCALE


def make_synthetic_corpus(out_dir, seed, speakers, utterances_per_speaker,
                          duration_s=3.0, sample_rate=16000, train_fraction=0.75,
                          force=False) -> str:
    """Generate a paired synthetic corpus; returns the manifest path.

    Deterministic in (seed, counts): the same arguments produce byte-identical
    files. Refuses to write into an existing non-empty directory unless force
    is set.
    """
    if speakers < 1 or utterances_per_speaker < 1:
        raise CorpusError("need at least one speaker and one utterance per speaker")
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise CorpusError(f"output directory {out_dir} is not empty (use force)")
    os.makedirs(out_dir, exist_ok=True)
    manifest = CorpusManifest(root=os.path.abspath(out_dir))
    for si in range(speakers):
        spk = f"spk{si:02d}"
        group = "L1" if si < (speakers + 1) // 2 else "L2"
        gender = "M" if si % 2 == 0 else "F"
        manifest.speakers.append(Speaker(spk, group, gender))
        os.makedirs(os.path.join(out_dir, spk), exist_ok=True)
        for ui in range(utterances_per_speaker):
            rng = np.random.default_rng([seed, si, ui])
            traj = _synthetic_trajectory(rng, duration_s)
            traj.speaker_id = spk
            audio = _synthetic_audio(traj, sample_rate)
            utt = f"{spk}_u{ui:03d}"
            audio_rel = f"{spk}/u{ui:03d}.wav"
            traj_rel = f"{spk}/u{ui:03d}.traj"
            write_wav(os.path.join(out_dir, audio_rel), audio, sample_rate)
            save_trajectory(os.path.join(out_dir, traj_rel), traj)
            manifest.utterances.append(Utterance(utt, spk, audio_rel, traj_rel, "train"))
    manifest = split_corpus(manifest, seed, train_fraction)
    path = os.path.join(out_dir, "manifest.txt")
    save_manifest(manifest, path)
    return path


def split_corpus(manifest: CorpusManifest, seed, train_fraction) -> CorpusManifest:
    """Per-speaker random split into train/test; deterministic under seed."""
    if not 0.0 < train_fraction < 1.0:
        raise CorpusError(f"train_fraction must be in (0, 1), got {train_fraction}")
    new_utts = {}
    for si, spk in enumerate(manifest.speakers):
        utts = [u for u in manifest.utterances if u.speaker_id == spk.id]
        if not utts:
            continue
        if len(utts) < 2:
            raise CorpusError(f"speaker {spk.id!r} has {len(utts)} utterance(s); "
                              f"need at least 2 to split")
        n_train = int(round(len(utts) * train_fraction))
        n_train = min(max(n_train, 1), len(utts) - 1)
        order = np.random.default_rng([seed, si]).permutation(len(utts))
        train_idx = set(int(i) for i in order[:n_train])
        for i, u in enumerate(utts):
            label = "train" if i in train_idx else "test"
            new_utts[u.id] = Utterance(u.id, u.speaker_id, u.audio_path,
                                       u.trajectory_path, label)
    utterances = [new_utts.get(u.id, u) for u in manifest.utterances]
    return CorpusManifest(root=manifest.root, speakers=list(manifest.speakers),
                          utterances=utterances)


# --- feature preparation ----------------------------------------------------

@dataclass(frozen=True)
class CondStats:
    """Per-band mean/std of training log-mel frames, applied before the
    conditioning input so gate pre-activations start well-scaled."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frame_blocks) -> "CondStats":
        stacked = np.vstack(frame_blocks)
        return cls(mean=stacked.mean(axis=0),
                   std=np.maximum(stacked.std(axis=0), 1e-3))

    def apply(self, frames):
        return (np.asarray(frames, dtype=np.float64) - self.mean) / self.std

    def as_tensors(self):
        return {"stats.cond_mean": self.mean, "stats.cond_std": self.std}

    @classmethod
    def from_tensors(cls, tensors) -> "CondStats":
        return cls(mean=np.asarray(tensors["stats.cond_mean"], dtype=np.float64),
                   std=np.asarray(tensors["stats.cond_std"], dtype=np.float64))


def load_audio(manifest: CorpusManifest, utt: Utterance) -> AudioClip:
    return AudioClip.from_wav(os.path.join(manifest.root, utt.audio_path))


def load_reference_trajectory(manifest: CorpusManifest, utt: Utterance) -> TrajectorySet:
    return load_trajectory(os.path.join(manifest.root, utt.trajectory_path))


def prepare_pair(audio: AudioClip, traj: TrajectorySet, frontend_cfg: FrontendConfig,
                 target_rate=100.0):
    """Mel frames and downsampled trajectory, trimmed to a common length."""
    mel = log_mel(audio, frontend_cfg)
    factor = int(round(traj.frame_rate / target_rate))
    ds = downsample(traj, factor) if factor > 1 else traj
    L = min(mel.frames.shape[0], ds.channels.shape[0])
    return mel.frames[:L], TrajectorySet(ds.channels[:L], ds.frame_rate, ds.speaker_id)


def prepare_training_data(manifest: CorpusManifest, frontend_cfg: FrontendConfig,
                          grid_levels=256, utterance_ids=None):
    """Load the train split into teacher-forcing items.

    Returns (items, norm_stats_by_speaker, cond_stats). Normalization stats
    are fitted on the train split only (restricted further by utterance_ids
    when given), never on test data.
    """
    utts = manifest.split_utterances("train")
    if utterance_ids is not None:
        wanted = set(utterance_ids)
        utts = [u for u in utts if u.id in wanted]
        missing = wanted - {u.id for u in utts}
        if missing:
            raise CorpusError(f"utterance id(s) not in the train split: {sorted(missing)}")
    if not utts:
        raise CorpusError("no training utterances selected")
    prepared = []
    for u in utts:
        mel_frames, traj = prepare_pair(load_audio(manifest, u),
                                        load_reference_trajectory(manifest, u),
                                        frontend_cfg)
        prepared.append((u, mel_frames, traj))

    norm_stats = {}
    for spk in sorted({u.speaker_id for u, _, _ in prepared}):
        trajs = [traj for u, _, traj in prepared if u.speaker_id == spk]
        norm_stats[spk] = fit_norm_stats(trajs, speaker_id=spk)
    cond_stats = CondStats.fit([frames for _, frames, _ in prepared])

    items = []
    for u, mel_frames, traj in prepared:
        normalized = normalize(traj, norm_stats[u.speaker_id])
        items.append(TrainItem(
            utt_id=u.id,
            targets=mixture.quantize(normalized.channels, grid_levels),
            cond=cond_stats.apply(mel_frames),
            mask=np.ones(mel_frames.shape[0], dtype=np.float64)))
    return items, norm_stats, cond_stats
