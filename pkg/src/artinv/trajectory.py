"""Articulatory trajectory handling: the fixed 10-channel feature set,
anti-aliased downsampling, and per-speaker dynamic-range normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

CHANNEL_NAMES = ("VT1", "VT2", "VT3", "VT4", "VT5", "VT6", "VT7", "VT8", "VT9", "VT10")
CHANNEL_COUNT = len(CHANNEL_NAMES)

# Descriptive names for the ten vocal-tract channels: horizontal/vertical
# tongue dorsum, lateral tongue, and tongue tip positions, lip protrusion,
# separation and corner distance, and jaw (middle incisor) height.
CHANNEL_DESCRIPTIONS = {
    "VT1": "tongue dorsum horizontal position",
    "VT2": "tongue dorsum vertical height to hard palate",
    "VT3": "lateral tongue horizontal position",
    "VT4": "lateral tongue vertical height to hard palate",
    "VT5": "tongue tip horizontal position",
    "VT6": "tongue tip vertical height to hard palate",
    "VT7": "horizontal lip protrusion",
    "VT8": "vertical lip separation",
    "VT9": "lateral lip corner distance",
    "VT10": "vertical middle incisor (jaw)",
}


class TrajectoryError(ValueError):
    pass


@dataclass
class TrajectorySet:
    """One utterance's articulatory channels, time-major (T, 10), in mm for
    positional channels; frame_rate in Hz."""

    channels: np.ndarray
    frame_rate: float
    speaker_id: str = ""

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[1] != CHANNEL_COUNT:
            raise TrajectoryError(
                f"expected (T, {CHANNEL_COUNT}) channels, got {self.channels.shape}")
        if self.channels.size and not np.isfinite(self.channels).all():
            raise TrajectoryError("trajectory contains non-finite values")
        if self.frame_rate <= 0:
            raise TrajectoryError(f"frame_rate must be positive, got {self.frame_rate}")


@dataclass(frozen=True)
class NormStats:
    """Per-channel global extrema for one speaker; max must exceed min."""

    mins: np.ndarray
    maxs: np.ndarray
    speaker_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mins", np.asarray(self.mins, dtype=np.float64))
        object.__setattr__(self, "maxs", np.asarray(self.maxs, dtype=np.float64))
        if self.mins.shape != (CHANNEL_COUNT,) or self.maxs.shape != (CHANNEL_COUNT,):
            raise TrajectoryError(f"stats must cover all {CHANNEL_COUNT} channels")
        if not np.all(self.maxs > self.mins):
            bad = [CHANNEL_NAMES[i] for i in np.nonzero(self.maxs <= self.mins)[0]]
            raise TrajectoryError(f"degenerate range (max <= min) for channel(s) {bad}")

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(f"speaker={self.speaker_id}\n")
            for i, name in enumerate(CHANNEL_NAMES):
                fh.write(f"{name}.min={float(self.mins[i])!r}\n")
                fh.write(f"{name}.max={float(self.maxs[i])!r}\n")

    @classmethod
    def load(cls, path) -> "NormStats":
        values = {}
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or "=" not in line:
                    continue
                key, val = line.split("=", 1)
                values[key] = val
        mins = [float(values[f"{n}.min"]) for n in CHANNEL_NAMES]
        maxs = [float(values[f"{n}.max"]) for n in CHANNEL_NAMES]
        return cls(mins=np.array(mins), maxs=np.array(maxs),
                   speaker_id=values.get("speaker", ""))


def downsample(traj: TrajectorySet, factor: int) -> TrajectorySet:
    """Decimate by an integer factor after a 4th-order low-pass at 0.8x the
    new Nyquist. Output frame t equals (filtered) input frame t*factor.
    """
    if factor < 1:
        raise TrajectoryError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return TrajectorySet(traj.channels.copy(), traj.frame_rate, traj.speaker_id)
    T = traj.channels.shape[0]
    if T < factor:
        raise TrajectoryError(f"trajectory has {T} frames, shorter than factor {factor}")
    b, a = signal.butter(4, 0.8 / factor)
    padlen = min(3 * max(len(a), len(b)), T - 1)
    filtered = signal.filtfilt(b, a, traj.channels, axis=0, padlen=padlen)
    out = filtered[: (T // factor) * factor: factor]
    return TrajectorySet(out, traj.frame_rate / factor, traj.speaker_id)


def fit_norm_stats(trajectories, speaker_id="") -> NormStats:
    """Global per-channel extrema over all of one speaker's utterances."""
    if not trajectories:
        raise TrajectoryError("need at least one utterance to fit stats")
    stacked = np.vstack([t.channels for t in trajectories])
    mins = stacked.min(axis=0)
    maxs = stacked.max(axis=0)
    constant = maxs <= mins
    if constant.any():
        bad = [CHANNEL_NAMES[i] for i in np.nonzero(constant)[0]]
        raise TrajectoryError(
            f"channel(s) {bad} are constant across speaker {speaker_id!r}; "
            f"dynamic-range normalization is undefined")
    return NormStats(mins=mins, maxs=maxs, speaker_id=speaker_id)


def normalize(traj: TrajectorySet, stats: NormStats) -> TrajectorySet:
    """Map [min_i, max_i] to [-1, 1] per channel; out-of-range values clamp.

    y = 2 * (x - min) / (max - min) - 1.
    """
    span = stats.maxs - stats.mins
    y = 2.0 * (traj.channels - stats.mins) / span - 1.0
    y = np.clip(y, -1.0, 1.0)
    return TrajectorySet(y, traj.frame_rate, traj.speaker_id)


def denormalize(traj: TrajectorySet, stats: NormStats) -> TrajectorySet:
    """Exact inverse of normalize on [-1, 1]: back to mm."""
    span = stats.maxs - stats.mins
    x = (traj.channels + 1.0) * 0.5 * span + stats.mins
    return TrajectorySet(x, traj.frame_rate, traj.speaker_id)
