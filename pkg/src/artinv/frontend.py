"""Log-mel-spectrogram frontend: Hanning-windowed STFT and triangular mel
filterbank with log dynamic-range compression.

Frames start at sample 0 with no center padding, so frame t covers samples
[t*hop, t*hop + window) and any trailing partial frame is dropped; the frame
count is a deterministic function of the clip length. All functions are pure
and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .wavfile import read_wav


class FrontendError(ValueError):
    pass


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray          # mono amplitudes, nominally in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate <= 0:
            raise FrontendError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise FrontendError("expected a 1-D mono sample array")
        if self.samples.size and not np.isfinite(self.samples).all():
            raise FrontendError("audio contains non-finite samples")

    @classmethod
    def from_wav(cls, path) -> "AudioClip":
        samples, rate = read_wav(path)
        return cls(samples=samples, sample_rate=rate)


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray           # (T, bands) log-mel energies
    frame_hop_s: float
    band_count: int

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.band_count:
            raise FrontendError(f"frames must be (T, {self.band_count})")
        if self.frames.size and not np.isfinite(self.frames).all():
            raise FrontendError("mel frames contain non-finite values")


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray          # (bands, fft_bins)
    f_min: float
    f_max: float


@dataclass(frozen=True)
class FrontendConfig:
    """Frontend parameters, with window/hop pinned in samples.

    Defaults follow a 38.7 ms window and 9.7 ms hop at 16 kHz (620 / 155
    samples) zero-padded into a 1024-point FFT, and an 80-band filterbank
    over 125 Hz..7.6 kHz. Power is clamped at ``power_floor`` before the log
    so silent frames stay finite.
    """

    sample_rate: int = 16000
    window_samples: int = 620
    hop_samples: int = 155
    fft_size: int = 1024
    bands: int = 80
    f_min: float = 125.0
    f_max: float = 7600.0
    power_floor: float = 1e-10

    @property
    def frame_hop_s(self) -> float:
        return self.hop_samples / self.sample_rate

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise FrontendError(f"unknown frontend config field(s): {sorted(unknown)}")
        return cls(**d)


def frame_count(n_samples: int, window: int, hop: int) -> int:
    """Number of whole frames; trailing samples shorter than a frame drop."""
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def hanning_window(n: int):
    """Periodic Hanning window (the STFT analysis convention): with no zero
    padding, a DC input then lands entirely in bins 0 and +-1."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, window_samples: int, hop_samples: int, fft_size: int):
    """Hanning-windowed short-time Fourier transform.

    Returns a complex (T, fft_size//2 + 1) matrix. The window is zero-padded
    up to fft_size before the transform.
    """
    if clip.samples.size == 0:
        raise FrontendError("empty audio clip")
    if window_samples > fft_size:
        raise FrontendError(f"window ({window_samples}) longer than fft_size ({fft_size})")
    if window_samples < 1 or hop_samples < 1:
        raise FrontendError("window and hop must be at least one sample")
    T = frame_count(clip.samples.size, window_samples, hop_samples)
    window = hanning_window(window_samples)
    out = np.empty((T, fft_size // 2 + 1), dtype=np.complex128)
    for t in range(T):
        seg = clip.samples[t * hop_samples: t * hop_samples + window_samples]
        out[t] = np.fft.rfft(seg * window, n=fft_size)
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(sample_rate, fft_size, bands, f_min, f_max) -> MelFilterbank:
    """Triangular filters with centers equally spaced on the mel scale."""
    if bands < 1:
        raise FrontendError(f"bands must be >= 1, got {bands}")
    if not 0 <= f_min < f_max:
        raise FrontendError(f"need 0 <= f_min < f_max, got {f_min}, {f_max}")
    if f_max > sample_rate / 2:
        raise FrontendError(f"f_max {f_max} exceeds Nyquist {sample_rate / 2}")
    edges_mel = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), bands + 2)
    edges_hz = mel_to_hz(edges_mel)
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    weights = np.zeros((bands, fft_size // 2 + 1))
    for b in range(bands):
        lo, mid, hi = edges_hz[b], edges_hz[b + 1], edges_hz[b + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        weights[b] = np.maximum(0.0, np.minimum(rising, falling))
        if not weights[b].any():
            raise FrontendError(
                f"mel band {b} has no nonzero FFT bin; increase fft_size or widen the band")
    return MelFilterbank(weights=weights, f_min=float(f_min), f_max=float(f_max))


def log_mel(clip: AudioClip, config: FrontendConfig) -> MelSpectrogram:
    """log(max(filterbank @ |stft|^2, power_floor)) per frame."""
    if clip.sample_rate != config.sample_rate:
        raise FrontendError(
            f"clip is {clip.sample_rate} Hz but the frontend is configured for "
            f"{config.sample_rate} Hz (no resampling)")
    fb = build_mel_filterbank(config.sample_rate, config.fft_size, config.bands,
                              config.f_min, config.f_max)
    spec = stft(clip, config.window_samples, config.hop_samples, config.fft_size)
    power = spec.real ** 2 + spec.imag ** 2
    mel_power = power @ fb.weights.T
    frames = np.log(np.maximum(mel_power, config.power_floor))
    return MelSpectrogram(frames=frames, frame_hop_s=config.frame_hop_s,
                          band_count=config.bands)
