import numpy as np
import pytest

from artinv.frontend import (AudioClip, FrontendConfig, FrontendError,
                             build_mel_filterbank, frame_count, hanning_window,
                             hz_to_mel, log_mel, mel_to_hz, stft)


def dft_oracle(frame, fft_size):
    """Direct O(N^2) discrete Fourier transform of a windowed frame."""
    padded = np.zeros(fft_size)
    padded[: len(frame)] = frame
    bins = fft_size // 2 + 1
    out = np.zeros(bins, dtype=np.complex128)
    for k in range(bins):
        for n in range(fft_size):
            out[k] += padded[n] * np.exp(-2j * np.pi * k * n / fft_size)
    return out


class TestStft:
    def test_dc_concentrates_in_bin_zero(self):
        clip = AudioClip(np.ones(64), 16000)
        spec = stft(clip, 64, 16, 64)
        window_sum = hanning_window(64).sum()
        assert abs(abs(spec[0, 0]) - window_sum) < 1e-9
        assert np.argmax(np.abs(spec[0])) == 0
        # the window's own transform occupies bins 0 and 1; everything else
        # is numerically zero
        assert np.all(np.abs(spec[0, 2:]) < 1e-9)

    def test_matches_direct_dft_oracle(self):
        rng = np.random.default_rng(42)
        samples = rng.uniform(-1, 1, 64)
        clip = AudioClip(samples, 16000)
        spec = stft(clip, 64, 64, 64)
        oracle = dft_oracle(samples * hanning_window(64), 64)
        assert np.max(np.abs(spec[0] - oracle)) < 1e-9

    def test_matches_dft_oracle_with_zero_padding(self):
        rng = np.random.default_rng(43)
        samples = rng.uniform(-1, 1, 150)
        clip = AudioClip(samples, 16000)
        spec = stft(clip, 48, 37, 128)
        for t in range(spec.shape[0]):
            frame = samples[t * 37: t * 37 + 48] * hanning_window(48)
            oracle = dft_oracle(frame, 128)
            assert np.max(np.abs(spec[t] - oracle)) < 1e-9

    def test_sinusoid_peaks_at_its_bin(self):
        n = 64
        k = 7
        t = np.arange(n)
        clip = AudioClip(np.cos(2 * np.pi * k * t / n), 16000)
        spec = stft(clip, n, n, n)
        assert np.argmax(np.abs(spec[0])) == k

    def test_single_window_gives_one_frame(self):
        clip = AudioClip(np.ones(620), 16000)
        assert stft(clip, 620, 155, 1024).shape[0] == 1

    def test_trailing_partial_frame_dropped(self):
        assert frame_count(620 + 154, 620, 155) == 1
        assert frame_count(620 + 155, 620, 155) == 2

    def test_empty_clip_rejected(self):
        with pytest.raises(FrontendError, match="empty"):
            stft(AudioClip(np.array([]), 16000), 64, 16, 64)

    def test_window_longer_than_fft_rejected(self):
        with pytest.raises(FrontendError, match="longer than fft_size"):
            stft(AudioClip(np.ones(2048), 16000), 2048, 512, 1024)


class TestMelFilterbank:
    def test_single_band_peaks_at_mel_midpoint(self):
        fb = build_mel_filterbank(16000, 1024, 1, 125.0, 7600.0)
        peak_bin = np.argmax(fb.weights[0])
        center_hz = mel_to_hz((hz_to_mel(125.0) + hz_to_mel(7600.0)) / 2)
        bin_hz = peak_bin * 16000 / 1024
        assert abs(bin_hz - center_hz) <= 16000 / 1024  # within one bin

    def test_default_bank_shape_and_support(self):
        fb = build_mel_filterbank(16000, 1024, 80, 125.0, 7600.0)
        assert fb.weights.shape == (80, 513)
        bin_hz = np.arange(513) * 16000 / 1024
        nz = np.nonzero(fb.weights.sum(axis=0))[0]
        assert bin_hz[nz].min() > 125.0
        assert bin_hz[nz].max() < 7600.0

    def test_rows_nonnegative_with_positive_sums(self):
        fb = build_mel_filterbank(16000, 1024, 80, 125.0, 7600.0)
        assert np.all(fb.weights >= 0)
        assert np.all(fb.weights.sum(axis=1) > 0)

    def test_filter_centers_increase_in_hz(self):
        fb = build_mel_filterbank(16000, 1024, 40, 125.0, 7600.0)
        centers = np.argmax(fb.weights, axis=1)
        assert np.all(np.diff(centers) > 0)

    def test_f_max_above_nyquist_rejected(self):
        with pytest.raises(FrontendError, match="Nyquist"):
            build_mel_filterbank(16000, 1024, 80, 125.0, 9000.0)

    def test_zero_bands_rejected(self):
        with pytest.raises(FrontendError, match="bands"):
            build_mel_filterbank(16000, 1024, 0, 125.0, 7600.0)


class TestLogMel:
    def test_silence_hits_the_power_floor(self):
        cfg = FrontendConfig()
        clip = AudioClip(np.zeros(16000), 16000)
        mel = log_mel(clip, cfg)
        assert np.allclose(mel.frames, np.log(cfg.power_floor))

    def test_doubling_amplitude_adds_log_four(self):
        cfg = FrontendConfig()
        rng = np.random.default_rng(0)
        samples = rng.uniform(-0.4, 0.4, 16000)
        quiet = log_mel(AudioClip(samples, 16000), cfg)
        loud = log_mel(AudioClip(2 * samples, 16000), cfg)
        above = quiet.frames > np.log(cfg.power_floor) + 2
        assert above.any()
        diff = loud.frames[above] - quiet.frames[above]
        assert np.allclose(diff, np.log(4.0), atol=1e-9)

    def test_one_second_frame_count(self):
        cfg = FrontendConfig()
        rng = np.random.default_rng(1)
        mel = log_mel(AudioClip(rng.uniform(-1, 1, 16000), 16000), cfg)
        assert mel.frames.shape == ((16000 - 620) // 155 + 1, 80)
        assert mel.frames.shape[0] == 100

    def test_invariant_to_sub_hop_trailing_samples(self):
        cfg = FrontendConfig()
        rng = np.random.default_rng(2)
        # frame-aligned length: the leftover after the last frame is empty,
        # so anything shorter than one further hop cannot start a new frame
        n = 620 + 155 * 99
        samples = rng.uniform(-1, 1, n)
        base = log_mel(AudioClip(samples, 16000), cfg)
        extended = log_mel(AudioClip(np.concatenate([samples, rng.uniform(-1, 1, 154)]),
                                     16000), cfg)
        assert extended.frames.shape == base.frames.shape
        assert np.array_equal(extended.frames, base.frames)

    def test_extending_audio_never_alters_existing_frames(self):
        cfg = FrontendConfig()
        rng = np.random.default_rng(3)
        samples = rng.uniform(-1, 1, 16000)
        base = log_mel(AudioClip(samples, 16000), cfg)
        extended = log_mel(AudioClip(np.concatenate([samples, rng.uniform(-1, 1, 1000)]),
                                     16000), cfg)
        assert np.array_equal(extended.frames[: base.frames.shape[0]], base.frames)

    def test_sample_rate_mismatch_rejected(self):
        with pytest.raises(FrontendError, match="no resampling"):
            log_mel(AudioClip(np.ones(8000), 8000), FrontendConfig())

    def test_frame_count_deterministic_no_padding(self):
        cfg = FrontendConfig()
        for n in (620, 1000, 4321, 16000):
            clip = AudioClip(np.ones(n), 16000)
            mel = log_mel(clip, cfg)
            assert mel.frames.shape[0] == frame_count(n, 620, 155)
