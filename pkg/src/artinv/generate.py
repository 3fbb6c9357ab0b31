"""Autoregressive generation: a naive full-recompute reference decoder and a
cached incremental decoder that must agree with it.

The naive decoder reruns the convolution stack over the generated prefix for
every new sample, so its per-sample cost grows with the receptive field. The
cached decoder keeps one ring buffer of past residual-stream rows per layer
(the recurrent states) and computes exactly one new column per layer per
sample, making per-sample cost linear in the layer count. Both decoders share
every piece of math (conv taps, gate, head, mixture interpretation, decode
rule, re-quantization), so under ops.strict_summation() their outputs are
bitwise identical; under BLAS they agree to float tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .mixture import (MixtureParams, dequantize, mixture_from_raw, mixture_mean,
                      mode_bin, quantize, sample_value)
from .model import NetworkParams, head_forward, receptive_field, trunk_forward


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeRule:
    """How a mixture becomes one value per channel.

    kind: "mean" (expected value), "mode" (most probable grid bin), or
    "sample" (seeded draw: component by weight, then logistic noise).
    """

    kind: str = "mean"
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in ("mean", "mode", "sample"):
            raise ValueError(f"unknown decode rule {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def deterministic(self):
        return self.kind != "sample"


def decode(mix: MixtureParams, rule: DecodeRule, rng=None):
    """One normalized value per channel (pre-quantization)."""
    if rule.kind == "mean":
        return mixture_mean(mix)
    if rule.kind == "mode":
        return dequantize(mode_bin(mix), mix.levels)
    if rng is None:
        rng = np.random.default_rng(rule.seed)
    return sample_value(mix, rng, rule.temperature)


class RingBuffer:
    """Fixed-capacity ring of past rows; unwritten slots read as zeros.

    Capacity is dilation * (kernel_size - 1): exactly the taps a dilated
    convolution needs behind the current position.
    """

    def __init__(self, capacity, channels, dtype):
        self.capacity = capacity
        self.count = 0
        self.cursor = 0
        self.buffer = np.zeros((max(capacity, 1), channels), dtype=dtype)

    def push(self, row):
        if self.capacity == 0:
            return
        self.buffer[self.cursor] = row
        self.cursor = (self.cursor + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def read(self, offset):
        """Row pushed ``offset`` steps ago (1 = most recent)."""
        if offset < 1 or offset > self.capacity:
            raise GenerationError(
                f"cache read at offset {offset} outside capacity {self.capacity}")
        return self.buffer[(self.cursor - offset) % self.capacity]


def _decode_and_feed(raw_row, cfg, rule, rng):
    mix = mixture_from_raw(raw_row, cfg.input_channels, cfg.mixture_components,
                           cfg.grid_levels)
    if not (np.isfinite(mix.mu).all() and np.isfinite(mix.pi).all()):
        raise GenerationError("non-finite mixture parameters during generation")
    value = decode(mix, rule, rng)
    bins = quantize(value, cfg.grid_levels)
    return dequantize(bins, cfg.grid_levels)


def generate_naive(params: NetworkParams, h, rule: DecodeRule = DecodeRule(),
                   step_hook=None):
    """Reference decoder: full forward over the generated prefix per sample.

    h: (T, cond_channels). Returns (T, input_channels) normalized values on
    the quantization grid. The prefix fed to the forward pass is truncated to
    the receptive field, which cannot change any output.
    """
    cfg = params.config
    params.validate_finite()
    h = np.asarray(h, dtype=cfg.np_dtype)
    T = h.shape[0]
    out = np.zeros((T, cfg.input_channels), dtype=np.float64)
    rng = np.random.default_rng(rule.seed)
    rf = receptive_field(cfg)
    dt = cfg.np_dtype
    for t in range(T):
        lo = max(0, t + 1 - rf)
        y = np.zeros((t + 1 - lo, cfg.input_channels), dtype=dt)
        if t > lo:
            y[1:] = out[lo: t]
        skip_sum, _ = trunk_forward(params, y, h[lo: t + 1])
        raw = head_forward(params, skip_sum[-1:])
        out[t] = _decode_and_feed(raw[0], cfg, rule, rng)
        if step_hook is not None:
            step_hook(t)
    return out


def generate_cached(params: NetworkParams, h, rule: DecodeRule = DecodeRule(),
                    step_hook=None):
    """Incremental decoder: one new column per layer per sample, with past
    layer inputs held in per-layer ring buffers. Output contract is identical
    to generate_naive. Returns (values, caches) so callers can inspect the
    final recurrent state.
    """
    cfg = params.config
    params.validate_finite()
    dt = cfg.np_dtype
    h = np.asarray(h, dtype=dt)
    T = h.shape[0]
    out = np.zeros((T, cfg.input_channels), dtype=np.float64)
    rng = np.random.default_rng(rule.seed)
    dilations = cfg.dilations
    kernel = cfg.kernel_size
    caches = [RingBuffer((kernel - 1) * d, cfg.residual_channels, dt) for d in dilations]
    layers = [params.layer(k) for k in range(cfg.layer_count)]

    x_prev = np.zeros((1, cfg.input_channels), dtype=dt)
    for t in range(T):
        h_row = h[t: t + 1]
        x_cur = ops.matmul(x_prev, params.tensors["input_proj"])
        skip_row = np.zeros((1, cfg.skip_channels), dtype=dt)
        for k, d in enumerate(dilations):
            filt_w, gate_w, fcond_w, gcond_w, res_w, skip_w = layers[k]
            taps = [caches[k].read((kernel - 1 - j) * d) for j in range(kernel - 1)]
            taps.append(x_cur[0])
            a = ops.causal_conv_step(taps, filt_w)[None, :] + ops.matmul(h_row, fcond_w)
            b = ops.causal_conv_step(taps, gate_w)[None, :] + ops.matmul(h_row, gcond_w)
            z = np.tanh(a) * ops.sigmoid(b)
            skip_row += ops.matmul(z, skip_w)
            x_next = ops.matmul(z, res_w) + x_cur
            caches[k].push(x_cur[0])
            x_cur = x_next
        raw = head_forward(params, skip_row)
        out[t] = _decode_and_feed(raw[0], cfg, rule, rng)
        x_prev = out[t: t + 1].astype(dt)
        if step_hook is not None:
            step_hook(t)
    return out, caches


def invert(source, params: NetworkParams, cond_stats, norm_stats,
           rule: DecodeRule = DecodeRule(), frontend_config=None):
    """Full inversion: audio or mel frames -> mm trajectories at 100 Hz.

    source: an AudioClip or a MelSpectrogram (or a bare (T, bands) array of
    mel frames). cond_stats standardizes the conditioning exactly as during
    training; norm_stats maps normalized network outputs back to mm.
    """
    from .frontend import AudioClip, FrontendConfig, MelSpectrogram, log_mel
    from .trajectory import TrajectorySet, denormalize

    if isinstance(source, AudioClip):
        mel = log_mel(source, frontend_config or FrontendConfig())
        frames = mel.frames
    elif isinstance(source, MelSpectrogram):
        frames = source.frames
    else:
        frames = np.asarray(source, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != params.config.cond_channels:
        raise GenerationError(
            f"conditioning shape {frames.shape} does not match the checkpoint's "
            f"{params.config.cond_channels} channels")
    normalized, _ = generate_cached(params, cond_stats.apply(frames), rule)
    traj = TrajectorySet(normalized, frame_rate=100.0, speaker_id=norm_stats.speaker_id)
    return denormalize(traj, norm_stats)


def write_overlay_csv(path, predicted: "np.ndarray", frame_rate, channel_names,
                      reference=None):
    """Per-frame overlay of predicted (and optionally reference) values in mm."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "channel", "predicted_mm", "reference_mm"])
        for t in range(predicted.shape[0]):
            for c, name in enumerate(channel_names):
                ref = "" if reference is None or t >= reference.shape[0] \
                    else repr(float(reference[t, c]))
                writer.writerow([f"{t / frame_rate:.6f}", name,
                                 repr(float(predicted[t, c])), ref])
