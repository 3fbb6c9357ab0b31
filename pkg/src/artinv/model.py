"""Conditioned autoregressive dilated-causal-convolution network.

The network is a stack of gated residual blocks over quantized, normalized
trajectory inputs, locally conditioned on a frame-synchronous feature stream
(log-mel frames). Parameters are plain numpy arrays held in a name -> tensor
mapping; the forward pass is a pure function of (params, inputs), so params
can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import ops
from .mixture import MixtureParams, mixture_from_raw


class ConfigError(ValueError):
    """Invalid network or training configuration; names the offending field."""


@dataclass(frozen=True)
class NetworkConfig:
    layers_per_stack: int = 10
    stacks: int = 4
    dilation_base: int = 2
    kernel_size: int = 3
    residual_channels: int = 512
    gate_channels: int = 512
    skip_channels: int = 256
    mixture_components: int = 10
    input_channels: int = 10
    cond_channels: int = 80
    grid_levels: int = 256
    dtype: str = "float32"

    def __post_init__(self):
        for f in fields(self):
            if f.name == "dtype":
                continue
            value = getattr(self, f.name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ConfigError(f"{f.name}: expected a positive integer, got {value!r}")
            if value < 1:
                raise ConfigError(f"{f.name}: must be >= 1, got {value}")
        if self.grid_levels < 2:
            raise ConfigError(f"grid_levels: must be >= 2, got {self.grid_levels}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype: must be float32 or float64, got {self.dtype!r}")

    @property
    def dilations(self):
        """Per-layer dilation schedule, e.g. 1,2,...,512 repeated per stack."""
        per_stack = [self.dilation_base ** l for l in range(self.layers_per_stack)]
        return per_stack * self.stacks

    @property
    def layer_count(self):
        return self.layers_per_stack * self.stacks

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown network config field(s): {sorted(unknown)}")
        return cls(**d)


def receptive_field(config: NetworkConfig) -> int:
    """Number of past input samples that can influence one output sample.

    1 + sum over layers of (kernel_size - 1) * dilation. With every dilation
    equal to 1 this collapses to layers * (kernel_size - 1) + 1, the familiar
    "depth plus filter length minus one" form for stacked causal filters.
    """
    return 1 + (config.kernel_size - 1) * sum(config.dilations)


def _layer_names(k):
    base = f"layer{k:02d}"
    return (f"{base}.filter", f"{base}.gate", f"{base}.filter_cond",
            f"{base}.gate_cond", f"{base}.residual", f"{base}.skip")


class NetworkParams:
    """All learnable weights, keyed by name. No bias terms anywhere."""

    def __init__(self, config: NetworkConfig, tensors: dict):
        self.config = config
        self.tensors = tensors

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int) -> "NetworkParams":
        """Zero-mean uniform init scaled by fan-in; output projection zeroed.

        A zero output projection makes the initial mixture identical at every
        timestep: uniform component weights, centered means, and a wide scale
        (see mixture.RAW_LOG_SCALE_OFFSET), so early losses stay near the
        uniform-distribution bound instead of blowing up.
        """
        rng = np.random.default_rng(seed)
        dt = config.np_dtype
        R, G, S = config.residual_channels, config.gate_channels, config.skip_channels
        K = config.kernel_size

        def uniform(shape, fan_in):
            bound = float(np.sqrt(1.0 / fan_in))
            return rng.uniform(-bound, bound, size=shape).astype(dt)

        t = {"input_proj": uniform((config.input_channels, R), config.input_channels)}
        for k in range(config.layer_count):
            filt, gate, fcond, gcond, res, skip = _layer_names(k)
            t[filt] = uniform((K, R, G), K * R)
            t[gate] = uniform((K, R, G), K * R)
            t[fcond] = uniform((config.cond_channels, G), config.cond_channels)
            t[gcond] = uniform((config.cond_channels, G), config.cond_channels)
            t[res] = uniform((G, R), G)
            t[skip] = uniform((G, S), G)
        t["head.hidden"] = uniform((S, S), S)
        t["head.out"] = np.zeros((S, config.input_channels * 3 * config.mixture_components), dtype=dt)
        return cls(config, t)

    def layer(self, k):
        return tuple(self.tensors[n] for n in _layer_names(k))

    def astype(self, dtype: str) -> "NetworkParams":
        cfg = NetworkConfig.from_dict({**self.config.to_dict(), "dtype": dtype})
        np_dt = cfg.np_dtype
        return NetworkParams(cfg, {n: v.astype(np_dt) for n, v in self.tensors.items()})

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.config, {n: v.copy() for n, v in self.tensors.items()})

    def validate_finite(self):
        for name, v in self.tensors.items():
            if not np.isfinite(v).all():
                raise ValueError(f"non-finite values in parameter tensor {name!r}")

    def names(self):
        return list(self.tensors)


def gated_unit(x, h, filt_w, gate_w, filt_cond_w, gate_cond_w, dilation):
    """tanh(conv(x) + h @ Vf) * sigmoid(conv(x) + h @ Vg), causal in x.

    x: (T, residual_channels), h: (T, cond_channels), time-aligned. With both
    conditioning kernels zero this reduces exactly to the unconditioned gate.
    """
    if x.shape[0] != h.shape[0]:
        raise ValueError(f"x has {x.shape[0]} frames but conditioning has {h.shape[0]}")
    if x.shape[1] != filt_w.shape[1] or h.shape[1] != filt_cond_w.shape[0]:
        raise ValueError("channel counts do not match the layer kernels")
    a = ops.causal_conv(x, filt_w, dilation) + ops.matmul(h, filt_cond_w)
    b = ops.causal_conv(x, gate_w, dilation) + ops.matmul(h, gate_cond_w)
    return np.tanh(a) * ops.sigmoid(b)


def shift_one(x):
    """Teacher-forcing shift: row t of the result is x[t-1], row 0 is zeros."""
    y = np.zeros_like(x)
    y[1:] = x[:-1]
    return y


def trunk_forward(params: NetworkParams, y, h, tape=None):
    """Run the residual stack on an already-shifted input sequence.

    y: (T, input_channels) network input (normalized units), h: (T, cond).
    Returns the summed skip connections, shape (T, skip_channels). When
    ``tape`` is a list, per-layer intermediates needed by the backward pass
    are appended to it.
    """
    cfg = params.config
    x = ops.matmul(y, params.tensors["input_proj"])
    skip_sum = np.zeros((y.shape[0], cfg.skip_channels), dtype=x.dtype)
    for k, dilation in enumerate(cfg.dilations):
        filt_w, gate_w, fcond_w, gcond_w, res_w, skip_w = params.layer(k)
        a = ops.causal_conv(x, filt_w, dilation) + ops.matmul(h, fcond_w)
        b = ops.causal_conv(x, gate_w, dilation) + ops.matmul(h, gcond_w)
        t_ = np.tanh(a)
        s_ = ops.sigmoid(b)
        z = t_ * s_
        skip_sum += ops.matmul(z, skip_w)
        x_next = ops.matmul(z, res_w) + x
        if tape is not None:
            tape.append({"x": x, "t": t_, "s": s_, "z": z})
        x = x_next
    return skip_sum, x


def head_forward(params: NetworkParams, skip_sum, tape=None):
    """ReLU -> 1x1 conv -> ReLU -> projection to per-channel mixture raw outputs."""
    u = np.maximum(skip_sum, 0.0)
    v = ops.matmul(u, params.tensors["head.hidden"])
    w = np.maximum(v, 0.0)
    raw = ops.matmul(w, params.tensors["head.out"])
    if tape is not None:
        tape.append({"u": u, "v": v, "w": w})
    return raw


def forward(params: NetworkParams, x, h) -> MixtureParams:
    """Mixture parameters for every timestep, causally.

    x: (T, input_channels) normalized trajectories in [-1, 1] (the training
    targets; they are shifted one step internally so the output at time t
    never sees x[t]). h: (T, cond_channels) conditioning frames. The output
    at time t depends on x[<t] and h[<=t] only.
    """
    if x.shape[0] != h.shape[0]:
        raise ValueError(f"trajectory has {x.shape[0]} frames but conditioning has {h.shape[0]}")
    if x.shape[1] != params.config.input_channels:
        raise ValueError(f"expected {params.config.input_channels} trajectory channels, got {x.shape[1]}")
    if h.shape[1] != params.config.cond_channels:
        raise ValueError(f"expected {params.config.cond_channels} conditioning channels, got {h.shape[1]}")
    params.validate_finite()
    cfg = params.config
    dt = cfg.np_dtype
    y = shift_one(np.asarray(x, dtype=dt))
    skip_sum, _ = trunk_forward(params, y, np.asarray(h, dtype=dt))
    raw = head_forward(params, skip_sum)
    return mixture_from_raw(raw, cfg.input_channels, cfg.mixture_components)
