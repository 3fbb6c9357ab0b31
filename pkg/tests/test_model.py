import numpy as np
import pytest

import artinv
from artinv import ops
from artinv.model import (ConfigError, NetworkConfig, NetworkParams, forward,
                          gated_unit, head_forward, receptive_field, shift_one,
                          trunk_forward)

from conftest import random_inputs, tiny_config


class TestConfig:
    def test_dilation_schedule(self):
        cfg = NetworkConfig()
        assert cfg.layer_count == 40
        assert cfg.dilations[:10] == [1, 2, 4, 8, 16, 32, 64, 128, 256, 512]
        assert cfg.dilations == cfg.dilations[:10] * 4

    def test_invalid_fields_are_named(self):
        with pytest.raises(ConfigError, match="stacks"):
            NetworkConfig(stacks=0)
        with pytest.raises(ConfigError, match="dtype"):
            NetworkConfig(dtype="float16")
        with pytest.raises(ConfigError, match="unknown"):
            NetworkConfig.from_dict({"bogus_field": 3})

    def test_round_trip_dict(self):
        cfg = tiny_config()
        assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


class TestReceptiveField:
    def test_two_undilated_layers_kernel_three(self):
        cfg = tiny_config(layers_per_stack=2, stacks=1, dilation_base=1)
        assert receptive_field(cfg) == 5

    def test_single_stack_to_512(self):
        cfg = NetworkConfig(layers_per_stack=10, stacks=1)
        assert receptive_field(cfg) == 1 + 2 * 1023 == 2047

    def test_default_four_stacks(self):
        assert receptive_field(NetworkConfig()) == 1 + 4 * 2046 == 8185

    def test_dilation_one_reduces_to_simple_form(self):
        # stacked kernel-k causal filters: depth * (k - 1) + 1
        for layers, k in ((2, 3), (5, 2), (3, 4)):
            cfg = tiny_config(layers_per_stack=layers, stacks=1,
                              dilation_base=1, kernel_size=k)
            assert receptive_field(cfg) == layers * (k - 1) + 1


def probe_impulse_support(config, seed, t_hit, T):
    """Positions where the trunk output reacts to an input impulse at t_hit."""
    params = NetworkParams.initialize(config, seed)
    rng = np.random.default_rng(seed + 1)
    y = rng.uniform(-1, 1, (T, config.input_channels))
    h = rng.standard_normal((T, config.cond_channels))
    base, _ = trunk_forward(params, y, h)
    bumped = y.copy()
    bumped[t_hit] += 0.25
    out, _ = trunk_forward(params, bumped, h)
    return np.nonzero(np.abs(out - base).sum(axis=1) > 0)[0]


def params_with_live_head(cfg, seed):
    """Initialized params with a nonzero output projection, so mixture
    outputs actually respond to the inputs."""
    params = NetworkParams.initialize(cfg, seed)
    rng = np.random.default_rng(seed + 1000)
    params.tensors["head.out"] = rng.uniform(
        -0.5, 0.5, params.tensors["head.out"].shape)
    return params


class TestCausality:
    def test_forward_output_ignores_present_and_future_x(self):
        cfg = tiny_config()
        params = params_with_live_head(cfg, 0)
        x, h = random_inputs(cfg, 32, seed=1)
        base = forward(params, x, h)
        x2 = x.copy()
        t_hit = 11
        x2[t_hit] = -x2[t_hit] + 0.1
        mod = forward(params, x2, h)
        diff = (np.abs(mod.pi - base.pi).sum(axis=(1, 2))
                + np.abs(mod.mu - base.mu).sum(axis=(1, 2))
                + np.abs(mod.log_s - base.log_s).sum(axis=(1, 2)))
        assert np.all(diff[: t_hit + 1] == 0)
        assert diff[t_hit + 1] > 0

    def test_conditioning_is_frame_synchronous(self):
        cfg = tiny_config()
        params = params_with_live_head(cfg, 0)
        x, h = random_inputs(cfg, 32, seed=2)
        base = forward(params, x, h)
        h2 = h.copy()
        t_hit = 9
        h2[t_hit] += 1.0
        mod = forward(params, x, h2)
        diff = np.abs(mod.mu - base.mu).sum(axis=(1, 2))
        assert np.all(diff[:t_hit] == 0)
        assert diff[t_hit] > 0

    def test_impulse_support_matches_receptive_field(self):
        # contiguous impulse support needs dilation_base <= kernel_size (the
        # default family); wider bases leave unreachable offsets between taps
        rng = np.random.default_rng(123)
        for trial in range(6):
            kernel = int(rng.integers(2, 4))
            cfg = tiny_config(layers_per_stack=int(rng.integers(1, 4)),
                              stacks=int(rng.integers(1, 3)),
                              dilation_base=int(rng.integers(2, kernel + 1)),
                              kernel_size=kernel)
            r = receptive_field(cfg)
            T = r + 10
            t_hit = 4
            support = probe_impulse_support(cfg, 50 + trial, t_hit, T)
            expected = np.arange(t_hit, min(t_hit + r, T))
            assert np.array_equal(support, expected), (cfg, r)


class TestGatedUnit:
    def test_zero_weights_give_zero_output(self):
        cfg = tiny_config()
        T, R, G, B = 16, cfg.residual_channels, cfg.gate_channels, cfg.cond_channels
        x = np.random.default_rng(0).standard_normal((T, R))
        h = np.random.default_rng(1).standard_normal((T, B))
        zeros = lambda *s: np.zeros(s)
        z = gated_unit(x, h, zeros(3, R, G), zeros(3, R, G), zeros(B, G),
                       zeros(B, G), dilation=2)
        assert np.array_equal(z, np.zeros((T, G)))

    def test_zero_conditioning_matches_unconditioned_gate(self):
        cfg = tiny_config()
        rng = np.random.default_rng(5)
        T, R, G, B = 20, cfg.residual_channels, cfg.gate_channels, cfg.cond_channels
        x = rng.standard_normal((T, R))
        h = rng.standard_normal((T, B))
        wf = rng.standard_normal((3, R, G)) * 0.3
        wg = rng.standard_normal((3, R, G)) * 0.3
        z = gated_unit(x, h, wf, wg, np.zeros((B, G)), np.zeros((B, G)), dilation=1)
        expected = (np.tanh(ops.causal_conv(x, wf, 1))
                    * ops.sigmoid(ops.causal_conv(x, wg, 1)))
        assert np.array_equal(z, expected)

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((30, 4))
        h = rng.standard_normal((30, 3))
        z = gated_unit(x, h,
                       0.4 * rng.standard_normal((3, 4, 8)),
                       0.4 * rng.standard_normal((3, 4, 8)),
                       0.4 * rng.standard_normal((3, 8)),
                       0.4 * rng.standard_normal((3, 8)), dilation=2)
        assert np.all(np.abs(z) < 1.0)

    def test_impulse_does_not_leak_backward(self):
        cfg = tiny_config()
        rng = np.random.default_rng(7)
        R, G, B = cfg.residual_channels, cfg.gate_channels, cfg.cond_channels
        wf, wg = rng.standard_normal((3, R, G)), rng.standard_normal((3, R, G))
        vf, vg = rng.standard_normal((B, G)), rng.standard_normal((B, G))
        h = rng.standard_normal((32, B))
        x = np.zeros((32, R))
        base = gated_unit(x, h, wf, wg, vf, vg, dilation=2)
        x2 = x.copy()
        x2[10] = 1.0
        mod = gated_unit(x2, h, wf, wg, vf, vg, dilation=2)
        assert np.array_equal(mod[:10], base[:10])
        assert np.any(mod[10] != base[10])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="frames"):
            gated_unit(np.zeros((4, 3)), np.zeros((5, 2)), np.zeros((3, 3, 4)),
                       np.zeros((3, 3, 4)), np.zeros((2, 4)), np.zeros((2, 4)), 1)


class TestForward:
    def test_mixture_weights_on_simplex(self):
        cfg = tiny_config(layers_per_stack=3, stacks=1, mixture_components=4)
        params = NetworkParams.initialize(cfg, 42)
        rng = np.random.default_rng(9)
        params.tensors["head.out"] = rng.uniform(
            -0.5, 0.5, params.tensors["head.out"].shape)
        x, h = random_inputs(cfg, 40, seed=3)
        mix = forward(params, x, h)
        assert np.max(np.abs(mix.pi.sum(axis=-1) - 1.0)) < 1e-6
        assert np.all(mix.pi >= 0)

    def test_frame_count_mismatch_rejected(self):
        cfg = tiny_config()
        params = NetworkParams.initialize(cfg, 0)
        with pytest.raises(ValueError, match="frames"):
            forward(params, np.zeros((5, cfg.input_channels)),
                    np.zeros((6, cfg.cond_channels)))

    def test_nan_parameters_rejected(self):
        cfg = tiny_config()
        params = NetworkParams.initialize(cfg, 0)
        params.tensors["layer00.filter"][0, 0, 0] = np.nan
        x, h = random_inputs(cfg, 4)
        with pytest.raises(ValueError, match="layer00.filter"):
            forward(params, x, h)

    def test_shift_one(self):
        x = np.arange(8.0).reshape(4, 2)
        y = shift_one(x)
        assert np.array_equal(y[0], [0, 0])
        assert np.array_equal(y[1:], x[:-1])


class TestInitialization:
    def test_output_projection_starts_at_zero(self):
        cfg = tiny_config()
        params = NetworkParams.initialize(cfg, 1)
        assert np.array_equal(params.tensors["head.out"],
                              np.zeros_like(params.tensors["head.out"]))

    def test_deterministic_under_seed(self):
        cfg = tiny_config()
        a = NetworkParams.initialize(cfg, 3)
        b = NetworkParams.initialize(cfg, 3)
        for name in a.tensors:
            assert np.array_equal(a.tensors[name], b.tensors[name])

    def test_head_output_dimensions(self):
        cfg = tiny_config()
        params = NetworkParams.initialize(cfg, 0)
        x, h = random_inputs(cfg, 6)
        skip, _ = trunk_forward(params, shift_one(x), h)
        raw = head_forward(params, skip)
        assert raw.shape == (6, cfg.input_channels * 3 * cfg.mixture_components)
