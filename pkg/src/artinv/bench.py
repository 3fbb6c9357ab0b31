"""Naive-versus-cached generation benchmark with instrumented op counters.

Verifies that both decoders produce the same output (in float64, on a short
sequence) before measuring, then reports wall time and multiply-accumulate
counts per generated sample for each decoder, plus their ratio. The ratio is
the finite-sequence check of the caching claim: naive per-sample work grows
with the receptive field while cached work stays linear in the layer count.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ops
from .generate import DecodeRule, generate_cached, generate_naive
from .model import NetworkConfig, NetworkParams, receptive_field


class BenchmarkError(RuntimeError):
    pass


@dataclass
class BenchmarkReport:
    config: NetworkConfig
    timesteps: int
    receptive_field: int
    verify_timesteps: int
    verify_max_abs_diff: float
    naive_macs: int
    cached_macs: int
    naive_wall_s: float
    cached_wall_s: float

    @property
    def naive_macs_per_sample(self):
        return self.naive_macs / self.timesteps

    @property
    def cached_macs_per_sample(self):
        return self.cached_macs / self.timesteps

    @property
    def op_ratio(self):
        return self.naive_macs / self.cached_macs

    def format(self) -> str:
        lines = [
            f"layers={self.config.layer_count} kernel={self.config.kernel_size} "
            f"receptive_field={self.receptive_field} timesteps={self.timesteps} "
            f"dtype={self.config.dtype}",
            f"equivalence verified on {self.verify_timesteps} steps, "
            f"max abs diff {self.verify_max_abs_diff:.3e}",
            f"naive : {self.naive_macs:>16d} MACs total  "
            f"{self.naive_macs_per_sample:>14.1f} /sample  {self.naive_wall_s:9.2f} s",
            f"cached: {self.cached_macs:>16d} MACs total  "
            f"{self.cached_macs_per_sample:>14.1f} /sample  {self.cached_wall_s:9.2f} s",
            f"per-sample op-count ratio naive/cached: {self.op_ratio:.1f}x",
        ]
        return "\n".join(lines) + "\n"


def _random_cond(config, timesteps, seed):
    rng = np.random.default_rng([seed, timesteps])
    return rng.standard_normal((timesteps, config.cond_channels))


def run_benchmark(config: NetworkConfig, timesteps, seed=0,
                  rule: DecodeRule = DecodeRule(), verify_timesteps=16,
                  equivalence_tol=1e-5) -> BenchmarkReport:
    """Verify decoder equivalence, then measure both decoders at `timesteps`."""
    if not rule.deterministic:
        raise BenchmarkError("benchmarking needs a deterministic decode rule")
    params = NetworkParams.initialize(config, seed)

    params64 = params.astype("float64")
    h_verify = _random_cond(config, verify_timesteps, seed)
    naive_out = generate_naive(params64, h_verify, rule)
    cached_out, _ = generate_cached(params64, h_verify, rule)
    max_diff = float(np.max(np.abs(naive_out - cached_out))) if naive_out.size else 0.0
    if max_diff > equivalence_tol:
        raise BenchmarkError(
            f"naive and cached decoders disagree (max abs diff {max_diff:.3e} "
            f"> {equivalence_tol:.1e}); refusing to time a broken decoder")

    h = _random_cond(config, timesteps, seed + 1).astype(config.np_dtype)

    with ops.count_macs() as counter:
        counter.reset()
        t0 = time.monotonic()
        generate_cached(params, h, rule)
        cached_wall = time.monotonic() - t0
        cached_macs = counter.total

        counter.reset()
        t0 = time.monotonic()
        generate_naive(params, h, rule)
        naive_wall = time.monotonic() - t0
        naive_macs = counter.total

    return BenchmarkReport(config=config, timesteps=timesteps,
                           receptive_field=receptive_field(config),
                           verify_timesteps=verify_timesteps,
                           verify_max_abs_diff=max_diff,
                           naive_macs=naive_macs, cached_macs=cached_macs,
                           naive_wall_s=naive_wall, cached_wall_s=cached_wall)
