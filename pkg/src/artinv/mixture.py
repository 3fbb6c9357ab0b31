"""Discretized mixture-of-logistics output distribution on a uniform grid.

Normalized trajectory values in [-1, 1] are quantized to ``levels`` uniform
bins (default 256) and the likelihood of a bin is the difference of logistic
CDFs at the bin edges, evaluated on the integer grid 0..levels-1 where bins
have unit width and half-width 0.5. The lowest and highest bins integrate the
open tails so the probabilities over the grid sum to one exactly.

Mixture means and log-scales are carried in normalized units. A raw network
output of zero maps to a wide logistic (scale (levels-1)/6 grid units,
RAW_LOG_SCALE_OFFSET below), so a zero-initialized output projection yields a
near-uniform distribution over the grid and a starting loss close to
log(levels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import log_sigmoid, sigmoid, softplus

RAW_LOG_SCALE_OFFSET = -float(np.log(3.0))
LOG_SCALE_FLOOR = -7.0
_DELTA_TINY = 1e-8


def quantize(x, levels=256):
    """Map normalized values in [-1, 1] to integer grid indices 0..levels-1."""
    g = np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 0.5 * (levels - 1))
    return np.clip(g, 0, levels - 1).astype(np.int64)


def dequantize(g, levels=256):
    """Map grid indices back to normalized values in [-1, 1]."""
    return 2.0 * np.asarray(g, dtype=np.float64) / (levels - 1) - 1.0


@dataclass
class MixtureParams:
    """Per-timestep, per-channel logistic mixture parameters.

    pi: (..., C, K) component weights on the simplex.
    mu: (..., C, K) component means, normalized units.
    log_s: (..., C, K) log scales, normalized units, floored at LOG_SCALE_FLOOR.
    """

    pi: np.ndarray
    mu: np.ndarray
    log_s: np.ndarray
    levels: int = 256

    def validate(self):
        if np.any(self.pi < 0) or not np.allclose(self.pi.sum(axis=-1), 1.0, atol=1e-6):
            raise ValueError("mixture weights are off the simplex")
        if not (np.isfinite(self.mu).all() and np.isfinite(self.log_s).all()):
            raise ValueError("non-finite mixture parameters")


def split_raw(raw, channels, components):
    """Reshape a flat head output (..., C*3K) into logits, mu, raw log-scale."""
    shaped = raw.reshape(raw.shape[:-1] + (channels, 3 * components))
    logits = shaped[..., :components]
    mu = shaped[..., components:2 * components]
    raw_log_s = shaped[..., 2 * components:]
    return logits, mu, raw_log_s


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def mixture_from_raw(raw, channels, components, levels=256) -> MixtureParams:
    """Interpret raw head outputs as mixture parameters.

    Weights come from a normalized exponential over the K logits; the raw
    log-scale is offset by RAW_LOG_SCALE_OFFSET and floored.
    """
    logits, mu, raw_log_s = split_raw(np.asarray(raw, dtype=np.float64), channels, components)
    log_s = np.maximum(raw_log_s + RAW_LOG_SCALE_OFFSET, LOG_SCALE_FLOOR)
    return MixtureParams(pi=_softmax(logits), mu=mu.copy(), log_s=log_s, levels=levels)


def _grid_units(mix: MixtureParams):
    half = (mix.levels - 1) / 2.0
    mu_g = (mix.mu + 1.0) * half
    s_g = np.exp(mix.log_s) * half
    return mu_g, s_g


def mol_likelihood(x_grid, mix: MixtureParams):
    """Probability of the grid bin(s) x_grid under the mixture.

    x_grid: integer array broadcastable to mix.pi.shape[:-1]. Edge bins
    integrate the open tails. Returns probabilities of the same shape.
    """
    mu_g, s_g = _grid_units(mix)
    x = np.asarray(x_grid, dtype=np.float64)[..., None]
    plus = (x - mu_g + 0.5) / s_g
    minus = (x - mu_g - 0.5) / s_g
    cdf_plus = np.where(x >= mix.levels - 1, 1.0, sigmoid(plus))
    cdf_minus = np.where(x <= 0, 0.0, sigmoid(minus))
    return (mix.pi * (cdf_plus - cdf_minus)).sum(axis=-1)


def bin_probabilities(mix: MixtureParams):
    """Probabilities of every grid bin; shape (..., C, levels)."""
    grid = np.arange(mix.levels)
    mu_g, s_g = _grid_units(mix)
    x = grid.reshape((1,) * mix.pi.ndim + (-1,)).astype(np.float64)
    mu_g = mu_g[..., None]
    s_g = s_g[..., None]
    pi = mix.pi[..., None]
    plus = (x - mu_g + 0.5) / s_g
    minus = (x - mu_g - 0.5) / s_g
    cdf_plus = np.where(x >= mix.levels - 1, 1.0, sigmoid(plus))
    cdf_minus = np.where(x <= 0, 0.0, sigmoid(minus))
    return (pi * (cdf_plus - cdf_minus)).sum(axis=-2)


def _log_bin_prob_terms(x, mu_g, s_g, levels, need_grad):
    """Per-component stable log bin probability and its grid-unit gradients.

    x, mu_g, s_g broadcast together; returns (log_delta, d/d mu_g, d/d log s_g).
    Three regimes: open-tail edge bins, ordinary CDF difference, and a
    density*width approximation when the CDF difference underflows.
    """
    xt = x - mu_g
    plus = (xt + 0.5) / s_g
    minus = (xt - 0.5) / s_g

    sig_plus = sigmoid(plus)
    sig_minus = sigmoid(minus)
    delta = sig_plus - sig_minus

    u = xt / s_g
    log_tail = -u - 2.0 * softplus(-u) - np.log(s_g)

    low = x <= 0
    high = x >= levels - 1
    mid_ok = (~low) & (~high) & (delta > _DELTA_TINY)
    mid_tail = (~low) & (~high) & ~ (delta > _DELTA_TINY)

    safe_delta = np.where(mid_ok, delta, 1.0)
    log_delta = np.where(
        low, log_sigmoid(plus),
        np.where(high, -softplus(minus),
                 np.where(mid_ok, np.log(safe_delta), log_tail)))
    if not need_grad:
        return log_delta, None, None

    # sigmoid'(v) = sigmoid(v) * sigmoid(-v), computed without cancellation
    dsig_plus = sig_plus * sigmoid(-plus)
    dsig_minus = sig_minus * sigmoid(-minus)
    tail_du = -1.0 + 2.0 * sigmoid(-u)

    d_mu = np.where(
        low, -sigmoid(-plus) / s_g,
        np.where(high, sig_minus / s_g,
                 np.where(mid_ok, -(dsig_plus - dsig_minus) / (s_g * safe_delta),
                          -tail_du / s_g)))
    d_log_s = np.where(
        low, -sigmoid(-plus) * plus,
        np.where(high, sig_minus * minus,
                 np.where(mid_ok, (-plus * dsig_plus + minus * dsig_minus) / safe_delta,
                          tail_du * (-u) - 1.0)))
    return log_delta, d_mu, d_log_s


def mol_log_prob(raw, targets, channels, components, levels=256, need_grad=False):
    """Log-likelihood of grid targets under raw head outputs, optionally with
    the exact gradient with respect to the raw outputs.

    raw: (T, C*3K) float; targets: (T, C) integer grid indices.
    Returns (logp, grad) where logp is (T, C) float64 and grad matches raw's
    shape (None when need_grad is false). All math runs in float64.
    """
    raw64 = np.asarray(raw, dtype=np.float64)
    logits, mu, raw_log_s = split_raw(raw64, channels, components)
    log_s = np.maximum(raw_log_s + RAW_LOG_SCALE_OFFSET, LOG_SCALE_FLOOR)

    half = (levels - 1) / 2.0
    mu_g = (mu + 1.0) * half
    s_g = np.exp(log_s) * half
    x = np.asarray(targets, dtype=np.float64)[..., None]

    log_delta, d_mu_g, d_log_s_g = _log_bin_prob_terms(x, mu_g, s_g, levels, need_grad)

    log_pi = logits - _logsumexp(logits)
    joint = log_pi + log_delta
    logp = _logsumexp(joint)[..., 0]

    if not need_grad:
        return logp, None

    w = np.exp(joint - logp[..., None])
    pi = np.exp(log_pi)
    d_logits = w - pi
    d_mu = w * d_mu_g * half
    # zero gradient where the log-scale floor is active
    unclamped = raw_log_s + RAW_LOG_SCALE_OFFSET > LOG_SCALE_FLOOR
    d_raw_log_s = np.where(unclamped, w * d_log_s_g, 0.0)

    grad = np.concatenate([d_logits, d_mu, d_raw_log_s], axis=-1)
    grad = grad.reshape(raw.shape)
    return logp, grad


def _logsumexp(a):
    m = a.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(a - m).sum(axis=-1, keepdims=True))


def mixture_mean(mix: MixtureParams):
    """Expected value per channel, normalized units (pre-quantization)."""
    return (mix.pi * mix.mu).sum(axis=-1)


def mode_bin(mix: MixtureParams):
    """Grid bin with the highest mixture probability, per channel."""
    return np.argmax(bin_probabilities(mix), axis=-1)


def sample_value(mix: MixtureParams, rng: np.random.Generator, temperature: float = 1.0):
    """Draw one normalized value per channel: component by weight, then
    logistic noise. Temperature sharpens weights (pi ** (1/T), renormalized)
    and scales the logistic spread; values are clamped to [-1, 1].
    """
    pi = mix.pi
    if temperature != 1.0:
        logp = np.log(np.maximum(pi, 1e-300)) / temperature
        pi = _softmax(logp)
    cum = np.cumsum(pi, axis=-1)
    r = rng.random(size=pi.shape[:-1] + (1,))
    idx = np.sum(r > cum, axis=-1, keepdims=True)
    idx = np.minimum(idx, pi.shape[-1] - 1)
    mu = np.take_along_axis(mix.mu, idx, axis=-1)[..., 0]
    s = np.take_along_axis(np.exp(mix.log_s), idx, axis=-1)[..., 0] * temperature
    u = rng.uniform(1e-9, 1.0 - 1e-9, size=mu.shape)
    value = mu + s * np.log(u / (1.0 - u))
    return np.clip(value, -1.0, 1.0)
