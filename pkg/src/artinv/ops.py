"""Low-level numeric primitives shared by the forward, backward, and decode paths.

Everything heavy funnels through :func:`matmul` and the causal convolution
helpers so that multiply-accumulate counting instruments every code path the
same way. A global strict-summation switch replaces BLAS matmuls with an
einsum that reduces each output element independently in index order, which
makes results bitwise independent of how many rows are computed at once (BLAS
kernels do not guarantee that).
"""

from __future__ import annotations

import contextlib

import numpy as np

_STRICT_SUMMATION = False


@contextlib.contextmanager
def strict_summation():
    """Force order-stable (non-BLAS) matmul reductions inside the block."""
    global _STRICT_SUMMATION
    prev = _STRICT_SUMMATION
    _STRICT_SUMMATION = True
    try:
        yield
    finally:
        _STRICT_SUMMATION = prev


class MacCounter:
    """Counts multiply-accumulate operations issued by the math primitives."""

    def __init__(self):
        self.enabled = False
        self.total = 0

    def reset(self):
        self.total = 0

    def add(self, n):
        if self.enabled:
            self.total += n


mac_counter = MacCounter()


@contextlib.contextmanager
def count_macs():
    """Enable MAC counting inside the block; yields the live counter."""
    prev = mac_counter.enabled
    mac_counter.enabled = True
    try:
        yield mac_counter
    finally:
        mac_counter.enabled = prev


def matmul(a, b):
    """(m, k) @ (k, n) with MAC accounting and optional strict summation."""
    mac_counter.add(a.shape[0] * a.shape[1] * b.shape[1])
    if _STRICT_SUMMATION:
        return np.einsum("tc,co->to", a, b, optimize=False)
    return a @ b


def sigmoid(x):
    """Logistic function via the tanh identity: overflow-safe, dtype
    preserving, and on numpy's SIMD path (much faster than exp-based forms)."""
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(x):
    """log(1 + exp(x)), overflow-safe."""
    return np.logaddexp(0.0, x)


def log_sigmoid(x):
    return -softplus(-x)


def causal_conv(x, w, dilation):
    """Causal dilated convolution over a time-major sequence.

    x: (T, c_in); w: (kernel, c_in, c_out). Output position t reads input
    positions t - (kernel-1-j)*dilation for tap j, with zero history before
    the start of the sequence.
    """
    T = x.shape[0]
    kernel = w.shape[0]
    y = np.zeros((T, w.shape[2]), dtype=x.dtype)
    for j in range(kernel):
        shift = (kernel - 1 - j) * dilation
        if shift >= T:
            continue
        if shift == 0:
            y += matmul(x, w[j])
        else:
            y[shift:] += matmul(x[: T - shift], w[j])
    return y


def causal_conv_backward(x, w, dilation, dy):
    """Gradients of causal_conv w.r.t. input and weights.

    Returns (dx, dw) with dx shaped like x and dw like w.
    """
    T = x.shape[0]
    kernel = w.shape[0]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for j in range(kernel):
        shift = (kernel - 1 - j) * dilation
        if shift >= T:
            continue
        if shift == 0:
            dw[j] = matmul(x.T, dy)
            dx += matmul(dy, w[j].T)
        else:
            dw[j] = matmul(x[: T - shift].T, dy[shift:])
            dx[: T - shift] += matmul(dy[shift:], w[j].T)
    return dx, dw


def causal_conv_step(taps, w):
    """Single-position causal convolution from explicitly gathered taps.

    taps: (kernel, c_in) rows ordered oldest tap first, i.e. taps[j] is the
    input at offset (kernel-1-j)*dilation behind the current position;
    taps[-1] is the current input. Returns (c_out,).
    """
    kernel = w.shape[0]
    out = matmul(taps[0][None, :], w[0])
    for j in range(1, kernel):
        out += matmul(taps[j][None, :], w[j])
    return out[0]
