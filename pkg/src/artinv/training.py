"""Negative-log-likelihood loss, exact reverse-mode gradients, and the ADAM
teacher-forcing training loop.

The backward pass mirrors the forward computation step for step (gated
dilated convolutions, residual/skip wiring, the two-stage head, and the
discretized-logistic likelihood), so gradients are exact up to float
arithmetic; tests pin them against central finite differences. Training
always consumes ground-truth history (teacher forcing): the network input is
the one-step-shifted target sequence, never a model prediction.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint as ckpt
from . import mixture, ops
from .model import (ConfigError, NetworkConfig, NetworkParams, _layer_names,
                    head_forward, receptive_field, shift_one, trunk_forward)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20000          # counted as optimizer steps; see train()
    minibatch_count: int = 8
    max_timesteps_per_item: int = 8000
    adam_alpha: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float | None = 1.0
    seed: int = 0
    checkpoint_interval: int = 1000
    log_interval: int = 1

    def __post_init__(self):
        if self.adam_alpha <= 0:
            raise ConfigError(f"adam_alpha: must be > 0, got {self.adam_alpha}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name}: must be in [0, 1), got {b}")
        for name in ("epochs", "minibatch_count", "max_timesteps_per_item",
                     "checkpoint_interval", "log_interval"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip: must be > 0 or none, got {self.grad_clip}")

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config field(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainItem:
    """One (chunked) teacher-forcing example.

    targets: (T, C) integer grid indices; cond: (T, B) conditioning frames;
    mask: (T,) 1.0 where the loss counts, 0.0 on warmup context.
    """

    utt_id: str
    targets: np.ndarray
    cond: np.ndarray
    mask: np.ndarray


def _forward_tapes(params: NetworkParams, item: TrainItem):
    cfg = params.config
    dt = cfg.np_dtype
    x_in = mixture.dequantize(item.targets, cfg.grid_levels).astype(dt)
    y = shift_one(x_in)
    h = np.asarray(item.cond, dtype=dt)
    trunk_tape = []
    skip_sum, _ = trunk_forward(params, y, h, trunk_tape)
    head_tape = []
    raw = head_forward(params, skip_sum, head_tape)
    return y, h, trunk_tape, skip_sum, head_tape[0], raw


def _loss_and_grads(params: NetworkParams, batch, need_grads):
    cfg = params.config
    params.validate_finite()
    grads = {n: np.zeros_like(v) for n, v in params.tensors.items()} if need_grads else None
    total_logp = 0.0
    total_count = 0.0
    for item in batch:
        if item.targets.shape[0] != item.cond.shape[0]:
            raise TrainingError(
                f"item {item.utt_id!r}: {item.targets.shape[0]} target frames vs "
                f"{item.cond.shape[0]} conditioning frames")
        if not np.isfinite(item.cond).all():
            raise TrainingError(f"non-finite conditioning values in item {item.utt_id!r}")
        if np.any(item.targets < 0) or np.any(item.targets >= cfg.grid_levels):
            raise TrainingError(f"targets outside the quantization grid in item "
                                f"{item.utt_id!r}")
        y, h, trunk_tape, skip_sum, head_tape, raw = _forward_tapes(params, item)
        logp, graw = mixture.mol_log_prob(
            raw, item.targets, cfg.input_channels, cfg.mixture_components,
            cfg.grid_levels, need_grad=need_grads)
        mask = np.asarray(item.mask, dtype=np.float64)
        masked = logp * mask[:, None]
        if not np.isfinite(masked).all():
            raise TrainingError(f"non-finite log-likelihood in item {item.utt_id!r}")
        total_logp += masked.sum()
        total_count += mask.sum() * cfg.input_channels
        if need_grads:
            draw = (-(graw * mask[:, None])).astype(cfg.np_dtype)
            _backward_item(params, y, h, trunk_tape, skip_sum, head_tape, draw, grads)
    if total_count == 0:
        raise TrainingError("empty batch: no unmasked timesteps")
    loss = -total_logp / total_count
    if need_grads:
        inv = 1.0 / total_count
        for g in grads.values():
            g *= inv
            if not np.isfinite(g).all():
                raise TrainingError("non-finite gradient")
    return float(loss), grads


def _backward_item(params, y, h, trunk_tape, skip_sum, head_tape, draw, grads):
    cfg = params.config
    t = params.tensors
    u, v, w = head_tape["u"], head_tape["v"], head_tape["w"]
    grads["head.out"] += ops.matmul(w.T, draw)
    dw = ops.matmul(draw, t["head.out"].T)
    dv = dw * (v > 0)
    grads["head.hidden"] += ops.matmul(u.T, dv)
    du = ops.matmul(dv, t["head.hidden"].T)
    dskip_sum = du * (skip_sum > 0)

    dilations = cfg.dilations
    dx = np.zeros_like(trunk_tape[0]["x"])
    for k in range(cfg.layer_count - 1, -1, -1):
        names = _layer_names(k)
        filt_w, gate_w = t[names[0]], t[names[1]]
        rec = trunk_tape[k]
        x_k, t_, s_, z = rec["x"], rec["t"], rec["s"], rec["z"]
        dz = ops.matmul(dskip_sum, t[names[5]].T) + ops.matmul(dx, t[names[4]].T)
        grads[names[5]] += ops.matmul(z.T, dskip_sum)
        grads[names[4]] += ops.matmul(z.T, dx)
        da = dz * s_ * (1.0 - t_ * t_)
        db = dz * t_ * s_ * (1.0 - s_)
        grads[names[2]] += ops.matmul(h.T, da)
        grads[names[3]] += ops.matmul(h.T, db)
        dxf, dwf = ops.causal_conv_backward(x_k, filt_w, dilations[k], da)
        dxg, dwg = ops.causal_conv_backward(x_k, gate_w, dilations[k], db)
        grads[names[0]] += dwf
        grads[names[1]] += dwg
        dx = dx + dxf + dxg
    grads["input_proj"] += ops.matmul(y.T, dx)


def nll_loss(params: NetworkParams, batch) -> float:
    """Mean negative log-likelihood per predicted scalar over the batch."""
    loss, _ = _loss_and_grads(params, batch, need_grads=False)
    return loss


def backward(params: NetworkParams, batch) -> dict:
    """Exact gradients of nll_loss w.r.t. every parameter tensor."""
    _, grads = _loss_and_grads(params, batch, need_grads=True)
    return grads


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def clip_gradients(grads: dict, threshold: float | None):
    """Scale all gradients so the global norm is at most threshold."""
    norm = global_grad_norm(grads)
    if threshold is not None and norm > threshold and norm > 0:
        scale = np.float64(threshold / norm)
        for name in grads:
            grads[name] = (grads[name].astype(np.float64) * scale).astype(grads[name].dtype)
    return norm


@dataclass
class AdamState:
    step: int
    m: dict
    v: dict

    @classmethod
    def zeros(cls, params: NetworkParams) -> "AdamState":
        return cls(step=0,
                   m={n: np.zeros_like(t) for n, t in params.tensors.items()},
                   v={n: np.zeros_like(t) for n, t in params.tensors.items()})


def adam_step(params: NetworkParams, grads: dict, state: AdamState, cfg: TrainConfig):
    """Standard bias-corrected ADAM update, in place; advances state one step."""
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        params.tensors[name] -= (cfg.adam_alpha * m_hat /
                                 (np.sqrt(v_hat) + cfg.adam_eps)).astype(g.dtype)
    return params, state


def chunk_items(items, max_timesteps, context):
    """Split long items into windows of at most max_timesteps frames.

    Every window after the first carries `context` frames of masked left
    context so each frame's loss is counted exactly once and no prediction
    loses its receptive-field history to a chunk boundary.
    """
    if context >= max_timesteps:
        raise ConfigError(
            f"max_timesteps_per_item: must exceed the receptive-field context "
            f"({context}), got {max_timesteps}")
    out = []
    for item in items:
        T = item.targets.shape[0]
        if T <= max_timesteps:
            out.append(item)
            continue
        start = 0
        while start < T:
            lo = max(0, start - context)
            hi = min(lo + max_timesteps, T)
            mask = np.ones(hi - lo, dtype=np.float64)
            mask[: start - lo] = 0.0
            out.append(TrainItem(utt_id=f"{item.utt_id}#{lo}",
                                 targets=item.targets[lo:hi],
                                 cond=item.cond[lo:hi],
                                 mask=mask))
            start = hi
    return out


def _batch_indices(step, minibatch_count, chunk_count, seed):
    """Chunk indices for one optimizer step: a deterministic function of the
    step alone, so resumed runs see the same data order."""
    out = []
    base = step * minibatch_count
    for offset in range(minibatch_count):
        idx = base + offset
        epoch, pos = divmod(idx, chunk_count)
        perm = np.random.default_rng([seed, epoch]).permutation(chunk_count)
        out.append(int(perm[pos]))
    return out


@dataclass
class TrainResult:
    params: NetworkParams
    state: AdamState
    loss_curve: list
    checkpoint_path: str


def train(items, net_config: NetworkConfig, train_config: TrainConfig, out_dir,
          extra_header=None, resume_from=None, progress=None) -> TrainResult:
    """Teacher-forcing training loop over preprocessed utterance items.

    Writes ``loss.csv`` (step, nll, grad_norm, wall_time_s) and periodic
    checkpoints under ``out_dir``; the final checkpoint is ``checkpoint.aivc``.
    The configured ``epochs`` value counts optimizer steps (minibatch_count
    chunks consumed per step), and runs are resumable mid-stream because the
    data order at any step is derived from (seed, step) alone.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    rf = receptive_field(net_config)
    if train_config.max_timesteps_per_item < rf:
        raise ConfigError(
            f"max_timesteps_per_item: {train_config.max_timesteps_per_item} is smaller "
            f"than the receptive field {rf}")
    chunks = chunk_items(items, train_config.max_timesteps_per_item, rf)
    if not chunks:
        raise TrainingError("no training items")

    header = dict(extra_header or {})
    if resume_from is not None:
        params, state, loaded_header = load_trainer_checkpoint(resume_from)
        header = {**loaded_header, **header}
        start_step = state.step
    else:
        params = NetworkParams.initialize(net_config, train_config.seed)
        state = AdamState.zeros(params)
        start_step = 0

    loss_path = os.path.join(out_dir, "loss.csv")
    mode = "a" if resume_from is not None and os.path.exists(loss_path) else "w"
    loss_curve = []
    t0 = time.monotonic()
    with open(loss_path, mode, newline="") as fh:
        writer = csv.writer(fh)
        if mode == "w":
            writer.writerow(["step", "nll", "grad_norm", "wall_time_s"])
        for step in range(start_step, train_config.epochs):
            idxs = _batch_indices(step, train_config.minibatch_count, len(chunks),
                                  train_config.seed)
            batch = [chunks[i] for i in idxs]
            loss, grads = _loss_and_grads(params, batch, need_grads=True)
            norm = clip_gradients(grads, train_config.grad_clip)
            adam_step(params, grads, state, train_config)
            if (state.step % train_config.log_interval == 0
                    or state.step == train_config.epochs):
                row = (state.step, loss, norm, time.monotonic() - t0)
                loss_curve.append(row)
                writer.writerow([row[0], repr(row[1]), repr(row[2]), f"{row[3]:.3f}"])
            if progress is not None:
                progress(state.step, loss)
            if (state.step % train_config.checkpoint_interval == 0
                    and state.step < train_config.epochs):
                save_trainer_checkpoint(
                    os.path.join(out_dir, f"checkpoint-{state.step:06d}.aivc"),
                    params, state, header)
    final_path = os.path.join(out_dir, "checkpoint.aivc")
    save_trainer_checkpoint(final_path, params, state, header)
    return TrainResult(params=params, state=state, loss_curve=loss_curve,
                       checkpoint_path=final_path)


def save_trainer_checkpoint(path, params: NetworkParams, state: AdamState, header):
    tensors = dict(params.tensors)
    for n, t in state.m.items():
        tensors[f"opt.m.{n}"] = t
    for n, t in state.v.items():
        tensors[f"opt.v.{n}"] = t
    meta = {**header, "network": params.config.to_dict(), "step": state.step}
    ckpt.save(path, meta, tensors)


def load_trainer_checkpoint(path):
    meta, tensors = ckpt.load(path)
    config = NetworkConfig.from_dict(meta["network"])
    dt = config.np_dtype
    params_t, m, v = {}, {}, {}
    for name, arr in tensors.items():
        if name.startswith("opt.m."):
            m[name[len("opt.m."):]] = arr.astype(dt)
        elif name.startswith("opt.v."):
            v[name[len("opt.v."):]] = arr.astype(dt)
        else:
            params_t[name] = arr.astype(dt)
    params = NetworkParams(config, params_t)
    state = AdamState(step=int(meta["step"]), m=m, v=v)
    return params, state, meta
