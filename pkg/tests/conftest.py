import os

import numpy as np
import pytest

import artinv
from artinv import corpus as corpus_io
from artinv.frontend import FrontendConfig
from artinv.generate import DecodeRule, invert
from artinv.trajectory import downsample
from artinv.training import TrainConfig, train


def tiny_config(**overrides):
    """A small float64 network used by most unit tests."""
    base = dict(layers_per_stack=2, stacks=1, residual_channels=5,
                gate_channels=6, skip_channels=4, mixture_components=2,
                input_channels=3, cond_channels=4, grid_levels=32,
                dtype="float64")
    base.update(overrides)
    return artinv.NetworkConfig(**base)


def random_inputs(config, timesteps, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(timesteps, config.input_channels))
    h = rng.standard_normal((timesteps, config.cond_channels))
    return x, h


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """A seeded 2-speaker x 4-utterance synthetic corpus."""
    root = tmp_path_factory.mktemp("corpus")
    manifest_path = corpus_io.make_synthetic_corpus(
        str(root / "synth"), seed=7, speakers=2, utterances_per_speaker=4)
    return manifest_path


@pytest.fixture(scope="session")
def overfit_bundle(toy_corpus, tmp_path_factory):
    """A 2-layer model trained 2000 steps on one synthetic training utterance.

    Shared session-wide because it is the expensive fixture: several module
    tests and the end-to-end acceptance criteria all reuse it.
    """
    manifest = corpus_io.load_manifest(toy_corpus)
    frontend_cfg = FrontendConfig()
    utt = manifest.split_utterances("train")[0]
    items, norm_stats, cond_stats = corpus_io.prepare_training_data(
        manifest, frontend_cfg, utterance_ids=[utt.id])
    net = artinv.NetworkConfig(layers_per_stack=2, stacks=1,
                               residual_channels=96, gate_channels=96,
                               skip_channels=48, dtype="float32")
    tc = TrainConfig(epochs=2000, minibatch_count=1, adam_alpha=2e-3,
                     grad_clip=5.0, seed=1, checkpoint_interval=2000,
                     log_interval=100)
    out_dir = tmp_path_factory.mktemp("overfit_run")
    result = train(items, net, tc, str(out_dir))

    clip = corpus_io.load_audio(manifest, utt)
    ref400 = corpus_io.load_reference_trajectory(manifest, utt)
    reference = downsample(ref400, 4)
    predicted = invert(clip, result.params, cond_stats,
                       norm_stats[utt.speaker_id], DecodeRule("mean"), frontend_cfg)
    return {
        "manifest": manifest,
        "manifest_path": toy_corpus,
        "frontend": frontend_cfg,
        "utterance": utt,
        "items": items,
        "norm_stats": norm_stats,
        "cond_stats": cond_stats,
        "result": result,
        "predicted": predicted,
        "reference": reference,
        "out_dir": str(out_dir),
    }
