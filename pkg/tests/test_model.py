"""Network assembly: layer inventory, shape law, residual skip, ablation modes."""

import numpy as np
import pytest

import srfbn.autodiff as ad
from srfbn import ops
from srfbn.model import (ModelConfig, build_model, forward_unrolled, layer_specs,
                         parameter_count, self_ensemble_infer, wrap_params)


def micro(scale=2, **kw):
    return ModelConfig(scale=scale, iterations=2, groups=2, base_channels=4, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(scale=5)
    with pytest.raises(ValueError):
        ModelConfig(groups=0)
    with pytest.raises(ValueError):
        ModelConfig(in_channels=3, out_channels=1)
    assert ModelConfig(scale=3).ksp == (7, 3, 2)


def test_layer_inventory_channel_accounting():
    cfg = ModelConfig(scale=4, iterations=4, groups=4, base_channels=16)
    specs = {s.name: s for s in layer_specs(cfg)}
    m = cfg.base_channels
    assert specs["lrfb.conv_in"].c_out == 4 * m
    assert specs["fb.compress_in"].c_in == 2 * m
    for g in range(2, 5):
        # dense skips: the g-th compressors see all g earlier m-wide maps
        assert specs[f"fb.group{g}.up_compress"].c_in == g * m
        assert specs[f"fb.group{g}.down_compress"].c_in == g * m
    assert specs["fb.fuse"].c_in == cfg.groups * m
    assert "fb.group1.up_compress" not in specs  # first group has nothing to compress
    assert specs["rb.conv_out"].prelu is False

    flat = {s.name: s for s in layer_specs(ModelConfig(scale=4, iterations=4, groups=4,
                                                       base_channels=16, use_dense_skips=False))}
    for g in range(2, 5):
        assert flat[f"fb.group{g}.up_compress"].c_in == m
        assert flat[f"fb.group{g}.down_compress"].c_in == m
    assert flat["fb.fuse"].c_in == cfg.groups * m  # fusion still sees every group


def test_parameter_count_independent_of_iterations():
    counts = {t: parameter_count(build_model(ModelConfig(scale=2, iterations=t, groups=2,
                                                         base_channels=4), 0)) for t in (1, 2, 4)}
    assert len(set(counts.values())) == 1


def test_unshared_weights_scale_with_iterations():
    shared = parameter_count(build_model(micro(), 0))
    unshared = build_model(micro(share_weights=False), 0)
    assert parameter_count(unshared) == 2 * shared
    assert any(k.startswith("step1.") for k in unshared)
    assert any(k.startswith("step2.") for k in unshared)


def test_shape_law_across_scales_and_sizes():
    for scale in (2, 3, 4):
        cfg = micro(scale)
        weights = build_model(cfg, 1)
        for h, w in ((7, 11), (16, 16), (23, 9)):
            lr = np.random.default_rng(2).random((1, 3, h, w), dtype=np.float32)
            trace = forward_unrolled(lr, weights, cfg)
            for sr in trace.sr_images():
                assert sr.shape == (1, 3, scale * h, scale * w)


def test_zero_weights_reproduce_bilinear_everywhere():
    cfg = micro()
    weights = {k: np.zeros_like(v) for k, v in build_model(cfg, 3).items()}
    lr = np.random.default_rng(4).random((2, 3, 9, 6), dtype=np.float32)
    base = ops.bilinear_upsample(lr, cfg.scale)
    for sr in forward_unrolled(lr, weights, cfg).sr_images():
        assert np.array_equal(sr, base)


def test_trace_collects_every_iteration():
    cfg = ModelConfig(scale=2, iterations=3, groups=2, base_channels=4)
    trace = forward_unrolled(np.ones((1, 3, 8, 8), dtype=np.float32), build_model(cfg, 5), cfg)
    assert len(trace.f_in) == len(trace.f_out) == len(trace.l0) == len(trace.i_sr) == 3
    m = cfg.base_channels
    assert trace.f_out[0].value.shape == (1, m, 8, 8)
    assert trace.l0[0].value.shape == (1, m, 8, 8)


def test_feedback_state_carries_information():
    # same weights, same input: iteration 2 differs from iteration 1 because
    # the hidden state changed, and re-running is deterministic
    cfg = micro()
    weights = build_model(cfg, 6)
    lr = np.random.default_rng(7).random((1, 3, 8, 8), dtype=np.float32)
    a = forward_unrolled(lr, weights, cfg)
    b = forward_unrolled(lr, weights, cfg)
    assert not np.allclose(a.i_sr[0].value, a.i_sr[1].value)
    assert np.array_equal(a.i_sr[1].value, b.i_sr[1].value)


def test_lr_input_disconnection_substitutes_zeros():
    cfg = micro(lr_input_every_iteration=False)
    weights = build_model(cfg, 8)
    lr = np.random.default_rng(9).random((1, 3, 8, 8), dtype=np.float32)
    trace = forward_unrolled(lr, weights, cfg)
    assert not np.any(trace.f_in[1].value)           # zeros stand in for LR features
    assert np.any(trace.f_in[0].value)               # first iteration still sees the input
    assert trace.i_sr[1].value.shape == (1, 3, 16, 16)


def test_plain_conv_ablation_keeps_shapes():
    cfg = micro(use_updown_layers=False)
    specs = {s.name: s for s in layer_specs(cfg)}
    assert specs["fb.group1.up"].kind == "conv" and specs["fb.group1.up"].k == 3
    assert specs["rb.up"].kind == "deconv"  # reconstruction must still upscale
    weights = build_model(cfg, 10)
    trace = forward_unrolled(np.ones((1, 3, 8, 8), dtype=np.float32), weights, cfg)
    assert trace.i_sr[-1].value.shape == (1, 3, 16, 16)


def test_dense_skip_ablation_runs():
    cfg = micro(use_dense_skips=False)
    weights = build_model(cfg, 11)
    trace = forward_unrolled(np.ones((1, 3, 8, 8), dtype=np.float32), weights, cfg)
    assert trace.i_sr[-1].value.shape == (1, 3, 16, 16)


def test_unshared_forward_uses_per_iteration_weights():
    cfg = micro(share_weights=False)
    weights = build_model(cfg, 12)
    lr = np.random.default_rng(13).random((1, 3, 8, 8), dtype=np.float32)
    out1 = forward_unrolled(lr, weights, cfg).i_sr[-1].value
    # clobber only the second iteration's weights; iteration 1 output must not move
    zeroed = {k: (np.zeros_like(v) if k.startswith("step2.") else v) for k, v in weights.items()}
    trace = forward_unrolled(lr, zeroed, cfg)
    assert np.array_equal(trace.i_sr[0].value,
                          forward_unrolled(lr, weights, cfg).i_sr[0].value)
    assert not np.array_equal(trace.i_sr[-1].value, out1)


def test_self_ensemble_identity_and_zero_weight():
    cfg = micro()
    weights = build_model(cfg, 14)
    lr = np.random.default_rng(15).random((1, 3, 8, 8), dtype=np.float32)
    single = self_ensemble_infer(lr, weights, cfg, transforms=(0,))
    assert np.array_equal(single, forward_unrolled(lr, weights, cfg).i_sr[-1].value)

    zero = {k: np.zeros_like(v) for k, v in weights.items()}
    ens = self_ensemble_infer(lr, zero, cfg)
    assert np.allclose(ens, ops.bilinear_upsample(lr, 2), atol=1e-6)
    with pytest.raises(ValueError):
        self_ensemble_infer(lr, weights, cfg, transforms=())


def test_self_ensemble_matches_per_branch_oracle():
    cfg = micro()
    weights = build_model(cfg, 16)
    lr = np.random.default_rng(17).random((1, 3, 6, 9), dtype=np.float32)
    got = self_ensemble_infer(lr, weights, cfg)
    branches = []
    for variant in range(8):
        flipped = ops.dihedral_transform(lr, variant)
        sr = forward_unrolled(flipped, weights, cfg).i_sr[-1].value
        branches.append(ops.dihedral_inverse(sr, variant))
    assert np.allclose(got, np.mean(branches, axis=0), atol=1e-6)


def test_forward_accepts_tape_nodes_and_checks_channels():
    cfg = micro()
    weights = build_model(cfg, 18)
    tape = ad.Tape()
    params = wrap_params(tape, weights)
    x = tape.leaf(np.random.default_rng(19).random((1, 3, 8, 8), dtype=np.float32))
    trace = forward_unrolled(x, params, cfg, tape)
    loss = ad.l1_loss(trace.i_sr[-1], tape.leaf(np.zeros((1, 3, 16, 16), dtype=np.float32)))
    tape.backward(loss)
    assert params["lrfb.conv_in.weight"].grad is not None
    with pytest.raises(ValueError):
        forward_unrolled(np.ones((1, 1, 8, 8), dtype=np.float32), weights, cfg)
