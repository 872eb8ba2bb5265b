"""Checkpoint format: round-trips, corruption handling, size invariants."""

import os
import struct

import numpy as np
import pytest

from srfbn.checkpoint import MAGIC, CheckpointError, checkpoint_load, checkpoint_save
from srfbn.model import ModelConfig, build_model


def micro(iterations=2, **kw):
    return ModelConfig(scale=2, iterations=iterations, groups=2, base_channels=4, **kw)


def test_roundtrip_is_bitwise(tmp_path):
    cfg = micro()
    weights = build_model(cfg, 0)
    path = str(tmp_path / "model.srfb")
    checkpoint_save(weights, cfg, path)
    loaded, cfg2 = checkpoint_load(path)
    assert cfg2 == cfg
    assert sorted(loaded) == sorted(weights)
    for name in weights:
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], weights[name])


def test_config_flags_roundtrip(tmp_path):
    cfg = micro(share_weights=False, tie_loss_every_iteration=False,
                lr_input_every_iteration=False, use_updown_layers=False, use_dense_skips=False)
    path = str(tmp_path / "flags.srfb")
    checkpoint_save(build_model(cfg, 1), cfg, path)
    _, cfg2 = checkpoint_load(path)
    assert cfg2 == cfg


def test_wrong_magic_rejected(tmp_path):
    path = str(tmp_path / "bad.srfb")
    checkpoint_save(build_model(micro(), 2), micro(), path)
    with open(path, "r+b") as fh:
        fh.write(b"NOPE")
    with pytest.raises(CheckpointError):
        checkpoint_load(path)


def test_unknown_version_rejected(tmp_path):
    path = str(tmp_path / "vers.srfb")
    checkpoint_save(build_model(micro(), 3), micro(), path)
    with open(path, "r+b") as fh:
        fh.seek(len(MAGIC))
        fh.write(struct.pack("<I", 99))
    with pytest.raises(CheckpointError):
        checkpoint_load(path)


def test_truncated_payload_rejected(tmp_path):
    path = str(tmp_path / "trunc.srfb")
    checkpoint_save(build_model(micro(), 4), micro(), path)
    size = os.path.getsize(path)
    with open(path, "r+b") as fh:
        fh.truncate(size - 10)
    with pytest.raises(CheckpointError):
        checkpoint_load(path)


def test_trailing_garbage_rejected(tmp_path):
    path = str(tmp_path / "trail.srfb")
    checkpoint_save(build_model(micro(), 5), micro(), path)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 8)
    with pytest.raises(CheckpointError):
        checkpoint_load(path)


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        checkpoint_load(str(tmp_path / "absent.srfb"))


def test_payload_size_independent_of_iterations(tmp_path):
    sizes = {}
    for t in (1, 2, 4):
        cfg = micro(iterations=t)
        path = str(tmp_path / f"t{t}.srfb")
        checkpoint_save(build_model(cfg, 6), cfg, path)
        sizes[t] = os.path.getsize(path)
    assert len(set(sizes.values())) == 1


def test_equal_weights_produce_identical_bytes(tmp_path):
    cfg = micro()
    weights = build_model(cfg, 7)
    p1, p2 = str(tmp_path / "a.srfb"), str(tmp_path / "b.srfb")
    checkpoint_save(weights, cfg, p1)
    checkpoint_save(dict(reversed(list(weights.items()))), cfg, p2)
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()
