import struct

import numpy as np
import pytest

from mfare.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from mfare.network import init_params
from conftest import small_hyper


@pytest.fixture
def saved(tmp_path):
    hyper = small_hyper(m=2)
    params = init_params(hyper, np.random.default_rng(0))
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, hyper, path, {"threshold": 0.25, "vocab": {"a": 1}})
    return path, params, hyper


def test_roundtrip(saved):
    path, params, hyper = saved
    loaded, h2, header = load_checkpoint(path, expected_hyper=hyper)
    assert h2 == hyper and header["threshold"] == 0.25
    assert loaded.names() == params.names()
    for name, t in params.items():
        assert np.array_equal(loaded[name].data, t.data)
    assert not path.with_name("m.ckpt.tmp").exists()


def test_save_is_byte_stable(saved, tmp_path):
    path, params, hyper = saved
    other = tmp_path / "sub" / "again.ckpt"
    save_checkpoint(params, hyper, other, {"vocab": {"a": 1}, "threshold": 0.25})
    assert other.read_bytes() == path.read_bytes()


def test_hyper_mismatch_named(saved):
    path, _, hyper = saved
    with pytest.raises(CheckpointError, match="d_w mismatch: checkpoint has 4, config has 5"):
        load_checkpoint(path, expected_hyper=hyper.replace(d_w=5))


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b[:-3], "truncated"),
    (lambda b: b[:30], "truncated|corrupt"),
    (lambda b: b"XXXXXXXX" + b[8:], "bad magic"),
    (lambda b: b[:8] + struct.pack("<I", 9) + b[12:], "version 9"),
    (lambda b: b + b"\0", "trailing"),
])
def test_corruption_detected(saved, mutate, msg):
    path, _, _ = saved
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(CheckpointError, match=msg):
        load_checkpoint(path)
