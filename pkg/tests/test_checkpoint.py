import numpy as np
import pytest

from dnfs.arch import ArchSpec, build
from dnfs.checkpoint import Checkpoint, CheckpointError, dumps, load, loads, save
from dnfs.graph import OptimizerState, backward, forward, init_parameters, optimizer_step


def trained_checkpoint(family="dnfs"):
    net = init_parameters(build(ArchSpec(family, 1), 8), 4)
    opt = OptimizerState.for_network(net, lr=2e-3)
    x = np.random.default_rng(0).standard_normal((2, 1, 8, 8)).astype(np.float32)
    for _ in range(3):
        out, cache = forward(net, x)
        backward(net, cache, out - 0.5)
        optimizer_step(net, opt)
    return Checkpoint.capture(net, opt, 3, seed=4, psi=0.5)


def test_save_load_save_is_byte_identical(tmp_path):
    ckpt = trained_checkpoint()
    save(tmp_path / "a.ckpt", ckpt)
    save(tmp_path / "b.ckpt", load(tmp_path / "a.ckpt"))
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


@pytest.mark.parametrize("family", ["dnfs", "unet_like"])
def test_round_trip_is_bit_exact(family):
    ckpt = trained_checkpoint(family)
    back = loads(dumps(ckpt))
    assert back.spec == ckpt.spec and back.epoch == 3
    assert back.meta["seed"] == "4" and back.meta["psi"] == "0.5"
    for name, arr in ckpt.params.items():
        assert back.params[name].tobytes() == arr.astype(np.float32).tobytes()
    opt, ref = back.optimizer, ckpt.optimizer
    assert (opt.step, opt.lr, opt.beta1, opt.beta2, opt.eps) == (ref.step, ref.lr, ref.beta1, ref.beta2, ref.eps)
    for name in ref.m:
        assert opt.m[name].tobytes() == ref.m[name].astype(np.float32).tobytes()
        assert opt.v[name].tobytes() == ref.v[name].astype(np.float32).tobytes()


def test_network_reproduces_outputs():
    ckpt = trained_checkpoint()
    x = np.random.default_rng(1).standard_normal((1, 1, 8, 8)).astype(np.float32)
    a = forward(ckpt.network(8), x, "eval")[0]
    b = forward(loads(dumps(ckpt)).network(8), x, "eval")[0]
    np.testing.assert_array_equal(a, b)


def test_magic_header():
    data = dumps(trained_checkpoint())
    assert data[:4] == b"DNFS"
    assert int.from_bytes(data[4:8], "little") == 1


def test_rejects_bad_magic():
    data = dumps(trained_checkpoint())
    with pytest.raises(CheckpointError, match="magic"):
        loads(b"XXXX" + data[4:])


def test_rejects_bad_version():
    data = bytearray(dumps(trained_checkpoint()))
    data[4] = 9
    with pytest.raises(CheckpointError, match="version"):
        loads(bytes(data))


@pytest.mark.parametrize("cut", [3, 10, 100, -1])
def test_rejects_truncation(cut):
    data = dumps(trained_checkpoint())
    with pytest.raises(CheckpointError, match="truncated"):
        loads(data[:cut])


def test_rejects_trailing_bytes():
    with pytest.raises(CheckpointError, match="trailing"):
        loads(dumps(trained_checkpoint()) + b"\0")


def test_shape_mismatch_detected():
    ckpt = trained_checkpoint()
    name = next(iter(ckpt.params))
    ckpt.params[name] = np.zeros((1, 1, 1, 1), np.float32)
    with pytest.raises(CheckpointError, match=name):
        ckpt.network(8)
