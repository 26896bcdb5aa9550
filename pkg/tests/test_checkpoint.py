import numpy as np
import pytest

from afnet.checkpoint import MAGIC, Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from afnet.config import RunConfig
from afnet.errors import FormatError
from afnet.tensor import Tensor, no_grad
from afnet.training import build_models, restore, snapshot

TINY = RunConfig(base_channels=4, attention_reduction=1, rdb_count=1, rdb_channels=4, rdb_growth=4,
                 disc_widths=(4, 4), crop=32)


def test_roundtrip_is_bit_exact(tmp_path, rng):
    ckpt = Checkpoint({"a": 1}, {"x": rng.random((2, 3)).astype(np.float32), "y": np.zeros(0, np.float32)},
                      epoch=4, best_val_psnr=float("-inf"), meta={"k": [1, 2]})
    save_checkpoint(ckpt, tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    assert back.epoch == 4 and back.best_val_psnr == float("-inf") and back.meta == {"k": [1, 2]}
    assert np.array_equal(back.tensors["x"], ckpt.tensors["x"])
    assert back.tensors["y"].shape == (0,)
    assert to_bytes(back) == to_bytes(ckpt)


def test_model_roundtrip_forward_identical(rng):
    models = build_models(TINY)
    back = restore(from_bytes(to_bytes(snapshot(models, 2, 17.5))))
    x = Tensor(rng.random((1, 3, 32, 32)).astype(np.float32))
    with no_grad():
        assert np.array_equal(models.generator(x)[1].data, back.generator(x)[1].data)
        assert np.array_equal(models.fourier(x).data, back.fourier(x).data)


def test_manifest_lists_every_parameter_once():
    models = build_models(TINY)
    ckpt = snapshot(models, 0, 0.0)
    names = [n for n in ckpt.tensors if not n.startswith("opt.")]
    expected = [f"{tag}.{n}" for tag, m, _ in models.groups() for n, _ in m.named_parameters()]
    assert names == expected


def test_corruption_detected():
    blob = to_bytes(Checkpoint({}, {"x": np.ones(4, np.float32)}))
    with pytest.raises(FormatError):
        from_bytes(blob[:-1])
    with pytest.raises(FormatError):
        from_bytes(b"XX" + blob[2:])
    with pytest.raises(FormatError):
        from_bytes(blob.replace(b'"format_version":1', b'"format_version":9'))
    with pytest.raises(FormatError):
        from_bytes(MAGIC + b"\x01")


def test_unknown_tensor_name_rejected():
    ckpt = snapshot(build_models(TINY), 0, 0.0)
    ckpt.tensors["Q.weight"] = np.zeros(1, np.float32)
    with pytest.raises(FormatError):
        restore(ckpt)
    ckpt = snapshot(build_models(TINY), 0, 0.0)
    ckpt.tensors["G.extra"] = np.zeros(1, np.float32)
    with pytest.raises(FormatError):
        restore(ckpt)


def test_missing_file(tmp_path):
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "nope.ckpt")
