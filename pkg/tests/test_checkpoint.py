import numpy as np
import pytest

from partdiff.errors import DataError
from partdiff.params import ParamStore, adam_step, load_checkpoint, save_checkpoint


def make_store(seed=0):
    rng = np.random.default_rng(seed)
    store = ParamStore()
    store.add("layer.W", rng.standard_normal((4, 3)))
    store.add("layer.b", rng.standard_normal(3))
    store.add("freqs", rng.standard_normal(5), frozen=True)
    # populate optimizer state
    for _ in range(3):
        for v in store.trainable().values():
            v.zero_grad()
            v.grad += rng.standard_normal(v.data.shape)
        adam_step(store, lr=1e-3)
    return store


def test_roundtrip_bit_exact(tmp_path):
    store = make_store()
    path = tmp_path / "model.spa"
    save_checkpoint(path, store, {"arch": {"hidden": 4}})
    loaded, meta = load_checkpoint(path)
    assert meta["arch"] == {"hidden": 4}
    assert loaded.frozen == {"freqs"}
    assert loaded.step == store.step
    for p in store.params:
        assert np.array_equal(loaded[p].data, store[p].data)
    for p in store._m:
        assert np.array_equal(loaded._m[p], store._m[p])
        assert np.array_equal(loaded._v[p], store._v[p])
    # byte-identical re-serialization
    path2 = tmp_path / "model2.spa"
    save_checkpoint(path2, loaded, {"arch": {"hidden": 4}})
    assert path.read_bytes() == path2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.spa"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        load_checkpoint(path)


def test_bad_version_rejected(tmp_path):
    store = make_store()
    path = tmp_path / "model.spa"
    save_checkpoint(path, store, {})
    blob = bytearray(path.read_bytes())
    blob[4:8] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="version 99"):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    store = make_store()
    path = tmp_path / "model.spa"
    save_checkpoint(path, store, {})
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(path)
