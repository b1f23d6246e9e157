import json
import math
import struct

import numpy as np
import pytest

from headsplat import tensor as T
from headsplat.tensor import AdamWConfig, ParamStore, adamw_step, cosine_lr
from headsplat.tensor import checkpoint as ckpt


def _quadratic_step(store, lr, cfg=AdamWConfig()):
    store.zero_grad()
    w = store["w"]
    T.sum_(T.square(w)).backward()
    adamw_step(store, lr, cfg)


class TestAdamW:
    def test_single_step_matches_hand_computation(self):
        # bias-corrected first step moves by lr * sign(g), then weight decay
        store = ParamStore(np.float64)
        store.create("w", np.array([1.0, -2.0]))
        _quadratic_step(store, 0.1)
        g = np.array([2.0, -4.0])
        m, v = 0.1 * g / 0.1, 0.001 * g * g / 0.001
        expected = np.array([1.0, -2.0]) * (1 - 0.1 * 0.01) - 0.1 * m / (np.sqrt(v) + 1e-8)
        np.testing.assert_allclose(store["w"].data, expected, rtol=0, atol=1e-15)

    def test_descends_on_square(self):
        store = ParamStore(np.float64)
        store.create("w", np.array([1.0]))
        _quadratic_step(store, 0.1)
        assert store["w"].data[0] < 1.0

    def test_zero_gradient_only_decays(self):
        store = ParamStore(np.float64)
        store.create("w", np.array([3.0]))
        store["w"].grad = np.zeros(1)
        adamw_step(store, 0.5)
        assert store["w"].data[0] == pytest.approx(3.0 * (1 - 0.5 * 0.01), abs=1e-15)

    def test_quadratic_bowl_converges(self):
        store = ParamStore(np.float64)
        store.create("w", np.array([1.0, -0.5, 2.0]))
        for step in range(500):
            _quadratic_step(store, cosine_lr(step, 500, 0.05), AdamWConfig(weight_decay=0.0))
        assert np.max(np.abs(store["w"].data)) < 1e-6

    def test_missing_gradient_names_parameter(self):
        store = ParamStore()
        store.create("enc.w", np.ones(2))
        with pytest.raises(RuntimeError, match="enc.w"):
            adamw_step(store, 0.1)

    def test_skip_missing_prefix(self):
        store = ParamStore()
        store.create("a", np.ones(2))
        store.create("vae.w", np.ones(2))
        store["a"].grad = np.ones(2)
        adamw_step(store, 0.1, skip_missing=("vae.",))
        np.testing.assert_array_equal(store["vae.w"].data, 1.0)


class TestParamStore:
    def test_names_unique_and_shapes_fixed(self):
        store = ParamStore()
        store.create("w", np.ones((2, 3)))
        with pytest.raises(KeyError):
            store.create("w", np.ones(1))
        with pytest.raises(ValueError, match=r"\(3, 2\).*\(2, 3\)"):
            store.assign("w", np.ones((3, 2)))

    def test_remove_prefix_drops_moments(self):
        store = ParamStore()
        store.create("vae.a", np.ones(1))
        store.create("b", np.ones(1))
        store.moments["vae.a"] = (np.zeros(1), np.zeros(1))
        store.remove("vae.")
        assert list(store) == ["b"] and "vae.a" not in store.moments


class TestCosine:
    def test_endpoints(self):
        assert cosine_lr(0, 100, 1e-3) == 1e-3
        assert cosine_lr(99, 100, 1e-3) <= 1e-2 * 1e-3 + 1e-18

    def test_midpoint(self):
        assert cosine_lr(50, 101, 1.0, floor=0.0) == pytest.approx(0.5)

    def test_monotone(self):
        lrs = [cosine_lr(s, 50, 1.0) for s in range(50)]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))


class TestCheckpoint:
    def _store(self):
        store = ParamStore(np.float32)
        rng = np.random.default_rng(0)
        store.create("z.w", rng.normal(size=(3, 2)))
        store.create("a.b", rng.normal(size=(4,)))
        return store

    def test_layout_and_order(self, tmp_path):
        path = tmp_path / "m.ckpt"
        ckpt.save(self._store(), path, "cfg")
        blob = path.read_bytes()
        assert blob[:8] == b"HSPLATCK"
        version, mlen = struct.unpack("<IQ", blob[8:20])
        assert version == ckpt.FORMAT_VERSION
        manifest = json.loads(blob[20:20 + mlen])
        assert [e["name"] for e in manifest["tensors"]] == ["a.b", "z.w"]
        assert manifest["config"] == "cfg"
        assert len(blob) == 20 + mlen + (4 + 6) * 4

    def test_save_load_save_identical(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        ckpt.save(self._store(), a, "x")
        arrays, text = ckpt.read(a)
        store = ParamStore(np.float32)
        store.create("a.b", np.zeros(4))
        store.create("z.w", np.zeros((3, 2)))
        ckpt.load_into(store, arrays)
        ckpt.save(store, b, text)
        assert a.read_bytes() == b.read_bytes()

    def test_version_mismatch_names_both(self, tmp_path):
        blob = bytearray(ckpt.encode({"w": np.ones(2, np.float32)}))
        blob[8:12] = struct.pack("<I", 7)
        with pytest.raises(ckpt.CheckpointError, match=r"7.*1"):
            ckpt.decode(bytes(blob))

    def test_bad_magic(self):
        with pytest.raises(ckpt.CheckpointError, match="magic"):
            ckpt.decode(b"NOTACKPT" + bytes(12))

    def test_shape_mismatch_and_missing(self):
        arrays = {"w": np.ones((2, 2), np.float32)}
        store = ParamStore()
        store.create("w", np.ones((3, 2)))
        with pytest.raises(ValueError, match="shape"):
            ckpt.load_into(store, arrays)
        store2 = ParamStore()
        store2.create("q", np.ones(1))
        with pytest.raises(ckpt.CheckpointError, match="'q'"):
            ckpt.load_into(store2, arrays)

    def test_optional_prefix_dropped(self):
        store = ParamStore()
        store.create("w", np.ones(2))
        store.create("vae.h", np.ones(2))
        dropped = ckpt.load_into(store, {"w": np.zeros(2, np.float32)}, optional_prefixes=("vae.",))
        assert dropped == ["vae.h"] and list(store) == ["w"]

    def test_float64_roundtrip_exact(self):
        x = np.random.default_rng(3).normal(size=(5,))
        arrays, _ = ckpt.decode(ckpt.encode({"x": x}))
        assert arrays["x"].dtype == np.float64 and np.array_equal(arrays["x"], x)


def test_matmul_associativity(rng):
    a, b, c = (T.Tensor(rng.normal(size=s)) for s in ((3, 4), (4, 5), (5, 2)))
    left = T.matmul(T.matmul(a, b), c).data
    right = T.matmul(a, T.matmul(b, c)).data
    assert np.max(np.abs(left - right)) < 1e-10
    assert math.isfinite(float(left.sum()))
