import numpy as np
import pytest

from headsplat import tensor as T
from headsplat.denoiser import DiTConfig, dit_forward, f_theta, init_dit, timestep_features
from headsplat.tensor import ParamStore, Tensor
from headsplat.tokenize import init_tokenizers, tokenize_gaussian

from conftest import check_grads, check_param_grads

CFG = DiTConfig(depth=2, width=32, heads=4, mlp_ratio=2, time_dim=16)
PATCH = 4


def _store(seed=0, live_gates=False):
    store = ParamStore(np.float64)
    rng = np.random.default_rng(seed)
    init_tokenizers(store, PATCH, CFG.width, rng)
    init_dit(store, CFG, rng)
    if live_gates:
        for name in store.names("dit."):
            if ".adaln." in name:
                store.assign(name, rng.normal(0.0, 0.2, size=store[name].shape))
    return store


def _inputs(seed=0, h=16, w=16):
    r = np.random.default_rng(seed)
    return r.normal(size=(4, h, w, 9)), r.uniform(size=(9, h, w))


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(ValueError, match="divisible"):
            DiTConfig(width=30, heads=4)

    def test_timestep_features_deterministic(self):
        a, b = timestep_features(0.3, 16), timestep_features(0.3, 16)
        assert np.array_equal(a, b) and a.shape == (16,)
        assert not np.array_equal(a, timestep_features(0.31, 16))


class TestDiT:
    def test_zero_gates_identity(self):
        store = _store()
        x = Tensor(np.random.default_rng(1).normal(size=(20, CFG.width)))
        np.testing.assert_array_equal(dit_forward(x, 0.4, CFG, store).data, x.data)

    def test_shape_preserved(self):
        store = _store(live_gates=True)
        for depth in (1, 3):
            cfg = DiTConfig(depth=depth, width=32, heads=4, mlp_ratio=2, time_dim=16)
            s = ParamStore(np.float64)
            init_dit(s, cfg, np.random.default_rng(0))
            x = Tensor(np.ones((7, 32)))
            assert dit_forward(x, 0.0, cfg, s).shape == (7, 32)
        assert store is not None

    def test_t_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            dit_forward(Tensor(np.zeros((3, 32))), 1.5, CFG, _store())

    def test_t_sensitivity_with_live_gates(self):
        store = _store(live_gates=True)
        x = Tensor(np.random.default_rng(2).normal(size=(10, CFG.width)))
        a = dit_forward(x, 0.5, CFG, store).data
        b = dit_forward(x, 0.5 + 1e-4, CFG, store).data
        assert np.linalg.norm(b - a) / 1e-4 > 1e-3

    def test_attention_rows_normalized(self):
        store = _store(live_gates=True)
        probe = []
        dit_forward(Tensor(np.random.default_rng(3).normal(size=(12, CFG.width))), 0.2, CFG, store, probe)
        assert len(probe) == CFG.depth
        for w in probe:
            assert np.abs(w.sum(-1) - 1).max() < 1e-6

    def test_gradients_match_finite_differences(self, float64):
        store = _store(live_gates=True)
        x = np.random.default_rng(4).normal(size=(10, CFG.width))
        (err,) = check_grads(lambda t: dit_forward(t, 0.3, CFG, store), [x])
        assert err < 1e-3
        w = np.random.default_rng(5).normal(size=(10, CFG.width))
        err = check_param_grads(lambda: T.sum_(dit_forward(Tensor(x), 0.3, CFG, store) * w), store, per_param=2)
        assert err < 1e-3


class TestFTheta:
    def test_identity_at_init(self):
        store = _store()
        g, xc = _inputs()
        z = f_theta(g, 0.0, xc, store, CFG, PATCH).data
        np.testing.assert_array_equal(z, tokenize_gaussian(g, store, PATCH).data.reshape(-1, CFG.width))

    def test_output_length_and_determinism(self):
        store = _store(live_gates=True)
        g, xc = _inputs()
        a = f_theta(g, 0.0, xc, store, CFG, PATCH).data
        b = f_theta(g, 0.0, xc, store, CFG, PATCH).data
        assert a.shape == (4 * 4 * 4, CFG.width)
        assert np.array_equal(a, b)

    def test_context_pixel_reaches_gaussian_tokens(self):
        store = _store(live_gates=True)
        g, xc = _inputs()
        a = f_theta(g, 0.0, xc, store, CFG, PATCH).data
        xc2 = xc.copy()
        xc2[0, 3, 5] += 0.5
        b = f_theta(g, 0.0, xc2, store, CFG, PATCH).data
        # every view's tokens change through full attention
        assert np.all(np.abs(b - a).reshape(4, -1).max(-1) > 0)

    def test_extent_mismatch(self):
        store = _store()
        with pytest.raises(ValueError, match="extents"):
            f_theta(np.zeros((4, 16, 16, 9)), 0.0, np.zeros((9, 8, 16)), store, CFG, PATCH)
