import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headsplat.flow import (FlowError, FlowSchedule, euler_step, interpolate, make_state, make_training_pair,
                            noise_state, sample_multistep, sample_onestep, velocity)


def _pair(seed=0, shape=(4, 3, 5)):
    r = np.random.default_rng(seed)
    pl = r.normal(size=shape + (6,))
    return make_state(r.normal(size=shape + (3,)), pl), make_state(r.normal(size=shape + (3,)), pl)


def perfect(g1):
    """A predictor that always returns the true clean state."""
    def model(g, t, x):
        return g1.copy()
    return model


class TestSchedule:
    def test_timesteps(self):
        np.testing.assert_array_equal(FlowSchedule(4).timesteps(), [0, 0.25, 0.5, 0.75, 1.0])
        assert FlowSchedule(5).dt == 0.2

    def test_zero_steps(self):
        with pytest.raises(FlowError, match="at least 1"):
            FlowSchedule(0)


class TestPath:
    def test_endpoints_exact(self):
        g0, g1 = _pair()
        assert np.array_equal(interpolate(g0, g1, 0.0), g0)
        assert np.array_equal(interpolate(g0, g1, 1.0), g1)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 999))
    def test_affine_in_t(self, s, t, seed):
        # the path between two path points is itself linear
        g0, g1 = _pair(seed, (2, 2, 2))
        a, b = interpolate(g0, g1, s), interpolate(g0, g1, t)
        mid = interpolate(g0, g1, 0.5 * (s + t))
        np.testing.assert_allclose(mid[..., :3], 0.5 * (a[..., :3] + b[..., :3]), atol=1e-12)

    def test_plucker_untouched(self):
        g0, g1 = _pair()
        assert np.array_equal(interpolate(g0, g1, 0.37)[..., 3:], g0[..., 3:])

    def test_mismatched_rays(self):
        g0, g1 = _pair()
        g1[..., 5] += 1
        with pytest.raises(FlowError, match="Plücker"):
            interpolate(g0, g1, 0.5)

    def test_t_bounds(self):
        g0, g1 = _pair()
        with pytest.raises(FlowError):
            interpolate(g0, g1, 1.2)
        with pytest.raises(FlowError, match="undefined"):
            velocity(g1, g0, 1.0)

    def test_velocity_of_path_is_constant(self):
        g0, g1 = _pair()
        for t in (0.0, 0.3, 0.9):
            v = velocity(g1, interpolate(g0, g1, t), t)
            np.testing.assert_allclose(v[..., :3], (g1 - g0)[..., :3], atol=1e-12)
            assert np.all(v[..., 3:] == 0)


class TestSamplers:
    @pytest.mark.parametrize("n", [1, 4, 5, 10, 20, 30])
    def test_perfect_predictor_tracks_path(self, n):
        g0, g1 = _pair()
        traj = []
        out = sample_multistep(g0, None, n, perfect(g1), traj)
        assert len(traj) == n + 1
        for k, g in enumerate(traj):
            assert np.abs(g - interpolate(g0, g1, k / n)).max() < 1e-12
        assert np.array_equal(out, g1)

    def test_onestep_equals_single_euler_step(self):
        g0, _ = _pair()
        model = lambda g, t, x: np.sin(g[..., :3]) + x
        a = sample_onestep(g0, 0.5, model)
        b = sample_multistep(g0, 0.5, 1, model)
        assert a.tobytes() == b.tobytes()

    def test_call_count_and_times(self):
        g0, g1 = _pair()
        seen = []
        def model(g, t, x):
            seen.append(t)
            return g1
        sample_multistep(g0, None, 5, model)
        assert seen == [0.0, 0.2, 0.4, 0.6, 0.8]
        seen.clear()
        sample_onestep(g0, None, model)
        assert seen == [0.0]

    def test_signal_only_prediction_accepted(self):
        g0, g1 = _pair()
        out = sample_onestep(g0, None, lambda g, t, x: g1[..., :3])
        assert np.array_equal(out, g1)

    def test_wrong_prediction_shape(self):
        g0, _ = _pair()
        with pytest.raises(FlowError, match="model returned shape"):
            sample_onestep(g0, None, lambda g, t, x: np.zeros((1, 2)))

    def test_euler_last_step_returns_prediction(self):
        g0, g1 = _pair()
        assert np.array_equal(euler_step(g0, g1, 6, 7), g1)


class TestTraining:
    def test_onestep_pairs_start_at_noise(self):
        clean = np.random.default_rng(0).normal(size=(4, 3, 3, 3))
        pl = np.random.default_rng(1).normal(size=(4, 3, 3, 6))
        g_t, g1, t = make_training_pair(clean, pl, 5)
        assert t == 0.0
        np.testing.assert_array_equal(g1[..., :3], clean)
        np.testing.assert_array_equal(g_t, noise_state(pl, np.random.default_rng(5)))

    def test_multistep_pairs_lie_on_path(self):
        clean = np.zeros((4, 2, 2, 3))
        pl = np.ones((4, 2, 2, 6))
        ts = []
        for seed in range(200):
            g_t, g1, t = make_training_pair(clean, pl, seed, "multi-step")
            ts.append(t)
            r = np.random.default_rng(seed)
            r.uniform()
            noise = r.standard_normal((4, 2, 2, 3))
            np.testing.assert_allclose(g_t[..., :3], (1 - t) * noise, atol=1e-15)
            np.testing.assert_array_equal(g_t[..., 3:], pl)
        assert 0.0 <= min(ts) and max(ts) < 1.0 and 0.35 < np.mean(ts) < 0.65

    def test_noise_statistics(self):
        g = noise_state(np.zeros((4, 64, 64, 6)), 0)
        sig = g[..., :3]
        assert abs(sig.mean()) < 0.02 and abs(sig.std() - 1) < 0.02

    def test_unknown_mode(self):
        with pytest.raises(FlowError, match="unknown training mode"):
            make_training_pair(np.zeros((1, 1, 1, 3)), np.zeros((1, 1, 1, 6)), 0, "two-step")
