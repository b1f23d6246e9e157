"""Flow-matching states, the Euler sampler and its one-step collapse.

A Gaussian state is a (V, H, W, 9) array per canonical view: three signal
channels followed by the view's six Plücker channels. Only the signal
channels are ever noised, interpolated or updated; the Plücker channels
are fixed conditioning.

Samplers take a ``model(g_t, t, x_cond)`` callable returning the predicted
clean state (either the full 9-channel state or just its 3 signal channels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SIGNAL = 3

Model = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowSchedule:
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise FlowError(f"step count must be at least 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    def timesteps(self) -> np.ndarray:
        """t_0 .. t_N with t_k = k / N."""
        return np.arange(self.steps + 1) / self.steps


def make_state(signal: np.ndarray, plucker: np.ndarray) -> np.ndarray:
    if signal.shape[:-1] != plucker.shape[:-1]:
        raise FlowError(f"signal {signal.shape} and Plücker {plucker.shape} extents differ")
    return np.concatenate([signal, plucker.astype(signal.dtype)], axis=-1)


def noise_state(plucker: np.ndarray, seed, dtype=np.float64) -> np.ndarray:
    """g_0: standard-normal signal channels next to the given (V, H, W, 6) rays."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal(plucker.shape[:-1] + (SIGNAL,)).astype(dtype)
    return make_state(noise, plucker.astype(dtype))


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise FlowError(f"state shapes differ: {a.shape} vs {b.shape}")
    if not np.array_equal(a[..., SIGNAL:], b[..., SIGNAL:]):
        raise FlowError("Plücker channels of the two states differ")


def interpolate(g0: np.ndarray, g1: np.ndarray, t: float) -> np.ndarray:
    """g_t = (1 - t) g_0 + t g_1 on the signal channels."""
    if not 0.0 <= t <= 1.0:
        raise FlowError(f"t must lie in [0, 1], got {t}")
    _check_pair(g0, g1)
    out = g0.copy()
    out[..., :SIGNAL] = (1.0 - t) * g0[..., :SIGNAL] + t * g1[..., :SIGNAL]
    return out


def velocity(g1_hat: np.ndarray, g_t: np.ndarray, t: float) -> np.ndarray:
    """v_t = (g1_hat - g_t) / (1 - t) on the signal channels (Plücker velocity is zero)."""
    if not 0.0 <= t < 1.0:
        raise FlowError(f"velocity is undefined at t = {t}; t must lie in [0, 1)")
    v = np.zeros_like(g_t)
    v[..., :SIGNAL] = (g1_hat[..., :SIGNAL] - g_t[..., :SIGNAL]) / (1.0 - t)
    return v


def _as_state(pred: np.ndarray, like: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred)
    if pred.shape != like.shape and pred.shape != like.shape[:-1] + (SIGNAL,):
        raise FlowError(f"model returned shape {pred.shape}, expected {like.shape}")
    return make_state(pred[..., :SIGNAL].astype(like.dtype), like[..., SIGNAL:])


def euler_step(g: np.ndarray, g1_hat: np.ndarray, k: int, steps: int) -> np.ndarray:
    """One update g_{k+1} = g_k + (1/N) (g1_hat - g_k) / (1 - k/N).

    The step factor (1/N) / (1 - k/N) is evaluated as 1 / (N - k), which is
    exactly 1 on the last step, and the blend is written convexly so that
    the last step returns the prediction bit-for-bit.
    """
    c = 1.0 / (steps - k)
    out = g.copy()
    out[..., :SIGNAL] = (1.0 - c) * g[..., :SIGNAL] + c * g1_hat[..., :SIGNAL]
    return out


def sample_multistep(g0: np.ndarray, x_cond, steps: int, model: Model,
                     trajectory: list | None = None) -> np.ndarray:
    """Integrate the flow from t = 0 to t = 1 in ``steps`` Euler steps."""
    sched = FlowSchedule(steps)
    g = g0
    if trajectory is not None:
        trajectory.append(g.copy())
    for k in range(sched.steps):
        t_k = k / sched.steps
        g1_hat = _as_state(model(g, t_k, x_cond), g)
        g = euler_step(g, g1_hat, k, sched.steps)
        if trajectory is not None:
            trajectory.append(g.copy())
    return g


def sample_onestep(g0: np.ndarray, x_cond, model: Model) -> np.ndarray:
    """A single model evaluation at t = 0; the prediction is the final state."""
    return _as_state(model(g0, 0.0, x_cond), g0)


def make_training_pair(clean_signal: np.ndarray, plucker: np.ndarray, seed, mode: str = "one-step"):
    """(g_t, g_1, t) for one training example.

    ``mode`` is ``"one-step"`` (t = 0 always) or ``"multi-step"`` (t ~ U(0, 1)).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if mode == "one-step":
        t = 0.0
    elif mode == "multi-step":
        t = float(rng.uniform(0.0, 1.0))
    else:
        raise FlowError(f"unknown training mode {mode!r}; expected 'one-step' or 'multi-step'")
    dtype = clean_signal.dtype
    g1 = make_state(clean_signal, plucker.astype(dtype))
    g0 = noise_state(plucker, rng, dtype)
    return interpolate(g0, g1, t), g1, t
