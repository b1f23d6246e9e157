import numpy as np
import pytest

from headsplat import tensor as T

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def float64():
    """Run a test with float64 as the default tensor precision."""
    prev = T.get_default_dtype()
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def numeric_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar ``f(x)`` with respect to every element of ``x``."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f(x)
        flat[i] = old - eps
        lo = f(x)
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(num / den)


def check_grads(fn, inputs: list[np.ndarray], seed: int = 0, eps: float = 1e-6) -> list[float]:
    """Relative error of autodiff vs central differences for ``sum(w * fn(*inputs))``.

    ``fn`` maps float64 Tensors to a Tensor; ``w`` is a fixed random weighting
    so every output element contributes.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    tensors = [T.Tensor(x, requires_grad=True) for x in inputs]
    out = fn(*tensors)
    w = np.random.default_rng(seed).normal(size=out.shape)
    T.sum_(out * w).backward()
    errs = []
    for k, x in enumerate(inputs):
        def scalar(v, k=k):
            args = [T.Tensor(v if j == k else inputs[j]) for j in range(len(inputs))]
            return float(np.sum(fn(*args).data * w))
        num = numeric_grad(scalar, x.copy(), eps)
        ana = tensors[k].grad if tensors[k].grad is not None else np.zeros_like(x)
        errs.append(rel_err(ana, num))
    return errs


def check_param_grads(loss_fn, store, per_param: int = 3, seed: int = 0, eps: float = 1e-6) -> float:
    """Relative error of parameter gradients on a random subset of elements.

    ``loss_fn()`` builds a scalar Tensor from ``store``. A few elements of
    every parameter are perturbed; the analytic and numeric entries are
    compared as one vector.
    """
    store.zero_grad()
    loss_fn().backward()
    r = np.random.default_rng(seed)
    ana, num = [], []
    for name in store:
        p = store[name]
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1) if p.grad is not None else np.zeros_like(flat)
        for i in r.choice(flat.size, size=min(per_param, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            hi = loss_fn().item()
            flat[i] = old - eps
            lo = loss_fn().item()
            flat[i] = old
            ana.append(grad[i])
            num.append((hi - lo) / (2 * eps))
    return rel_err(np.array(ana), np.array(num))
