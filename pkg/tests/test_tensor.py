import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from headsplat import tensor as T
from headsplat.tensor import GraphError, ShapeError, Tensor

from conftest import check_grads

NET_TOL = 1e-3


def _positive(shape, rng):
    return rng.uniform(0.5, 2.0, size=shape)


UNARY = {
    "exp": (T.exp, None),
    "log": (T.log, _positive),
    "sqrt": (T.sqrt, _positive),
    "square": (T.square, None),
    "abs": (T.abs_, None),
    "sigmoid": (T.sigmoid, None),
    "tanh": (T.tanh, None),
    "softplus": (T.softplus, None),
    "silu": (T.silu, None),
    "gelu": (T.gelu, None),
    "softmax": (lambda x: T.softmax(x, axis=-1), None),
    "layer_norm": (T.layer_norm, None),
    "normalize": (lambda x: T.normalize(x, axis=-1), None),
    "cumsum": (lambda x: T.cumsum(x, axis=0), None),
    "sum_axis": (lambda x: T.sum_(x, axis=1), None),
    "mean_keep": (lambda x: T.mean(x, axis=0, keepdims=True), None),
    "reshape": (lambda x: x.reshape(12), None),
    "transpose": (lambda x: T.transpose(x, (1, 0)), None),
    "index_basic": (lambda x: x[1:, ::2], None),
    "index_gather": (lambda x: x[np.array([0, 2, 0])], None),
}


class TestGradients:
    @pytest.mark.parametrize("name", sorted(UNARY))
    def test_unary_ops(self, name, float64, rng):
        fn, sampler = UNARY[name]
        x = sampler((3, 4), rng) if sampler else rng.normal(size=(3, 4))
        # keep abs away from its kink
        if name == "abs":
            x = np.where(np.abs(x) < 0.1, 0.5, x)
        (err,) = check_grads(fn, [x])
        assert err < NET_TOL

    @pytest.mark.parametrize("op", [T.add, T.sub, T.mul, T.div])
    def test_binary_broadcast(self, op, float64, rng):
        a = rng.normal(size=(2, 3, 4))
        b = rng.uniform(0.5, 1.5, size=(3, 1))
        errs = check_grads(op, [a, b])
        assert max(errs) < NET_TOL

    def test_maximum_away_from_ties(self, float64, rng):
        a = rng.normal(size=(4, 3))
        b = a + rng.choice([-0.5, 0.5], size=a.shape)
        assert max(check_grads(T.maximum, [a, b])) < NET_TOL

    def test_matmul_batched_and_shared(self, float64, rng):
        a = rng.normal(size=(2, 3, 4))
        assert max(check_grads(T.matmul, [a, rng.normal(size=(2, 4, 5))])) < NET_TOL
        assert max(check_grads(T.matmul, [a, rng.normal(size=(4, 5))])) < NET_TOL

    def test_concat_split_stack(self, float64, rng):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 5))
        assert max(check_grads(lambda x, y: T.concat([x, y], axis=1), [a, b])) < NET_TOL
        assert max(check_grads(lambda x, y: T.stack([x, y * 2.0], axis=1), [a, a + 1])) < NET_TOL
        (err,) = check_grads(lambda x: T.split(x, [1, 4], axis=1)[1] * 3.0, [b])
        assert err < NET_TOL

    def test_clip_interior_and_clamped(self, float64):
        x = np.array([-2.0, -0.3, 0.2, 0.9, 3.0])
        t = Tensor(x, requires_grad=True)
        T.sum_(T.clip(t, -1.0, 1.0)).backward()
        np.testing.assert_array_equal(t.grad, [0, 1, 1, 1, 0])

    def test_linear_composite(self, float64, rng):
        x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2,))
        assert max(check_grads(T.linear, [x, w, b])) < NET_TOL


class TestForwardExamples:
    def test_identity_matmul(self, rng):
        a = rng.normal(size=(3, 5))
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(a)).data, a)

    def test_softmax_constant_row(self):
        np.testing.assert_allclose(T.softmax(Tensor(np.full((1, 4), 2.5))).data, [[0.25] * 4])

    def test_layer_norm_moments(self, rng):
        out = T.layer_norm(Tensor(rng.normal(3.0, 2.0, size=(2, 64)))).data
        np.testing.assert_allclose(out.mean(-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(-1), 1.0, atol=1e-5)

    def test_square_and_mean_gradients(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        T.sum_(T.square(x)).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])
        y = Tensor(np.ones(4), requires_grad=True)
        T.mean(y).backward()
        np.testing.assert_array_equal(y.grad, [0.25] * 4)

    def test_seeded_forward_backward_is_deterministic(self):
        def run():
            r = np.random.default_rng(5)
            w = Tensor(r.normal(size=(4, 3)), requires_grad=True)
            x = Tensor(r.normal(size=(6, 4)))
            T.mean(T.gelu(T.matmul(x, w))).backward()
            return w.grad

        assert np.array_equal(run(), run())


class TestGraph:
    def test_reused_node_accumulates(self, float64):
        x = Tensor([2.0], requires_grad=True)
        y = x * x + x * 3.0
        T.sum_(y).backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_grad_accumulates_across_backward_calls(self, float64):
        x = Tensor([1.0, 2.0], requires_grad=True)
        T.sum_(x * 2.0).backward()
        T.sum_(x * 2.0).backward()
        np.testing.assert_array_equal(x.grad, [4.0, 4.0])

    def test_backward_on_detached_raises(self):
        with pytest.raises(GraphError, match="not attached"):
            Tensor([1.0]).backward()

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GraphError, match="scalar"):
            (x * 2.0).backward()

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with T.no_grad():
            y = x * 2.0
        assert not y.requires_grad
        assert (x * 2.0).requires_grad

    def test_shape_errors_name_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
        with pytest.raises(ShapeError):
            Tensor(np.ones(6)).reshape(4)
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_dtype_preserved(self):
        x = Tensor(np.ones(3, dtype=np.float32))
        assert (T.exp(x) * 2.0).dtype == np.float32
        assert Tensor(np.ones(3)).dtype == np.float64


@st.composite
def broadcast_pair(draw):
    shape = draw(hnp.array_shapes(min_dims=1, max_dims=3, max_side=4))
    other = tuple(1 if draw(st.booleans()) else n for n in shape)
    drop = draw(st.integers(0, len(other) - 1))
    return shape, other[drop:]


class TestBroadcastProperties:
    @settings(max_examples=40, deadline=None)
    @given(broadcast_pair(), st.integers(0, 2 ** 16))
    def test_unbroadcast_shapes_match_operands(self, shapes, seed):
        sa, sb = shapes
        r = np.random.default_rng(seed)
        a = Tensor(r.normal(size=sa), requires_grad=True)
        b = Tensor(r.normal(size=sb), requires_grad=True)
        T.sum_(a * b + b).backward()
        assert a.grad.shape == sa and b.grad.shape == sb
        # the reduced gradient keeps the total of the broadcast contributions
        full = np.broadcast_to(a.data, np.broadcast_shapes(sa, sb)) + 1.0
        assert np.isclose(b.grad.sum(), full.sum())

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=2, min_side=2, max_side=5),
                      elements=st.floats(-30, 30)))
    def test_softmax_rows_sum_to_one(self, x):
        out = T.softmax(Tensor(x), axis=-1).data
        assert np.allclose(out.sum(-1), 1.0)
        assert np.all(out >= 0)

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.float64, (3, 6), elements=st.floats(-100, 100)))
    def test_sigmoid_in_unit_interval(self, x):
        out = T.sigmoid(Tensor(x)).data
        assert np.all((out >= 0) & (out <= 1))
