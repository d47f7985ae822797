from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cgzsl import nn
from cgzsl.errors import ContractError, ShapeError

from conftest import gradient_error

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def matrices(max_rows=6, max_cols=6):
    return st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite)
    )


def triple_loop(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for q in range(k):
                acc += a[i, q] * b[q, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self, rng):
        m = rng.standard_normal((3, 4))
        assert np.array_equal(nn.matmul(np.eye(3), m).value, m)

    def test_scalar(self):
        assert nn.matmul([[2.0]], [[3.0]]).value.tolist() == [[6.0]]

    def test_against_loop_oracle(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        np.testing.assert_allclose(nn.matmul(a, b).value, triple_loop(a, b), rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            nn.matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestNormalize:
    def test_three_four(self):
        np.testing.assert_allclose(nn.l2_normalize_rows([[3.0, 4.0]]).value, [[0.6, 0.8]])

    def test_zero_row_passes_through(self):
        assert np.array_equal(nn.l2_normalize_rows(np.zeros((1, 3))).value, np.zeros((1, 3)))

    def test_unit_norms(self, rng):
        out = nn.l2_normalize_rows(rng.standard_normal((5, 7))).value
        assert np.all(np.abs(np.linalg.norm(out, axis=1) - 1.0) <= 1e-12)

    @given(matrices())
    def test_idempotent(self, m):
        once = nn.l2_normalize_rows(m).value
        twice = nn.l2_normalize_rows(once).value
        np.testing.assert_allclose(twice, once, rtol=0, atol=1e-12)


class TestCosine:
    def test_self_orthogonal_opposite(self):
        v = np.array([[1.0, 2.0, -0.5]])
        assert nn.cosine_matrix(v, v).item() == pytest.approx(1.0)
        assert nn.cosine_matrix([[1.0, 0.0]], [[0.0, 3.0]]).item() == 0.0
        assert nn.cosine_matrix(v, -v).item() == pytest.approx(-1.0)

    def test_zero_row_gives_zero(self):
        assert np.array_equal(nn.cosine_matrix(np.zeros((2, 3)), np.ones((4, 3))).value, np.zeros((2, 4)))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            nn.cosine_matrix(np.ones((2, 3)), np.ones((2, 4)))

    @given(matrices(5, 4), st.integers(1, 5), st.integers(0, 2**31))
    def test_bounded(self, x, c, seed):
        p = np.random.default_rng(seed).standard_normal((c, x.shape[1]))
        out = nn.cosine_matrix(x, p).value
        assert out.shape == (x.shape[0], c)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss = nn.softmax_cross_entropy(np.zeros((3, 4)), [0, 1, 3], 10.0)
        assert loss.item() == pytest.approx(math.log(4), abs=1e-12)

    def test_saturated(self):
        scores = np.zeros((1, 3))
        scores[0, 1] = 50.0
        assert nn.softmax_cross_entropy(scores, [1], 1.0).item() < 1e-9

    def test_bad_label(self):
        with pytest.raises(IndexError):
            nn.softmax_cross_entropy(np.zeros((2, 3)), [0, 3])

    def test_gradient(self, rng):
        scores = nn.parameter(rng.standard_normal((6, 5)))
        labels = rng.integers(0, 5, 6)
        err = gradient_error(lambda: nn.softmax_cross_entropy(scores, labels, 2.0), [scores])
        assert err <= 1e-6

    @given(arrays(np.float64, (3, 4), elements=st.floats(-1, 1)), st.floats(-5, 5))
    def test_row_shift_invariance(self, scores, shift):
        labels = [0, 1, 2]
        a = nn.softmax_cross_entropy(scores, labels, 10.0).item()
        b = nn.softmax_cross_entropy(scores + shift, labels, 10.0).item()
        assert a == pytest.approx(b, abs=1e-9)


class TestBackward:
    def test_sum(self, rng):
        w = nn.parameter(rng.standard_normal((3, 2)))
        (g,) = nn.backward(nn.total(w), [w])
        assert np.array_equal(g, np.ones((3, 2)))

    def test_square_norm(self, rng):
        w = nn.parameter(rng.standard_normal((3, 2)))
        (g,) = nn.backward(nn.total(nn.square(w)), [w])
        np.testing.assert_allclose(g, 2 * w.value)

    def test_non_scalar_loss(self, rng):
        w = nn.parameter(rng.standard_normal((3, 2)))
        with pytest.raises(ContractError):
            nn.backward(w * 2.0, [w])

    def test_unreached_parameter_gets_zero(self, rng):
        w, v = nn.parameter(np.ones(2)), nn.parameter(np.ones(3))
        grads = nn.backward(nn.total(w), [w, v])
        assert np.array_equal(grads[1], np.zeros(3))

    def test_composite_mlp(self, rng):
        net = nn.DenseNet.initialize([5, 7, 4], ["leaky-relu", "relu"], rng)
        proj = nn.DenseNet.initialize([3, 6, 4], ["leaky-relu", "linear"], rng)
        x, a = rng.standard_normal((8, 5)), rng.standard_normal((3, 3))
        labels = rng.integers(0, 3, 8)
        # shift the output bias so no relu unit sits at its kink
        net.layers[-1].bias.value += 0.5

        def loss():
            scores = nn.cosine_matrix(net(x), proj(a))
            return nn.softmax_cross_entropy(scores, labels, 10.0) + nn.mean(nn.square(net(x)))

        assert gradient_error(loss, net.parameters() + proj.parameters()) <= 1e-5

    @pytest.mark.parametrize("op", ["relu", "leaky", "log", "clip", "concat", "take", "sub", "transpose"])
    def test_elementwise_ops(self, op, rng):
        a = nn.parameter(rng.uniform(0.2, 2.0, (3, 4)) * rng.choice([-1, 1], (3, 4)))
        b = nn.parameter(rng.standard_normal((3, 2)))
        pos = nn.parameter(rng.uniform(0.5, 2.0, (3, 4)))
        fns = {
            "relu": lambda: nn.total(nn.square(nn.relu(a))),
            "leaky": lambda: nn.total(nn.square(nn.leaky_relu(a))),
            "log": lambda: nn.total(nn.log(pos)),
            "clip": lambda: nn.total(nn.square(nn.clip(a, -1.0, 1.0))),
            "concat": lambda: nn.total(nn.square(nn.concat_cols(a, b))),
            "take": lambda: nn.total(nn.square(nn.take_rows(a, [2, 0, 2]))),
            "sub": lambda: nn.total(nn.square(1.0 - a)),
            "transpose": lambda: nn.total(nn.matmul(nn.transpose(a), b)),
        }
        params = {"log": [pos], "concat": [a, b], "transpose": [a, b]}.get(op, [a])
        assert gradient_error(fns[op], params) <= 1e-6

    def test_normalize_and_cosine_gradients(self, rng):
        x = nn.parameter(rng.standard_normal((4, 5)))
        p = nn.parameter(rng.standard_normal((3, 5)))
        w = rng.standard_normal((4, 3))
        assert gradient_error(lambda: nn.total(nn.mul(nn.cosine_matrix(x, p), w)), [x, p]) <= 1e-6


class TestDenseNet:
    def test_shapes_and_init(self, rng):
        net = nn.DenseNet.initialize([6, 10, 3], ["leaky-relu", "relu"], rng)
        assert (net.input_dim, net.output_dim) == (6, 3)
        bound = math.sqrt(6 / 16)
        assert np.all(np.abs(net.layers[0].weight.value) <= bound)
        assert np.array_equal(net.layers[0].bias.value, np.zeros(10))
        assert net(np.ones((2, 6))).shape == (2, 3)

    def test_rejects_bad_chain(self):
        layers = [
            nn.Layer(nn.parameter(np.zeros((2, 3))), nn.parameter(np.zeros(3)), "relu"),
            nn.Layer(nn.parameter(np.zeros((4, 1))), nn.parameter(np.zeros(1)), "linear"),
        ]
        with pytest.raises(ShapeError):
            nn.DenseNet(layers)

    def test_rejects_activation(self):
        with pytest.raises(ContractError):
            nn.DenseNet([nn.Layer(nn.parameter(np.zeros((2, 3))), nn.parameter(np.zeros(3)), "tanh")])


class TestAdam:
    def test_zero_gradient_no_decay(self, rng):
        w = nn.parameter(rng.standard_normal(4))
        before = w.value.copy()
        nn.Adam([w], weight_decay=0.0).step([np.zeros(4)])
        assert np.array_equal(w.value, before)

    def test_first_step_magnitude(self):
        w = nn.parameter(np.zeros(3))
        opt = nn.Adam([w], lr=0.005, weight_decay=0.0)
        opt.step([np.array([2.0, -0.1, 5e-3])])
        np.testing.assert_allclose(w.value, -0.005 * np.sign([2.0, -0.1, 5e-3]), rtol=1e-5)
        assert opt.steps == 1

    def test_converges_on_quadratic(self, rng):
        target = rng.standard_normal(5)
        w = nn.parameter(np.zeros(5))
        opt = nn.Adam([w], lr=0.05, weight_decay=0.0)
        for _ in range(200):
            nn.zero_grad([w])
            nn.backward(nn.total(nn.square(w - target)), [w])
            opt.step()
        assert np.linalg.norm(w.value - target) < 1e-3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nn.Adam([nn.parameter(np.zeros(3))]).step([np.zeros(4)])

    def test_deterministic(self):
        def run():
            r = np.random.default_rng(5)
            net = nn.DenseNet.initialize([3, 4, 2], ["leaky-relu", "linear"], r)
            opt = nn.Adam(net.parameters())
            x = r.standard_normal((6, 3))
            for _ in range(10):
                opt.zero_grad()
                nn.backward(nn.mean(nn.square(net(x))), net.parameters())
                opt.step()
            return [p.value.copy() for p in net.parameters()]

        for a, b in zip(run(), run()):
            assert a.tobytes() == b.tobytes()
