import math

import numpy as np
import pytest

from conftest import numeric_grad, rel_error
from pupolicy.errors import CacheMismatchError, ConfigError, NonFiniteError
from pupolicy.nn import MLP, PROB_EPS, Adam, sigmoid


def single_layer(w, b=0.0):
    m = MLP([len(w), 1], zero=True)
    m.weights[0][:, 0] = w
    m.biases[0][:] = b
    return m


class TestForward:
    def test_zero_model_outputs_half(self):
        m = MLP([3, 5, 4, 1], zero=True)
        x = np.random.default_rng(0).normal(size=(7, 3))
        np.testing.assert_array_equal(m.predict(x), 0.5)

    def test_two_inputs_at_origin(self):
        assert single_layer([1.0, 1.0]).predict([[0.0, 0.0]])[0] == 0.5

    def test_scalar_sigmoid(self):
        # 1 / (1 + e^-2)
        assert single_layer([2.0]).predict([[1.0]])[0] == pytest.approx(0.8807970779778823, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigError):
            MLP([3, 1]).forward(np.zeros((2, 4)))

    def test_output_clipped(self):
        m = single_layer([100.0])
        p = m.predict([[10.0], [-10.0]])
        assert p[0] == 1 - PROB_EPS
        assert p[1] == PROB_EPS

    def test_deterministic(self):
        m = MLP([5, 8, 1], rng=np.random.default_rng(1))
        x = np.random.default_rng(2).normal(size=(9, 5))
        assert m.predict(x).tobytes() == m.predict(x).tobytes()

    def test_sigmoid_extremes_finite(self):
        s = sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert np.all(np.isfinite(s))
        assert s[1] == 0.5

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            MLP([3, 2])


class TestBackward:
    def test_zero_output_gradient(self):
        m = MLP([4, 6, 1], rng=np.random.default_rng(0))
        _, cache = m.forward(np.ones((3, 4)))
        for g in m.backward(cache, np.zeros(3)):
            assert not g.any()

    def test_single_unit_squared_error(self):
        # gradient of (p - t)^2 w.r.t. the pre-sigmoid weights is 2 (p - t) p (1 - p) x
        m = single_layer([0.3, -0.2], 0.1)
        x = np.array([[0.5, 2.0]])
        t = 1.0
        p, cache = m.forward(x)
        gw, gb = m.backward(cache, 2 * (p - t))
        expected = 2 * (p[0] - t) * p[0] * (1 - p[0]) * x[0]
        np.testing.assert_allclose(gw[:, 0], expected, rtol=1e-12)
        assert gb[0] == pytest.approx(2 * (p[0] - t) * p[0] * (1 - p[0]), rel=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        m = MLP([5, 7, 6, 1], rng=rng)
        x = rng.normal(size=(4, 5))
        t = rng.random(4)

        def loss():
            p = m.predict(x)
            return float(np.sum(-(t * np.log(p) + (1 - t) * np.log(1 - p))))

        p, cache = m.forward(x)
        analytic = m.backward(cache, -(t / p) + (1 - t) / (1 - p))
        assert rel_error(analytic, numeric_grad(loss, m.params)) < 1e-4

    def test_stale_cache_rejected(self):
        m = MLP([2, 1])
        _, cache = m.forward(np.ones((1, 2)))
        Adam().step(m, [np.ones_like(p) for p in m.params])
        with pytest.raises(CacheMismatchError):
            m.backward(cache, np.ones(1))

    def test_foreign_cache_rejected(self):
        a, b = MLP([2, 1]), MLP([2, 1])
        _, cache = a.forward(np.ones((1, 2)))
        with pytest.raises(CacheMismatchError):
            b.backward(cache, np.ones(1))


class TestAdam:
    def test_zero_gradient_no_change(self):
        m = MLP([3, 4, 1], rng=np.random.default_rng(0))
        before = m.copy()
        Adam(lr=0.1).step(m, [np.zeros_like(p) for p in m.params])
        assert m.same_params(before)

    def test_first_step_moves_by_lr(self):
        # m_hat = v_hat = 1 on step one, so the step is lr / (1 + eps)
        m = MLP([3, 4, 1], rng=np.random.default_rng(0))
        before = [p.copy() for p in m.params]
        lr = 0.01
        Adam(lr=lr).step(m, [np.ones_like(p) for p in m.params])
        for old, new in zip(before, m.params):
            np.testing.assert_allclose(old - new, lr / (1 + 1e-8), rtol=1e-12)

    def test_zero_lr_updates_moments_only(self):
        m = MLP([2, 1], rng=np.random.default_rng(0))
        before = m.copy()
        opt = Adam(lr=0.0)
        opt.step(m, [np.full_like(p, 2.0) for p in m.params])
        assert m.same_params(before)
        assert opt.step_count == 1
        np.testing.assert_allclose(opt.m[0], 0.2)
        np.testing.assert_allclose(opt.v[0], 0.004)

    def test_decoupled_decay(self):
        m = MLP([2, 1], rng=np.random.default_rng(0))
        before = [p.copy() for p in m.params]
        Adam(lr=0.1, weight_decay=2.0).step(m, [np.zeros_like(p) for p in m.params])
        for old, new in zip(before, m.params):
            np.testing.assert_allclose(new, old * (1 - 0.2))

    def test_non_finite_aborts(self):
        m = MLP([2, 1])
        grads = [np.zeros_like(p) for p in m.params]
        grads[0][0, 0] = math.nan
        with pytest.raises(NonFiniteError):
            Adam().step(m, grads)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = MLP([6, 5, 3, 1], rng=np.random.default_rng(4))
        path = tmp_path / "model.pupn"
        m.save(path)
        raw = path.read_bytes()
        assert raw[:4] == b"PUPN"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 3
        loaded = MLP.load(path)
        assert loaded.layer_dims == m.layer_dims
        assert loaded.same_params(m)

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            MLP.from_bytes(b"NOPE" + bytes(8))
