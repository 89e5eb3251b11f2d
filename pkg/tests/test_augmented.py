import numpy as np
import pytest

from apacnet import networks, ops
from apacnet.augmented import (AugState, RELU_ACT, TANH_ACT, aug_mul, aug_sum_units,
                               augmented_activation, augmented_affine, input_state)
from apacnet.ops import value_of
from apacnet.tape import Tape

from conftest import rel_err


def make_state(val, jac, lap, d):
    return AugState(np.atleast_2d(np.asarray(val, float)),
                    np.asarray(jac, float), np.atleast_2d(np.asarray(lap, float)), d)


class TestAugmentedAffine:
    def test_identity_passthrough(self):
        rng = np.random.default_rng(0)
        st = make_state(rng.normal(size=(3, 4)), rng.normal(size=(3, 3, 4)),
                        rng.normal(size=(3, 4)), 2)
        out = augmented_affine(np.eye(4), np.zeros(4), st)
        np.testing.assert_array_equal(value_of(out.val), st.val)
        np.testing.assert_allclose(value_of(out.jac), st.jac, rtol=1e-15)
        np.testing.assert_allclose(value_of(out.lap), st.lap, rtol=1e-15)

    def test_one_dimensional_chain_rule(self):
        # W = [[2]], b = [3], input (value 1, jac [1, 0], lap 0)
        st = make_state([[1.0]], [[[1.0]], [[0.0]]], [[0.0]], 1)
        out = augmented_affine(np.array([[2.0]]), np.array([3.0]), st)
        assert value_of(out.val)[0, 0] == 5.0
        np.testing.assert_array_equal(value_of(out.jac).ravel(), [2.0, 0.0])
        assert value_of(out.lap)[0, 0] == 0.0

    def test_zero_derivatives_stay_zero(self):
        rng = np.random.default_rng(1)
        st = make_state(rng.normal(size=(2, 5)), np.zeros((4, 2, 5)), np.zeros((2, 5)), 3)
        out = augmented_affine(rng.normal(size=(7, 5)), rng.normal(size=7), st)
        assert np.all(value_of(out.jac) == 0.0)
        assert np.all(value_of(out.lap) == 0.0)

    def test_dimension_mismatch_raises(self):
        st = make_state(np.ones((2, 3)), np.zeros((2, 2, 3)), np.zeros((2, 3)), 1)
        with pytest.raises(ValueError, match="width"):
            augmented_affine(np.ones((4, 5)), np.zeros(4), st)

    def test_skip_arity_mismatch_raises(self):
        st = make_state(np.ones((2, 3)), np.zeros((2, 2, 3)), np.zeros((2, 3)), 1)
        skip = make_state(np.ones((2, 5)), np.zeros((2, 2, 5)), np.zeros((2, 5)), 1)
        with pytest.raises(ValueError, match="skip"):
            augmented_affine(np.ones((4, 3)), np.zeros(4), st, 0.5, skip)

    def test_skip_contribution(self):
        rng = np.random.default_rng(2)
        st = make_state(rng.normal(size=(2, 3)), rng.normal(size=(2, 2, 3)),
                        rng.normal(size=(2, 3)), 1)
        skip = make_state(rng.normal(size=(2, 4)), rng.normal(size=(2, 2, 4)),
                          rng.normal(size=(2, 4)), 1)
        W, b = rng.normal(size=(4, 3)), rng.normal(size=4)
        out = augmented_affine(W, b, st, 0.5, skip)
        base = augmented_affine(W, b, st)
        np.testing.assert_allclose(value_of(out.val),
                                   value_of(base.val) + 0.5 * skip.val, rtol=1e-14)
        np.testing.assert_allclose(value_of(out.jac),
                                   value_of(base.jac) + 0.5 * skip.jac, rtol=1e-14)
        np.testing.assert_allclose(value_of(out.lap),
                                   value_of(base.lap) + 0.5 * skip.lap, rtol=1e-14)


class TestAugmentedActivation:
    def test_tanh_at_origin(self):
        st = make_state([[0.0]], [[[1.0]], [[0.0]]], [[0.0]], 1)
        out = augmented_activation(TANH_ACT, st)
        assert value_of(out.val)[0, 0] == 0.0
        np.testing.assert_array_equal(value_of(out.jac).ravel(), [1.0, 0.0])
        assert value_of(out.lap)[0, 0] == 0.0

    def test_relu_inactive_unit(self):
        st = make_state([[-1.0]], [[[0.7]], [[0.3]]], [[0.4]], 1)
        out = augmented_activation(RELU_ACT, st)
        assert value_of(out.val)[0, 0] == 0.0
        assert np.all(value_of(out.jac) == 0.0)
        assert value_of(out.lap)[0, 0] == 0.0

    def test_tanh_at_one(self):
        # value and jac as evaluated from sigma, sigma'; the lap output follows
        # the pushforward rule lap' = sigma''(v) * jac_spatial^2 + sigma'(v) * lap,
        # which for a unit spatial jac equals sigma''(1).
        st = make_state([[1.0]], [[[1.0]], [[0.0]]], [[0.0]], 1)
        out = augmented_activation(TANH_ACT, st)
        th = np.tanh(1.0)
        assert value_of(out.val)[0, 0] == pytest.approx(0.761594, abs=1e-6)
        assert value_of(out.jac)[0, 0, 0] == pytest.approx(0.419974, abs=1e-6)
        assert value_of(out.lap)[0, 0] == pytest.approx(-2 * th * (1 - th * th), rel=1e-12)

    def test_lap_matches_finite_differences_of_composition(self):
        # scalar map u -> tanh(w(u)) with grad w = 1, lap w = 0: lap = sigma''(u)
        def lap_out(v):
            st = make_state([[v]], [[[1.0]], [[0.0]]], [[0.0]], 1)
            return value_of(augmented_activation(TANH_ACT, st).lap)[0, 0]

        h = 1e-4
        # independent oracle: second difference of tanh itself
        fd = (np.tanh(1 + h) - 2 * np.tanh(1) + np.tanh(1 - h)) / h ** 2
        assert rel_err(lap_out(1.0), fd) < 1e-6

    def test_backward_of_lap_wrt_preactivation_matches_fd(self):
        # gradient of the lap output w.r.t. v uses sigma'''(v)
        def lap_of(v):
            st = make_state([[v]], [[[1.0]], [[0.0]]], [[0.0]], 1)
            return value_of(augmented_activation(TANH_ACT, st).lap)[0, 0]

        tape = Tape()
        vn = tape.leaf(np.array([[1.0]]))
        st = AugState(vn, np.array([[[1.0]], [[0.0]]]), np.zeros((1, 1)), 1)
        out = augmented_activation(TANH_ACT, st)
        tape.backward(ops.mean_all(out.lap))
        h = 1e-4
        fd = (lap_of(1 + h) - lap_of(1 - h)) / (2 * h)
        assert rel_err(vn.grad[0, 0], fd) < 1e-6


class TestActivationKinds:
    def test_tanh_derivative_identities(self):
        v = np.linspace(-2, 2, 11)
        s = TANH_ACT.deriv(v, 0)
        d1 = TANH_ACT.deriv(v, 1)
        d2 = TANH_ACT.deriv(v, 2)
        d3 = TANH_ACT.deriv(v, 3)
        np.testing.assert_allclose(d1, 1 - s * s, rtol=1e-15)
        np.testing.assert_allclose(d2, -2 * s * d1, rtol=1e-15)
        np.testing.assert_allclose(d3, -2 * (d1 * d1 + s * d2), rtol=1e-15)

    def test_relu_higher_orders_vanish_and_kink_is_zero(self):
        v = np.array([-1.0, 0.0, 2.0])
        np.testing.assert_array_equal(RELU_ACT.deriv(v, 1), [0.0, 0.0, 1.0])
        assert np.all(RELU_ACT.deriv(v, 2) == 0.0)
        assert np.all(RELU_ACT.deriv(v, 3) == 0.0)

    def test_order_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            TANH_ACT.deriv(np.zeros(1), 4)


class TestAugmentedInvariants:
    def test_affine_only_network_has_zero_lap(self):
        rng = np.random.default_rng(3)
        st = input_state(rng.normal(size=(6, 3)), rng.uniform(size=(6, 1)), 3)
        for shape in [(8, 4), (8, 8), (1, 8)]:
            W = rng.normal(size=shape)
            st = augmented_affine(W, rng.normal(size=shape[0]), st)
        assert np.all(value_of(st.lap) == 0.0)

    def test_quadratic_field_lap_is_2d(self):
        rng = np.random.default_rng(4)
        for d in (1, 2, 5):
            x = rng.normal(size=(4, d))
            st = input_state(x, rng.uniform(size=(4, 1)), d)
            spatial = AugState(x, st.jac[:, :, :d], np.zeros((4, d)), d)
            phi = aug_sum_units(aug_mul(spatial, spatial))
            np.testing.assert_allclose(value_of(phi.val), (x ** 2).sum(axis=1), rtol=1e-14)
            np.testing.assert_array_equal(value_of(phi.lap), np.full(4, 2.0 * d))

    def test_random_net_forward_matches_finite_differences(self):
        # every jac component and the lap match central differences (step 1e-4)
        rng = np.random.default_rng(5)
        for d in (2, 4):
            cfg = networks.value_net_config(d, width=24)
            params = networks.init_params(cfg, 100 + d, networks.ROLE_VALUE)
            x = rng.normal(size=(3, d))
            t = rng.uniform(0.2, 0.8, size=3)

            def net(x_, t_):
                st = input_state(x_, t_.reshape(-1, 1), d)
                out = networks.resnet_aug(params.layers, st, TANH_ACT, cfg.skip_weight)
                return (value_of(out.val)[:, 0], value_of(out.jac)[:, :, 0],
                        value_of(out.lap)[:, 0])

            val, jac, lap = net(x, t)
            h = 1e-4
            fd_t = (net(x, t + h)[0] - net(x, t - h)[0]) / (2 * h)
            assert rel_err(jac[d], fd_t) < 1e-5
            fd_lap = np.zeros_like(lap)
            for j in range(d):
                e = np.zeros((1, d))
                e[0, j] = h
                vp, vm = net(x + e, t)[0], net(x - e, t)[0]
                assert rel_err(jac[j], (vp - vm) / (2 * h)) < 1e-5
                fd_lap += (vp - 2 * val + vm) / h ** 2
            assert rel_err(lap, fd_lap) < 1e-5

    def test_input_leaf_state_is_one_hot_with_zero_lap(self):
        st = input_state(np.zeros((2, 3)), np.ones((2, 1)), 3)
        np.testing.assert_array_equal(
            st.jac, np.broadcast_to(np.eye(4)[:, None, :], (4, 2, 4)))
        assert np.all(st.lap == 0.0)
