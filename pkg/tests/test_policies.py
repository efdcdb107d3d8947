"""Policy parameterizations: tabular softmax and feature-linear Gaussian."""

import numpy as np
import pytest

from safedr.policies import (LinearGaussianPolicy, SoftmaxTabularPolicy,
                             cartpole_features, pointgoal_features)


def identity_features(states):
    return np.asarray(states, dtype=float)


class TestSoftmaxTabular:
    def test_default_is_uniform(self):
        pol = SoftmaxTabularPolicy(3, 4)
        assert np.allclose(pol.probs(), 0.25)

    def test_rows_normalize(self, rng):
        pol = SoftmaxTabularPolicy(5, 3, rng.normal(size=(5, 3)))
        p = pol.probs()
        assert np.allclose(p.sum(axis=1), 1.0)
        assert np.all(p > 0.0)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="S, A"):
            SoftmaxTabularPolicy(2, 2, np.zeros((3, 2)))

    def test_to_tabular_matches_probs(self, rng):
        pol = SoftmaxTabularPolicy(4, 2, rng.normal(size=(4, 2)))
        assert np.array_equal(pol.to_tabular().probs, pol.probs())

    def test_deterministic_action_ties_to_lowest(self):
        pol = SoftmaxTabularPolicy(2, 3, [[0.0, 0.0, 0.0], [1.0, 3.0, 3.0]])
        assert pol.deterministic_action(0) == 0
        assert pol.deterministic_action(1) == 1

    def test_sample_seeded(self):
        pol = SoftmaxTabularPolicy(1, 4, [[0.3, 0.1, 0.0, 0.2]])
        a = [pol.sample(0, np.random.default_rng(7)) for _ in range(5)]
        b = [pol.sample(0, np.random.default_rng(7)) for _ in range(5)]
        assert a == b

    def test_sample_tracks_distribution(self, rng):
        pol = SoftmaxTabularPolicy(1, 2, [[10.0, 0.0]])
        draws = [pol.sample(0, rng) for _ in range(200)]
        assert np.mean(draws) < 0.01  # action 1 has ~5e-5 mass

    def test_copy_is_independent(self):
        pol = SoftmaxTabularPolicy(2, 2)
        clone = pol.copy()
        clone.logits[0, 0] = 9.0
        assert pol.logits[0, 0] == 0.0


class TestLinearGaussian:
    def test_std_validation(self):
        with pytest.raises(ValueError, match="std"):
            LinearGaussianPolicy(identity_features, 2, 1, std=0.0)

    def test_weights_shape_validation(self):
        with pytest.raises(ValueError, match="action_dim, feature_dim"):
            LinearGaussianPolicy(identity_features, 2, 1, weights=np.zeros((2, 2)))

    def test_mean_action_hand_check(self):
        w = np.array([[1.0, 2.0], [0.0, -1.0]])
        pol = LinearGaussianPolicy(identity_features, 2, 2, weights=w)
        out = pol.mean_action(np.array([3.0, 4.0]))
        assert np.allclose(out, [11.0, -4.0])

    def test_sample_returns_raw_and_features(self):
        pol = LinearGaussianPolicy(identity_features, 2, 2, std=0.5)
        states = np.zeros((4, 2))
        raw, phi = pol.sample(states, np.random.default_rng(0))
        assert raw.shape == (4, 2) and phi.shape == (4, 2)
        again, _ = pol.sample(states, np.random.default_rng(0))
        assert np.array_equal(raw, again)

    def test_sample_statistics(self, rng):
        pol = LinearGaussianPolicy(identity_features, 1, 1, std=0.3,
                                   weights=np.array([[2.0]]))
        raw, _ = pol.sample(np.full((4000, 1), 1.5), rng)
        assert abs(raw.mean() - 3.0) < 0.02
        assert abs(raw.std() - 0.3) < 0.01

    def test_grad_log_prob_matches_finite_difference(self, rng):
        pol = LinearGaussianPolicy(identity_features, 3, 2, std=0.4,
                                   weights=rng.normal(size=(2, 3)))
        phi = rng.normal(size=3)
        raw = rng.normal(size=2)

        def log_prob(w):
            mean = phi @ w.T
            return -np.sum((raw - mean) ** 2) / (2 * 0.4 ** 2)

        grad = pol.grad_log_prob(phi, raw)
        assert grad.shape == (2, 3)
        h = 1e-6
        for i in range(2):
            for j in range(3):
                wp, wm = pol.weights.copy(), pol.weights.copy()
                wp[i, j] += h
                wm[i, j] -= h
                fd = (log_prob(wp) - log_prob(wm)) / (2 * h)
                assert abs(grad[i, j] - fd) < 1e-5

    def test_copy_is_independent(self):
        pol = LinearGaussianPolicy(identity_features, 2, 1)
        clone = pol.copy()
        clone.weights[0, 0] = 5.0
        assert pol.weights[0, 0] == 0.0


class TestFeatureMaps:
    def test_pointgoal_dim_and_shapes(self):
        fn, dim = pointgoal_features()
        assert dim == 22
        single = fn(np.zeros(6))
        assert single.shape == (22,)
        batch = fn(np.zeros((7, 6)))
        assert batch.shape == (7, 22)

    def test_pointgoal_structure(self):
        fn, _ = pointgoal_features(arena=(1.5, 1.0))
        state = np.array([1.5, -1.0, 0.3, 0.4, 0.5, 0.6])
        out = fn(state)
        assert out[0] == 1.0  # bias
        assert np.allclose(out[1:3], [1.0, -1.0])  # position scaled by arena
        assert np.allclose(out[3:7], [0.3, 0.4, 0.5, 0.6])
        assert np.all(out[7:] > 0.0) and np.all(out[7:] <= 1.0)  # RBF activations

    def test_pointgoal_rbf_peaks_at_center(self):
        fn, _ = pointgoal_features(arena=(1.5, 1.0), grid=(5, 3))
        # (-1.5, -1.0) is the first grid center
        out = fn(np.array([-1.5, -1.0, 0.0, 0.0, 0.0, 0.0]))
        assert out[7] == 1.0
        assert np.all(out[8:] < 1.0)

    def test_cartpole_dim_and_values(self):
        fn, dim = cartpole_features()
        assert dim == 8
        out = fn(np.zeros(4))
        assert np.allclose(out, [1, 0, 0, 0, 1, 0, 0, 0])
        batch = fn(np.zeros((3, 4)))
        assert batch.shape == (3, 8)

    def test_cartpole_angle_embedding(self):
        fn, _ = cartpole_features()
        out = fn(np.array([0.0, 0.0, np.pi / 2, 3.0]))
        assert abs(out[3] - 1.0) < 1e-12   # sin theta
        assert abs(out[4]) < 1e-12         # cos theta
        assert abs(out[5] - 1.0) < 1e-12   # thetadot / 3
