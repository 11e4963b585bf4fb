import numpy as np
import pytest

from latentgoals import MetricUndefinedError, nrmse_fit, pc1_axis_nrmse
from latentgoals.errors import DomainError


class TestNrmseFit:
    def test_identity_is_zero(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((100, 2))
        assert nrmse_fit(x, x) <= 1e-10

    def test_independent_noise_is_about_one(self):
        rng = np.random.default_rng(1)
        internal = rng.standard_normal((20000, 2))
        actual = rng.standard_normal((20000, 2))
        assert nrmse_fit(internal, actual) == pytest.approx(1.0, abs=0.1)

    def test_affine_transform_absorbed(self):
        rng = np.random.default_rng(2)
        actual = rng.standard_normal((200, 2))
        theta = 0.83
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        internal = actual @ rot.T * 3.7 + np.array([5.0, -2.0])
        assert nrmse_fit(internal, actual) <= 1e-8

    def test_degenerate_target_variance(self):
        rng = np.random.default_rng(3)
        internal = rng.standard_normal((50, 2))
        with pytest.raises(MetricUndefinedError):
            nrmse_fit(internal, np.full((50, 1), 3.0))

    def test_needs_enough_samples(self):
        with pytest.raises(DomainError):
            nrmse_fit(np.zeros((3, 2)), np.zeros((3, 1)))


class TestPc1AxisNrmse:
    def test_identity_scalar(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(300)
        assert pc1_axis_nrmse(x.reshape(-1, 1), x) <= 1e-10

    def test_noise_is_about_one(self):
        rng = np.random.default_rng(5)
        internal = rng.standard_normal((20000, 3))
        actual = rng.standard_normal(20000)
        assert pc1_axis_nrmse(internal, actual) == pytest.approx(1.0, abs=0.1)

    def test_scaled_copy_on_dominant_axis(self):
        rng = np.random.default_rng(6)
        t = rng.standard_normal(400)
        internal = np.column_stack([5.0 * t, 0.01 * rng.standard_normal(400)])
        assert pc1_axis_nrmse(internal, -2.0 * t + 1.0) <= 1e-3

    def test_uninformative_pc1_stays_high(self):
        # the dominant internal axis carries noise; the informative axis is
        # minor, so prediction from pc1 alone must fail
        rng = np.random.default_rng(7)
        t = rng.standard_normal(2000)
        internal = np.column_stack([10.0 * rng.standard_normal(2000), 0.1 * t])
        assert pc1_axis_nrmse(internal, t) >= 0.8
