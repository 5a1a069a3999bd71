"""Tests for flow-matching paths, losses and the Euler sampler."""

import numpy as np
import pytest

from semvoc.exceptions import ContractViolation, SamplingError
from semvoc.grad.tensor import DiffArray, backward
from semvoc.models.configs import SamplerConfig
from semvoc.services.flowmatch import (
    euler_sample,
    fm_data_loss,
    fm_velocity_loss,
    guided_prediction,
    make_path_sample,
    split_rng,
)


@pytest.mark.unit
class TestPathSample:

    def test_interpolant(self, rng):
        x1 = rng.standard_normal((3, 10))
        s = make_path_sample(x1, rng, t=np.array([0.0, 0.5, 1.0]))
        np.testing.assert_allclose(s.x_t[0], s.x0[0])
        np.testing.assert_allclose(s.x_t[1], 0.5 * (s.x0[1] + x1[1]))
        np.testing.assert_allclose(s.x_t[2], x1[2])
        np.testing.assert_allclose(s.v_star, x1 - s.x0)

    def test_random_time_per_row(self, rng):
        s = make_path_sample(np.zeros((5, 4)), rng)
        assert s.t.shape == (5,)
        assert np.all((s.t >= 0) & (s.t <= 1))

    def test_sigma_scales_noise(self):
        s = make_path_sample(np.zeros((1, 20000)), np.random.default_rng(1), t=0.0, sigma=0.5)
        assert s.x0.std() == pytest.approx(0.5, rel=0.05)

    def test_time_out_of_range(self, rng):
        with pytest.raises(ContractViolation):
            make_path_sample(np.zeros((2, 3)), rng, t=1.5)

    def test_keeps_float32(self, rng):
        s = make_path_sample(np.zeros((2, 3), dtype=np.float32), rng, t=0.3)
        assert s.x_t.dtype == np.float32


@pytest.mark.unit
class TestLosses:

    def test_velocity_loss_zero_at_target(self, rng):
        s = make_path_sample(rng.standard_normal((2, 6)), rng)
        assert float(fm_velocity_loss(DiffArray(s.v_star), s).values) == pytest.approx(0.0)

    def test_velocity_loss_shape_check(self, rng):
        s = make_path_sample(np.zeros((2, 6)), rng)
        with pytest.raises(ContractViolation):
            fm_velocity_loss(DiffArray(np.zeros((6, 2))), s)

    def test_data_loss_uniform_weights_is_mse(self, rng):
        x1 = rng.standard_normal((2, 10))
        pred = rng.standard_normal((2, 10))
        loss = fm_data_loss(DiffArray(pred), x1, np.ones((2, 5)), 2)
        assert float(loss.values) == pytest.approx(np.mean((pred - x1) ** 2))

    def test_data_loss_weights_frames(self):
        x1 = np.zeros((1, 4))
        pred = np.array([[1.0, 1.0, 0.0, 0.0]])
        heavy_first = fm_data_loss(DiffArray(pred), x1, np.array([[3.0, 1.0]]), 2)
        heavy_second = fm_data_loss(DiffArray(pred), x1, np.array([[1.0, 3.0]]), 2)
        assert float(heavy_first.values) == pytest.approx(1.5)
        assert float(heavy_second.values) == pytest.approx(0.5)

    def test_data_loss_weight_count(self):
        with pytest.raises(ContractViolation, match="frame weights"):
            fm_data_loss(DiffArray(np.zeros((1, 5))), np.zeros((1, 5)), np.ones((1, 2)), 2)

    def test_data_loss_is_differentiable(self, rng):
        pred = DiffArray(rng.standard_normal((1, 6)), requires_grad=True)
        x1 = rng.standard_normal((1, 6))
        backward(fm_data_loss(pred, x1, np.ones((1, 3)), 2))
        np.testing.assert_allclose(pred.grad, 2 * (pred.values - x1) / 6)


class _CountingModel:
    """Returns a fixed prediction, counting calls per conditioning."""

    def __init__(self, value, uncond_value=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.uncond_value = self.value if uncond_value is None else np.asarray(uncond_value, dtype=np.float64)
        self.calls = {'cond': 0, 'uncond': 0}

    def __call__(self, x, t, cond):
        self.calls[cond] += 1
        return np.broadcast_to(self.value if cond == 'cond' else self.uncond_value, x.shape)


@pytest.mark.unit
class TestEulerSampler:

    def test_data_prediction_lands_on_target(self):
        target = np.array([[0.3, -0.2, 0.9]])
        model = _CountingModel(target)
        out = euler_sample(model, 'cond', SamplerConfig(steps=8, prediction_kind='data'), shape=(1, 3),
                           dtype=np.float64)
        np.testing.assert_allclose(out, target)
        assert model.calls == {'cond': 8, 'uncond': 0}

    @pytest.mark.parametrize("steps", [1, 7, 200])
    def test_data_prediction_lands_for_any_step_count(self, steps, rng):
        target = rng.standard_normal((2, 3))
        model = _CountingModel(target)
        out = euler_sample(model, 'cond', SamplerConfig(steps=steps, prediction_kind='data'),
                           x0=rng.standard_normal((2, 3)), dtype=np.float64)
        np.testing.assert_array_equal(out, target)
        assert model.calls['cond'] == steps

    def test_scale_zero_is_unconditional(self):
        model = _CountingModel([[1.0, 4.0]], uncond_value=[[-2.0, 0.5]])
        pred = guided_prediction(model, np.zeros((1, 2)), np.zeros(1), 'cond', 'uncond', 0.0)
        np.testing.assert_array_equal(pred, [[-2.0, 0.5]])

        cfg = SamplerConfig(steps=4, prediction_kind='velocity', guidance_scale=0.0)
        out = euler_sample(model, 'cond', cfg, x0=np.zeros((1, 2)), uncond='uncond', dtype=np.float64)
        np.testing.assert_allclose(out, [[-2.0, 0.5]])

    def test_rows_follow_batch_permutation(self, rng):
        weights = rng.standard_normal(4)

        def rowwise(x, t, cond):
            return np.tanh(x) * cond[:, None] + t[:, None] * weights[None, :]

        cond = rng.uniform(0.5, 1.5, 5)
        x0 = rng.standard_normal((5, 4))
        perm = rng.permutation(5)
        cfg = SamplerConfig(steps=6, prediction_kind='velocity', guidance_scale=2.0)
        out = euler_sample(rowwise, cond, cfg, x0=x0, uncond=np.zeros(5), dtype=np.float64)
        permuted = euler_sample(rowwise, cond[perm], cfg, x0=x0[perm], uncond=np.zeros(5), dtype=np.float64)
        np.testing.assert_allclose(permuted, out[perm], rtol=1e-12)

    def test_velocity_integrates_constant_field(self):
        x0 = np.array([[1.0, 2.0]])
        model = _CountingModel([[0.5, -1.0]])
        out = euler_sample(model, 'cond', SamplerConfig(steps=5, prediction_kind='velocity'), x0=x0,
                           dtype=np.float64)
        np.testing.assert_allclose(out, [[1.5, 1.0]])

    def test_guidance_runs_unconditional_branch(self):
        model = _CountingModel([[1.0]], uncond_value=[[0.0]])
        cfg = SamplerConfig(steps=4, prediction_kind='velocity', guidance_scale=3.0)
        out = euler_sample(model, 'cond', cfg, x0=np.zeros((1, 1)), uncond='uncond', dtype=np.float64)
        assert model.calls == {'cond': 4, 'uncond': 4}
        assert out[0, 0] == pytest.approx(3.0)

    def test_guided_prediction_formula(self):
        model = _CountingModel([[2.0]], uncond_value=[[1.0]])
        pred = guided_prediction(model, np.zeros((1, 1)), np.zeros(1), 'cond', 'uncond', 2.5)
        assert pred[0, 0] == pytest.approx(1.0 + 2.5 * 1.0)

    def test_seeded_noise_is_reproducible(self):
        model = _CountingModel(np.zeros((2, 4)))
        cfg = SamplerConfig(steps=2, prediction_kind='velocity', seed=11)
        a = euler_sample(model, 'cond', cfg, shape=(2, 4))
        b = euler_sample(model, 'cond', cfg, shape=(2, 4))
        np.testing.assert_array_equal(a, b)
        assert a.dtype == np.float32

    def test_requires_shape_or_x0(self):
        with pytest.raises(ContractViolation):
            euler_sample(_CountingModel(0.0), 'cond', SamplerConfig(steps=2))

    def test_non_finite_state(self):
        model = _CountingModel([[np.inf]])
        with pytest.raises(SamplingError) as info:
            euler_sample(model, 'cond', SamplerConfig(steps=3, prediction_kind='velocity'), x0=np.zeros((1, 1)))
        assert info.value.exit_code == 8

    def test_output_shape_checked(self):
        def bad(x, t, cond):
            return np.zeros((x.shape[0], x.shape[1] + 1))

        with pytest.raises(ContractViolation):
            euler_sample(bad, None, SamplerConfig(steps=1), x0=np.zeros((1, 3)))


@pytest.mark.unit
def test_split_rng_streams_differ():
    a, b = split_rng(0, 2)
    assert a.standard_normal() != b.standard_normal()
