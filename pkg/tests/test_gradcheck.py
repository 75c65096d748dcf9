"""Tests for finite-difference gradient verification."""

import numpy as np
import pytest

from pmgan.core.errors import ConfigurationError
from pmgan.engine import ops
from pmgan.services.gradcheck import (
    GradcheckCase,
    analytic_gradients,
    gradcheck,
    model_cases,
    numeric_gradient,
    run_case,
    scaled_error,
)


class TestGradcheck:
    """Every recorded op and loss matches its finite-difference gradient."""

    def test_all_ops_pass(self):
        """Primitive ops agree with central differences."""
        entries = gradcheck("op", seed=0)
        assert entries
        failed = [(e.check, e.parameter, e.max_scaled_error) for e in entries if not e.passed]
        assert failed == []

    def test_all_losses_pass(self):
        """Model losses agree for every parameter they train."""
        entries = gradcheck("model", seed=0)
        checks = {e.check for e in entries}
        assert checks == {
            "model.loss_G",
            "model.loss_G_noise",
            "model.loss_G_feedback",
            "model.loss_D",
            "model.loss_single",
        }
        assert all(e.passed for e in entries)
        assert {e.parameter for e in entries if e.check == "model.loss_D"} >= {"d.weights", "fuse.filter"}

    def test_corruption_is_reported_by_name(self):
        """Offsetting one analytic gradient fails exactly that parameter."""
        entries = gradcheck("model", seed=0, corrupt=("g.block1.w1", 1e-3))
        failed = {(e.check, e.parameter) for e in entries if not e.passed}
        assert failed == {
            ("model.loss_G", "g.block1.w1"),
            ("model.loss_G_noise", "g.block1.w1"),
            ("model.loss_G_feedback", "g.block1.w1"),
        }

    def test_noise_channels_reach_block1(self):
        """The noisy generator case checks block1 over the widened input."""
        (case,) = [c for c in model_cases(np.random.default_rng(0)) if c.check == "model.loss_G_noise"]
        assert case.inputs["g.block1.w1"].shape == (3, 3, 5, 3)
        entries = run_case(case)
        assert all(e.passed for e in entries)
        analytic = analytic_gradients(case)["g.block1.w1"]
        assert np.abs(analytic[:, :, 3:, :]).max() > 0.0

    def test_parameters_are_uniform_in_half_interval(self):
        """Model checks run on parameters drawn from [-0.5, 0.5]."""
        for case in model_cases(np.random.default_rng(3)):
            for value in case.inputs.values():
                assert np.all(np.abs(value) <= 0.5)

    def test_unknown_scope(self):
        """Scopes are op, model or all."""
        with pytest.raises(ConfigurationError):
            gradcheck("layers")


class TestHelpers:
    """Error metric and numeric differentiation."""

    def test_scaled_error_floor(self):
        """Small gradients are compared absolutely, large ones relatively."""
        error = scaled_error(np.array([1e-8, 100.0]), np.array([2e-8, 101.0]))
        np.testing.assert_allclose(error, [1e-8, 1 / 101])

    def test_numeric_gradient_of_square(self):
        """d(sum x^2)/dx = 2x."""
        x = np.array([0.5, -1.5, 2.0])
        case = GradcheckCase("square", {"x": x}, lambda b: ops.reduce_sum(ops.multiply(b["x"], b["x"])))
        np.testing.assert_allclose(numeric_gradient(case, "x"), 2 * x, atol=1e-7)
        (entry,) = run_case(case)
        assert entry.passed
        assert entry.parameter == "x"
