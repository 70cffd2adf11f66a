"""
Tests for the finite-difference gradient oracle
"""

import math
from unittest.mock import patch

import pytest

from ..core.exceptions import InfeasibleDeltaError
from ..core.models import DEFAULT_PARAMETERS, NUM_PARAMETERS, ArrivalProcessSpec, ParameterVector, SimulationMode
from ..services.ipa import ipa_gradient
from ..services.oracle import (
    compare_gradients,
    effective_delta,
    finite_difference_gradient,
    validate_gradient,
)


def _params(*changes):
    values = list(DEFAULT_PARAMETERS)
    for index, value in changes:
        values[index] = value
    return ParameterVector.from_array(values)


class TestEffectiveDelta:
    """Steps kept inside the feasible set"""

    def test_default_step(self, default_params):
        assert effective_delta(default_params, 0, 0.05) == 0.05
        assert effective_delta(default_params, 9, 0.05) == 0.05

    def test_min_green_limited_by_max(self):
        params = _params((0, 10.0), (1, 10.02))
        assert effective_delta(params, 0, 0.05) == pytest.approx(0.02)
        assert effective_delta(params, 1, 0.05) == pytest.approx(0.02)

    def test_threshold_limited_by_half_value(self):
        params = _params((6, 0.04))
        assert effective_delta(params, 6, 0.05) == pytest.approx(0.02)

    def test_collapsed_step_raises(self):
        params = _params((0, 0.0))
        with pytest.raises(InfeasibleDeltaError) as exc:
            effective_delta(params, 0, 0.05)
        assert exc.value.index == 1


class TestCompareGradients:
    """Relative error and cosine similarity"""

    def test_identical_vectors(self):
        result = compare_gradients([1.0, 2.0, 0.0], [1.0, 2.0, 0.0])
        assert result.cosine_similarity == pytest.approx(1.0)
        assert result.max_relative_error == pytest.approx(0.0)
        assert result.relative_error[2] is None
        assert result.passed is True

    def test_opposite_vectors_fail(self):
        result = compare_gradients([1.0, -1.0], [-1.0, 1.0])
        assert result.cosine_similarity == pytest.approx(-1.0)
        assert result.verdict == "mismatch"
        assert result.passed is False

    def test_unstable_coordinates_excluded(self):
        result = compare_gradients([1.0, 50.0], [1.05, -3.0], stable=[True, False])
        assert result.relative_error[1] is None
        assert result.cosine_similarity == pytest.approx(1.0)
        assert result.max_relative_error == pytest.approx(0.05 / 1.05)
        assert result.passed is True

    def test_relative_error_threshold(self):
        result = compare_gradients([1.0, 2.0], [1.0, 2.5])
        assert result.max_relative_error == pytest.approx(0.2)
        assert result.passed is False

    def test_zero_vectors_are_vacuous(self):
        result = compare_gradients([0.0, 0.0], [0.0, 0.0])
        assert result.cosine_similarity is None
        assert result.max_relative_error is None
        assert result.compared == 0
        assert result.verdict == "vacuous"
        assert result.passed is False

    def test_differences_below_floor_are_vacuous(self):
        result = compare_gradients([1.0, 0.0], [0.0, 0.0])
        assert result.compared == 0
        assert result.verdict == "vacuous"
        assert result.passed is False

    def test_compared_counts_stable_coordinates_above_floor(self):
        result = compare_gradients([1.0, 2.0, 3.0, 0.0], [1.0, 2.0, 3.0, 0.0], stable=[True, True, False, True])
        assert result.compared == 2
        assert result.verdict == "agree"

    def test_chattering_path_never_passes(self):
        result = compare_gradients([1.0, 2.0], [1.0, 2.0], chattering=True, switches_per_100s=812.0)
        assert result.cosine_similarity == pytest.approx(1.0)
        assert result.chattering is True
        assert result.switches_per_100s == 812.0
        assert result.verdict == "chattering"
        assert result.passed is False

    def test_one_zero_vector(self):
        result = compare_gradients([0.0, 0.0], [0.5, 0.0])
        assert result.cosine_similarity == 0.0
        assert result.passed is False


class TestFiniteDifferences:
    """Central differences with common random numbers"""

    def test_zero_traffic(self, default_params, constant_fluid):
        fd, stable, steps = finite_difference_gradient(
            constant_fluid((0.0, 0.0, 0.0, 0.0)), default_params, 100.0, workers=1
        )
        assert fd == [0.0] * NUM_PARAMETERS
        assert all(stable)
        assert steps == [0.05] * NUM_PARAMETERS

    def test_quadratic_cost_in_wait_threshold(self, constant_fluid):
        params = _params((4, 12.0))
        fd, stable, _ = finite_difference_gradient(
            constant_fluid((0.0, 0.0, 0.1, 0.0)), params, 100.0, workers=1
        )
        expected = (0.1 * 12.0 + 0.01 * 12.0 / 1.1) / 100.0
        assert fd[4] == pytest.approx(expected, rel=1e-6)
        assert all(stable)
        for i, value in enumerate(fd):
            if i != 4:
                assert value == pytest.approx(0.0, abs=1e-9)

    def test_ipa_agrees_with_oracle(self, constant_fluid):
        params = _params((4, 12.0))
        comparison = validate_gradient(constant_fluid((0.0, 0.0, 0.1, 0.0)), params, 100.0, workers=1)
        assert comparison.passed is True
        assert comparison.cosine_similarity == pytest.approx(1.0)
        assert comparison.effective_delta == [0.05] * NUM_PARAMETERS

    def test_discrete_spec_switched_to_fluid(self, default_params, discrete_spec):
        zero = discrete_spec.model_copy(update={"mean_rates": (0.0, 0.0, 0.0, 0.0)})
        with patch("tlc_engine.services.oracle.finite_difference_gradient") as fd_mock:
            fd_mock.return_value = ([0.0] * NUM_PARAMETERS, [True] * NUM_PARAMETERS, [0.05] * NUM_PARAMETERS)
            comparison = validate_gradient(zero, default_params, 50.0, workers=1)
        spec_used = fd_mock.call_args.args[0]
        assert spec_used.mode is SimulationMode.FLUID
        assert all(math.isfinite(v) for v in comparison.ipa)

    def test_zero_traffic_check_is_vacuous(self, default_params, constant_fluid):
        comparison = validate_gradient(constant_fluid((0.0, 0.0, 0.0, 0.0)), default_params, 100.0, workers=1)
        assert comparison.compared == 0
        assert comparison.verdict == "vacuous"
        assert comparison.passed is False

    def test_fast_switching_path_flagged(self, constant_fluid):
        params = _params((4, 12.0))
        comparison = validate_gradient(
            constant_fluid((0.0, 0.0, 0.1, 0.0)), params, 100.0, workers=1, chattering_threshold=0.5
        )
        assert comparison.chattering is True
        assert comparison.switches_per_100s == pytest.approx(1.0)
        assert comparison.verdict == "chattering"
        assert comparison.passed is False

    def test_switch_wait_derivative_reaches_the_estimator(self, default_params, constant_fluid):
        with patch("tlc_engine.services.oracle.finite_difference_gradient") as fd_mock, \
                patch("tlc_engine.services.replications.ipa_gradient", wraps=ipa_gradient) as ipa_mock:
            fd_mock.return_value = ([0.0] * NUM_PARAMETERS, [True] * NUM_PARAMETERS, [0.05] * NUM_PARAMETERS)
            validate_gradient(
                constant_fluid((0.0, 0.1, 0.0, 0.0)), default_params, 50.0, workers=1,
                switch_wait_derivative=True,
            )
        assert ipa_mock.call_args.kwargs["switch_wait_derivative"] is True


@pytest.mark.slow
class TestModerateLoadCheck:
    """Gradient check at interarrival [6, 6, 10, 20]"""

    @pytest.mark.parametrize("seed", [1, 2, 3, 11])
    def test_verdict_is_never_vacuously_positive(self, seed, default_params):
        spec = ArrivalProcessSpec.from_interarrival([6, 6, 10, 20], mode=SimulationMode.FLUID, seed=seed)
        comparison = validate_gradient(spec, default_params, 1000.0, workers=1)
        assert comparison.verdict in ("agree", "mismatch", "vacuous", "chattering")
        assert comparison.switches_per_100s is not None
        if comparison.passed:
            assert comparison.compared >= 1
            assert comparison.chattering is False
            assert comparison.cosine_similarity >= 0.95
        if comparison.chattering:
            assert comparison.verdict == "chattering"
