"""Unit tests for the noise operator and noise stability."""

import math
from unittest.mock import patch

import numpy as np
import pytest

from noisestab.errors import InvalidParameterError, MethodUnavailableError, TruncationError
from noisestab.gauss import RandomSource
from noisestab.hermite import hermite_eval_multi, multi_indices
from noisestab.partition import ConicalPartition, classify
from noisestab.stability import (
    CellIndicator,
    L_apply,
    LT_rho_difference,
    T_rho_apply,
    cell_degree_weights,
    dT_drho,
    dT_drho_finite_difference,
    hermite_coefficients_of_cell,
    lt_rho_indicator,
    noise_operator_handle,
    noise_stability_J,
    psi_rho,
    volume_term,
    volume_term_closed_form,
)


@pytest.fixture
def regular():
    """Regular three-cell partition of the plane."""
    return ConicalPartition.regular(3, 2)


@pytest.fixture
def half_planes():
    """Two half-planes split along the horizontal axis."""
    return ConicalPartition.sectors([0.0, math.pi])


@pytest.fixture
def points():
    """A few evaluation points."""
    return np.array([[0.3, -0.7], [1.2, 0.5], [-0.9, -1.4]])


class TestNoiseStabilityJ:
    """Test the noise stability functional."""

    def test_rho_zero(self, regular):
        """Test J(0) is the sum of squared cell measures."""
        result = noise_stability_J(regular, 0.0)

        assert result.method == "quadrature2d"
        assert result.value == pytest.approx(1.0 / 3.0, abs=1e-9)

    @pytest.mark.parametrize("rho", [-0.5, 0.1, 0.5, 0.9])
    def test_half_planes_closed_form(self, half_planes, rho):
        """Test J = 1/2 + arcsin(rho) / pi for two half-planes."""
        result = noise_stability_J(half_planes, rho, "quadrature2d")

        assert result.value == pytest.approx(0.5 + math.asin(rho) / math.pi, abs=1e-6)

    def test_extreme_correlations(self, regular, half_planes):
        """Test J(1) = 1 and J(-1) = 0 for centrally asymmetric cells."""
        assert noise_stability_J(regular, 1.0).value == pytest.approx(1.0)
        assert noise_stability_J(regular, -1.0).value == pytest.approx(0.0, abs=1e-12)
        assert noise_stability_J(half_planes, -1.0).value == pytest.approx(0.0, abs=1e-12)

    def test_monte_carlo_agrees(self, half_planes):
        """Test the Monte Carlo estimate is within four standard errors."""
        rho = 0.5
        result = noise_stability_J(half_planes, rho, "montecarlo", budget=200_000, rng=RandomSource(3))

        assert result.seed == 3
        assert abs(result.value - (0.5 + math.asin(rho) / math.pi)) <= 4.0 * result.error_estimate

    def test_monte_carlo_reproducible(self, regular):
        """Test a seed and budget reproduce the estimate regardless of workers."""
        a = noise_stability_J(regular, 0.3, "montecarlo", budget=300_000, rng=RandomSource(5), workers=1)
        b = noise_stability_J(regular, 0.3, "montecarlo", budget=300_000, rng=RandomSource(5), workers=2)

        assert a.value == b.value

    def test_series_matches_quadrature(self, regular):
        """Test the Hermite series against quadrature."""
        for rho in (0.05, 0.3):
            series = noise_stability_J(regular, rho, "hermite_series", max_degree=24)
            quad = noise_stability_J(regular, rho, "quadrature2d")
            assert series.value == pytest.approx(quad.value, abs=1e-4)

    def test_increasing_in_rho(self, regular):
        """Test J increases with rho."""
        values = [noise_stability_J(regular, rho).value for rho in np.linspace(-0.4, 0.9, 8)]

        assert all(a < b for a, b in zip(values, values[1:]))

    def test_unknown_method(self, regular):
        """Test unknown methods are rejected."""
        with pytest.raises(MethodUnavailableError) as exc_info:
            noise_stability_J(regular, 0.2, "simpson")

        assert "Unknown stability method" in str(exc_info.value)

    def test_quadrature_needs_planar(self):
        """Test quadrature2d rejects non-planar partitions."""
        with pytest.raises(MethodUnavailableError):
            noise_stability_J(ConicalPartition.regular(4, 3), 0.2, "quadrature2d")

    def test_series_tail_tolerance(self, regular):
        """Test a tail bound above tol raises."""
        with pytest.raises(TruncationError) as exc_info:
            noise_stability_J(regular, 0.5, "hermite_series", tol=1e-30)

        assert "tail bound" in str(exc_info.value)

    def test_result_dict(self, regular):
        """Test the result record."""
        record = noise_stability_J(regular, 0.2).to_dict()

        assert set(record) == {"value", "method", "error_estimate", "params", "seed"}
        assert record["params"]["rho"] == 0.2


class TestNoiseOperator:
    """Test T_rho, its derivative and the generator."""

    def test_hermite_eigenfunctions(self, points):
        """Test T_rho h_l = rho^|l| h_l."""
        rho = 0.4
        for ell in multi_indices(2, 4):
            applied = T_rho_apply(lambda y, ell=ell: hermite_eval_multi(ell, y), rho, points)
            np.testing.assert_allclose(applied, rho ** ell.degree * hermite_eval_multi(ell, points), atol=1e-8)

    def test_rho_zero_is_measure(self, regular, points):
        """Test T_0 1_A is the cell measure everywhere."""
        values = T_rho_apply(CellIndicator.cell(regular, 1), 0.0, points)

        np.testing.assert_allclose(values, np.full(3, 1.0 / 3.0), atol=1e-10)

    def test_rho_one_is_identity(self, regular, points):
        """Test T_1 f = f."""
        f = CellIndicator.cell(regular, 0)

        np.testing.assert_array_equal(T_rho_apply(f, 1.0, points), f(points))

    def test_indicators_sum_to_one(self, regular, points):
        """Test the smoothed cell indicators still sum to one."""
        total = sum(T_rho_apply(CellIndicator.cell(regular, i), 0.7, points) for i in range(3))

        np.testing.assert_allclose(total, np.ones(3), atol=1e-10)

    def test_semigroup(self, regular, points):
        """Test T_0.5 T_0.6 = T_0.3."""
        f = CellIndicator.cell(regular, 0)
        composed = T_rho_apply(noise_operator_handle(f, 0.5), 0.6, points)
        direct = T_rho_apply(f, 0.3, points)

        np.testing.assert_allclose(composed, direct, atol=1e-5)

    def test_derivative_routes(self, regular, points):
        """Test the integral formula against finite differences and the generator route."""
        f = CellIndicator.cell(regular, 0)
        for x in points:
            routes = dT_drho(f, 0.3, x, route="both")
            assert routes.integral == pytest.approx(dT_drho_finite_difference(f, 0.3, x), abs=1e-4)
            assert routes.generator == pytest.approx(routes.integral, abs=1e-4)

    def test_derivative_at_zero(self, regular):
        """Test the integral route is defined at rho = 0."""
        f = CellIndicator.cell(regular, 0)
        x = np.array([0.4, 0.1])

        assert dT_drho(f, 0.0, x) == pytest.approx(dT_drho_finite_difference(f, 0.0, x), abs=1e-4)

    def test_generator_route_rejects_zero(self, regular):
        """Test the generator route needs rho != 0."""
        with pytest.raises(InvalidParameterError) as exc_info:
            dT_drho(CellIndicator.cell(regular, 0), 0.0, [0.1, 0.2], route="generator")

        assert "divides by rho" in str(exc_info.value)

    def test_unknown_route(self, regular):
        """Test unknown derivative routes are rejected."""
        with pytest.raises(InvalidParameterError):
            dT_drho(CellIndicator.cell(regular, 0), 0.2, [0.1, 0.2], route="adjoint")

    def test_generator_on_quadratic(self):
        """Test L x_1^2 = -2 + 2 x_1^2."""
        value = L_apply(lambda y: y[:, 0] ** 2, [2.0, 0.0])

        assert value == pytest.approx(6.0, abs=1e-5)


class TestBoundaryFormulas:
    """Test rho^-1 L T_rho on cell indicators."""

    def test_cells_sum_to_zero(self, regular, points):
        """Test the first variations of all cells sum to zero."""
        total = sum(lt_rho_indicator(regular, i, 0.2, points) for i in range(3))

        np.testing.assert_allclose(total, np.zeros(3), atol=1e-12)

    def test_matches_derivative(self, regular):
        """Test the closed form against the integral derivative."""
        x = np.array([0.8, -0.3])
        f = CellIndicator.cell(regular, 1)

        assert lt_rho_indicator(regular, 1, 0.25, x) == pytest.approx(dT_drho(f, 0.25, x), abs=1e-6)

    def test_difference_routes_agree(self, regular):
        """Test the boundary and direct routes of the difference."""
        result = LT_rho_difference(regular, 0, 1, 0.3, [0.5, 0.2])

        assert result.discrepancy < 1e-6
        assert result.value == result.boundary_route

    def test_volume_term_routes(self, regular):
        """Test the quadrature volume term against the divergence identity."""
        x = [0.5, -0.4]

        assert volume_term(regular, 0, 2, 0.3, x) == pytest.approx(volume_term_closed_form(regular, 0, 2, 0.3, x), abs=1e-7)

    @pytest.mark.parametrize("rho", [0.1, 0.3])
    def test_volume_term_sign_deep_in_cell(self, regular, rho):
        """Test the volume term is nonnegative once x_1 exceeds sqrt(n) s / rho along the generator."""
        threshold = math.sqrt(2.0) * math.sqrt(1.0 - rho * rho) / rho
        z = regular.generators[0] / np.linalg.norm(regular.generators[0])

        for scale, angle in [(1.5, 0.0), (3.0, 0.0), (2.0, 0.35), (2.0, -0.35)]:
            c, s = math.cos(angle), math.sin(angle)
            x = scale * threshold * np.array([c * z[0] - s * z[1], s * z[0] + c * z[1]])
            assert classify(regular, x) == 0
            for j in (1, 2):
                assert volume_term(regular, 0, j, rho, x) >= -1e-8

    def test_boundary_route_is_closed_form(self, regular):
        """Test the boundary route does not touch the quadrature moments."""
        x = [0.5, 0.2]
        clean = LT_rho_difference(regular, 0, 1, 0.3, x)

        with patch("noisestab.stability._moment_integrals", return_value=(np.zeros(2), 1000.0)):
            corrupted = LT_rho_difference(regular, 0, 1, 0.3, x)

        assert corrupted.boundary_route == pytest.approx(clean.boundary_route, abs=1e-14)
        assert clean.volume_term == pytest.approx(volume_term_closed_form(regular, 0, 1, 0.3, x), abs=1e-14)
        assert corrupted.discrepancy > 100.0

    def test_same_cell(self, regular):
        """Test the difference needs two cells."""
        with pytest.raises(InvalidParameterError):
            LT_rho_difference(regular, 1, 1, 0.3, [0.5, 0.2])

    def test_rho_zero(self, regular):
        """Test the difference needs rho != 0."""
        with pytest.raises(InvalidParameterError):
            LT_rho_difference(regular, 0, 1, 0.0, [0.5, 0.2])


class TestHermiteData:
    """Test Hermite coefficients of cells and psi_rho."""

    def test_low_degree_weights(self, regular):
        """Test degree 0 and 1 weights are the squared measure and barycenter norm."""
        weights = cell_degree_weights(regular, 8)

        np.testing.assert_allclose(weights[:, 0], np.full(3, 1.0 / 9.0), atol=1e-10)
        np.testing.assert_allclose(weights[:, 1], np.full(3, 3.0 / (8.0 * math.pi)), atol=1e-10)

    def test_cell_series(self, regular):
        """Test the constant coefficient of a cell is its measure."""
        series = hermite_coefficients_of_cell(regular, 0, 6)

        assert series[(0, 0)] == pytest.approx(1.0 / 3.0, abs=1e-10)
        assert series.norm_sq() <= 1.0 / 3.0 + 1e-12

    def test_psi_at_zero(self, regular):
        """Test psi_0 = 9 / (8 pi)."""
        assert psi_rho(regular, 0.0) == pytest.approx(9.0 / (8.0 * math.pi), abs=1e-10)

    def test_psi_is_derivative_of_j(self, regular):
        """Test psi_rho against a centered difference of J."""
        rho, h = 0.2, 1e-4
        slope = (noise_stability_J(regular, rho + h).value - noise_stability_J(regular, rho - h).value) / (2.0 * h)

        assert psi_rho(regular, rho) == pytest.approx(slope, abs=1e-5)

    def test_truncation(self, regular):
        """Test a coarse truncation at large rho raises."""
        with pytest.raises(TruncationError) as exc_info:
            psi_rho(regular, 0.9, max_degree=2)

        assert "exceeds tolerance" in str(exc_info.value)
