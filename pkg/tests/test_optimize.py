"""Unit tests for the partition searches, first-variation checks and witnesses."""

import math

import numpy as np
import pytest

from noisestab.errors import InvalidParameterError, WitnessNotFoundError
from noisestab.gauss import TWO_PI, RandomSource
from noisestab.partition import ConicalPartition, classify, d2_distance
from noisestab.stability import LT_rho_difference, hermite_coefficients_of_cell
from noisestab.optimize import (
    PSI_ZERO_REGULAR,
    GridSpec,
    PerturbationFamily,
    WitnessSearch,
    coordinate_ascent,
    distance_to_boundary,
    equal_measure_comparison,
    first_variation_check,
    ftc_reconstruction,
    lemma5_stability_probe,
    negative_rho_witness,
    perturbation_search_psi,
    perturbed_partition,
    psi_rho_convexity_gap,
    sup_psi_zero_search,
    witness_partition,
    witness_scan,
)


@pytest.fixture
def regular():
    """Regular three-cell partition of the plane."""
    return ConicalPartition.regular(3, 2)


class TestCoordinateAscent:
    """Test the local search primitive."""

    def test_concave_quadratic(self):
        """Test convergence to the maximizer of a separable quadratic."""
        result = coordinate_ascent(lambda x: -(x[0] - 1.0) ** 2 - (x[1] + 2.0) ** 2, [0.0, 0.0], step=0.5)

        np.testing.assert_allclose(result.params, [1.0, -2.0], atol=1e-9)
        assert result.value == pytest.approx(0.0, abs=1e-15)
        assert result.evaluations > 1

    def test_box_bounds(self):
        """Test moves are clipped to the box."""
        result = coordinate_ascent(lambda x: float(x[0]), [0.0], step=1.0, lower=[-3.0], upper=[2.5])

        assert result.params[0] == pytest.approx(2.5)


class TestSupPsiZero:
    """Test the psi_0 supremum search."""

    def test_two_cells(self):
        """Test the supremum 1/pi for k = 2."""
        value, partition = sup_psi_zero_search(2, restarts=10, rng=RandomSource(0))

        assert value == pytest.approx(1.0 / math.pi, abs=1e-3)
        np.testing.assert_allclose(partition.widths(), [math.pi, math.pi], atol=1e-2)

    def test_three_cells(self):
        """Test the supremum 9/(8 pi) for k = 3 at equal widths."""
        value, partition = sup_psi_zero_search(3, restarts=10, rng=RandomSource(1))

        assert value == pytest.approx(PSI_ZERO_REGULAR, abs=1e-3)
        np.testing.assert_allclose(partition.widths(), np.full(3, TWO_PI / 3.0), atol=1e-2)

    def test_empty_cell(self):
        """Test one forced empty cell reduces k = 3 to the half-plane value."""
        value, partition = sup_psi_zero_search(3, restarts=10, rng=RandomSource(2), empty_cells=1)

        assert value == pytest.approx(1.0 / math.pi, abs=1e-3)
        assert partition.k == 3
        assert partition.widths()[-1] == pytest.approx(0.0, abs=1e-12)

    def test_planar_only(self):
        """Test the search runs in the plane."""
        with pytest.raises(InvalidParameterError) as exc_info:
            sup_psi_zero_search(3, n=3)

        assert "n=2" in str(exc_info.value)


class TestPerturbationSearch:
    """Test perturbation families and the psi_rho search."""

    def test_bound_too_large(self, regular):
        """Test breakpoints may not cross."""
        with pytest.raises(InvalidParameterError) as exc_info:
            PerturbationFamily(regular, "sector-angles", bound=2.0)

        assert "exceeds half the smallest sector" in str(exc_info.value)

    def test_unknown_parametrization(self, regular):
        """Test unknown parametrizations are rejected."""
        with pytest.raises(InvalidParameterError):
            PerturbationFamily(regular, "widths")

    def test_sector_angles(self, regular):
        """Test parameters shift the breakpoints."""
        family = PerturbationFamily(regular, "sector-angles", bound=0.5)
        moved = family.partition([0.1, 0.0, -0.2])

        np.testing.assert_allclose(moved.breakpoints, regular.as_sectors().breakpoints + [0.1, 0.0, -0.2])

    def test_generator_vectors(self, regular):
        """Test zero parameters reproduce the base cells."""
        family = PerturbationFamily(regular, "generator-vectors", bound=0.3)
        moved = family.partition(np.zeros(3))
        points = RandomSource(4).generator.standard_normal((200, 2))

        np.testing.assert_array_equal(classify(moved, points), classify(regular, points))

    def test_params_outside_box(self, regular):
        """Test parameters beyond the bound are rejected."""
        family = PerturbationFamily(regular, "sector-angles", bound=0.1)

        with pytest.raises(InvalidParameterError):
            family.partition([0.5, 0.0, 0.0])

    def test_frozen_family(self, regular):
        """Test bound 0 returns the base value."""
        result = perturbation_search_psi(0.05, PerturbationFamily(regular, bound=0.0), budget=10)

        assert result.best_value == result.base_value
        assert result.starts == 0

    def test_regular_is_not_beaten(self, regular):
        """Test random starts converge back to the regular partition."""
        family = PerturbationFamily(regular, "sector-angles", bound=0.3)
        result = perturbation_search_psi(0.05, family, budget=3, rng=RandomSource(0))

        assert result.best_value <= result.base_value + 1e-6
        assert d2_distance(result.partition, regular).value <= 1e-2

    def test_rho_range(self, regular):
        """Test the search targets small nonnegative rho."""
        with pytest.raises(InvalidParameterError) as exc_info:
            perturbation_search_psi(0.5, PerturbationFamily(regular), budget=1)

        assert "[0, 0.2]" in str(exc_info.value)


class TestFirstVariation:
    """Test the first-variation containment check."""

    def test_grid_size(self):
        """Test the grid has radial x angular points."""
        assert GridSpec(radial=4, angular=6).points().shape == (24, 2)

    def test_distance_to_boundary(self, regular):
        """Test distance from a point on a generator to the nearest boundary ray."""
        distance = distance_to_boundary(regular, np.array([[2.0, 0.0]]))

        assert distance[0] == pytest.approx(math.sqrt(3.0))

    def test_regular_passes(self, regular):
        """Test the regular partition satisfies the containment."""
        report = first_variation_check(regular, 0.05)

        assert report.passed
        assert report.to_dict()["violation_count"] == 0
        assert report.values.shape == (report.points.shape[0], 3)

    def test_perturbed_fails(self, regular):
        """Test a moved breakpoint produces violations near the moved ray."""
        moved = perturbed_partition(regular, breakpoint=1, shift=0.2)
        report = first_variation_check(moved, 0.05, GridSpec(angular=720))

        assert not report.passed
        assert all(v.gap > 1e-6 for v in report.violations)

    def test_rho_must_be_positive(self, regular):
        """Test rho <= 0 is rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            first_variation_check(regular, -0.1)

        assert "(0, 1)" in str(exc_info.value)

    def test_empty_grid(self, regular):
        """Test a margin that removes every point is rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            first_variation_check(regular, 0.05, GridSpec(radial=2, angular=4, r_max=0.5, margin=10.0))

        assert "empty" in str(exc_info.value)


class TestWitness:
    """Test the negative-rho witness scan."""

    def test_witness_partition(self):
        """Test the first cell contains the 30 degree bisector."""
        p = witness_partition()

        assert classify(p, [math.cos(math.pi / 6.0), math.sin(math.pi / 6.0)]) == 0

    def test_negative_rho_has_witness(self):
        """Test a certified witness exists at rho = -0.05."""
        witness = negative_rho_witness(-0.05)

        assert witness.value < 0.0
        assert abs(witness.value) > 5.0 * witness.error_estimate
        assert witness.improvement_rate == pytest.approx(-2.0 * witness.value)
        assert witness.cells == (0, 1)
        assert classify(witness_partition(), witness.point) == 0

    def test_positive_rho_has_none(self):
        """Test no witness is certified at rho = 0.05."""
        search = WitnessSearch(a_values=(50.0, 100.0, 200.0), b_values=(1.0,))

        with pytest.raises(WitnessNotFoundError) as exc_info:
            negative_rho_witness(0.05, search)

        assert exc_info.value.scanned_region == {"a": [50.0, 200.0], "b": [1.0]}

    @pytest.mark.parametrize("rho", [-0.2, -0.7])
    def test_rho_below_floor(self, rho):
        """Test the scan only accepts rho above -0.2."""
        with pytest.raises(InvalidParameterError) as exc_info:
            negative_rho_witness(rho)

        assert "rho > -0.2" in str(exc_info.value)

    def test_rho_zero_has_none(self):
        """Test rho = 0 reports no witness with the scanned region."""
        search = WitnessSearch(a_values=(50.0,), b_values=(1.0,))

        with pytest.raises(WitnessNotFoundError) as exc_info:
            negative_rho_witness(0.0, search)

        assert exc_info.value.scanned_region == {"a": [50.0, 50.0], "b": [1.0]}

    def test_bisector_ray(self):
        """Test values on the bisector ray come from the volume term alone and are tiny."""
        search = WitnessSearch(a_values=(200.0, 300.0), b_values=(0.0,))
        rows = witness_scan(-0.05, search)

        assert len(rows) == 2
        for point, value, _ in rows:
            result = LT_rho_difference(witness_partition(), 0, 1, -0.05, point)
            assert abs(result.surface_term) < 1e-8
            assert abs(value) < 1e-8
            assert value == pytest.approx(-0.05 * result.volume_term / (1.0 - 0.05 ** 2), abs=1e-10)


class TestStabilityProbe:
    """Test the near-maximizer distance probe."""

    def test_rows(self):
        """Test d2 stays within 6 eps^(1/8)."""
        rows = lemma5_stability_probe([0.0, 1e-4], directions=4, rng=RandomSource(0))

        assert rows[0]["max_d2"] == 0.0
        assert all(r["passed"] for r in rows)
        assert rows[1]["bound"] == pytest.approx(6.0 * 1e-4 ** 0.125)

    def test_epsilon_range(self):
        """Test epsilon must be below 0.01."""
        with pytest.raises(InvalidParameterError):
            lemma5_stability_probe([0.02])


class TestIdentities:
    """Test convexity, the integral reconstruction and rotation invariance."""

    def test_convexity_gap(self, regular):
        """Test psi_rho is convex along mixtures for rho >= 0."""
        other = ConicalPartition.from_widths([1.0, 2.5, TWO_PI - 3.5])
        g = [hermite_coefficients_of_cell(regular, i, 10) for i in range(3)]
        h = [hermite_coefficients_of_cell(other, i, 10) for i in range(3)]

        for lam in (0.25, 0.5, 0.75):
            assert psi_rho_convexity_gap(g, h, 0.2, lam) >= -1e-12

    def test_convexity_needs_same_size(self, regular):
        """Test tuples of different length are rejected."""
        g = [hermite_coefficients_of_cell(regular, i, 4) for i in range(3)]

        with pytest.raises(InvalidParameterError):
            psi_rho_convexity_gap(g, g[:2], 0.2, 0.5)

    def test_ftc_reconstruction(self, regular):
        """Test J(rho) - J(0) equals the integral of psi."""
        lhs, rhs = ftc_reconstruction(regular, 0.3)

        assert lhs == pytest.approx(rhs, abs=1e-4)

    def test_rotations_do_not_change_j(self):
        """Test rotated equal-measure partitions share J."""
        assert abs(equal_measure_comparison(0.1, count=8)) <= 1e-8
