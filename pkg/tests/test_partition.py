"""Unit tests for conical partitions, barycenters and the partition metric."""

import math

import numpy as np
import pytest

from noisestab.errors import DimensionMismatchError, InvalidParameterError, UnsupportedGeometryError
from noisestab.gauss import TWO_PI, RandomSource
from noisestab.partition import (
    ConicalPartition,
    MeasureConstraint,
    arc_overlap,
    barycenter_difference_norm,
    barycenter_vector,
    cell_measures,
    classify,
    d2_distance,
    psi_zero,
    regular_simplex_generators,
)


@pytest.fixture
def regular():
    """Regular three-cell partition of the plane."""
    return ConicalPartition.regular(3, 2)


class TestRegularSimplex:
    """Test regular simplex generators."""

    def test_inner_products(self):
        """Test unit vectors with pairwise inner product -1/(k-1)."""
        for k, n in ((2, 1), (3, 2), (4, 3), (4, 5)):
            z = regular_simplex_generators(k, n)
            gram = z @ z.T
            expected = np.full((k, k), -1.0 / (k - 1))
            np.fill_diagonal(expected, 1.0)
            np.testing.assert_allclose(gram, expected, atol=1e-12)

    def test_first_vertex(self):
        """Test the first vertex is e_1."""
        np.testing.assert_allclose(regular_simplex_generators(3, 2)[0], [1.0, 0.0], atol=1e-12)

    def test_too_many_vertices(self):
        """Test k > n + 1 is rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            regular_simplex_generators(4, 2)

        assert "2 <= k <= n + 1" in str(exc_info.value)


class TestConicalPartition:
    """Test partition construction and geometry."""

    def test_regular_arcs(self, regular):
        """Test the regular partition has three arcs of width 2 pi / 3."""
        np.testing.assert_allclose(regular.widths(), np.full(3, TWO_PI / 3.0))
        assert regular.is_planar

    def test_higher_dimensional_regular_is_planar(self):
        """Test regular(3, 3) lives in the first two coordinates."""
        assert ConicalPartition.regular(3, 3).is_planar
        assert not ConicalPartition.regular(4, 3).is_planar

    def test_non_planar_arcs(self):
        """Test planar-only operations reject non-planar partitions."""
        with pytest.raises(UnsupportedGeometryError) as exc_info:
            ConicalPartition.regular(4, 3).planar_arcs()

        assert "not a planar sector partition" in str(exc_info.value)

    def test_from_widths(self):
        """Test breakpoints follow the cumulative widths."""
        p = ConicalPartition.from_widths([1.0, 2.0, TWO_PI - 3.0], start=0.5)

        np.testing.assert_allclose(p.breakpoints, [0.5, 1.5, 3.5])
        np.testing.assert_allclose(p.widths(), [1.0, 2.0, TWO_PI - 3.0])

    def test_from_widths_wrong_total(self):
        """Test widths must sum to 2 pi."""
        with pytest.raises(InvalidParameterError) as exc_info:
            ConicalPartition.from_widths([1.0, 1.0])

        assert "sum to 2 pi" in str(exc_info.value)

    def test_decreasing_breakpoints(self):
        """Test breakpoints must be nondecreasing."""
        with pytest.raises(InvalidParameterError):
            ConicalPartition.sectors([1.0, 0.5, 2.0])

    def test_generator_shape(self):
        """Test generators must match (k, n)."""
        with pytest.raises(DimensionMismatchError):
            ConicalPartition(n=2, k=3, kind="induced", generators=np.ones((2, 2)))

    def test_as_sectors_preserves_labels(self, regular):
        """Test the sector form classifies like the generator form."""
        points = RandomSource(0).generator.standard_normal((500, 2))

        np.testing.assert_array_equal(classify(regular, points), classify(regular.as_sectors(), points))

    def test_rotate(self):
        """Test rotation shifts the breakpoints."""
        p = ConicalPartition.regular_sectors(3).rotate(0.25)

        np.testing.assert_allclose(p.breakpoints, ConicalPartition.regular_sectors(3).breakpoints + 0.25)

    def test_json_record(self, regular):
        """Test the JSON record rebuilds the same cells."""
        restored = ConicalPartition.from_json(regular.to_json())

        assert restored.kind == "regular"
        np.testing.assert_array_equal(restored.generators, regular.generators)

    def test_record_missing_field(self):
        """Test incomplete records are rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            ConicalPartition.from_dict({"kind": "sector2d", "n": 2})

        assert "missing field" in str(exc_info.value)


class TestClassify:
    """Test cell assignment."""

    def test_generator_cells(self, regular):
        """Test points along each generator land in its cell."""
        for i, z in enumerate(regular.generators):
            assert classify(regular, 2.0 * z) == i

    def test_tie_goes_to_smaller_index(self, regular):
        """Test the boundary ray between cells 0 and 1 belongs to cell 0."""
        assert classify(regular, [0.5, math.sqrt(3.0) / 2.0]) == 0

    def test_origin(self, regular):
        """Test the origin is assigned to cell 0."""
        assert classify(regular, [0.0, 0.0]) == 0

    def test_sector_boundaries(self):
        """Test boundary rays of sector partitions."""
        p = ConicalPartition.sectors([0.0, math.pi])

        assert classify(p, [0.0, 1.0]) == 0
        assert classify(p, [0.0, -1.0]) == 1
        assert classify(p, [-1.0, 0.0]) == 0
        assert classify(p, [1.0, 0.0]) == 0

    def test_batch(self, regular):
        """Test a batch returns an integer array."""
        labels = classify(regular, np.array([[1.0, 0.0], [-0.5, 0.8], [-0.5, -0.8]]))

        np.testing.assert_array_equal(labels, [0, 1, 2])

    def test_dimension_mismatch(self, regular):
        """Test points of the wrong length are rejected."""
        with pytest.raises(DimensionMismatchError):
            classify(regular, [1.0, 0.0, 0.0])


class TestBarycenters:
    """Test cell measures, barycenters and psi_0."""

    def test_planar_measures(self, regular):
        """Test planar cell measures are exact."""
        measures, se = cell_measures(regular)

        np.testing.assert_allclose(measures, np.full(3, 1.0 / 3.0))
        np.testing.assert_array_equal(se, np.zeros(3))

    def test_monte_carlo_measures(self):
        """Test non-planar cell measures come with a standard error."""
        measures, se = cell_measures(ConicalPartition.regular(4, 3), RandomSource(1), samples=100_000)

        assert np.all(np.abs(measures - 0.25) <= 5.0 * se)

    def test_regular_barycenter_norms(self, regular):
        """Test |z_i| = sqrt(6) / (4 sqrt(pi)) and |z_i - z_j| = 3 sqrt(2) / (4 sqrt(pi))."""
        norm = math.sqrt(6.0) / (4.0 * math.sqrt(math.pi))
        gap = 3.0 * math.sqrt(2.0) / (4.0 * math.sqrt(math.pi))
        for i in range(3):
            assert np.linalg.norm(barycenter_vector(regular, i)) == pytest.approx(norm, abs=1e-12)
        assert barycenter_difference_norm(regular, 0, 2) == pytest.approx(gap, abs=1e-12)

    def test_barycenter_direction(self, regular):
        """Test the barycenter of cell 0 points along its generator."""
        z = barycenter_vector(regular, 0)

        assert z[0] > 0.0
        assert z[1] == pytest.approx(0.0, abs=1e-12)

    def test_psi_zero_closed_forms(self, regular):
        """Test psi_0 of the regular partition and of two half-planes."""
        assert psi_zero(regular) == pytest.approx(9.0 / (8.0 * math.pi))
        assert psi_zero(ConicalPartition.sectors([0.0, math.pi])) == pytest.approx(1.0 / math.pi)

    def test_psi_zero_empty_cell(self):
        """Test an empty cell contributes nothing."""
        p = ConicalPartition.from_widths([math.pi, math.pi, 0.0])

        assert psi_zero(p) == pytest.approx(1.0 / math.pi)

    def test_cell_index_range(self, regular):
        """Test out-of-range cells are rejected."""
        with pytest.raises(InvalidParameterError):
            barycenter_vector(regular, 3)

    def test_same_cell_difference(self, regular):
        """Test a barycenter difference needs two cells."""
        with pytest.raises(InvalidParameterError):
            barycenter_difference_norm(regular, 1, 1)


class TestMeasureConstraint:
    """Test the equal-measure neighbourhood."""

    def test_contains(self):
        """Test measures within epsilon of 1/k."""
        constraint = MeasureConstraint(3, 0.01)

        assert constraint.contains([0.33, 0.335, 0.335])
        assert not constraint.contains([0.3, 0.35, 0.35])
        assert not constraint.contains([0.5, 0.5])

    def test_check_partition(self, regular):
        """Test the regular partition has equal measures."""
        assert MeasureConstraint(3).check(regular)

    def test_negative_epsilon(self):
        """Test epsilon must be nonnegative."""
        with pytest.raises(InvalidParameterError):
            MeasureConstraint(3, -0.1)


class TestDistance:
    """Test the rotation- and relabeling-invariant distance."""

    def test_arc_overlap(self):
        """Test overlaps with and without wrap-around."""
        assert float(arc_overlap(0.0, 1.0, 0.5, 1.0)) == pytest.approx(0.5)
        assert float(arc_overlap(TWO_PI - 0.2, 0.4, 0.0, 0.4)) == pytest.approx(0.2)
        assert float(arc_overlap(0.0, 1.0, 2.0, 1.0)) == pytest.approx(0.0)

    def test_rotation_invariance(self, regular):
        """Test a rotated, relabeled copy is at distance zero."""
        q = ConicalPartition.regular_sectors(3, rotation=1.234)
        q = ConicalPartition.sectors(np.roll(q.breakpoints, 1) + np.array([-TWO_PI, 0.0, 0.0]))
        distance = d2_distance(regular, q)

        assert distance.value == pytest.approx(0.0, abs=1e-5)

    def test_positive_for_unequal_widths(self, regular):
        """Test unequal widths are at positive distance, symmetrically."""
        q = ConicalPartition.from_widths([TWO_PI / 3.0 + 0.3, TWO_PI / 3.0 - 0.3, TWO_PI / 3.0])
        forward = d2_distance(regular, q).value
        backward = d2_distance(q, regular).value

        assert forward > 0.05
        assert forward == pytest.approx(backward, abs=1e-6)

    def test_shape_mismatch(self, regular):
        """Test partitions of different k are rejected."""
        with pytest.raises(DimensionMismatchError):
            d2_distance(regular, ConicalPartition.sectors([0.0, math.pi]))

    def test_monte_carlo_route(self):
        """Test non-planar partitions fall back to Monte Carlo."""
        p = ConicalPartition.regular(4, 3)
        distance = d2_distance(p, p, RandomSource(0), samples=20_000)

        assert distance.value == pytest.approx(0.0, abs=1e-12)
        assert distance.permutation == (0, 1, 2, 3)

    def test_monte_carlo_relabeled_copy(self):
        """Test a relabeled copy is at distance exactly zero on the sampled route."""
        p = ConicalPartition.regular(4, 3)
        q = ConicalPartition.induced(p.generators[[2, 0, 3, 1]])
        distance = d2_distance(p, q, RandomSource(1), samples=20_000)

        assert distance.value == 0.0
        assert distance.error_estimate == 0.0
        assert distance.permutation == (1, 3, 0, 2)

    def test_triangle_inequality(self):
        """Test d2(p, r) <= d2(p, q) + d2(q, r) on random sector triples."""
        gen = RandomSource(4).generator
        for _ in range(10):
            p, q, r = (ConicalPartition.from_widths(TWO_PI * gen.dirichlet(np.ones(3)), start=gen.uniform(0.0, TWO_PI)) for _ in range(3))

            assert d2_distance(p, r).value <= d2_distance(p, q).value + d2_distance(q, r).value + 1e-9

    def test_unequal_sectors_against_sampling(self, regular):
        """Test regular vs (150, 150, 60) degree sectors against a sampled symmetric difference."""
        q = ConicalPartition.from_widths(np.radians([150.0, 150.0, 60.0]))
        distance = d2_distance(regular, q)
        rotated = q.rotate(distance.rotation)

        points = RandomSource(5).generator.standard_normal((1_000_000, 2))
        labels_p, labels_q = classify(regular, points), classify(rotated, points)
        mismatch = 2.0 * float(np.mean(np.asarray(distance.permutation)[labels_p] != labels_q))

        assert distance.value == pytest.approx(math.sqrt(1.0 / 3.0), abs=1e-9)
        assert math.sqrt(mismatch) == pytest.approx(distance.value, abs=2e-3)
