"""Unit tests for Hermite polynomials and series."""

import math

import numpy as np
import pytest

from noisestab.errors import DimensionMismatchError, InvalidParameterError
from noisestab.gauss import QuadratureGrid
from noisestab.hermite import (
    HermiteSeries,
    MultiIndex,
    damped_sum,
    derivative_sum,
    hermite_eval,
    hermite_eval_explicit,
    hermite_eval_multi,
    hermite_growth_bound,
    hermite_norm_sq,
    hermite_table,
    multi_indices,
    normalized_hermite_table,
)


class TestHermiteEval:
    """Test one-dimensional Hermite evaluation."""

    def test_low_degrees(self):
        """Test h_0..h_3 against their closed forms."""
        x = 1.7
        assert hermite_eval(0, x) == 1.0
        assert hermite_eval(1, x) == pytest.approx(x)
        assert hermite_eval(2, x) == pytest.approx((x * x - 1.0) / 2.0)
        assert hermite_eval(3, x) == pytest.approx((x ** 3 - 3.0 * x) / 6.0)

    def test_recurrence_matches_explicit_sum(self):
        """Test the recurrence against the factorial sum."""
        for ell in range(12):
            for x in (-2.5, -0.3, 0.0, 1.1, 3.0):
                assert hermite_eval(ell, x) == pytest.approx(hermite_eval_explicit(ell, x), rel=1e-10, abs=1e-12)

    def test_vectorized_input(self):
        """Test array input returns an array of the same shape."""
        x = np.linspace(-2.0, 2.0, 7)
        values = hermite_eval(2, x)

        assert values.shape == (7,)
        np.testing.assert_allclose(values, (x * x - 1.0) / 2.0)

    def test_negative_degree(self):
        """Test negative degree is rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            hermite_eval(-1, 0.5)

        assert "nonnegative" in str(exc_info.value)

    def test_non_finite_input(self):
        """Test NaN input is rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            hermite_eval(2, float("nan"))

        assert "finite" in str(exc_info.value)

    def test_orthogonality(self):
        """Test <h_a, h_b> = delta_ab / a! under the Gaussian measure."""
        grid = QuadratureGrid.tensor_gauss_hermite(1, 40)
        for a in range(6):
            for b in range(6):
                inner = grid.integrate(lambda y: hermite_eval(a, y[:, 0]) * hermite_eval(b, y[:, 0]))
                expected = 1.0 / math.factorial(a) if a == b else 0.0
                assert inner == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("lam", [0.3, 0.9])
    def test_generating_function(self, lam):
        """Test sum_l lam^l h_l(x) = exp(lam x - lam^2 / 2)."""
        x = np.linspace(-3.0, 3.0, 13)
        table = hermite_table(60, x)
        series = np.sum(lam ** np.arange(61)[:, None] * table, axis=0)

        np.testing.assert_allclose(series, np.exp(lam * x - 0.5 * lam * lam), rtol=1e-10)

    def test_normalized_table(self):
        """Test sqrt(l!) h_l from the normalized recurrence."""
        x = 0.8
        table = normalized_hermite_table(5, x)
        for ell in range(6):
            assert table[ell] == pytest.approx(math.sqrt(math.factorial(ell)) * hermite_eval(ell, x))


class TestMultiIndices:
    """Test multi-index enumeration and products."""

    def test_canonical_order(self):
        """Test indices come ordered by degree, then lexicographically."""
        indices = [m.entries for m in multi_indices(2, 2)]

        assert indices == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]

    def test_count(self):
        """Test the number of indices of degree <= D in n coordinates."""
        assert len(multi_indices(3, 4)) == math.comb(4 + 3, 3)

    def test_negative_entry(self):
        """Test negative entries are rejected."""
        with pytest.raises(InvalidParameterError):
            MultiIndex((1, -1))

    def test_degree(self):
        """Test the degree is the entry sum."""
        assert MultiIndex((2, 0, 3)).degree == 5

    def test_product_evaluation(self):
        """Test h_(1,2)(x) = h_1(x_1) h_2(x_2)."""
        assert hermite_eval_multi((1, 2), [0.5, 2.0]) == pytest.approx(0.5 * 1.5)

    def test_batch_evaluation(self):
        """Test evaluation over a batch of points."""
        points = np.array([[0.0, 1.0], [2.0, -1.0]])
        values = hermite_eval_multi((1, 1), points)

        np.testing.assert_allclose(values, [0.0, -2.0])

    def test_dimension_mismatch(self):
        """Test a point of the wrong length is rejected."""
        with pytest.raises(DimensionMismatchError) as exc_info:
            hermite_eval_multi((1, 1), [0.5, 0.5, 0.5])

        assert "does not match" in str(exc_info.value)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_orthonormality(self, n):
        """Test sqrt(l!) h_l are orthonormal for |l| <= 6 by tensor quadrature."""
        grid = QuadratureGrid.tensor_gauss_hermite(n, 40)
        indices = multi_indices(n, 6)
        values = np.stack(
            [hermite_eval_multi(ell, grid.points) * math.exp(0.5 * ell.log_factorial()) for ell in indices], axis=1
        )
        gram = values.T @ (grid.weights[:, None] * values)

        np.testing.assert_allclose(gram, np.eye(len(indices)), atol=1e-8)

    def test_generating_function_two_dimensions(self):
        """Test sum_l lam^l h_l(x) = exp(<lam, x> - |lam|^2 / 2) in the plane."""
        lam = np.array([0.3, 0.9])
        x = np.array([0.7, -1.8])
        series = sum(lam[0] ** ell[0] * lam[1] ** ell[1] * hermite_eval_multi(ell, x) for ell in multi_indices(2, 40))

        assert series == pytest.approx(math.exp(float(lam @ x) - 0.5 * float(lam @ lam)), rel=1e-10)

    def test_norm(self):
        """Test the squared norm 1/l!."""
        assert hermite_norm_sq((2, 1)) == pytest.approx(0.5)
        assert hermite_norm_sq((3,), log=True) == pytest.approx(-math.log(6.0))


class TestGrowthBound:
    """Test the Hermite growth bound."""

    def test_known_values(self):
        """Test direct substitutions."""
        assert hermite_growth_bound((1,), [0.5]) == pytest.approx(3.0)
        assert hermite_growth_bound((2, 0), [2.0, 0.0]) == pytest.approx(144.0)
        assert hermite_growth_bound((1, 1), [1.0, 1.0]) == pytest.approx(36.0)

    def test_bound_holds(self):
        """Test |sqrt(l!) h_l(x)| never exceeds the bound on random samples."""
        gen = np.random.default_rng(0)
        for _ in range(10_000):
            n = int(gen.integers(1, 5))
            ell = MultiIndex(tuple(int(v) for v in gen.multinomial(int(gen.integers(1, 31)), np.ones(n) / n)))
            x = gen.normal(scale=3.0, size=n)
            value = abs(hermite_eval_multi(ell, x)) * math.exp(0.5 * ell.log_factorial())
            assert value <= hermite_growth_bound(ell, x)

    def test_degree_zero(self):
        """Test the bound needs |l| >= 1."""
        with pytest.raises(InvalidParameterError) as exc_info:
            hermite_growth_bound((0, 0), [1.0, 1.0])

        assert "|l| >= 1" in str(exc_info.value)


class TestHermiteSeries:
    """Test sparse Hermite series."""

    @pytest.fixture
    def series(self):
        """Series with one coefficient in each of degrees 0, 1 and 2."""
        return HermiteSeries(
            dimension=2,
            coefficients={(0, 0): 0.5, (1, 0): 0.3, (1, 1): -0.2},
            truncation_degree=3,
        )

    def test_degree_weights(self, series):
        """Test squared coefficients are grouped by degree."""
        np.testing.assert_allclose(series.degree_weights(), [0.25, 0.09, 0.04, 0.0])

    def test_damped_norm(self, series):
        """Test sum rho^|l| a_l^2."""
        assert series.damped_norm_sq(0.5) == pytest.approx(0.25 + 0.5 * 0.09 + 0.25 * 0.04)

    def test_derivative_norm(self, series):
        """Test sum |l| rho^(|l|-1) a_l^2."""
        assert series.derivative_norm_sq(0.5) == pytest.approx(0.09 + 2.0 * 0.5 * 0.04)

    def test_evaluate(self, series):
        """Test evaluation through the normalized polynomials."""
        x = np.array([0.7, -1.2])
        expected = 0.5 + 0.3 * 0.7 - 0.2 * 0.7 * -1.2
        assert series.evaluate(x) == pytest.approx(expected)

    def test_mixture(self, series):
        """Test the coefficients of a convex combination."""
        other = HermiteSeries(dimension=2, coefficients={(0, 1): 1.0}, truncation_degree=1)
        mixed = series.mixture(other, 0.25)

        assert mixed[(0, 0)] == pytest.approx(0.125)
        assert mixed[(0, 1)] == pytest.approx(0.75)
        assert mixed.truncation_degree == 3

    def test_degree_above_truncation(self):
        """Test coefficients above the truncation degree are rejected."""
        with pytest.raises(InvalidParameterError) as exc_info:
            HermiteSeries(dimension=1, coefficients={(3,): 1.0}, truncation_degree=2)

        assert "exceeds truncation degree" in str(exc_info.value)

    def test_sums(self):
        """Test the degree-weight sums directly."""
        weights = np.array([1.0, 2.0, 3.0])
        assert damped_sum(weights, 0.0) == pytest.approx(1.0)
        assert damped_sum(weights, 0.5) == pytest.approx(1.0 + 1.0 + 0.75)
        assert derivative_sum(weights, 0.0) == pytest.approx(2.0)
        assert derivative_sum(weights, 0.5) == pytest.approx(2.0 + 3.0)
