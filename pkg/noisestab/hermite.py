"""Hermite polynomials h_l = He_l / l!, multi-indices and sparse Hermite series.

The polynomials follow the generating function exp(lam*x - lam**2/2) = sum lam**l h_l(x),
so sqrt(l!) h_l is orthonormal in L2 of the standard Gaussian measure.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln

from noisestab.errors import DimensionMismatchError, InvalidParameterError
from noisestab.logger import setup_logger

logger = setup_logger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class MultiIndex:
    """A multi-index l = (l_1, ..., l_n) of nonnegative integers."""

    entries: Tuple[int, ...]
    degree: int = field(init=False, compare=False)

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if not entries:
            raise InvalidParameterError("Multi-index must have at least one entry")
        if any(e < 0 for e in entries):
            raise InvalidParameterError(f"Multi-index entries must be nonnegative: {entries}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "degree", sum(entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self.entries)

    def __getitem__(self, i: int) -> int:
        return self.entries[i]

    @property
    def dimension(self) -> int:
        return len(self.entries)

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        """Canonical order: degree first, then lexicographic."""
        return (self.degree, self.entries)

    def __lt__(self, other: "MultiIndex") -> bool:
        return self.sort_key() < other.sort_key()

    def log_factorial(self) -> float:
        """log(l!) with l! = l_1! ... l_n!."""
        return float(sum(gammaln(e + 1.0) for e in self.entries))

    def padded(self, n: int) -> "MultiIndex":
        """The same index embedded in n >= dimension coordinates with trailing zeros."""
        if n < self.dimension:
            raise DimensionMismatchError(f"Cannot embed index of length {self.dimension} in {n} coordinates")
        return MultiIndex(self.entries + (0,) * (n - self.dimension))


def as_multi_index(ell: Union[MultiIndex, int, Iterable[int]]) -> MultiIndex:
    if isinstance(ell, MultiIndex):
        return ell
    if isinstance(ell, (int, np.integer)):
        return MultiIndex((int(ell),))
    return MultiIndex(tuple(ell))


def multi_indices(n: int, max_degree: int) -> List[MultiIndex]:
    """
    All multi-indices of length n with degree <= max_degree, in canonical order.

    Args:
        n: Number of coordinates
        max_degree: Largest total degree

    Returns:
        List ordered by degree, then lexicographically
    """
    if n < 1 or max_degree < 0:
        raise InvalidParameterError(f"Invalid multi-index range: n={n}, max_degree={max_degree}")

    def compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    result = []
    for degree in range(max_degree + 1):
        result.extend(MultiIndex(c) for c in compositions(degree, n))
    return result


def _checked_array(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("Hermite evaluation requires finite input")
    return arr


def hermite_table(max_degree: int, x: ArrayLike) -> np.ndarray:
    """
    Evaluate h_0, ..., h_D at x by the three-term recurrence.

    h_{l+1}(x) = (x h_l(x) - h_{l-1}(x)) / (l + 1)

    Args:
        max_degree: D >= 0
        x: Scalar or array of evaluation points

    Returns:
        Array of shape (D + 1,) + shape(x)
    """
    if max_degree < 0:
        raise InvalidParameterError(f"Hermite degree must be nonnegative: {max_degree}")
    arr = _checked_array(x)
    table = np.empty((max_degree + 1,) + arr.shape)
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = arr
    for ell in range(1, max_degree):
        table[ell + 1] = (arr * table[ell] - table[ell - 1]) / (ell + 1)
    return table


def normalized_hermite_table(max_degree: int, x: ArrayLike) -> np.ndarray:
    """
    Evaluate the orthonormal polynomials sqrt(l!) h_l for l = 0..D.

    Uses the normalized recurrence
    p_{l+1} = (x p_l - sqrt(l) p_{l-1}) / sqrt(l + 1), which avoids factorial growth.
    """
    if max_degree < 0:
        raise InvalidParameterError(f"Hermite degree must be nonnegative: {max_degree}")
    arr = _checked_array(x)
    table = np.empty((max_degree + 1,) + arr.shape)
    table[0] = 1.0
    if max_degree >= 1:
        table[1] = arr
    for ell in range(1, max_degree):
        table[ell + 1] = (arr * table[ell] - math.sqrt(ell) * table[ell - 1]) / math.sqrt(ell + 1)
    return table


def hermite_eval(ell: int, x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate h_ell at x.

    Args:
        ell: Degree, ell >= 0
        x: Scalar or array; must be finite

    Returns:
        h_ell(x), a float for scalar input

    Raises:
        InvalidParameterError: If ell < 0 or x is not finite
    """
    values = hermite_table(int(ell), x)[int(ell)]
    return float(values) if values.ndim == 0 else values


def hermite_eval_explicit(ell: int, x: float) -> float:
    """Closed factorial sum for h_ell(x); the reference the recurrence is checked against."""
    if ell < 0:
        raise InvalidParameterError(f"Hermite degree must be nonnegative: {ell}")
    x = float(_checked_array(x))
    total = 0.0
    for m in range(ell // 2 + 1):
        total += x ** (ell - 2 * m) * (-1) ** m * 2.0 ** (-m) / (math.factorial(m) * math.factorial(ell - 2 * m))
    return total


def hermite_eval_multi(ell: Union[MultiIndex, Iterable[int]], x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate the product h_l(x) = prod_i h_{l_i}(x_i).

    Args:
        ell: Multi-index of length n
        x: Vector of length n, or array of shape (..., n)

    Returns:
        Product of one-dimensional evaluations

    Raises:
        DimensionMismatchError: If the last axis of x does not match len(ell)
    """
    ell = as_multi_index(ell)
    arr = _checked_array(x)
    if arr.ndim == 0 or arr.shape[-1] != ell.dimension:
        raise DimensionMismatchError(
            f"Point of shape {arr.shape} does not match multi-index of length {ell.dimension}"
        )
    result = np.ones(arr.shape[:-1])
    for i, degree in enumerate(ell.entries):
        if degree:
            result = result * hermite_table(degree, arr[..., i])[degree]
    return float(result) if result.ndim == 0 else result


def hermite_norm_sq(ell: Union[MultiIndex, Iterable[int], int], log: bool = False) -> float:
    """
    Return the squared L2 norm 1/l! of h_l, or its logarithm.

    Args:
        ell: Multi-index
        log: Return -log(l!) instead

    Returns:
        1/l! (computed through log-gamma)
    """
    value = -as_multi_index(ell).log_factorial()
    return value if log else math.exp(value)


def hermite_growth_bound(ell: Union[MultiIndex, Iterable[int]], x: ArrayLike) -> float:
    """
    Upper bound |l|^n 3^|l| prod_i max(1, |x_i|^{l_i}) on |sqrt(l!) h_l(x)|.

    Raises:
        InvalidParameterError: If |l| = 0
        DimensionMismatchError: If len(x) differs from len(ell)
    """
    ell = as_multi_index(ell)
    if ell.degree < 1:
        raise InvalidParameterError("Growth bound requires |l| >= 1")
    arr = _checked_array(x).reshape(-1)
    if arr.shape[0] != ell.dimension:
        raise DimensionMismatchError(f"Point of length {arr.shape[0]} does not match index of length {ell.dimension}")
    bound = float(ell.degree) ** ell.dimension * 3.0 ** ell.degree
    for degree, coordinate in zip(ell.entries, arr):
        bound *= max(1.0, abs(float(coordinate)) ** degree)
    return bound


@dataclass
class HermiteSeries:
    """
    Truncated expansion f = sum a_l sqrt(l!) h_l in L2 of the Gaussian measure.

    Coefficients are stored sparsely; iteration follows the canonical multi-index order.
    """

    dimension: int
    coefficients: Dict[MultiIndex, float]
    truncation_degree: int

    def __post_init__(self):
        cleaned = {}
        for key, value in self.coefficients.items():
            key = as_multi_index(key)
            if key.dimension != self.dimension:
                raise DimensionMismatchError(
                    f"Coefficient key {key.entries} does not have length {self.dimension}"
                )
            if key.degree > self.truncation_degree:
                raise InvalidParameterError(
                    f"Coefficient degree {key.degree} exceeds truncation degree {self.truncation_degree}"
                )
            cleaned[key] = float(value)
        self.coefficients = cleaned

    def __getitem__(self, ell) -> float:
        return self.coefficients.get(as_multi_index(ell), 0.0)

    def __len__(self) -> int:
        return len(self.coefficients)

    def items(self) -> List[Tuple[MultiIndex, float]]:
        return sorted(self.coefficients.items(), key=lambda kv: kv[0].sort_key())

    def degree_weights(self) -> np.ndarray:
        """w_d = sum over |l| = d of a_l^2, for d = 0..truncation_degree."""
        weights = np.zeros(self.truncation_degree + 1)
        for key, value in self.coefficients.items():
            weights[key.degree] += value * value
        return weights

    def norm_sq(self) -> float:
        return float(self.degree_weights().sum())

    def damped_norm_sq(self, rho: float) -> float:
        """sum_l rho^|l| a_l^2, the quadratic form of the noise operator."""
        return damped_sum(self.degree_weights(), rho)

    def derivative_norm_sq(self, rho: float) -> float:
        """sum_l |l| rho^(|l|-1) a_l^2, the rho-derivative of damped_norm_sq."""
        return derivative_sum(self.degree_weights(), rho)

    def evaluate(self, x: ArrayLike) -> Union[float, np.ndarray]:
        """Evaluate the truncated series at a point or an array of points of shape (..., n)."""
        arr = _checked_array(x)
        if arr.shape[-1] != self.dimension:
            raise DimensionMismatchError(f"Point of shape {arr.shape} does not match dimension {self.dimension}")
        tables = [normalized_hermite_table(self.truncation_degree, arr[..., i]) for i in range(self.dimension)]
        total = np.zeros(arr.shape[:-1])
        for key, value in self.coefficients.items():
            term = np.full(arr.shape[:-1], value)
            for i, degree in enumerate(key.entries):
                term = term * tables[i][degree]
            total = total + term
        return float(total) if total.ndim == 0 else total

    def mixture(self, other: "HermiteSeries", lam: float) -> "HermiteSeries":
        """Coefficients of lam * self + (1 - lam) * other."""
        if other.dimension != self.dimension:
            raise DimensionMismatchError("Cannot mix series of different dimensions")
        keys = set(self.coefficients) | set(other.coefficients)
        return HermiteSeries(
            dimension=self.dimension,
            coefficients={k: lam * self[k] + (1.0 - lam) * other[k] for k in keys},
            truncation_degree=max(self.truncation_degree, other.truncation_degree),
        )


def damped_sum(weights: np.ndarray, rho: float) -> float:
    """sum_d rho^d w_d for degree weights w."""
    powers = np.power(float(rho), np.arange(len(weights)))
    return float(np.dot(powers, weights))


def derivative_sum(weights: np.ndarray, rho: float) -> float:
    """sum_{d >= 1} d rho^(d-1) w_d for degree weights w."""
    if len(weights) < 2:
        return 0.0
    degrees = np.arange(1, len(weights))
    powers = np.power(float(rho), degrees - 1)
    return float(np.dot(degrees * powers, weights[1:]))
