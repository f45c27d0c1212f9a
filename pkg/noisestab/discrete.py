"""
Discrete k-ary noise stability on {0, ..., k-1}^n.

Symbols are 0-indexed: symbol 0 plays the role of the constant basis function W_0 = 1, and
the grade |sigma| of a multi-symbol counts its nonzero coordinates.
"""

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from noisestab.errors import EnumerationCapError, InvalidParameterError
from noisestab.gauss import check_rho
from noisestab.logger import setup_logger

logger = setup_logger(__name__)

# 3^10 inputs
DEFAULT_ENUMERATION_CAP = 59049
# k^(2n) (input, resample) pairs for the transition-matrix oracle
RERANDOMIZATION_CAP = 3 ** 14
SIMPLEX_TOLERANCE = 1e-12


@dataclass
class KaryFunction:
    """
    f: {0..k-1}^n -> R^k stored as an array of shape (k,)*n + (k,).

    With simplex=True (the default) every entry must be a point of the probability simplex.
    """

    k: int
    n: int
    table: np.ndarray
    simplex: bool = True

    def __post_init__(self):
        if self.k < 2 or self.n < 1:
            raise InvalidParameterError(f"Invalid k-ary function size: k={self.k}, n={self.n}")
        shape = (self.k,) * self.n + (self.k,)
        table = np.asarray(self.table, dtype=float)
        if table.size != self.k ** (self.n + 1):
            raise InvalidParameterError(f"Table has {table.size} entries, expected {self.k ** (self.n + 1)}")
        table = table.reshape(shape)
        if self.simplex:
            if np.any(table < -SIMPLEX_TOLERANCE) or np.any(np.abs(table.sum(axis=-1) - 1.0) > 1e-9):
                raise InvalidParameterError("Every entry must be a probability vector")
        self.table = table

    @property
    def inputs(self) -> int:
        return self.k ** self.n

    def flat(self) -> np.ndarray:
        """Rows in row-major input order, shape (k^n, k)."""
        return self.table.reshape(self.inputs, self.k)

    def __call__(self, x: Sequence[int]) -> np.ndarray:
        return self.table[tuple(int(v) for v in x)]

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "table": [float(v) for v in self.table.reshape(-1)]}

    @classmethod
    def from_dict(cls, data: dict) -> "KaryFunction":
        try:
            return cls(k=int(data["k"]), n=int(data["n"]), table=np.asarray(data["table"], dtype=float))
        except KeyError as e:
            raise InvalidParameterError(f"k-ary function record missing field: {str(e)}")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "KaryFunction":
        return cls.from_dict(json.loads(text))


@dataclass
class KaryBasis:
    """Rows W_0..W_{k-1}, orthonormal under <g, h> = (1/k) sum g(s) h(s), with W_0 = 1."""

    k: int
    matrix: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.matrix, dtype=float)
        if w.shape != (self.k, self.k):
            raise InvalidParameterError(f"Basis matrix must be {self.k}x{self.k}")
        if not np.allclose(w[0], 1.0, atol=1e-12):
            raise InvalidParameterError("First basis function must be constant 1")
        gram = w @ w.T / self.k
        if not np.allclose(gram, np.eye(self.k), atol=1e-10):
            raise InvalidParameterError("Basis is not orthonormal")
        self.matrix = w

    def inner(self, i: int, j: int) -> float:
        return float(np.dot(self.matrix[i], self.matrix[j]) / self.k)


def _exact_orthogonal_rows(k: int) -> List[List[Fraction]]:
    """Unnormalized Gram-Schmidt of 1, e_0 - 1/k, ..., e_{k-2} - 1/k in exact arithmetic."""
    rows = [[Fraction(1)] * k]
    for symbol in range(k - 1):
        v = [Fraction(int(s == symbol)) - Fraction(1, k) for s in range(k)]
        for u in rows:
            coef = sum(a * b for a, b in zip(v, u)) / sum(b * b for b in u)
            v = [a - coef * b for a, b in zip(v, u)]
        rows.append(v)
    return rows


def exact_gram(k: int) -> List[List[Fraction]]:
    """Gram matrix of the exact (unnormalized) construction; off-diagonal entries are exactly 0."""
    rows = _exact_orthogonal_rows(k)
    return [[sum(a * b for a, b in zip(u, v)) / k for v in rows] for u in rows]


def kary_basis(k: int, completion: Optional[np.ndarray] = None) -> KaryBasis:
    """
    Orthonormal basis of functions on {0..k-1}.

    By default W_1..W_{k-1} come from Gram-Schmidt on the indicator-minus-uniform functions of
    symbols 0, 1, ..., k-2 in that order, normalized so that W_j(0) >= 0. A custom orthonormal
    completion (rows W_1..W_{k-1}) may be supplied instead.

    Raises:
        InvalidParameterError: If k < 2 or the completion is not orthonormal
    """
    if k < 2:
        raise InvalidParameterError(f"Alphabet size must be at least 2, got {k}")
    if completion is not None:
        return KaryBasis(k, np.vstack([np.ones(k), np.asarray(completion, dtype=float)]))
    rows = []
    for row in _exact_orthogonal_rows(k):
        v = np.array([float(a) for a in row])
        v /= np.sqrt(np.dot(v, v) / k)
        if v[0] < 0.0:
            v = -v
        rows.append(v)
    return KaryBasis(k, np.array(rows))


def _apply_along_axes(matrix: np.ndarray, table: np.ndarray, n: int) -> np.ndarray:
    """Apply matrix to each of the first n axes of table."""
    out = table
    for axis in range(n):
        out = np.moveaxis(np.tensordot(matrix, out, axes=([1], [axis])), 0, axis)
    return out


def _grade(k: int, n: int) -> np.ndarray:
    """|sigma| = number of nonzero coordinates, shape (k,)*n."""
    return np.sum(np.indices((k,) * n) != 0, axis=0)


@dataclass
class FourierTable:
    """Coefficients f_hat_i(sigma) with shape (k,)*n + (k,), last axis the output index i."""

    k: int
    n: int
    coefficients: np.ndarray
    basis: KaryBasis

    @property
    def grade(self) -> np.ndarray:
        return _grade(self.k, self.n)

    def degree_weights(self) -> np.ndarray:
        """w_d = sum over |sigma| = d of sum_i f_hat_i(sigma)^2, d = 0..n."""
        energy = np.sum(self.coefficients ** 2, axis=-1)
        return np.bincount(self.grade.reshape(-1), weights=energy.reshape(-1), minlength=self.n + 1)


def _check_cap(k: int, n: int, cap: int):
    if k ** n > cap:
        raise EnumerationCapError(f"k^n = {k}^{n} = {k ** n} exceeds the enumeration cap {cap}")


def fourier_transform(f: KaryFunction, basis: Optional[KaryBasis] = None) -> FourierTable:
    """f_hat_i(sigma) = (1/k^n) sum_x f_i(x) W_sigma(x), one tensor contraction per coordinate."""
    basis = basis or kary_basis(f.k)
    coefficients = _apply_along_axes(basis.matrix / f.k, f.table, f.n)
    return FourierTable(f.k, f.n, coefficients, basis)


def inverse_fourier_transform(table: FourierTable, simplex: bool = False) -> KaryFunction:
    """f_i(x) = sum_sigma f_hat_i(sigma) W_sigma(x)."""
    values = _apply_along_axes(table.basis.matrix.T, table.coefficients, table.n)
    return KaryFunction(table.k, table.n, values, simplex=simplex)


def discrete_T_rho(f: KaryFunction, rho: float, basis: Optional[KaryBasis] = None) -> KaryFunction:
    """T_rho f by damping each coefficient with rho^|sigma|; the output is stored raw."""
    rho = check_rho(rho)
    table = fourier_transform(f, basis)
    damped = FourierTable(f.k, f.n, table.coefficients * np.power(rho, table.grade)[..., None], table.basis)
    return inverse_fourier_transform(damped)


def discrete_stability(
    f: KaryFunction,
    rho: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
    basis: Optional[KaryBasis] = None,
) -> float:
    """
    (1/k^n) sum_x <f(x), T_rho f(x)> by exact enumeration.

    Raises:
        EnumerationCapError: If k^n exceeds cap
    """
    _check_cap(f.k, f.n, cap)
    smoothed = discrete_T_rho(f, rho, basis)
    return float(np.mean(np.sum(f.flat() * smoothed.flat(), axis=1)))


def rerandomization_stability(f: KaryFunction, rho: float, cap: int = RERANDOMIZATION_CAP) -> float:
    """
    The same stability from the resampling model: each coordinate is kept with probability rho and
    redrawn uniformly otherwise, i.e. the kernel rho I + (1 - rho) J / k per coordinate. Sums
    over all k^(2n) (input, output) pairs; negative rho gives a signed kernel.

    Raises:
        EnumerationCapError: If k^(2n) exceeds cap
    """
    rho = check_rho(rho)
    if f.k ** (2 * f.n) > cap:
        raise EnumerationCapError(f"Rerandomization oracle needs {f.k ** (2 * f.n)} pairs; cap is {cap}")
    kernel = rho * np.eye(f.k) + (1.0 - rho) * np.full((f.k, f.k), 1.0 / f.k)
    transition = np.ones((1, 1))
    for _ in range(f.n):
        transition = np.kron(transition, kernel)
    rows = f.flat()
    return float(np.sum(transition * (rows @ rows.T)) / f.inputs)


def stability_polynomial(f: KaryFunction, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Coefficients w_0..w_n with discrete_stability(f, rho) = sum_d w_d rho^d."""
    _check_cap(f.k, f.n, cap)
    return fourier_transform(f).degree_weights()


def influence(f: KaryFunction, coordinate: int, output: int, basis: Optional[KaryBasis] = None) -> float:
    """sum over sigma with sigma_coordinate != 0 of f_hat_output(sigma)^2."""
    if not 0 <= coordinate < f.n or not 0 <= output < f.k:
        raise InvalidParameterError(f"Index out of range: coordinate={coordinate}, output={output}")
    coefficients = fourier_transform(f, basis).coefficients[..., output]
    mask = np.indices((f.k,) * f.n)[coordinate] != 0
    return float(np.sum(coefficients[mask] ** 2))


def plurality_fn(m: int, k: int) -> KaryFunction:
    """PLUR_{m,k}: e_j when symbol j has a strict plurality of the m votes, the uniform point otherwise."""
    if m < 1:
        raise InvalidParameterError(f"Plurality needs m >= 1 votes, got {m}")
    table = np.empty((k ** m, k))
    uniform = np.full(k, 1.0 / k)
    for idx, votes in enumerate(itertools.product(range(k), repeat=m)):
        counts = np.bincount(votes, minlength=k)
        winners = np.flatnonzero(counts == counts.max())
        table[idx] = np.eye(k)[winners[0]] if winners.size == 1 else uniform
    return KaryFunction(k, m, table)


def dictator_fn(k: int, n: int, coordinate: int = 0) -> KaryFunction:
    """f(x) = e_{x_coordinate}."""
    labels = np.indices((k,) * n)[coordinate]
    return KaryFunction(k, n, np.eye(k)[labels])


def constant_fn(k: int, n: int, point: Sequence[float]) -> KaryFunction:
    point = np.asarray(point, dtype=float)
    return KaryFunction(k, n, np.broadcast_to(point, (k,) * n + (k,)).copy())


def relabel(f: KaryFunction, permutation: Sequence[int]) -> KaryFunction:
    """g(x) = P f(pi^-1 x): the same function after renaming symbol s to permutation[s]."""
    perm = np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(f.k)):
        raise InvalidParameterError(f"Not a permutation of range({f.k}): {permutation}")
    inverse = np.argsort(perm)
    table = f.table
    for axis in range(f.n):
        table = np.take(table, inverse, axis=axis)
    return KaryFunction(f.k, f.n, table[..., inverse], simplex=f.simplex)


def random_simplex_fn(k: int, n: int, rng: np.random.Generator) -> KaryFunction:
    """Entries drawn from the flat Dirichlet distribution."""
    return KaryFunction(k, n, rng.dirichlet(np.ones(k), size=k ** n))


def plurality_trend(ms: Sequence[int], rhos: Sequence[float], k: int = 3, cap: int = DEFAULT_ENUMERATION_CAP) -> List[Dict]:
    """Rows {m, rho, value} of discrete_stability(PLUR_{m,k}, rho); the large-m limit is not asserted."""
    rows = []
    for m in ms:
        _check_cap(k, m, cap)
        weights = stability_polynomial(plurality_fn(m, k), cap)
        for rho in rhos:
            rho = check_rho(rho)
            value = float(np.dot(weights, np.power(rho, np.arange(m + 1))))
            rows.append({"m": m, "rho": rho, "value": value})
    logger.info("Plurality trend computed", extra={"ms": list(ms), "rhos": [float(r) for r in rhos], "k": k})
    return rows
