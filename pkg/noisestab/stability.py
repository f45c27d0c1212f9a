"""Noise operator T_rho, generator L, rho-derivatives, noise stability J and psi_rho."""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from noisestab.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    MethodUnavailableError,
    QuadratureError,
    TruncationError,
)
from noisestab.gauss import (
    TWO_PI,
    AffinePiece,
    QuadratureGrid,
    RandomSource,
    angle_difference_density,
    check_rho,
    gaussian_surface_measure_shifted,
    sample_correlated_pair,
    wedge_integral,
    wedge_measure,
)
from noisestab.hermite import HermiteSeries, MultiIndex, damped_sum, derivative_sum, multi_indices, normalized_hermite_table
from noisestab.logger import setup_logger
from noisestab.parallel import map_chunks, resolve_workers
from noisestab.partition import ConicalPartition, arc_overlap, cell_measures, classify

logger = setup_logger(__name__)

METHODS = ("quadrature2d", "montecarlo", "hermite_series")

DEFAULT_SERIES_DEGREE = 24
DEFAULT_SERIES_TOL = 1e-8
DEFAULT_MC_BUDGET = 1_000_000
MC_CHUNK = 250_000
FD_RHO_STEP = 1e-4
FD_SPACE_STEP = 1e-4

Handle = Callable[[np.ndarray], np.ndarray]


@dataclass
class StabilityResult:
    """A noise stability value with the method used and its error estimate."""

    value: float
    method: str
    error_estimate: float
    params: Dict = field(default_factory=dict)
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "error_estimate": self.error_estimate,
            "params": self.params,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class OperatorPoint:
    x: Tuple[float, ...]
    rho: float
    value: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.x) or not math.isfinite(self.value):
            raise InvalidParameterError("Operator point entries must be finite")


class CellIndicator:
    """
    f = sum_i weights[i] 1_{A_i} for the cells of a partition.

    Callable on arrays of shape (..., n). Operators recognise this handle and use exact
    planar formulas when the partition is planar.
    """

    def __init__(self, partition: ConicalPartition, weights: Sequence[float]):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (partition.k,):
            raise DimensionMismatchError(f"Expected {partition.k} cell weights, got {weights.shape}")
        self.partition = partition
        self.weights = weights

    @classmethod
    def cell(cls, partition: ConicalPartition, i: int) -> "CellIndicator":
        weights = np.zeros(partition.k)
        weights[i] = 1.0
        return cls(partition, weights)

    @classmethod
    def difference(cls, partition: ConicalPartition, i: int, j: int) -> "CellIndicator":
        weights = np.zeros(partition.k)
        weights[i] += 1.0
        weights[j] -= 1.0
        return cls(partition, weights)

    @property
    def n(self) -> int:
        return self.partition.n

    def active_arcs(self) -> List[Tuple[float, float, float]]:
        """(weight, start, width) for every weighted cell of a planar partition."""
        arcs = self.partition.planar_arcs()
        return [(float(w), lo, width) for w, (lo, width) in zip(self.weights, arcs) if w != 0.0]

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.weights[classify(self.partition, y)]


def _planar_indicator(f: Handle) -> bool:
    return isinstance(f, CellIndicator) and f.partition.is_planar


@lru_cache(maxsize=8)
def _default_grid(n: int) -> QuadratureGrid:
    if n <= 3:
        return QuadratureGrid.tensor_gauss_hermite(n, 40)
    if n == 4:
        return QuadratureGrid.tensor_gauss_hermite(n, 16)
    return QuadratureGrid.monte_carlo(n, 200_000, RandomSource(0))


def _points(x, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("Evaluation point must be finite")
    if n is not None and arr.shape[-1] != n:
        raise DimensionMismatchError(f"Point of shape {arr.shape} does not match dimension {n}")
    return arr


def _scalar(value: np.ndarray) -> Union[float, np.ndarray]:
    return float(value) if np.ndim(value) == 0 else value


def T_rho_apply(
    f: Handle,
    rho: float,
    x: Union[Sequence[float], np.ndarray],
    grid: Optional[QuadratureGrid] = None,
) -> Union[float, np.ndarray]:
    """
    Noise operator T_rho f(x) = integral of f(x rho + y sqrt(1 - rho^2)) against the Gaussian.

    Args:
        f: Vectorized handle on arrays (..., n); CellIndicator of a planar partition is exact
        rho: Correlation in [-1, 1]; rho = 1 and -1 give f(x) and f(-x)
        x: Point (n,) or batch (N, n)
        grid: Quadrature grid for generic handles (tensor Gauss-Hermite by default)

    Returns:
        Value at x, or an array over the batch

    Raises:
        QuadratureError: If f is not integrable on the grid
    """
    rho = check_rho(rho)
    arr = _points(x)
    if abs(rho) == 1.0:
        return _scalar(np.asarray(f(rho * arr), dtype=float))
    s = math.sqrt(1.0 - rho * rho)
    if _planar_indicator(f):
        apex = -rho * arr[..., :2] / s
        total = np.zeros(arr.shape[:-1])
        for weight, lo, width in f.active_arcs():
            total = total + weight * wedge_measure(apex, lo, width)
        return _scalar(total)
    grid = grid or _default_grid(arr.shape[-1])
    if grid.dimension != arr.shape[-1]:
        raise DimensionMismatchError(f"Grid dimension {grid.dimension} does not match point {arr.shape}")
    batch = np.atleast_2d(arr)
    values = np.asarray(f(rho * batch[:, None, :] + s * grid.points[None, :, :]), dtype=float)
    totals = values @ grid.weights
    if not np.all(np.isfinite(totals)):
        raise QuadratureError(f"Non-finite quadrature sum on {grid.scheme} grid")
    return float(totals[0]) if arr.ndim == 1 else totals


def noise_operator_handle(f: Handle, rho: float, grid: Optional[QuadratureGrid] = None) -> Handle:
    """The function y -> T_rho f(y) as a vectorized handle."""

    def handle(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, y.shape[-1])
        values = T_rho_apply(f, rho, flat, grid)
        return np.asarray(values).reshape(y.shape[:-1])

    return handle


def L_apply(f: Handle, x: Union[Sequence[float], np.ndarray], h: Optional[float] = None) -> float:
    """
    Generator L f(x) = -Laplacian f(x) + <x, grad f(x)> by central differences.

    Args:
        f: Vectorized handle on arrays (N, n)
        x: Point (n,)
        h: Step; defaults to 1e-4 max(1, |x|)
    """
    x = _points(x).reshape(-1)
    n = x.shape[0]
    h = h if h is not None else FD_SPACE_STEP * max(1.0, float(np.linalg.norm(x)))
    offsets = np.vstack([np.zeros(n), h * np.eye(n), -h * np.eye(n)])
    values = np.asarray(f(x[None, :] + offsets), dtype=float).reshape(-1)
    center, plus, minus = values[0], values[1 : n + 1], values[n + 1 :]
    laplacian = float(np.sum(plus - 2.0 * center + minus)) / (h * h)
    gradient = (plus - minus) / (2.0 * h)
    return -laplacian + float(np.dot(x, gradient))


class DerivativeRoutes(NamedTuple):
    integral: float
    generator: float


def dT_drho(
    f: Handle,
    rho: float,
    x: Union[Sequence[float], np.ndarray],
    grid: Optional[QuadratureGrid] = None,
    route: str = "integral",
) -> Union[float, DerivativeRoutes]:
    """
    d/drho T_rho f(x).

    The integral route evaluates
        s^-1 [ <x, int y f(x rho + y s) dgamma> + rho s^-1 int sum_i (1 - y_i^2) f(x rho + y s) dgamma ],
    s = sqrt(1 - rho^2); planar cell indicators use polar quadrature around the wedge apex.
    The generator route evaluates rho^-1 L T_rho f(x) by finite differences.

    Args:
        f: Vectorized handle
        rho: |rho| < 1; rho = 0 only for the integral route
        x: Point (n,)
        grid: Quadrature grid for generic handles
        route: "integral", "generator" or "both"

    Returns:
        A float, or DerivativeRoutes for route="both"
    """
    rho = check_rho(rho, open_interval=True)
    x = _points(x).reshape(-1)
    if route == "integral":
        return _dT_integral(f, rho, x, grid)
    if route == "generator":
        return _dT_generator(f, rho, x, grid)
    if route == "both":
        return DerivativeRoutes(_dT_integral(f, rho, x, grid), _dT_generator(f, rho, x, grid))
    raise InvalidParameterError(f"Unknown derivative route: {route}")


def _dT_generator(f: Handle, rho: float, x: np.ndarray, grid: Optional[QuadratureGrid]) -> float:
    if rho == 0.0:
        raise InvalidParameterError("The generator route divides by rho; use the integral route at rho = 0")
    return L_apply(noise_operator_handle(f, rho, grid), x) / rho


def _moment_integrals(f: Handle, rho: float, x: np.ndarray, grid: Optional[QuadratureGrid]) -> Tuple[np.ndarray, float]:
    """(int y f(c + s y) dgamma, int sum(1 - y_i^2) f(c + s y) dgamma) with c = rho x."""
    s = math.sqrt(1.0 - rho * rho)
    if _planar_indicator(f):
        apex = -rho * x[:2] / s

        def integrand(y: np.ndarray) -> np.ndarray:
            return np.stack([y[..., 0], y[..., 1], 2.0 - y[..., 0] ** 2 - y[..., 1] ** 2], axis=-1)

        vector = np.zeros(x.shape[0])
        volume = 0.0
        for weight, lo, width in f.active_arcs():
            moments = wedge_integral(integrand, apex, lo, width)
            vector[:2] += weight * moments[:2]
            volume += weight * moments[2]
        return vector, volume
    grid = grid or _default_grid(x.shape[0])
    values = np.asarray(f(rho * x[None, :] + s * grid.points), dtype=float) * grid.weights
    vector = grid.points.T @ values
    volume = float(np.sum((1.0 - grid.points ** 2).sum(axis=1) * values))
    return vector, volume


def _dT_integral(f: Handle, rho: float, x: np.ndarray, grid: Optional[QuadratureGrid]) -> float:
    s = math.sqrt(1.0 - rho * rho)
    vector, volume = _moment_integrals(f, rho, x, grid)
    return (float(np.dot(x, vector)) + rho * volume / s) / s


def dT_drho_finite_difference(
    f: Handle,
    rho: float,
    x: Union[Sequence[float], np.ndarray],
    grid: Optional[QuadratureGrid] = None,
    h: float = FD_RHO_STEP,
) -> float:
    """Centered difference (T_{rho+h} f - T_{rho-h} f)(x) / 2h."""
    return (T_rho_apply(f, rho + h, x, grid) - T_rho_apply(f, rho - h, x, grid)) / (2.0 * h)


# Boundary-measure formulas for planar partitions


def _faces(lo: float, width: float) -> List[AffinePiece]:
    """Boundary rays of a sector as half-lines whose normal points into the sector."""
    if width <= 0.0 or width >= TWO_PI:
        return []
    hi = lo + width
    return [
        AffinePiece(normal=(-math.sin(lo), math.cos(lo)), direction=(math.cos(lo), math.sin(lo))),
        AffinePiece(normal=(math.sin(hi), -math.cos(hi)), direction=(math.cos(hi), math.sin(hi))),
    ]


def _boundary_sum(f: CellIndicator, rho: float, x: np.ndarray) -> np.ndarray:
    """sum over weighted faces of <x, nu_in> times the surface measure of the shifted face."""
    s = math.sqrt(1.0 - rho * rho)
    planar = x[..., :2]
    total = np.zeros(x.shape[:-1])
    for weight, lo, width in f.active_arcs():
        for piece in _faces(lo, width):
            measure = gaussian_surface_measure_shifted(piece, rho * planar, s)
            total = total + weight * (planar @ np.asarray(piece.normal)) * measure
    return total


def lt_rho_indicator(
    p: ConicalPartition,
    i: Union[int, Sequence[float]],
    rho: float,
    x: Union[Sequence[float], np.ndarray],
) -> Union[float, np.ndarray]:
    """
    rho^-1 L T_rho f(x) for f = 1_{A_i} (or a weighted cell combination) of a planar partition.

    Closed form s^-3 sum_F <x, nu_F> gamma(delta_{(F - rho x)/s}), with the volume
    term folded in through the divergence identity. Vectorized over x.
    """
    rho = check_rho(rho, open_interval=True)
    f = CellIndicator.cell(p, i) if np.ndim(i) == 0 else CellIndicator(p, i)
    arr = _points(x, p.n)
    s = math.sqrt(1.0 - rho * rho)
    return _scalar(_boundary_sum(f, rho, arr) / s ** 3)


def volume_term(p: ConicalPartition, i: int, j: int, rho: float, x: Union[Sequence[float], np.ndarray]) -> float:
    """int sum_i (1 - y_i^2) (1_{A_i} - 1_{A_j})(x rho + y s) dgamma(y) by wedge quadrature."""
    rho = check_rho(rho, open_interval=True)
    f = CellIndicator.difference(p, i, j)
    _, volume = _moment_integrals(f, rho, _points(x, p.n).reshape(-1), None)
    return volume


def volume_term_closed_form(
    p: ConicalPartition, i: int, j: int, rho: float, x: Union[Sequence[float], np.ndarray]
) -> float:
    """The same volume term from the divergence identity: (rho / s) sum_F <x, nu_F> m_F."""
    rho = check_rho(rho, open_interval=True)
    s = math.sqrt(1.0 - rho * rho)
    f = CellIndicator.difference(p, i, j)
    return float(rho / s * _boundary_sum(f, rho, _points(x, p.n).reshape(-1)))


@dataclass(frozen=True)
class LTDifference:
    """rho^-1 L T_rho (1_{A_i} - 1_{A_j})(x) by two routes."""

    boundary_route: Optional[float]
    direct_route: float
    surface_term: Optional[float]
    volume_term: float

    @property
    def value(self) -> float:
        return self.boundary_route if self.boundary_route is not None else self.direct_route

    @property
    def discrepancy(self) -> float:
        if self.boundary_route is None:
            return math.nan
        return abs(self.boundary_route - self.direct_route)


def LT_rho_difference(
    p: ConicalPartition,
    i: int,
    j: int,
    rho: float,
    x: Union[Sequence[float], np.ndarray],
) -> LTDifference:
    """
    rho^-1 L T_rho (1_{A_i} - 1_{A_j})(x) two ways.

    (a) boundary route: closed-form surface term s^-1 sum_F <x, nu_F> m_F plus
        rho s^-2 times the divergence-identity volume term;
    (b) direct route: dT_drho on the indicator difference, with the volume term by quadrature.
    Non-planar partitions return route (b) only.
    """
    if i == j:
        raise InvalidParameterError("LT difference needs two distinct cells")
    rho = check_rho(rho, open_interval=True)
    if rho == 0.0:
        raise InvalidParameterError("LT difference needs rho != 0")
    x = _points(x, p.n).reshape(-1)
    f = CellIndicator.difference(p, i, j)
    s = math.sqrt(1.0 - rho * rho)
    if not p.is_planar:
        logger.warning("Boundary route unavailable for non-planar partition; using direct route only")
        vector, volume = _moment_integrals(f, rho, x, None)
        direct = (float(np.dot(x, vector)) + rho * volume / s) / s
        return LTDifference(None, direct, None, volume)
    vector, volume = _moment_integrals(f, rho, x, None)
    direct = (float(np.dot(x, vector)) + rho * volume / s) / s
    faces = float(_boundary_sum(f, rho, x))
    surface = faces / s
    closed_volume = rho / s * faces
    return LTDifference(
        boundary_route=surface + rho * closed_volume / (s * s),
        direct_route=direct,
        surface_term=surface,
        volume_term=closed_volume,
    )


# Hermite data of planar sectors


class SectorTable:
    """
    Angular Fourier table of Hermite coefficients of planar sectors.

    g_l(theta) = (2 pi)^-1 int_0^inf sqrt(l!) h_l(r e_theta) r e^{-r^2/2} dr is a trigonometric
    polynomial of degree <= |l|, so its Fourier modes (sampled on a uniform angle grid)
    integrate exactly over any arc.
    """

    def __init__(self, max_degree: int, radial_nodes: int = 160, r_max: float = 16.0):
        self.max_degree = int(max_degree)
        d = self.max_degree
        samples = 128
        while samples <= 4 * (d + 1):
            samples *= 2
        theta = TWO_PI * np.arange(samples) / samples
        r, wr = leggauss(radial_nodes)
        r = 0.5 * r_max * (r + 1.0)
        wr = 0.5 * r_max * wr * r * np.exp(-0.5 * r * r) / TWO_PI
        px = normalized_hermite_table(d, np.outer(r, np.cos(theta)))
        py = normalized_hermite_table(d, np.outer(r, np.sin(theta)))
        g = np.einsum("arm,brm,r->abm", px, py, wr)
        modes = np.fft.rfft(g, axis=-1)[..., : d + 1] / samples
        self.modes = modes
        degree = np.add.outer(np.arange(d + 1), np.arange(d + 1))
        self.degree = degree
        self.mask = degree <= d

    def coefficients(self, lo: float, width: float) -> np.ndarray:
        """Matrix c[a, b] = int_sector sqrt(a! b!) h_a(x_1) h_b(x_2) dgamma_2 (zero above max degree)."""
        m = np.arange(1, self.max_degree + 1)
        weights = np.empty(self.max_degree + 1, dtype=complex)
        weights[0] = width
        weights[1:] = 2.0 * (np.exp(1j * m * (lo + width)) - np.exp(1j * m * lo)) / (1j * m)
        coeffs = np.real(self.modes @ weights)
        return np.where(self.mask, coeffs, 0.0)

    def degree_weights(self, lo: float, width: float) -> np.ndarray:
        """w_d = sum over a + b = d of c[a, b]^2."""
        c2 = self.coefficients(lo, width) ** 2
        return np.bincount(self.degree.ravel(), weights=c2.ravel(), minlength=2 * self.max_degree + 1)[
            : self.max_degree + 1
        ]


@lru_cache(maxsize=4)
def hermite_sector_table(max_degree: int = DEFAULT_SERIES_DEGREE) -> SectorTable:
    logger.debug("Building sector Hermite table", extra={"max_degree": max_degree})
    return SectorTable(max_degree)


def hermite_coefficients_of_cell(
    p: ConicalPartition,
    i: int,
    max_degree: int = DEFAULT_SERIES_DEGREE,
    rng: Optional[RandomSource] = None,
    samples: int = 200_000,
) -> HermiteSeries:
    """
    Coefficients int_{A_i} sqrt(l!) h_l dgamma_n for |l| <= max_degree.

    Planar cells use the exact sector table (indices with l_j > 0 for j >= 3 vanish);
    other cones are estimated by Monte Carlo with the given stream.
    """
    if not 0 <= i < p.k:
        raise InvalidParameterError(f"Cell index {i} out of range for k={p.k}")
    if p.is_planar:
        table = hermite_sector_table(max_degree)
        c = table.coefficients(*p.arcs[i])
        coefficients = {}
        for a in range(max_degree + 1):
            for b in range(max_degree + 1 - a):
                key = MultiIndex((a, b) + (0,) * (p.n - 2))
                coefficients[key] = float(c[a, b])
        return HermiteSeries(dimension=p.n, coefficients=coefficients, truncation_degree=max_degree)
    rng = rng or RandomSource(0)
    points = rng.generator.standard_normal((samples, p.n))
    mask = (classify(p, points) == i).astype(float)
    tables = [normalized_hermite_table(max_degree, points[:, j]) for j in range(p.n)]
    coefficients = {}
    for ell in multi_indices(p.n, max_degree):
        product = mask.copy()
        for j, degree in enumerate(ell.entries):
            if degree:
                product *= tables[j][degree]
        coefficients[ell] = float(product.mean())
    logger.info("Estimated Hermite coefficients by Monte Carlo", extra={"samples": samples, "seed": rng.seed})
    return HermiteSeries(dimension=p.n, coefficients=coefficients, truncation_degree=max_degree)


def cell_degree_weights(p: ConicalPartition, max_degree: int = DEFAULT_SERIES_DEGREE) -> np.ndarray:
    """Array (k, D + 1) of per-cell degree weights sum_{|l| = d} c_l^2."""
    if p.is_planar:
        table = hermite_sector_table(max_degree)
        return np.array([table.degree_weights(lo, width) for lo, width in p.arcs])
    return np.array([hermite_coefficients_of_cell(p, i, max_degree).degree_weights() for i in range(p.k)])


def series_tail_bound(rho: float, max_degree: int, mass: float = 1.0) -> float:
    """Bound rho^(D+1) / (1 - rho) times total mass on the J series tail."""
    r = abs(rho)
    return r ** (max_degree + 1) / (1.0 - r) * mass


def derivative_tail_bound(rho: float, max_degree: int, mass: float = 1.0) -> float:
    """Bound sum_{d > D} d |rho|^(d-1) times total mass on the psi_rho series tail."""
    r = abs(rho)
    d = max_degree
    return ((d + 1) * r ** d * (1.0 - r) + r ** (d + 1)) / (1.0 - r) ** 2 * mass


def psi_rho_from_weights(weights: np.ndarray, rho: float) -> float:
    return float(sum(derivative_sum(w, rho) for w in np.atleast_2d(weights)))


def psi_rho(
    p: ConicalPartition,
    rho: float,
    max_degree: int = DEFAULT_SERIES_DEGREE,
    tol: float = DEFAULT_SERIES_TOL,
) -> float:
    """
    psi_rho = d/drho J = sum_i sum_l |l| rho^(|l|-1) (int_{A_i} sqrt(l!) h_l)^2, truncated at max_degree.

    Raises:
        TruncationError: If the tail bound exceeds tol
    """
    rho = check_rho(rho, open_interval=True)
    tail = derivative_tail_bound(rho, max_degree)
    if tail > tol:
        raise TruncationError(
            f"psi_rho tail bound {tail:.3e} exceeds tolerance {tol:.1e} at degree {max_degree}, rho={rho}"
        )
    return psi_rho_from_weights(cell_degree_weights(p, max_degree), rho)


def psi_rho_from_series(series: Sequence[HermiteSeries], rho: float) -> float:
    """psi_rho of a tuple of functions given by their Hermite series."""
    return float(sum(s.derivative_norm_sq(rho) for s in series))


def noise_stability_J(
    p: ConicalPartition,
    rho: float,
    method: Optional[str] = None,
    *,
    budget: int = DEFAULT_MC_BUDGET,
    rng: Optional[RandomSource] = None,
    nodes: int = 64,
    max_degree: int = DEFAULT_SERIES_DEGREE,
    tol: Optional[float] = None,
    workers: Optional[int] = None,
) -> StabilityResult:
    """
    Noise stability J = sum_i P(X in A_i, Y in A_i) for rho-correlated Gaussians X, Y.

    Args:
        p: Partition
        rho: Correlation in [-1, 1]
        method: "quadrature2d", "montecarlo" or "hermite_series"; defaults to
            quadrature2d for planar partitions and montecarlo otherwise
        budget: Monte Carlo sample count
        rng: Monte Carlo stream (seed 0 when omitted)
        nodes: Gauss-Legendre nodes per smooth piece for quadrature2d
        max_degree: Series truncation degree
        tol: Series tail tolerance; None reports the tail without enforcing it
        workers: Monte Carlo workers (NOISESTAB_WORKERS when omitted)

    Raises:
        MethodUnavailableError: If the method does not apply to the partition
        TruncationError: If the series tail exceeds tol
    """
    rho = check_rho(rho)
    if method is None:
        method = "quadrature2d" if p.is_planar else "montecarlo"
    if method not in METHODS:
        raise MethodUnavailableError(f"Unknown stability method: {method}")
    if method == "quadrature2d":
        if not p.is_planar:
            raise MethodUnavailableError("quadrature2d needs a planar sector partition")
        value = _j_quadrature(p, rho, nodes)
        error = abs(_j_quadrature(p, rho, 2 * nodes) - value) if abs(rho) < 1.0 else 0.0
        return StabilityResult(value, method, error, {"rho": rho, "nodes": nodes})
    if method == "hermite_series":
        if abs(rho) >= 1.0:
            raise MethodUnavailableError("hermite_series needs |rho| < 1")
        weights = cell_degree_weights(p, max_degree)
        tail = series_tail_bound(rho, max_degree, float(cell_measures(p)[0].sum()))
        if tol is not None and tail > tol:
            raise TruncationError(f"J series tail bound {tail:.3e} exceeds tolerance {tol:.1e}")
        value = float(sum(damped_sum(w, rho) for w in weights))
        return StabilityResult(value, method, tail, {"rho": rho, "max_degree": max_degree})
    return _j_monte_carlo(p, rho, budget, rng or RandomSource(0), workers)


def _j_quadrature(p: ConicalPartition, rho: float, nodes: int) -> float:
    arcs = p.planar_arcs()
    if rho == 1.0:
        return float(sum(w for _, w in arcs) / TWO_PI)
    if rho == -1.0:
        return float(sum(arc_overlap(lo, w, lo + math.pi, w) for lo, w in arcs) / TWO_PI)
    x, wx = leggauss(nodes)
    total = 0.0
    for lo, width in arcs:
        if width <= 0.0:
            continue
        kinks = {-math.pi, math.pi, 0.0}
        for k in (width, -width):
            wrapped = (k + math.pi) % TWO_PI - math.pi
            kinks.add(wrapped)
        edges = sorted(kinks)
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a <= 1e-15:
                continue
            psi = 0.5 * (b - a) * x + 0.5 * (a + b)
            overlap = arc_overlap(lo, width, lo + psi, width)
            total += 0.5 * (b - a) * float(np.dot(wx, angle_difference_density(psi, rho) * overlap))
    return total / TWO_PI


def _j_monte_carlo(
    p: ConicalPartition,
    rho: float,
    budget: int,
    rng: RandomSource,
    workers: Optional[int],
) -> StabilityResult:
    if budget < 1:
        raise InvalidParameterError(f"Monte Carlo budget must be positive, got {budget}")
    chunks = [min(MC_CHUNK, budget - start) for start in range(0, budget, MC_CHUNK)]
    streams = rng.spawn(len(chunks))

    def run_chunk(args: Tuple[int, RandomSource]) -> int:
        size, stream = args
        x, y = sample_correlated_pair(rho, p.n, stream, size=size)
        return int(np.count_nonzero(classify(p, x) == classify(p, y)))

    workers = resolve_workers(workers)
    hits = sum(map_chunks(run_chunk, list(zip(chunks, streams)), workers))
    value = hits / budget
    error = math.sqrt(max(value * (1.0 - value), 0.0) / budget)
    logger.info(
        "Monte Carlo stability estimate",
        extra={"rho": rho, "samples": budget, "seed": rng.seed, "workers": workers, "value": value},
    )
    return StabilityResult(value, "montecarlo", error, {"rho": rho, "samples": budget}, seed=rng.seed)
