"""Verification harness: psi_0 and psi_rho searches, first-variation checks, negative-rho witnesses."""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from noisestab.errors import InvalidParameterError, WitnessNotFoundError
from noisestab.gauss import TWO_PI, RandomSource, check_rho
from noisestab.hermite import HermiteSeries
from noisestab.logger import setup_logger
from noisestab.parallel import map_chunks, resolve_workers
from noisestab.partition import ConicalPartition, classify, d2_distance
from noisestab.stability import (
    DEFAULT_SERIES_DEGREE,
    LT_rho_difference,
    cell_degree_weights,
    hermite_sector_table,
    lt_rho_indicator,
    noise_stability_J,
    psi_rho_from_series,
    psi_rho_from_weights,
)

logger = setup_logger(__name__)

PSI_ZERO_REGULAR = 9.0 / (8.0 * math.pi)
SHRINK_FACTOR = 0.5
SHRINK_ROUNDS = 40
MAX_SWEEPS = 200
WITNESS_RHO_FLOOR = -0.2


@dataclass
class LocalSearchResult:
    params: np.ndarray
    value: float
    evaluations: int


def coordinate_ascent(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    step: float,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
    rounds: int = SHRINK_ROUNDS,
) -> LocalSearchResult:
    """
    Maximize objective by coordinate moves of +-step, halving step whenever a sweep stalls.

    Args:
        objective: Function of a parameter vector
        x0: Starting point
        step: Initial step
        lower, upper: Optional box bounds (moves are clipped)
        rounds: Number of step halvings
    """
    x = np.asarray(x0, dtype=float).copy()
    lo = None if lower is None else np.asarray(lower, dtype=float)
    hi = None if upper is None else np.asarray(upper, dtype=float)
    best = objective(x)
    evaluations = 1
    for _ in range(rounds):
        for _ in range(MAX_SWEEPS):
            improved = False
            for i in range(x.shape[0]):
                for direction in (1.0, -1.0):
                    trial = x.copy()
                    trial[i] += direction * step
                    if lo is not None:
                        trial = np.maximum(trial, lo)
                    if hi is not None:
                        trial = np.minimum(trial, hi)
                    value = objective(trial)
                    evaluations += 1
                    if value > best:
                        x, best, improved = trial, value, True
                        break
            if not improved:
                break
        step *= SHRINK_FACTOR
    return LocalSearchResult(params=x, value=float(best), evaluations=evaluations)


def _best_of(results: List[Tuple[int, LocalSearchResult]]) -> Tuple[int, LocalSearchResult]:
    """Largest value, ties to the smallest start index."""
    return max(results, key=lambda item: (item[1].value, -item[0]))


def sup_psi_zero_search(
    k: int,
    n: int = 2,
    restarts: int = 20,
    rng: Optional[RandomSource] = None,
    empty_cells: int = 0,
) -> Tuple[float, ConicalPartition]:
    """
    Maximize psi_0 over planar sector partitions by multi-start coordinate ascent.

    Args:
        k: Number of cells (2 or 3 in the checked statements)
        n: Must be 2
        restarts: Random starts
        rng: Stream for the starting points
        empty_cells: Cells forced to be empty

    Returns:
        (best psi_0, maximizing partition)
    """
    if n != 2:
        raise InvalidParameterError("psi_0 search runs over planar sector partitions (n=2)")
    active = k - empty_cells
    if k < 2 or active < 1:
        raise InvalidParameterError(f"Invalid cell counts: k={k}, empty_cells={empty_cells}")
    rng = rng or RandomSource(0)

    def widths_of(offsets: np.ndarray) -> np.ndarray:
        cuts = np.concatenate([[0.0], np.sort(offsets), [TWO_PI]])
        return np.diff(cuts)

    def objective(offsets: np.ndarray) -> float:
        return float(np.sum(np.sin(0.5 * widths_of(offsets)) ** 2) / TWO_PI)

    if active == 1:
        best_widths = np.array([TWO_PI])
        value = 0.0
    else:
        results = []
        for start, stream in enumerate(rng.spawn(restarts)):
            x0 = stream.generator.uniform(0.0, TWO_PI, active - 1)
            results.append(
                (start, coordinate_ascent(objective, x0, step=0.5, lower=np.zeros(active - 1), upper=np.full(active - 1, TWO_PI)))
            )
        _, best = _best_of(results)
        best_widths = widths_of(best.params)
        value = best.value
    widths = np.concatenate([best_widths, np.zeros(empty_cells)])
    partition = ConicalPartition.from_widths(widths * (TWO_PI / widths.sum()))
    logger.info("psi_0 search finished", extra={"k": k, "empty_cells": empty_cells, "value": value, "restarts": restarts})
    return value, partition


@dataclass
class PerturbationFamily:
    """
    Parametric perturbations of a planar base partition.

    "sector-angles" shifts each breakpoint; "generator-vectors" rotates each generator.
    Parameters live in [-bound, bound]; bound 0 freezes the family at the base.
    """

    base: ConicalPartition
    parametrization: str = "sector-angles"
    bound: float = 0.5

    def __post_init__(self):
        if self.parametrization not in ("sector-angles", "generator-vectors"):
            raise InvalidParameterError(f"Unknown parametrization: {self.parametrization}")
        if self.bound < 0.0:
            raise InvalidParameterError("Perturbation bound must be nonnegative")
        if self.parametrization == "sector-angles":
            self._breakpoints = self.base.as_sectors().breakpoints
            gaps = np.diff(np.append(self._breakpoints, self._breakpoints[0] + TWO_PI))
            if self.bound > 0.5 * gaps.min():
                raise InvalidParameterError(
                    f"Bound {self.bound} exceeds half the smallest sector ({0.5 * gaps.min():.4f}); breakpoints could cross"
                )
        else:
            if self.base.kind == "sector2d" or self.base.n != 2:
                raise InvalidParameterError("Generator perturbations need a planar generator-based partition")
            self._angles = np.arctan2(self.base.generators[:, 1], self.base.generators[:, 0])
            self._norms = np.linalg.norm(self.base.generators, axis=1)

    @property
    def count(self) -> int:
        return 0 if self.bound == 0.0 else self.base.k

    def partition(self, params: Sequence[float]) -> ConicalPartition:
        params = np.asarray(params, dtype=float)
        if self.count == 0:
            return self.base
        if params.shape != (self.count,) or np.any(np.abs(params) > self.bound + 1e-12):
            raise InvalidParameterError(f"Parameters outside the family box: {params}")
        if self.parametrization == "sector-angles":
            return ConicalPartition.sectors(self._breakpoints + params)
        angles = self._angles + params
        generators = self._norms[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return ConicalPartition.induced(generators)

    def sample(self, rng: RandomSource) -> np.ndarray:
        return rng.generator.uniform(-self.bound, self.bound, self.count)


@dataclass
class PerturbationResult:
    best_value: float
    best_params: np.ndarray
    partition: ConicalPartition
    base_value: float
    starts: int
    evaluations: int

    def to_dict(self) -> dict:
        return {
            "best_value": self.best_value,
            "best_params": [float(v) for v in self.best_params],
            "partition": self.partition.to_dict(),
            "base_value": self.base_value,
            "starts": self.starts,
            "evaluations": self.evaluations,
        }


def _psi_of_arcs(arcs, rho: float, max_degree: int) -> float:
    table = hermite_sector_table(max_degree)
    return psi_rho_from_weights(np.array([table.degree_weights(lo, w) for lo, w in arcs]), rho)


def perturbation_search_psi(
    rho: float,
    family: PerturbationFamily,
    budget: int,
    rng: Optional[RandomSource] = None,
    max_degree: int = DEFAULT_SERIES_DEGREE,
    workers: Optional[int] = None,
) -> PerturbationResult:
    """
    Random starts plus coordinate ascent maximizing psi_rho over a perturbation family.

    Args:
        rho: Correlation in [0, 0.2]
        family: Perturbation family around the base partition
        budget: Number of random starts
        rng: Stream; start i uses child stream i
        max_degree: Hermite truncation degree
        workers: Parallel starts (NOISESTAB_WORKERS when omitted)
    """
    rho = check_rho(rho)
    if not 0.0 <= rho <= 0.2:
        raise InvalidParameterError(f"Perturbation search targets small rho in [0, 0.2], got {rho}")
    rng = rng or RandomSource(0)
    base_value = _psi_of_arcs(family.base.planar_arcs(), rho, max_degree)
    if family.count == 0:
        return PerturbationResult(base_value, np.zeros(0), family.base, base_value, 0, 1)

    def objective(params: np.ndarray) -> float:
        return _psi_of_arcs(family.partition(params).planar_arcs(), rho, max_degree)

    lower = np.full(family.count, -family.bound)
    upper = np.full(family.count, family.bound)

    def run_start(item: Tuple[int, RandomSource]) -> Tuple[int, LocalSearchResult]:
        start, stream = item
        return start, coordinate_ascent(objective, family.sample(stream), 0.5 * family.bound, lower, upper)

    results = map_chunks(run_start, list(enumerate(rng.spawn(budget))), resolve_workers(workers))
    _, best = _best_of(results)
    evaluations = sum(r.evaluations for _, r in results)
    logger.info(
        "psi_rho perturbation search finished",
        extra={"rho": rho, "starts": budget, "evaluations": evaluations, "best": best.value, "base": base_value},
    )
    return PerturbationResult(best.value, best.params, family.partition(best.params), base_value, budget, evaluations)


@dataclass
class GridSpec:
    """Polar grid r in (0, r_max], evaluation margin and comparison tolerance."""

    radial: int = 24
    angular: int = 48
    r_max: float = 3.0
    margin: float = 1e-2
    tol: float = 1e-6
    angular_offset: float = 0.0

    def points(self) -> np.ndarray:
        if self.radial < 1 or self.angular < 1:
            raise InvalidParameterError("Variation grid is empty")
        r = self.r_max * np.arange(1, self.radial + 1) / self.radial
        theta = self.angular_offset + TWO_PI * np.arange(self.angular) / self.angular
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        return np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)


@dataclass
class Violation:
    point: Tuple[float, ...]
    cell_claimed: int
    cell_maximizing: int
    gap: float

    def to_dict(self) -> dict:
        return {
            "point": list(self.point),
            "cell_claimed": self.cell_claimed,
            "cell_maximizing": self.cell_maximizing,
            "gap": self.gap,
        }


@dataclass
class VariationReport:
    rho: float
    points: np.ndarray
    values: np.ndarray
    labels: np.ndarray
    violations: List[Violation] = field(default_factory=list)
    grid: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "grid": self.grid,
            "points_checked": int(self.points.shape[0]),
            "violation_count": len(self.violations),
            "violations": [v.to_dict() for v in self.violations],
        }


def distance_to_boundary(p: ConicalPartition, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from planar points to the union of the boundary rays."""
    distance = np.full(points.shape[0], np.inf)
    for lo, width in p.planar_arcs():
        if width <= 0.0 or width >= TWO_PI:
            continue
        for angle in (lo, lo + width):
            u = np.array([math.cos(angle), math.sin(angle)])
            along = points @ u
            across = np.abs(points @ np.array([-u[1], u[0]]))
            distance = np.minimum(distance, np.where(along >= 0.0, across, np.linalg.norm(points, axis=1)))
    return distance


def first_variation_check(
    p: ConicalPartition,
    rho: float,
    grid_spec: Optional[GridSpec] = None,
) -> VariationReport:
    """
    Check that every margin-interior grid point x in A_i has LT_rho 1_{A_i}(x) >= LT_rho 1_{A_j}(x) - tol.

    Raises:
        InvalidParameterError: If rho is outside (0, 1) or no grid point survives the margin
    """
    rho = check_rho(rho, open_interval=True)
    if rho <= 0.0:
        raise InvalidParameterError(f"First-variation check needs rho in (0, 1), got {rho}")
    spec = grid_spec or GridSpec()
    points = spec.points()
    points = points[distance_to_boundary(p, points) >= spec.margin]
    if points.shape[0] == 0:
        raise InvalidParameterError("Variation grid is empty after applying the margin")
    if p.n > 2:
        points = np.hstack([points, np.zeros((points.shape[0], p.n - 2))])
    values = np.stack([rho * lt_rho_indicator(p, i, rho, points) for i in range(p.k)], axis=1)
    labels = classify(p, points)
    violations = []
    for idx in range(points.shape[0]):
        claimed = int(labels[idx])
        row = values[idx]
        rival = int(np.argmax(row))
        gap = float(row[rival] - row[claimed])
        if gap > spec.tol:
            violations.append(Violation(tuple(float(v) for v in points[idx]), claimed, rival, gap))
    logger.info(
        "First-variation check finished",
        extra={"rho": rho, "points": int(points.shape[0]), "violations": len(violations)},
    )
    return VariationReport(rho, points, values, labels, violations, grid=dict(spec.__dict__))


def perturbed_partition(p: ConicalPartition, breakpoint: int = 1, shift: float = 0.2) -> ConicalPartition:
    """Sector form of p with one breakpoint moved by `shift` radians."""
    b = p.as_sectors().breakpoints.copy()
    b[breakpoint] += shift
    return ConicalPartition.sectors(b)


@dataclass
class WitnessSearch:
    """Points x = a y + b y_perp scanned in increasing a, with y the bisector of the first cell."""

    a_values: Tuple[float, ...] = tuple(float(a) for a in np.arange(25.0, 401.0, 25.0))
    b_values: Tuple[float, ...] = (0.5, 1.0, 2.0)
    certify_factor: float = 5.0
    error_floor: float = 1e-12

    def region(self) -> dict:
        return {"a": [min(self.a_values), max(self.a_values)], "b": list(self.b_values)}


@dataclass
class Witness:
    rho: float
    point: Tuple[float, float]
    cells: Tuple[int, int]
    value: float
    error_estimate: float
    improvement_rate: float

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "point": list(self.point),
            "cells": list(self.cells),
            "value": self.value,
            "error_estimate": self.error_estimate,
            "improvement_rate": self.improvement_rate,
        }


def witness_partition() -> ConicalPartition:
    """Regular 3-sector partition with cells [-30, 90], [90, 210], [210, 330] degrees."""
    return ConicalPartition.regular_sectors(3, rotation=math.pi / 6.0)


def witness_scan(rho: float, search: Optional[WitnessSearch] = None) -> List[Tuple[Tuple[float, float], float, float]]:
    """rho^-1 L T_rho (1_{B_0} - 1_{B_1}) on the scan, as (point, value, error) in scan order."""
    rho = check_rho(rho, open_interval=True)
    search = search or WitnessSearch()
    p = witness_partition()
    y = np.array([math.sqrt(3.0) / 2.0, 0.5])
    y_perp = np.array([-0.5, math.sqrt(3.0) / 2.0])
    rows = []
    for a in search.a_values:
        for b in search.b_values:
            x = a * y + b * y_perp
            if classify(p, x) != 0:
                continue
            result = LT_rho_difference(p, 0, 1, rho, x)
            rows.append(((float(x[0]), float(x[1])), result.value, result.discrepancy + search.error_floor))
    return rows


def negative_rho_witness(rho: float, search: Optional[WitnessSearch] = None) -> Witness:
    """
    First scanned x in B_0 with rho^-1 L T_rho (1_{B_0} - 1_{B_1})(x) < 0 and
    |value| > certify_factor * error, where error is the two-route discrepancy plus a floor.

    Moving Gaussian mass from B_0 to B_1 near such x raises psi_rho at rate 2 |value| per unit mass.
    For rho >= 0 the same scan runs as a no-witness check; rho = 0 is reported as no witness.

    Raises:
        InvalidParameterError: If rho <= -0.2
        WitnessNotFoundError: If no scanned point is certified
    """
    rho = check_rho(rho, open_interval=True)
    if rho <= WITNESS_RHO_FLOOR:
        raise InvalidParameterError(f"Witness scan needs rho > {WITNESS_RHO_FLOOR}, got {rho}")
    search = search or WitnessSearch()
    if rho == 0.0:
        raise WitnessNotFoundError("No witness at rho=0", scanned_region=search.region())
    for point, value, error in witness_scan(rho, search):
        if value < 0.0 and abs(value) > search.certify_factor * error:
            logger.info("Witness certified", extra={"rho": rho, "point": list(point), "value": value, "error": error})
            return Witness(rho, point, (0, 1), value, error, -2.0 * value)
    raise WitnessNotFoundError(f"No certified witness at rho={rho}", scanned_region=search.region())


def lemma5_stability_probe(
    epsilon_list: Sequence[float],
    directions: int = 64,
    rng: Optional[RandomSource] = None,
) -> List[dict]:
    """
    For each eps, push random width perturbations of the regular 3-sector partition out to the
    level psi_0 = 9/(8 pi) - eps and record the largest d2 distance to the regular partition,
    compared with the bound 6 eps^(1/8).
    """
    rng = rng or RandomSource(0)
    regular = ConicalPartition.regular_sectors(3)
    base = np.full(3, TWO_PI / 3.0)
    rows = []
    for eps in epsilon_list:
        if eps < 0.0 or eps >= 0.01:
            raise InvalidParameterError(f"Epsilon must lie in [0, 0.01), got {eps}")
        bound = 6.0 * eps ** 0.125
        worst = 0.0
        if eps > 0.0:
            for stream in rng.spawn(directions):
                gen = stream.generator
                v = gen.standard_normal(3)
                v -= v.mean()
                v /= np.linalg.norm(v)
                t = _level_crossing(base, v, eps)
                q = ConicalPartition.from_widths(base + t * v, start=gen.uniform(0.0, TWO_PI))
                worst = max(worst, d2_distance(regular, q).value)
        rows.append({"epsilon": eps, "bound": bound, "max_d2": worst, "directions": directions, "passed": worst <= bound})
        logger.info("Stability probe row", extra=rows[-1])
    return rows


def _level_crossing(base: np.ndarray, v: np.ndarray, eps: float) -> float:
    """Largest t on the first descent segment with psi_0(widths base + t v) >= sup - eps."""
    negative = v < 0.0
    t_max = float(np.min(base[negative] / -v[negative])) if negative.any() else TWO_PI

    def deficit(t: float) -> float:
        widths = base + t * v
        return PSI_ZERO_REGULAR - float(np.sum(np.sin(0.5 * widths) ** 2) / TWO_PI)

    ts = np.linspace(0.0, t_max, 257)
    above = [deficit(t) > eps for t in ts]
    if not any(above):
        return t_max
    first = above.index(True)
    lo, hi = ts[first - 1], ts[first]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if deficit(mid) > eps:
            hi = mid
        else:
            lo = mid
    return lo


def psi_rho_convexity_gap(
    g: Sequence[HermiteSeries],
    h: Sequence[HermiteSeries],
    rho: float,
    lam: float,
) -> float:
    """lam psi(g) + (1 - lam) psi(h) - psi(lam g + (1 - lam) h) for tuples of cell functions."""
    if len(g) != len(h):
        raise InvalidParameterError("Partition tuples must have the same number of cells")
    mixed = [a.mixture(b, lam) for a, b in zip(g, h)]
    return lam * psi_rho_from_series(g, rho) + (1.0 - lam) * psi_rho_from_series(h, rho) - psi_rho_from_series(mixed, rho)


def ftc_reconstruction(p: ConicalPartition, rho: float, nodes: int = 64, max_degree: int = DEFAULT_SERIES_DEGREE) -> Tuple[float, float]:
    """(J(rho) - J(0), integral over [0, rho] of psi_alpha) with Gauss-Legendre in alpha."""
    rho = check_rho(rho, open_interval=True)
    lhs = noise_stability_J(p, rho, "quadrature2d").value - noise_stability_J(p, 0.0, "quadrature2d").value
    weights = cell_degree_weights(p, max_degree)
    x, w = leggauss(nodes)
    alphas = 0.5 * rho * (x + 1.0)
    rhs = 0.5 * rho * sum(wi * psi_rho_from_weights(weights, a) for a, wi in zip(alphas, w))
    return lhs, float(rhs)


def equal_measure_comparison(rho: float, count: int = 50) -> float:
    """Largest J(q) - J(regular) over rotated equal-measure 3-sector partitions q."""
    regular = noise_stability_J(ConicalPartition.regular_sectors(3), rho, "quadrature2d").value
    angles = TWO_PI * np.arange(count) / count
    return max(
        noise_stability_J(ConicalPartition.regular_sectors(3, rotation=a), rho, "quadrature2d").value - regular
        for a in angles
    )
