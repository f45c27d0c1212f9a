"""Conical partitions of R^n: construction, classification, barycenters and the d2 metric."""

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from noisestab.errors import DimensionMismatchError, InvalidParameterError, UnsupportedGeometryError
from noisestab.gauss import TWO_PI, RandomSource
from noisestab.logger import setup_logger

logger = setup_logger(__name__)

KINDS = ("regular", "induced", "sector2d")

# Relative tolerance under which inner products or angles count as tied
TIE_TOLERANCE = 1e-12

ROTATION_SCAN = 4096
MC_SAMPLES = 200_000

Arc = Tuple[float, float]


def regular_simplex_generators(k: int, n: int) -> np.ndarray:
    """
    Vertices of a regular simplex centered at the origin.

    Args:
        k: Number of vertices, 2 <= k <= n + 1
        n: Ambient dimension

    Returns:
        Array (k, n) of unit vectors with pairwise inner product -1/(k-1), supported on the
        first k-1 coordinates; the first vertex is e_1.

    Raises:
        InvalidParameterError: If k is out of range
    """
    if k < 2 or k > n + 1:
        raise InvalidParameterError(f"Regular simplex needs 2 <= k <= n + 1, got k={k}, n={n}")
    centered = np.eye(k) - 1.0 / k
    q, r = np.linalg.qr(centered[: k - 1].T)
    q = q * np.sign(np.diag(r))
    coordinates = centered @ q
    coordinates /= np.linalg.norm(coordinates, axis=1, keepdims=True)
    generators = np.zeros((k, n))
    generators[:, : k - 1] = coordinates
    return generators


def _wrap(angle: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    return np.mod(angle, TWO_PI)


@dataclass(frozen=True, eq=False)
class ConicalPartition:
    """
    k cones covering R^n.

    kind "regular" and "induced" are Voronoi cones {x: <x, z_i> = max_j <x, z_j>} of the
    generators; kind "sector2d" is given by k nondecreasing breakpoints b_i in the plane,
    cell i being the arc [b_i, b_{i+1}) with b_k = b_0 + 2 pi. Cells are 0-indexed.
    """

    n: int
    k: int
    kind: str
    generators: Optional[np.ndarray] = None
    breakpoints: Optional[np.ndarray] = None
    metadata: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"Unknown partition kind: {self.kind}")
        if self.k < 1 or self.n < 1:
            raise InvalidParameterError(f"Invalid partition size: n={self.n}, k={self.k}")
        if self.kind == "sector2d":
            if self.n != 2:
                raise InvalidParameterError("Sector partitions live in the plane (n=2)")
            b = np.asarray(self.breakpoints, dtype=float).reshape(-1)
            if b.shape[0] != self.k or not np.all(np.isfinite(b)):
                raise InvalidParameterError(f"Expected {self.k} finite breakpoints")
            if np.any(np.diff(b) < 0.0) or b[-1] - b[0] > TWO_PI + 1e-12:
                raise InvalidParameterError("Breakpoints must be nondecreasing within one turn")
            object.__setattr__(self, "breakpoints", b)
            object.__setattr__(self, "generators", None)
        else:
            z = np.asarray(self.generators, dtype=float)
            if z.shape != (self.k, self.n) or not np.all(np.isfinite(z)):
                raise DimensionMismatchError(f"Expected generators of shape ({self.k}, {self.n}), got {z.shape}")
            object.__setattr__(self, "generators", z)
            object.__setattr__(self, "breakpoints", None)

    # Constructors

    @classmethod
    def regular(cls, k: int, n: int) -> "ConicalPartition":
        return cls(n=n, k=k, kind="regular", generators=regular_simplex_generators(k, n))

    @classmethod
    def induced(cls, generators: Union[Sequence[Sequence[float]], np.ndarray]) -> "ConicalPartition":
        z = np.atleast_2d(np.asarray(generators, dtype=float))
        return cls(n=z.shape[1], k=z.shape[0], kind="induced", generators=z)

    @classmethod
    def sectors(cls, breakpoints: Union[Sequence[float], np.ndarray]) -> "ConicalPartition":
        b = np.asarray(breakpoints, dtype=float).reshape(-1)
        return cls(n=2, k=b.shape[0], kind="sector2d", breakpoints=b)

    @classmethod
    def from_widths(cls, widths: Sequence[float], start: float = 0.0) -> "ConicalPartition":
        """Sector partition with consecutive arcs of the given widths (summing to 2 pi)."""
        widths = np.asarray(widths, dtype=float)
        if np.any(widths < 0.0) or not math.isclose(float(widths.sum()), TWO_PI, abs_tol=1e-9):
            raise InvalidParameterError(f"Sector widths must be nonnegative and sum to 2 pi: {widths}")
        return cls.sectors(start + np.concatenate([[0.0], np.cumsum(widths)[:-1]]))

    @classmethod
    def regular_sectors(cls, k: int, rotation: float = 0.0) -> "ConicalPartition":
        """k equal sectors, cell 0 centered on the angle `rotation`."""
        return cls.sectors(rotation - math.pi / k + TWO_PI * np.arange(k) / k)

    # Geometry

    @cached_property
    def arcs(self) -> Optional[List[Arc]]:
        """(start, width) of every cell when the partition is planar, else None."""
        if self.kind == "sector2d":
            b = self.breakpoints
            ends = np.append(b[1:], b[0] + TWO_PI)
            return [(float(lo), float(hi - lo)) for lo, hi in zip(b, ends)]
        if self.n > 2 and np.any(np.abs(self.generators[:, 2:]) > 0.0):
            return None
        return _arcs_from_generators(self.generators[:, :2])

    @property
    def is_planar(self) -> bool:
        return self.arcs is not None

    def planar_arcs(self) -> List[Arc]:
        """
        Arcs of a planar partition.

        Raises:
            UnsupportedGeometryError: If the cells are not products of planar sectors
        """
        if self.arcs is None:
            raise UnsupportedGeometryError(
                f"Partition (kind={self.kind}, n={self.n}, k={self.k}) is not a planar sector partition"
            )
        return self.arcs

    def widths(self) -> np.ndarray:
        return np.array([w for _, w in self.planar_arcs()])

    def as_sectors(self) -> "ConicalPartition":
        """The same planar cells as a sector2d partition in R^2 (cell order preserved)."""
        arcs = self.planar_arcs()
        if self.kind == "sector2d":
            return self
        if arcs[0][1] <= 0.0:
            raise UnsupportedGeometryError("Sector form needs a nonempty first cell")
        breakpoints = [arcs[0][0]]
        for i in range(1, self.k):
            breakpoints.append(breakpoints[-1] + arcs[i - 1][1])
            lo, w = arcs[i]
            gap = abs(_wrap(lo - breakpoints[-1] + math.pi) - math.pi)
            if w > 0.0 and gap > 1e-9:
                raise UnsupportedGeometryError("Cells are not labeled in angular order; cannot express as sectors")
        return ConicalPartition.sectors(breakpoints)

    def rotate(self, angle: float) -> "ConicalPartition":
        """Rotate by `angle` in the (x_1, x_2) plane."""
        if self.kind == "sector2d":
            return ConicalPartition.sectors(self.breakpoints + angle)
        if self.n < 2:
            raise UnsupportedGeometryError("Rotation needs n >= 2")
        c, s = math.cos(angle), math.sin(angle)
        z = self.generators.copy()
        x1, x2 = z[:, 0].copy(), z[:, 1].copy()
        z[:, 0] = c * x1 - s * x2
        z[:, 1] = s * x1 + c * x2
        return ConicalPartition(n=self.n, k=self.k, kind=self.kind, generators=z)

    def to_dict(self) -> dict:
        data = {"n": self.n, "k": self.k, "kind": self.kind}
        if self.kind == "sector2d":
            data["breakpoints"] = [float(b) for b in self.breakpoints]
        else:
            data["generators"] = [[float(v) for v in row] for row in self.generators]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ConicalPartition":
        try:
            kind = data["kind"]
            if kind == "sector2d":
                return cls(n=int(data.get("n", 2)), k=int(data["k"]), kind=kind, breakpoints=data["breakpoints"])
            return cls(n=int(data["n"]), k=int(data["k"]), kind=kind, generators=data["generators"])
        except KeyError as e:
            raise InvalidParameterError(f"Partition record missing field: {str(e)}")

    def to_json(self) -> str:
        # repr-based float formatting round-trips exactly
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConicalPartition":
        return cls.from_dict(json.loads(text))


def _arcs_from_generators(z: np.ndarray) -> List[Arc]:
    """Exact arcs of the planar Voronoi cones of generators z (k, 2)."""
    k = z.shape[0]
    candidates = []
    for i, j in itertools.combinations(range(k), 2):
        d = z[i] - z[j]
        if np.linalg.norm(d) > 0.0:
            base = math.atan2(d[1], d[0])
            candidates.extend([base + math.pi / 2.0, base - math.pi / 2.0])
    arcs: List[Arc] = [(0.0, 0.0)] * k
    if not candidates:
        arcs[0] = (0.0, TWO_PI)
        return arcs
    c = np.sort(_wrap(np.array(candidates)))
    keep = np.append(True, np.diff(c) > 1e-12)
    c = c[keep]
    if len(c) > 1 and c[0] + TWO_PI - c[-1] <= 1e-12:
        c = c[:-1]
    ends = np.append(c[1:], c[0] + TWO_PI)
    mids = 0.5 * (c + ends)
    labels = [int(_argmax_first(np.array([math.cos(m), math.sin(m)]) @ z.T)) for m in mids]
    # Merge runs of equal labels, starting at a label change so runs do not wrap
    m = len(c)
    start = next((s for s in range(m) if labels[s] != labels[s - 1]), None)
    if start is None:
        arcs[labels[0]] = (0.0, TWO_PI)
        return arcs
    runs: Dict[int, Arc] = {}
    s = start
    for step in range(m):
        idx = (start + step) % m
        if step == 0 or labels[idx] != labels[(idx - 1) % m]:
            s = idx
        lo = float(c[s])
        hi = float(ends[idx]) if idx >= s else float(ends[idx]) + TWO_PI
        runs[labels[idx]] = (lo, hi - lo)
    for label, arc in runs.items():
        arcs[label] = arc
    return arcs


def _argmax_first(scores: np.ndarray) -> np.ndarray:
    """Index of the maximum along the last axis, smallest index among near-ties."""
    top = np.max(scores, axis=-1, keepdims=True)
    tol = TIE_TOLERANCE * np.maximum(1.0, np.abs(top))
    return np.argmax(scores >= top - tol, axis=-1)


def classify(p: ConicalPartition, x: Union[Sequence[float], np.ndarray]) -> Union[int, np.ndarray]:
    """
    Cell index of x (0-based); ties go to the smallest index.

    Args:
        p: Partition
        x: Point of length n or array (N, n)

    Returns:
        int for a single point, int array for a batch
    """
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != p.n:
        raise DimensionMismatchError(f"Point of shape {arr.shape} does not match partition dimension {p.n}")
    if p.kind != "sector2d":
        labels = _argmax_first(arr @ p.generators.T)
    else:
        labels = _classify_sectors(p.breakpoints, arr)
    return int(labels) if np.ndim(labels) == 0 else labels


def _classify_sectors(breakpoints: np.ndarray, arr: np.ndarray) -> np.ndarray:
    offsets = breakpoints - breakpoints[0]
    t = _wrap(np.arctan2(arr[..., 1], arr[..., 0]) - breakpoints[0])
    tol = 1e-12
    idx = np.searchsorted(offsets, t, side="right") - 1
    idx = np.clip(idx, 0, len(offsets) - 1)
    # A boundary ray belongs to both neighbours; keep the smaller index
    on_start = (idx > 0) & (np.abs(t - offsets[idx]) <= tol)
    idx = np.where(on_start, idx - 1, idx)
    idx = np.where(TWO_PI - t <= tol, 0, idx)
    origin = (arr[..., 0] == 0.0) & (arr[..., 1] == 0.0)
    return np.where(origin, 0, idx)


def cell_measures(
    p: ConicalPartition,
    rng: Optional[RandomSource] = None,
    samples: int = MC_SAMPLES,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian measures of the cells and their standard errors (zero when exact).

    Planar partitions use width / 2 pi; others are estimated by Monte Carlo.
    """
    if p.is_planar:
        return p.widths() / TWO_PI, np.zeros(p.k)
    rng = rng or RandomSource(0)
    labels = classify(p, rng.generator.standard_normal((samples, p.n)))
    freq = np.bincount(labels, minlength=p.k) / samples
    return freq, np.sqrt(freq * (1.0 - freq) / samples)


def sector_barycenter(angle_lo: float, width: float) -> np.ndarray:
    """Barycenter of a planar sector: sin(width/2)/sqrt(2 pi) along the bisector."""
    if width <= 0.0 or width >= TWO_PI:
        return np.zeros(2)
    mid = angle_lo + 0.5 * width
    return math.sin(0.5 * width) / math.sqrt(TWO_PI) * np.array([math.cos(mid), math.sin(mid)])


def barycenter_vector(
    p: ConicalPartition,
    i: int,
    rng: Optional[RandomSource] = None,
    samples: int = MC_SAMPLES,
) -> np.ndarray:
    """
    z_i = integral of x over cell i against the Gaussian measure.

    Closed form for planar partitions; Monte Carlo otherwise.
    """
    if not 0 <= i < p.k:
        raise InvalidParameterError(f"Cell index {i} out of range for k={p.k}")
    if p.is_planar:
        z = np.zeros(p.n)
        z[:2] = sector_barycenter(*p.arcs[i])
        return z
    rng = rng or RandomSource(0)
    points = rng.generator.standard_normal((samples, p.n))
    mask = classify(p, points) == i
    return points[mask].sum(axis=0) / samples


def psi_zero(p: ConicalPartition) -> float:
    """Sum of squared barycenter norms."""
    if p.is_planar:
        return float(sum(math.sin(0.5 * w) ** 2 for _, w in p.arcs if 0.0 < w < TWO_PI) / TWO_PI)
    return float(sum(np.dot(z, z) for z in (barycenter_vector(p, i) for i in range(p.k))))


def barycenter_difference_norm(p: ConicalPartition, i: int, j: int) -> float:
    if i == j:
        raise InvalidParameterError("Barycenter difference needs two distinct cells")
    return float(np.linalg.norm(barycenter_vector(p, i) - barycenter_vector(p, j)))


@dataclass(frozen=True)
class MeasureConstraint:
    """Membership in Delta_k^eps: every cell measure within eps of 1/k."""

    k: int
    epsilon: float = 0.0

    def __post_init__(self):
        if self.k < 1 or self.epsilon < 0.0:
            raise InvalidParameterError(f"Invalid measure constraint: k={self.k}, epsilon={self.epsilon}")

    def contains(self, measures: Sequence[float], slack: float = 1e-12) -> bool:
        measures = np.asarray(measures, dtype=float)
        if measures.shape[0] != self.k:
            return False
        return bool(np.all(np.abs(measures - 1.0 / self.k) <= self.epsilon + slack))

    def check(self, p: ConicalPartition) -> bool:
        measures, se = cell_measures(p)
        return self.contains(measures, slack=1e-12 + 3.0 * float(se.max(initial=0.0)))


@dataclass(frozen=True)
class PartitionDistance:
    value: float
    rotation: float
    permutation: Tuple[int, ...]
    error_estimate: float = 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "rotation": self.rotation,
            "permutation": list(self.permutation),
            "error_estimate": self.error_estimate,
        }


def arc_overlap(lo_a: float, width_a: float, lo_b: Union[float, np.ndarray], width_b: float) -> np.ndarray:
    """Length of the intersection of two circular arcs (vectorized over lo_b)."""
    a = _wrap(lo_a)
    b = _wrap(np.asarray(lo_b, dtype=float))
    total = np.zeros_like(b)
    for m in (-1.0, 0.0, 1.0):
        shifted = b + m * TWO_PI
        total = total + np.maximum(0.0, np.minimum(a + width_a, shifted + width_b) - np.maximum(a, shifted))
    return total


def _planar_mismatch(arcs_p: List[Arc], arcs_q: List[Arc], perm: Tuple[int, ...], phi: np.ndarray) -> np.ndarray:
    """sum_i gamma(A_i sym-diff rot_phi C_perm(i)) as a function of phi."""
    total = np.zeros_like(phi)
    for i, j in enumerate(perm):
        lo_a, w_a = arcs_p[i]
        lo_c, w_c = arcs_q[j]
        total = total + (w_a + w_c - 2.0 * arc_overlap(lo_a, w_a, lo_c + phi, w_c))
    return total / TWO_PI


def d2_distance(
    p: ConicalPartition,
    q: ConicalPartition,
    rng: Optional[RandomSource] = None,
    samples: int = MC_SAMPLES,
) -> PartitionDistance:
    """
    L2 distance between partitions up to rotation and relabeling.

    Planar partitions: exact symmetric-difference masses, rotation infimum over a dense scan
    plus every breakpoint alignment (the kinks of the piecewise-linear objective), then a
    bounded scalar refinement. Other partitions: Monte Carlo over cell permutations only.

    Raises:
        DimensionMismatchError: If n or k differ
    """
    if p.n != q.n or p.k != q.k:
        raise DimensionMismatchError(f"Partitions differ in shape: ({p.n},{p.k}) vs ({q.n},{q.k})")
    if not (p.is_planar and q.is_planar):
        return _d2_monte_carlo(p, q, rng or RandomSource(0), samples)

    arcs_p, arcs_q = p.arcs, q.arcs
    scan = TWO_PI * np.arange(ROTATION_SCAN) / ROTATION_SCAN
    best = (math.inf, 0.0, tuple(range(p.k)))
    for perm in itertools.permutations(range(p.k)):
        kinks = []
        for i, j in enumerate(perm):
            lo_a, w_a = arcs_p[i]
            lo_c, w_c = arcs_q[j]
            for end_a in (lo_a, lo_a + w_a):
                for end_c in (lo_c, lo_c + w_c):
                    kinks.append(end_a - end_c)
        phi = np.concatenate([scan, _wrap(np.array(kinks))])
        values = _planar_mismatch(arcs_p, arcs_q, perm, phi)
        idx = int(np.argmin(values))
        phi_best, value = float(phi[idx]), float(values[idx])
        step = TWO_PI / ROTATION_SCAN
        refined = minimize_scalar(
            lambda t: float(_planar_mismatch(arcs_p, arcs_q, perm, np.array([t]))[0]),
            bounds=(phi_best - step, phi_best + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if refined.success and refined.fun < value:
            phi_best, value = float(refined.x), float(refined.fun)
        if value < best[0] - 1e-15:
            best = (value, phi_best, perm)
    value, phi_best, perm = best
    return PartitionDistance(
        value=math.sqrt(max(value, 0.0)),
        rotation=float(_wrap(phi_best)),
        permutation=tuple(int(v) for v in perm),
    )


def _d2_monte_carlo(p: ConicalPartition, q: ConicalPartition, rng: RandomSource, samples: int) -> PartitionDistance:
    points = rng.generator.standard_normal((samples, p.n))
    lp, lq = classify(p, points), classify(q, points)
    confusion = np.zeros((p.k, p.k), dtype=np.int64)
    np.add.at(confusion, (lp, lq), 1)
    best_perm, best_count = None, -1
    for perm in itertools.permutations(range(p.k)):
        count = int(sum(confusion[i, j] for i, j in enumerate(perm)))
        if count > best_count:
            best_perm, best_count = perm, count
    best_agree = best_count / samples
    mismatch = 2.0 * (samples - best_count) / samples
    se = 2.0 * math.sqrt(max(best_agree * (1.0 - best_agree), 0.0) / samples)
    value = math.sqrt(max(mismatch, 0.0))
    logger.debug("Monte Carlo d2 estimate", extra={"samples": samples, "seed": rng.seed, "value": value})
    return PartitionDistance(
        value=value,
        rotation=0.0,
        permutation=tuple(int(v) for v in best_perm),
        error_estimate=se / (2.0 * value) if value > 0.0 else math.sqrt(se),
    )
