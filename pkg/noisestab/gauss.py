"""Gaussian measure utilities: correlated sampling, quadrature grids, wedge and surface measures."""

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.special import erfcx, gammainc, gammaincc, gammaln, ndtr

from noisestab.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    QuadratureError,
    UnsupportedGeometryError,
)
from noisestab.hermite import multi_indices
from noisestab.logger import setup_logger

logger = setup_logger(__name__)

TWO_PI = 2.0 * math.pi
SQRT_TWO_PI = math.sqrt(TWO_PI)

# Generator used for every stochastic operation
RNG_ALGORITHM = "PCG64"


def check_rho(rho: Union[float, "CorrelationParam"], open_interval: bool = False) -> float:
    """
    Validate a correlation parameter and return it as a float.

    Args:
        rho: Correlation in [-1, 1]
        open_interval: Require |rho| < 1

    Raises:
        InvalidParameterError: If rho is out of range or not finite
    """
    if isinstance(rho, CorrelationParam):
        rho = rho.rho
    rho = float(rho)
    if not math.isfinite(rho) or abs(rho) > 1.0:
        raise InvalidParameterError(f"Correlation must lie in [-1, 1], got {rho}")
    if open_interval and abs(rho) >= 1.0:
        raise InvalidParameterError(f"Correlation must lie in (-1, 1), got {rho}")
    return rho


@dataclass(frozen=True)
class CorrelationParam:
    """Coordinatewise correlation E[X_i Y_j] = rho 1{i=j} of a Gaussian pair."""

    rho: float

    def __post_init__(self):
        rho = float(self.rho)
        if not math.isfinite(rho) or abs(rho) > 1.0:
            raise InvalidParameterError(f"Correlation must lie in [-1, 1], got {rho}")
        object.__setattr__(self, "rho", rho)

    @property
    def complement(self) -> float:
        """sqrt(1 - rho^2)."""
        return math.sqrt(max(0.0, 1.0 - self.rho * self.rho))


class RandomSource:
    """
    Seeded PCG64 stream with deterministic child streams.

    A source owns its generator; hand children from spawn() to parallel workers
    instead of sharing one source between threads.
    """

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = ()):
        if int(seed) < 0:
            raise InvalidParameterError(f"Seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.algorithm = RNG_ALGORITHM
        self._generator: Optional[np.random.Generator] = None

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
            self._generator = np.random.Generator(np.random.PCG64(sequence))
        return self._generator

    def spawn(self, count: int) -> List["RandomSource"]:
        """Independent child streams; child i depends only on (seed, spawn_key, i)."""
        return [RandomSource(self.seed, self.spawn_key + (i,)) for i in range(count)]

    def to_dict(self) -> dict:
        return {"seed": self.seed, "spawn_key": list(self.spawn_key), "algorithm": self.algorithm}

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, spawn_key={self.spawn_key})"


def as_generator(rng: Union[RandomSource, np.random.Generator, int, None]) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise InvalidParameterError("A seeded RandomSource is required")
    return RandomSource(int(rng)).generator


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and weights for integrals against the standard Gaussian measure."""

    points: np.ndarray
    weights: np.ndarray
    scheme: str
    parameters: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.weights.shape[0])

    @classmethod
    def tensor_gauss_hermite(cls, n: int, nodes: int = 40) -> "QuadratureGrid":
        """
        Tensor product of probabilists' Gauss-Hermite rules, normalized to total mass 1.

        Exact for polynomials of degree <= 2 * nodes - 1 in each coordinate.
        """
        if n < 1 or nodes < 1:
            raise InvalidParameterError(f"Invalid tensor grid: n={n}, nodes={nodes}")
        x, w = hermegauss(nodes)
        w = w / SQRT_TWO_PI
        mesh = np.meshgrid(*([x] * n), indexing="ij")
        wmesh = np.meshgrid(*([w] * n), indexing="ij")
        points = np.stack([m.reshape(-1) for m in mesh], axis=1)
        weights = np.prod(np.stack([m.reshape(-1) for m in wmesh], axis=1), axis=1)
        return cls(points, weights, "tensor_gauss_hermite", {"nodes": nodes})

    @classmethod
    def polar(cls, radial: int = 64, angular: int = 256, r_max: float = 12.0) -> "QuadratureGrid":
        """Planar grid: Gauss-Legendre in radius on [0, r_max] and in angle on [0, 2 pi)."""
        r, wr = leggauss(radial)
        r = 0.5 * r_max * (r + 1.0)
        wr = 0.5 * r_max * wr
        theta, wt = leggauss(angular)
        theta = math.pi * (theta + 1.0)
        wt = math.pi * wt
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        weights = np.outer(wr * r * np.exp(-0.5 * r * r), wt).reshape(-1) / TWO_PI
        points = np.stack([(rr * np.cos(tt)).reshape(-1), (rr * np.sin(tt)).reshape(-1)], axis=1)
        return cls(points, weights, "polar", {"radial": radial, "angular": angular, "r_max": r_max})

    @classmethod
    def monte_carlo(cls, n: int, samples: int, rng: Union[RandomSource, np.random.Generator]) -> "QuadratureGrid":
        points = as_generator(rng).standard_normal((samples, n))
        weights = np.full(samples, 1.0 / samples)
        return cls(points, weights, "monte_carlo", {"samples": samples})

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """
        Integrate a vectorized handle f: (N, n) -> (N,) against the grid.

        Raises:
            QuadratureError: If the weighted sum is not finite
        """
        values = np.asarray(f(self.points), dtype=float)
        total = float(np.dot(self.weights, values))
        if not math.isfinite(total):
            raise QuadratureError(f"Non-finite quadrature sum on {self.scheme} grid")
        return total


def sample_correlated_pair(
    rho: Union[float, CorrelationParam],
    n: int,
    rng: Union[RandomSource, np.random.Generator],
    size: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw (X, Y) standard Gaussian in R^n with E[X_i Y_j] = rho 1{i=j}.

    Y = rho X + sqrt(1 - rho^2) Z with Z independent of X.

    Args:
        rho: Correlation in [-1, 1]
        n: Dimension
        rng: Seeded stream
        size: Number of pairs; None draws a single pair

    Returns:
        Arrays of shape (n,) or (size, n)
    """
    rho = check_rho(rho)
    if n < 1:
        raise InvalidParameterError(f"Dimension must be positive, got {n}")
    gen = as_generator(rng)
    shape = (n,) if size is None else (int(size), n)
    x = gen.standard_normal(shape)
    if rho == 1.0:
        return x, x.copy()
    if rho == -1.0:
        return x, -x
    z = gen.standard_normal(shape)
    return x, rho * x + math.sqrt(1.0 - rho * rho) * z


def gaussian_measure_sector(angle_lo: float, angle_hi: float) -> float:
    """Standard Gaussian measure of the planar sector between two angles."""
    width = float(angle_hi) - float(angle_lo)
    if width < 0.0 or width > TWO_PI + 1e-12:
        raise InvalidParameterError(f"Sector width must lie in [0, 2 pi], got {width}")
    return min(width, TWO_PI) / TWO_PI


@dataclass(frozen=True)
class AffinePiece:
    """
    Hyperplane {<x, normal> = 0} through the origin, or the half-hyperplane
    {<x, normal> = 0, <x, direction> >= 0} when direction is given.
    """

    normal: Tuple[float, ...]
    direction: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        if not np.isclose(np.linalg.norm(normal), 1.0, atol=1e-10):
            raise UnsupportedGeometryError("Affine piece normal must be a unit vector")
        object.__setattr__(self, "normal", tuple(normal))
        if self.direction is not None:
            direction = np.asarray(self.direction, dtype=float)
            if direction.shape != normal.shape:
                raise DimensionMismatchError("Normal and direction must have the same length")
            if not np.isclose(np.linalg.norm(direction), 1.0, atol=1e-10) or abs(np.dot(direction, normal)) > 1e-10:
                raise UnsupportedGeometryError(
                    "Half-hyperplane direction must be a unit vector orthogonal to the normal"
                )
            object.__setattr__(self, "direction", tuple(direction))

    @property
    def dimension(self) -> int:
        return len(self.normal)


def gaussian_surface_measure_shifted(
    piece: AffinePiece,
    shift: Union[Sequence[float], np.ndarray],
    scale: float,
) -> Union[float, np.ndarray]:
    """
    Gaussian surface measure of (piece - shift) / scale.

    For a hyperplane this is phi(<shift, normal> / scale); a half-hyperplane
    multiplies by Phi(<shift, direction> / scale).

    Args:
        piece: Hyperplane or half-hyperplane through the origin
        shift: Vector of length n, or array of shape (..., n)
        scale: Positive scale

    Returns:
        Surface measure, vectorized over leading axes of shift
    """
    if not isinstance(piece, AffinePiece):
        raise UnsupportedGeometryError(f"Unsupported boundary piece: {type(piece).__name__}")
    if scale <= 0.0:
        raise InvalidParameterError(f"Scale must be positive, got {scale}")
    c = np.asarray(shift, dtype=float)
    if c.shape[-1] != piece.dimension:
        raise DimensionMismatchError(f"Shift of shape {c.shape} does not match piece dimension {piece.dimension}")
    t = c @ np.asarray(piece.normal) / scale
    value = np.exp(-0.5 * t * t) / SQRT_TWO_PI
    if piece.direction is not None:
        value = value * ndtr(c @ np.asarray(piece.direction) / scale)
    return float(value) if np.ndim(value) == 0 else value


def wedge_radial_mass(apex: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Integral over r >= 0 of r * phi_2(apex + r e_theta).

    Closed form (1/2pi)[e^{-|p|^2/2} - q sqrt(2pi) e^{-(|p|^2-q^2)/2} Phi(-q)] with q = <p, e_theta>,
    evaluated through erfcx when q >= 0.

    Args:
        apex: Array of shape (..., 2)
        theta: Angles broadcastable against apex[..., 0]
    """
    p = np.asarray(apex, dtype=float)
    theta = np.asarray(theta, dtype=float)
    q = p[..., 0] * np.cos(theta) + p[..., 1] * np.sin(theta)
    p2 = p[..., 0] ** 2 + p[..., 1] ** 2
    h = np.maximum(p2 - q * q, 0.0)
    qneg = np.minimum(q, 0.0)
    qpos = np.maximum(q, 0.0)
    negative = np.exp(-0.5 * p2) - qneg * SQRT_TWO_PI * np.exp(-0.5 * h) * ndtr(-qneg)
    positive = np.exp(-0.5 * p2) * (1.0 - qpos * math.sqrt(math.pi / 2.0) * erfcx(qpos / math.sqrt(2.0)))
    return np.where(q < 0.0, negative, positive) / TWO_PI


def wedge_measure(
    apex: Union[Sequence[float], np.ndarray],
    angle_lo: float,
    width: float,
    angular_nodes: int = 256,
) -> Union[float, np.ndarray]:
    """
    Standard Gaussian measure of the wedge {apex + r e_theta : r >= 0, theta in [lo, lo + width]}.

    The radial integral is closed form; the angular one uses Gauss-Legendre.
    Vectorized over apex arrays of shape (..., 2).
    """
    if width < 0.0 or width > TWO_PI + 1e-12:
        raise InvalidParameterError(f"Wedge width must lie in [0, 2 pi], got {width}")
    p = np.asarray(apex, dtype=float)
    if p.shape[-1] != 2:
        raise DimensionMismatchError(f"Wedge apex must be planar, got shape {p.shape}")
    if width == 0.0:
        zero = np.zeros(p.shape[:-1])
        return float(zero) if zero.ndim == 0 else zero
    nodes, weights = _angular_rule(angular_nodes)
    theta = angle_lo + 0.5 * width * (nodes + 1.0)
    radial = wedge_radial_mass(p[..., None, :], theta)
    value = 0.5 * width * (radial @ weights)
    return float(value) if np.ndim(value) == 0 else value


def wedge_integral(
    g: Callable[[np.ndarray], np.ndarray],
    apex: Union[Sequence[float], np.ndarray],
    angle_lo: float,
    width: float,
    radial_nodes: int = 128,
    angular_nodes: int = 256,
    tail: float = 10.0,
) -> np.ndarray:
    """
    Integral of g against the standard Gaussian over a wedge with the given apex.

    Polar Gauss-Legendre quadrature around the apex, radius truncated at |apex| + tail.

    Args:
        g: Vectorized handle (..., 2) -> (...) or (..., m) for vector-valued integrands
        apex: Wedge apex (2,)
        angle_lo: First boundary ray angle
        width: Opening angle in [0, 2 pi]

    Returns:
        Integral as a float or a vector

    Raises:
        QuadratureError: If the sum is not finite
    """
    p = np.asarray(apex, dtype=float).reshape(2)
    r_max = float(np.linalg.norm(p)) + tail
    r, wr = leggauss(radial_nodes)
    r = 0.5 * r_max * (r + 1.0)
    wr = 0.5 * r_max * wr
    theta, wt = _angular_rule(angular_nodes)
    theta = angle_lo + 0.5 * width * (theta + 1.0)
    wt = 0.5 * width * wt
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    y = np.stack([p[0] + rr * np.cos(tt), p[1] + rr * np.sin(tt)], axis=-1)
    density = np.exp(-0.5 * np.sum(y * y, axis=-1)) / TWO_PI
    weights = np.outer(wr, wt) * rr * density
    values = np.asarray(g(y), dtype=float)
    if values.ndim == weights.ndim:
        total = np.sum(weights * values)
    else:
        total = np.tensordot(weights, values, axes=([0, 1], [0, 1]))
    if not np.all(np.isfinite(total)):
        raise QuadratureError("Non-finite wedge quadrature sum")
    return float(total) if np.ndim(total) == 0 else np.asarray(total)


_ANGULAR_RULES = {}


def _angular_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    if nodes not in _ANGULAR_RULES:
        _ANGULAR_RULES[nodes] = leggauss(nodes)
    return _ANGULAR_RULES[nodes]


def angle_difference_density(psi: Union[float, np.ndarray], rho: float) -> np.ndarray:
    """
    Density on the circle of arg(Y) - arg(X) for a rho-correlated planar Gaussian pair.

    f(psi) = (1 - rho^2) / (2 pi (1 - b^2)) [1 + b arccos(-b) / sqrt(1 - b^2)], b = rho cos(psi).
    Defined for |rho| < 1.
    """
    rho = check_rho(rho, open_interval=True)
    b = rho * np.cos(np.asarray(psi, dtype=float))
    one_minus = 1.0 - b * b
    return (1.0 - rho * rho) / (TWO_PI * one_minus) * (1.0 + b * np.arccos(-b) / np.sqrt(one_minus))


class TailBoundCheck(NamedTuple):
    lhs: float
    rhs: float


def _abs_moment(a: int) -> float:
    """E|Z|^a for a standard normal Z."""
    return math.exp(0.5 * a * math.log(2.0) + gammaln(0.5 * (a + 1)) - 0.5 * math.log(math.pi))


def _abs_moment_band(a: int, eta: float) -> float:
    """Integral of |y|^a phi(y) over [-eta, eta]."""
    return _abs_moment(a) * float(gammainc(0.5 * (a + 1), 0.5 * eta * eta))


def _moment_upper_tail(b: int, t: float) -> float:
    """Integral of y^b phi(y) over [t, inf) for t >= 0."""
    return 0.5 * _abs_moment(b) * float(gammaincc(0.5 * (b + 1), 0.5 * t * t))


def tail_bound_check(eta: float, t: float, n: int, region: str = "slab") -> TailBoundCheck:
    """
    Moment integral of sum_{|l| <= 3} prod_i |y_i|^{l_i} over a tail region, with its bound.

    Regions:
        slab: [-eta, eta] x [t, inf) x R^{n-2}, bound 3000 n^3 eta (t^2 + 2) e^{-t^2/2}
        ball: complement of the ball of radius t, bound 100 (n+2)! (t^{n+1} + 1) e^{-t^2/2}

    The integral is exact: slab terms factor into one-dimensional incomplete-gamma
    moments; ball terms split into a chi radial tail and a spherical moment.

    Args:
        eta: Slab half-width (> 0)
        t: Tail threshold (> 0)
        n: Dimension (>= 2)
        region: "slab" or "ball"

    Returns:
        (lhs, rhs); the caller asserts lhs <= rhs
    """
    if eta <= 0.0 or t <= 0.0 or n < 2:
        raise InvalidParameterError(f"Tail bound requires eta, t > 0 and n >= 2, got {eta}, {t}, {n}")
    gaussian_tail = math.exp(-0.5 * t * t)
    lhs = 0.0
    if region == "slab":
        for ell in multi_indices(n, 3):
            term = _abs_moment_band(ell[0], eta) * _moment_upper_tail(ell[1], t)
            for a in ell.entries[2:]:
                term *= _abs_moment(a)
            lhs += term
        rhs = 3000.0 * n ** 3 * eta * (t * t + 2.0) * gaussian_tail
    elif region == "ball":
        for ell in multi_indices(n, 3):
            term = float(gammaincc(0.5 * (n + ell.degree), 0.5 * t * t))
            for a in ell.entries:
                term *= _abs_moment(a)
            lhs += term
        rhs = 100.0 * math.factorial(n + 2) * (t ** (n + 1) + 1.0) * gaussian_tail
    else:
        raise InvalidParameterError(f"Unknown tail region: {region}")
    logger.debug("Tail bound evaluated", extra={"region": region, "eta": eta, "t": t, "n": n, "lhs": lhs, "rhs": rhs})
    return TailBoundCheck(lhs=lhs, rhs=rhs)
