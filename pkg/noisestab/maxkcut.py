"""
MAX-k-CUT: the alpha_k constant of the regular partition and a small relax-and-round pipeline.

Cut values use the ordered-pair double sum sum_{c(i) != c(j)} a_ij, so every unordered edge counts twice.
"""

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.stats import special_ortho_group

from noisestab.errors import EnumerationCapError, InvalidParameterError, UnsupportedGeometryError
from noisestab.gauss import RandomSource
from noisestab.logger import setup_logger
from noisestab.parallel import map_chunks, resolve_workers
from noisestab.partition import ConicalPartition, classify, regular_simplex_generators
from noisestab.stability import noise_stability_J

logger = setup_logger(__name__)

BRUTE_FORCE_CAP = 10 ** 7
BRUTE_FORCE_CHUNK = 1 << 16
PENALTY_SCHEDULE = (10.0, 1e2, 1e3, 1e4, 1e5)
NORM_TOLERANCE = 1e-10


@dataclass
class WeightedGraph:
    """Symmetric nonnegative weights with zero diagonal."""

    weights: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidParameterError(f"Weight matrix must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise InvalidParameterError("Weights must be finite and nonnegative")
        if not np.allclose(a, a.T, atol=0.0):
            raise InvalidParameterError("Weight matrix must be symmetric")
        if np.any(np.diag(a) != 0.0):
            raise InvalidParameterError("Weight matrix must have a zero diagonal")
        self.weights = a

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edge_list(cls, text: str, n: Optional[int] = None) -> "WeightedGraph":
        """Whitespace lines "u v [w]" with 0-indexed vertices; blank lines and # comments are skipped."""
        edges = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) > 2 else 1.0
            except (IndexError, ValueError) as e:
                raise InvalidParameterError(f"Malformed edge on line {lineno}: {str(e)}")
            if u == v or u < 0 or v < 0:
                raise InvalidParameterError(f"Invalid edge on line {lineno}: {u} {v}")
            edges.append((u, v, w))
        largest = max((max(u, v) for u, v, _ in edges), default=-1)
        size = n if n is not None else largest + 1
        if largest >= size:
            raise InvalidParameterError(f"Vertex {largest} out of range for a graph on {size} vertices")
        a = np.zeros((size, size))
        for u, v, w in edges:
            a[u, v] += w
            a[v, u] += w
        return cls(a)

    @classmethod
    def from_json(cls, text: str) -> "WeightedGraph":
        """A JSON weight matrix, bare or as {"weights": [...]}."""
        data = json.loads(text)
        if isinstance(data, dict):
            data = data.get("weights")
        if data is None:
            raise InvalidParameterError("Graph JSON needs a weight matrix")
        return cls(np.asarray(data, dtype=float))

    @classmethod
    def from_networkx(cls, graph: nx.Graph) -> "WeightedGraph":
        return cls(nx.to_numpy_array(graph, nodelist=sorted(graph.nodes), weight="weight"))

    @classmethod
    def random_graph(cls, n: int, p: float, rng: RandomSource) -> "WeightedGraph":
        """G(n, p) with independent Uniform(0, 1) edge weights."""
        gen = rng.generator
        graph = nx.gnp_random_graph(n, p, seed=int(gen.integers(2 ** 32)))
        for u, v in graph.edges:
            graph[u][v]["weight"] = float(gen.uniform(0.0, 1.0))
        graph.add_nodes_from(range(n))
        return cls.from_networkx(graph)

    def cut_value(self, assignment: Sequence[int]) -> float:
        c = np.asarray(assignment)
        if c.shape != (self.n,):
            raise InvalidParameterError(f"Assignment needs {self.n} labels")
        return float(np.sum(self.weights[c[:, None] != c[None, :]]))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist()}


def maxkcut_bruteforce(g: WeightedGraph, k: int, cap: int = BRUTE_FORCE_CAP) -> Tuple[float, np.ndarray]:
    """
    Exact MAX-k-CUT by enumerating all k^n assignments in lexicographic order.

    Returns:
        (optimum, first optimal assignment)

    Raises:
        EnumerationCapError: If k^n exceeds cap
    """
    if k < 2:
        raise InvalidParameterError(f"k must be at least 2, got {k}")
    total = k ** g.n
    if total > cap:
        raise EnumerationCapError(f"{k}^{g.n} = {total} assignments exceed the brute-force cap {cap}")
    if g.n == 0:
        return 0.0, np.zeros(0, dtype=int)
    powers = k ** np.arange(g.n - 1, -1, -1)
    mass = float(g.weights.sum())
    best_value, best_index = -math.inf, 0
    for start in range(0, total, BRUTE_FORCE_CHUNK):
        index = np.arange(start, min(start + BRUTE_FORCE_CHUNK, total))
        labels = (index[:, None] // powers[None, :]) % k
        onehot = np.eye(k)[labels]
        same = np.einsum("bik,ij,bjk->b", onehot, g.weights, onehot)
        cuts = mass - same
        idx = int(np.argmax(cuts))
        if cuts[idx] > best_value + 1e-12:
            best_value, best_index = float(cuts[idx]), int(index[idx])
    assignment = (best_index // powers) % k
    return max(best_value, 0.0), assignment


@dataclass
class Embedding:
    """Unit vectors v_1..v_n in R^d with the penalized relaxation diagnostics."""

    vectors: np.ndarray
    relaxation_value: float = math.nan
    gradient_norm: float = 0.0
    converged: bool = True
    graph: Optional[WeightedGraph] = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        norms = np.linalg.norm(v, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise InvalidParameterError("Embedding vectors must have unit norm")
        self.vectors = v

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T


def _normalize_rows(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
    return u / norms, norms


def _penalized(u_flat: np.ndarray, a: np.ndarray, floor: float, mu: float, shape: Tuple[int, int]):
    """Objective sum a_ij <v_i, v_j> + mu sum_{i != j} relu(floor - <v_i, v_j>)^2 and its gradient in u."""
    u = u_flat.reshape(shape)
    v, norms = _normalize_rows(u)
    gram = v @ v.T
    violation = np.maximum(floor - gram, 0.0)
    np.fill_diagonal(violation, 0.0)
    value = float(np.sum(a * gram) + mu * np.sum(violation ** 2))
    grad_v = 2.0 * (a - 2.0 * mu * violation) @ v
    radial = np.sum(grad_v * v, axis=1, keepdims=True)
    grad_u = (grad_v - radial * v) / norms
    return value, grad_u.reshape(-1)


def relax_embed(
    g: WeightedGraph,
    k: int = 3,
    d: Optional[int] = None,
    iterations: int = 500,
    rng: Optional[RandomSource] = None,
    tol: float = 1e-6,
) -> Embedding:
    """
    Low-rank penalized relaxation: maximize sum a_ij (1 - <v_i, v_j>) over unit vectors with
    <v_i, v_j> >= -1/(k-1) enforced by a quadratic penalty.

    Rows of a free factor U are normalized to give v_i; each penalty level in PENALTY_SCHEDULE
    is an L-BFGS solve warm-started from the previous one. The reported relaxation value is
    (k-1)/k sum a_ij (1 - <v_i, v_j>), which equals the cut value at simplex-vertex embeddings.

    Args:
        g: Graph
        k: Number of parts
        d: Embedding dimension (defaults to the vertex count, at least 2)
        iterations: L-BFGS iteration cap per penalty level
        rng: Stream for the starting factor
        tol: Projected-gradient tolerance for the convergence flag
    """
    d = d if d is not None else max(g.n, 2)
    if d < 2:
        raise InvalidParameterError(f"Embedding dimension must be at least 2, got {d}")
    if k < 2:
        raise InvalidParameterError(f"k must be at least 2, got {k}")
    rng = rng or RandomSource(0)
    shape = (g.n, d)
    floor = -1.0 / (k - 1)
    u = rng.generator.standard_normal(shape).reshape(-1)
    converged = True
    for mu in PENALTY_SCHEDULE:
        result = minimize(
            _penalized,
            u,
            args=(g.weights, floor, mu, shape),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": iterations, "gtol": tol * 1e-2},
        )
        u = result.x
        converged = bool(result.success)
        logger.debug("Relaxation stage", extra={"mu": mu, "value": float(result.fun), "iterations": int(result.nit)})
    vectors, _ = _normalize_rows(u.reshape(shape))
    _, grad = _penalized(vectors.reshape(-1), g.weights, floor, PENALTY_SCHEDULE[-1], shape)
    gradient_norm = float(np.linalg.norm(grad))
    scale = max(1.0, float(g.weights.sum()))
    converged = converged or gradient_norm <= tol * scale
    if not converged:
        logger.warning("Relaxation did not converge", extra={"gradient_norm": gradient_norm, "n": g.n, "d": d})
    gram = vectors @ vectors.T
    value = (k - 1) / k * float(np.sum(g.weights * (1.0 - gram)))
    return Embedding(vectors, value, gradient_norm, converged, graph=g)


def _round_once(vectors: np.ndarray, k: int, rng: RandomSource) -> np.ndarray:
    d = vectors.shape[1]
    rotation = special_ortho_group.rvs(d, random_state=rng.generator)
    partition = ConicalPartition.induced(regular_simplex_generators(k, d) @ rotation.T)
    return np.atleast_1d(classify(partition, vectors))


def rounding_cut_values(
    e: Embedding,
    k: int,
    rng: RandomSource,
    trials: int,
    graph: Optional[WeightedGraph] = None,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Cut values and assignments of `trials` independent random rotations of the regular partition."""
    graph = graph or e.graph
    if graph is None:
        raise InvalidParameterError("Rounding needs the graph the embedding came from")
    if k > e.dimension + 1:
        raise UnsupportedGeometryError(f"Regular {k}-cone partition needs dimension >= {k - 1}, got {e.dimension}")
    assignments = [_round_once(e.vectors, k, stream) for stream in rng.spawn(trials)]
    return np.array([graph.cut_value(c) for c in assignments]), assignments


def round_conical(
    e: Embedding,
    k: int,
    rng: Optional[RandomSource] = None,
    trials: int = 20,
    graph: Optional[WeightedGraph] = None,
) -> Tuple[np.ndarray, float]:
    """
    Assign c(i) = cell of v_i in a Haar-random rotation of the regular simplicial partition;
    the best of `trials` rotations is returned (earliest trial on ties).
    """
    values, assignments = rounding_cut_values(e, k, rng or RandomSource(0), trials, graph)
    best = int(np.argmax(values))
    return assignments[best], float(values[best])


@dataclass
class AlphaResult:
    k: int
    grid: np.ndarray
    ratios: np.ndarray
    infimum: float
    argmin: float
    refined_infimum: float
    refined_argmin: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "grid": [float(r) for r in self.grid],
            "ratios": [float(r) for r in self.ratios],
            "infimum": self.infimum,
            "argmin": self.argmin,
            "refined_infimum": self.refined_infimum,
            "refined_argmin": self.refined_argmin,
        }


def alpha_ratio(p: ConicalPartition, rho: float, nodes: int = 64) -> float:
    """(k - k J(rho)) / ((k - 1)(1 - rho)) with J the total stability of p."""
    k = p.k
    j = noise_stability_J(p, rho, "quadrature2d", nodes=nodes).value
    return (k - k * j) / ((k - 1) * (1.0 - rho))


def alpha_k(
    k: int = 3,
    rho_grid: Optional[Sequence[float]] = None,
    nodes: int = 64,
    partition: Optional[ConicalPartition] = None,
) -> AlphaResult:
    """
    Grid infimum of the approximation ratio over rho in [-1/(k-1), 0], refined by a bounded
    scalar search within one grid step of the grid argmin.

    Raises:
        InvalidParameterError: If the grid leaves [-1/(k-1), 0]
        UnsupportedGeometryError: If k != 3 and no planar partition is given
    """
    if partition is None:
        if k != 3:
            raise UnsupportedGeometryError("alpha_k is evaluated for k=3 unless a planar partition is supplied")
        partition = ConicalPartition.regular(3, 2)
    lower = -1.0 / (k - 1)
    grid = np.asarray(rho_grid if rho_grid is not None else np.linspace(lower, 0.0, 101), dtype=float)
    if grid.size == 0 or np.any(grid < lower - 1e-12) or np.any(grid > 1e-12):
        raise InvalidParameterError(f"rho grid must lie in [{lower}, 0]")
    grid = np.clip(grid, lower, 0.0)
    ratios = np.array([alpha_ratio(partition, r, nodes) for r in grid])
    idx = int(np.argmin(ratios))
    refined_value, refined_rho = float(ratios[idx]), float(grid[idx])
    if grid.size > 1:
        step = float(np.max(np.diff(np.sort(grid))))
        result = minimize_scalar(
            lambda r: alpha_ratio(partition, r, nodes),
            bounds=(max(lower, grid[idx] - step), min(0.0, grid[idx] + step)),
            method="bounded",
            options={"xatol": 1e-8},
        )
        if result.success and result.fun < refined_value:
            refined_value, refined_rho = float(result.fun), float(result.x)
    logger.info(
        "alpha_k evaluated",
        extra={"k": k, "grid_points": int(grid.size), "infimum": float(ratios[idx]), "refined": refined_value},
    )
    return AlphaResult(k, grid, ratios, float(ratios[idx]), float(grid[idx]), refined_value, refined_rho)


def alpha_positive_side_minimum(k: int = 3, rho_grid: Optional[Sequence[float]] = None, nodes: int = 64) -> float:
    """Smallest ratio over rho in (0, 1); compared against the negative-side infimum in reports."""
    partition = ConicalPartition.regular(k, k - 1)
    grid = np.asarray(rho_grid if rho_grid is not None else np.linspace(0.01, 0.99, 99), dtype=float)
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise InvalidParameterError("Positive-side grid must lie in (0, 1)")
    return float(min(alpha_ratio(partition, r, nodes) for r in grid))


def maxkcut_pipeline(
    graphs: Sequence[WeightedGraph],
    k: int = 3,
    rng: Optional[RandomSource] = None,
    trials: int = 20,
    d: Optional[int] = None,
    iterations: int = 500,
    workers: Optional[int] = None,
) -> List[Dict]:
    """
    Relax, round and compare with brute force on each graph.

    Returns:
        Rows {instance, brute_force, relaxation_value, best_rounded, ratio}
    """
    rng = rng or RandomSource(0)

    def run_instance(item: Tuple[int, WeightedGraph, RandomSource]) -> Dict:
        index, graph, stream = item
        relax_stream, round_stream = stream.spawn(2)
        optimum, _ = maxkcut_bruteforce(graph, k)
        embedding = relax_embed(graph, k, d, iterations, relax_stream)
        _, rounded = round_conical(embedding, k, round_stream, trials)
        return {
            "instance": index,
            "brute_force": optimum,
            "relaxation_value": embedding.relaxation_value,
            "best_rounded": rounded,
            "ratio": rounded / optimum if optimum > 0.0 else 1.0,
        }

    items = [(i, graph, stream) for i, (graph, stream) in enumerate(zip(graphs, rng.spawn(len(graphs))))]
    rows = map_chunks(run_instance, items, resolve_workers(workers))
    logger.info("MAX-k-CUT pipeline finished", extra={"instances": len(rows), "k": k, "trials": trials})
    return rows
