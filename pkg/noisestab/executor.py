"""Experiment dispatch: turns a validated manifest into results, checks and tables."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from noisestab.discrete import RERANDOMIZATION_CAP, plurality_fn, plurality_trend, rerandomization_stability
from noisestab.errors import NoiseStabilityError, TruncationError, WitnessNotFoundError
from noisestab.gauss import RandomSource
from noisestab.logger import setup_logger
from noisestab.maxkcut import WeightedGraph, alpha_k, alpha_positive_side_minimum, maxkcut_pipeline
from noisestab.optimize import (
    PSI_ZERO_REGULAR,
    GridSpec,
    PerturbationFamily,
    WitnessSearch,
    first_variation_check,
    negative_rho_witness,
    perturbation_search_psi,
    perturbed_partition,
    sup_psi_zero_search,
)
from noisestab.partition import ConicalPartition, cell_measures, d2_distance
from noisestab.report import ReportWriter
from noisestab.stability import noise_stability_J, psi_rho
from noisestab.validators import ExperimentManifest
from noisestab.verify import run_acceptance

logger = setup_logger(__name__)


@dataclass
class Table:
    rows: List[Dict[str, Any]]
    columns: List[str]


@dataclass
class ExperimentOutcome:
    results: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    tables: Dict[str, Table] = field(default_factory=dict)
    stdout: str = ""
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def resolve_partition(spec: Any, k: int, n: int) -> ConicalPartition:
    """
    Partition from a manifest entry: "regular", "regular-sectors", "half-planes", a partition
    record, or a path to a JSON partition record.
    """
    if isinstance(spec, dict):
        return ConicalPartition.from_dict(spec)
    if spec in (None, "regular"):
        return ConicalPartition.regular(k, n)
    if spec == "regular-sectors":
        return ConicalPartition.regular_sectors(k)
    if spec == "half-planes":
        return ConicalPartition.sectors([0.0, math.pi])
    with open(spec, "r") as f:
        return ConicalPartition.from_json(f.read())


class ExperimentExecutor:
    """Runs one experiment manifest."""

    def __init__(self, manifest: ExperimentManifest):
        self.manifest = manifest
        self.params = manifest.params
        self.rng = RandomSource(manifest.seed)

    def execute(self) -> ExperimentOutcome:
        """
        Run the manifest's experiment.

        Raises:
            NoiseStabilityError: Library errors propagate unchanged; anything else is wrapped
        """
        name = self.manifest.experiment
        logger.info("Starting experiment", extra={"experiment": name, "seed": self.manifest.seed})
        try:
            outcome = getattr(self, f"_run_{name}")()
        except NoiseStabilityError:
            raise
        except (OSError, ValueError, KeyError, TypeError) as e:
            logger.error(f"Unexpected error during {name}: {e}")
            raise NoiseStabilityError(f"Experiment {name} failed: {str(e)}")
        logger.info("Experiment finished", extra={"experiment": name, "passed": outcome.passed, "checks": outcome.checks})
        return outcome

    def _partition(self) -> ConicalPartition:
        return resolve_partition(self.params.get("partition"), self.manifest.k, self.manifest.n)

    def _run_stability(self) -> ExperimentOutcome:
        p = self._partition()
        streams = self.rng.spawn(len(self.manifest.rho))
        rows = []
        for rho, stream in zip(self.manifest.rho, streams):
            result = noise_stability_J(p, rho, self.manifest.method, budget=self.manifest.budget, rng=stream)
            row = {"rho": rho, "J": result.value, "error_estimate": result.error_estimate, "method": result.method}
            if result.seed is not None:
                row["seed"] = result.seed
                row["samples"] = self.manifest.budget
            if self.params.get("psi", False) and p.is_planar and abs(rho) < 1.0:
                try:
                    row["psi"] = psi_rho(p, rho, int(self.params.get("max_degree", 24)))
                except TruncationError as e:
                    logger.warning(f"psi_rho skipped: {e}", extra={"rho": rho})
                    row["psi"] = None
            rows.append(row)
        columns = ["rho", "J", "error_estimate", "method"] + (["psi"] if self.params.get("psi", False) else [])
        outcome = ExperimentOutcome(results={"partition": p.to_dict(), "rows": rows})
        outcome.tables["stability.csv"] = Table(rows, columns)
        for row in rows:
            if row["rho"] == 0.0:
                expected = float(np.sum(cell_measures(p)[0] ** 2))
                tolerance = 1e-9 if row["method"] != "montecarlo" else 4.0 * row["error_estimate"] + 1e-12
                outcome.checks["J_at_rho_zero"] = abs(row["J"] - expected) <= tolerance
        outcome.stdout = ReportWriter.format_csv(rows, columns)
        return outcome

    def _run_variation(self) -> ExperimentOutcome:
        p = self._partition()
        perturb = bool(self.params.get("perturb", False))
        if perturb:
            p = perturbed_partition(p, breakpoint=1, shift=float(self.params.get("perturb_shift", 0.2)))
        spec = GridSpec(
            radial=int(self.params.get("radial", 24)),
            angular=int(self.params.get("angular", 720 if perturb else 48)),
            r_max=float(self.params.get("r_max", 3.0)),
            margin=float(self.params.get("margin", 1e-2)),
            tol=self.manifest.tol,
        )
        outcome = ExperimentOutcome(results={"partition": p.to_dict(), "reports": []})
        violations = []
        for rho in self.manifest.rho:
            report = first_variation_check(p, rho, spec)
            outcome.results["reports"].append(report.to_dict())
            key = f"violations_found_rho={rho}" if perturb else f"no_violations_rho={rho}"
            outcome.checks[key] = (not report.passed) if perturb else report.passed
            for v in report.violations:
                violations.append({"rho": rho, "x1": v.point[0], "x2": v.point[1], "cell_claimed": v.cell_claimed,
                                   "cell_maximizing": v.cell_maximizing, "gap": v.gap})
        columns = ["rho", "x1", "x2", "cell_claimed", "cell_maximizing", "gap"]
        outcome.tables["violations.csv"] = Table(violations, columns)
        outcome.stdout = ReportWriter.dumps_json({"reports": outcome.results["reports"]})
        return outcome

    def _run_optimize(self) -> ExperimentOutcome:
        mode = self.params.get("mode", "sup_psi0")
        k, n = self.manifest.k, self.manifest.n
        if mode == "sup_psi0":
            empty = int(self.params.get("empty_cells", 0))
            value, p = sup_psi_zero_search(k, n, int(self.params.get("restarts", 20)), self.rng, empty_cells=empty)
            outcome = ExperimentOutcome(results={"sup_psi0": value, "partition": p.to_dict(), "widths": p.widths()})
            expected = {1: 0.0, 2: 1.0 / math.pi, 3: PSI_ZERO_REGULAR}.get(k - empty)
            if expected is not None:
                outcome.results["expected"] = expected
                outcome.checks["sup_psi0_closed_form"] = abs(value - expected) <= 1e-3
            outcome.stdout = f"{value:.6f}\n"
            return outcome
        if mode == "perturb":
            base = self._partition()
            family = PerturbationFamily(
                base, self.params.get("parametrization", "sector-angles"), float(self.params.get("bound", 0.5))
            )
            outcome = ExperimentOutcome(results={"searches": [], "tested_rho": self.manifest.rho})
            rows = []
            for rho, stream in zip(self.manifest.rho, self.rng.spawn(len(self.manifest.rho))):
                result = perturbation_search_psi(rho, family, int(self.params.get("starts", 200)), stream)
                distance = d2_distance(result.partition, base).value
                outcome.results["searches"].append({"rho": rho, "d2_to_base": distance, **result.to_dict()})
                outcome.checks[f"incumbent_near_base_rho={rho}"] = distance <= 1e-2
                outcome.checks[f"base_not_beaten_rho={rho}"] = result.base_value >= result.best_value - 1e-6
                rows.append({"rho": rho, "best_value": result.best_value, "base_value": result.base_value, "d2_to_base": distance})
            columns = ["rho", "best_value", "base_value", "d2_to_base"]
            outcome.tables["perturbation.csv"] = Table(rows, columns)
            outcome.stdout = ReportWriter.format_csv(rows, columns)
            return outcome
        raise NoiseStabilityError(f"Unknown optimize mode: {mode}")

    def _run_witness(self) -> ExperimentOutcome:
        a_values = np.arange(
            float(self.params.get("a_min", 25.0)),
            float(self.params.get("a_max", 400.0)) + 1e-9,
            float(self.params.get("a_step", 25.0)),
        )
        search = WitnessSearch(
            a_values=tuple(float(a) for a in a_values),
            b_values=tuple(float(b) for b in self.params.get("b_values", (0.5, 1.0, 2.0))),
        )
        outcome = ExperimentOutcome(results={"witnesses": []})
        for rho in self.manifest.rho:
            try:
                witness = negative_rho_witness(rho, search)
                entry = witness.to_dict()
            except WitnessNotFoundError as e:
                entry = {"rho": rho, "witness": None, "scanned_region": e.scanned_region}
            outcome.results["witnesses"].append(entry)
            found = entry.get("value") is not None
            if rho < 0.0:
                outcome.checks[f"witness_found_rho={rho}"] = found
            else:
                outcome.checks[f"no_witness_rho={rho}"] = not found
        outcome.stdout = ReportWriter.dumps_json({"witnesses": outcome.results["witnesses"]})
        return outcome

    def _run_discrete(self) -> ExperimentOutcome:
        k = int(self.params.get("alphabet", self.manifest.k))
        ms = [int(m) for m in self.params.get("ms", [1, 3, 5, 7])]
        rows = plurality_trend(ms, self.manifest.rho, k=k)
        outcome = ExperimentOutcome(results={"k": k, "rows": rows})
        for row in rows:
            m = row["m"]
            if k ** (2 * m) <= RERANDOMIZATION_CAP:
                oracle = rerandomization_stability(plurality_fn(m, k), row["rho"])
                row["oracle"] = oracle
                outcome.checks[f"fourier_matches_oracle_m={m}_rho={row['rho']}"] = abs(oracle - row["value"]) <= 1e-12
        columns = ["m", "rho", "value"]
        outcome.tables["plurality.csv"] = Table(rows, columns)
        outcome.stdout = ReportWriter.format_csv(rows, columns)
        return outcome

    def _run_maxkcut(self) -> ExperimentOutcome:
        mode = self.params.get("mode", "alpha")
        k = self.manifest.k
        if mode == "alpha":
            grid = np.linspace(-1.0 / (k - 1), 0.0, int(self.params.get("grid_points", 101)))
            nodes = int(self.params.get("nodes", 64))
            result = alpha_k(k, grid, nodes)
            positive = alpha_positive_side_minimum(k, nodes=nodes)
            outcome = ExperimentOutcome(results={"alpha": result.to_dict(), "positive_side_minimum": positive})
            outcome.checks["ratio_at_rho_zero_is_one"] = abs(result.ratios[-1] - 1.0) <= 1e-9
            outcome.checks["positive_side_not_below_infimum"] = positive >= result.infimum - 1e-9
            rows = [{"rho": float(r), "ratio": float(v)} for r, v in zip(result.grid, result.ratios)]
            outcome.tables["alpha.csv"] = Table(rows, ["rho", "ratio"])
            outcome.stdout = f"{result.infimum:.6f}\n"
            return outcome
        if mode == "pipeline":
            graph_rng, pipeline_rng = self.rng.spawn(2)
            if self.params.get("graph"):
                graphs = [self._load_graph(self.params["graph"])]
            else:
                graphs = [
                    WeightedGraph.random_graph(int(self.params.get("vertices", 8)), float(self.params.get("edge_probability", 0.5)), s)
                    for s in graph_rng.spawn(int(self.params.get("instances", 100)))
                ]
            rows = maxkcut_pipeline(graphs, k, pipeline_rng, trials=int(self.params.get("trials", 20)))
            columns = ["instance", "brute_force", "relaxation_value", "best_rounded", "ratio"]
            outcome = ExperimentOutcome(results={"rows": rows})
            outcome.checks["rounded_never_above_optimum"] = all(r["best_rounded"] <= r["brute_force"] + 1e-9 for r in rows)
            outcome.tables["maxkcut.csv"] = Table(rows, columns)
            outcome.stdout = ReportWriter.format_csv(rows, columns)
            return outcome
        raise NoiseStabilityError(f"Unknown maxkcut mode: {mode}")

    @staticmethod
    def _load_graph(path: str) -> WeightedGraph:
        text = Path(path).read_text()
        if path.endswith(".json"):
            return WeightedGraph.from_json(text)
        return WeightedGraph.from_edge_list(text)

    def _run_verify(self) -> ExperimentOutcome:
        results = run_acceptance(self.manifest.seed, self.params.get("only"))
        outcome = ExperimentOutcome(
            results={r.name: r.to_dict() for r in results},
            checks={r.name: r.passed for r in results},
            timings={r.name: r.elapsed for r in results},
        )
        rows = [{"check": r.name, "passed": r.passed} for r in results]
        outcome.tables["verify.csv"] = Table(rows, ["check", "passed"])
        outcome.stdout = ReportWriter.format_csv(rows, ["check", "passed"])
        return outcome
