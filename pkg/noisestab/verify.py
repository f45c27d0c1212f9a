"""Full-budget acceptance suite; `main.py verify` runs it and fails on any failed check."""

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from noisestab.discrete import dictator_fn, discrete_stability, plurality_fn, rerandomization_stability
from noisestab.errors import InvalidParameterError, NoiseStabilityError, WitnessNotFoundError
from noisestab.gauss import TWO_PI, RandomSource, wedge_integral
from noisestab.hermite import hermite_eval_multi, multi_indices
from noisestab.logger import setup_logger
from noisestab.maxkcut import WeightedGraph, alpha_k, maxkcut_pipeline
from noisestab.optimize import (
    PSI_ZERO_REGULAR,
    GridSpec,
    PerturbationFamily,
    first_variation_check,
    ftc_reconstruction,
    lemma5_stability_probe,
    negative_rho_witness,
    perturbation_search_psi,
    perturbed_partition,
    sup_psi_zero_search,
)
from noisestab.partition import ConicalPartition, barycenter_vector, d2_distance
from noisestab.stability import (
    CellIndicator,
    T_rho_apply,
    dT_drho,
    dT_drho_finite_difference,
    noise_operator_handle,
    noise_stability_J,
)

logger = setup_logger(__name__)

CheckOutcome = Tuple[bool, Dict]


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: Dict = field(default_factory=dict)
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        # elapsed is reported under metadata
        return {"name": self.name, "passed": self.passed, "details": self.details}


def check_closed_form_constants(rng: RandomSource) -> CheckOutcome:
    r2, r3 = rng.spawn(2)
    v2, p2 = sup_psi_zero_search(2, 2, restarts=20, rng=r2)
    v3, p3 = sup_psi_zero_search(3, 2, restarts=20, rng=r3)
    passed = abs(v2 - 1.0 / math.pi) <= 1e-3 and abs(v3 - PSI_ZERO_REGULAR) <= 1e-3
    return passed, {"k2": v2, "k3": v3, "k2_widths": p2.widths(), "k3_widths": p3.widths()}


def check_regular_geometry(rng: RandomSource) -> CheckOutcome:
    p = ConicalPartition.regular(3, 2)
    expected_norm = math.sqrt(6.0) / (4.0 * math.sqrt(math.pi))
    expected_gap = 3.0 * math.sqrt(2.0) / (4.0 * math.sqrt(math.pi))
    closed = [barycenter_vector(p, i) for i in range(3)]
    quad = [wedge_integral(lambda y: y, np.zeros(2), lo, w) for lo, w in p.planar_arcs()]
    errors = []
    for z, q in zip(closed, quad):
        errors += [abs(np.linalg.norm(z) - expected_norm), abs(np.linalg.norm(q) - expected_norm)]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        errors += [
            abs(np.linalg.norm(closed[i] - closed[j]) - expected_gap),
            abs(np.linalg.norm(quad[i] - quad[j]) - expected_gap),
        ]
    return max(errors) <= 1e-8, {"max_error": max(errors), "norm": expected_norm, "gap": expected_gap}


def check_borell_half_planes(rng: RandomSource) -> CheckOutcome:
    p = ConicalPartition.sectors([0.0, math.pi])
    rows = []
    passed = True
    for rho, stream in zip((0.1, 0.5, 0.9), rng.spawn(3)):
        exact = 0.5 + math.asin(rho) / math.pi
        mc = noise_stability_J(p, rho, "montecarlo", budget=1_000_000, rng=stream)
        quad = noise_stability_J(p, rho, "quadrature2d")
        ok = abs(mc.value - exact) <= 3.0 * mc.error_estimate and abs(quad.value - exact) <= 1e-5
        passed = passed and ok
        rows.append({"rho": rho, "exact": exact, "montecarlo": mc.to_dict(), "quadrature": quad.value})
    return passed, {"rows": rows}


def check_spectral_consistency(rng: RandomSource) -> CheckOutcome:
    p = ConicalPartition.regular(3, 2)
    rows = []
    for rho in (0.05, 0.1, 0.3):
        series = noise_stability_J(p, rho, "hermite_series", max_degree=24).value
        quad = noise_stability_J(p, rho, "quadrature2d").value
        rows.append({"rho": rho, "series": series, "quadrature": quad, "gap": abs(series - quad)})
    return all(r["gap"] <= 1e-4 for r in rows), {"rows": rows}


def check_operator_identities(rng: RandomSource) -> CheckOutcome:
    points = np.array([[0.3, -0.7], [1.2, 0.5], [-0.9, -1.4]])
    rho = 0.4
    eigen_error = 0.0
    for ell in multi_indices(2, 4):
        applied = T_rho_apply(lambda y, ell=ell: hermite_eval_multi(ell, y), rho, points)
        expected = rho ** ell.degree * hermite_eval_multi(ell, points)
        eigen_error = max(eigen_error, float(np.max(np.abs(applied - expected) / np.maximum(1.0, np.abs(expected)))))

    f = CellIndicator.cell(ConicalPartition.regular(3, 2), 0)
    composed = T_rho_apply(noise_operator_handle(f, 0.5), 0.6, points)
    direct = T_rho_apply(f, 0.3, points)
    semigroup_error = float(np.max(np.abs(composed - direct)))

    derivative_error = 0.0
    for x in points:
        integral = dT_drho(f, 0.3, x)
        fd = dT_drho_finite_difference(f, 0.3, x)
        derivative_error = max(derivative_error, abs(integral - fd))
    passed = eigen_error <= 1e-6 and semigroup_error <= 1e-5 and derivative_error <= 1e-4
    return passed, {"eigen": eigen_error, "semigroup": semigroup_error, "derivative": derivative_error}


def check_cone_moment(rng: RandomSource) -> CheckOutcome:
    gen = rng.generator
    worst = 0.0
    for _ in range(20):
        lo, width = gen.uniform(0.0, TWO_PI), gen.uniform(0.1, TWO_PI - 0.1)
        moment = wedge_integral(lambda y: 2.0 - y[..., 0] ** 2 - y[..., 1] ** 2, np.zeros(2), lo, width)
        worst = max(worst, abs(float(moment)))
    return worst < 1e-8, {"max_abs_moment": worst}


def check_first_variation(rng: RandomSource) -> CheckOutcome:
    regular = ConicalPartition.regular(3, 2)
    clean = first_variation_check(regular, 0.05, GridSpec(radial=24, angular=48, r_max=3.0, margin=1e-2, tol=1e-6))
    moved = perturbed_partition(regular, breakpoint=1, shift=0.2)
    dirty = first_variation_check(moved, 0.05, GridSpec(radial=24, angular=720, r_max=3.0, margin=1e-2, tol=1e-6))
    passed = clean.passed and len(dirty.violations) >= 1
    return passed, {"regular": clean.to_dict(), "perturbed_violations": len(dirty.violations)}


def check_small_rho_optimality(rng: RandomSource) -> CheckOutcome:
    regular = ConicalPartition.regular(3, 2)
    family = PerturbationFamily(regular, "sector-angles", bound=0.5)
    result = perturbation_search_psi(0.05, family, budget=200, rng=rng)
    distance = d2_distance(result.partition, regular).value
    passed = distance <= 1e-2 and result.base_value >= result.best_value - 1e-6
    return passed, {
        "search": result.to_dict(),
        "d2_to_regular": distance,
        "tested_rho": [0.05],
        "note": "property-based substitute for the unquantified small-rho threshold",
    }


def check_negative_rho_witness(rng: RandomSource) -> CheckOutcome:
    try:
        witness = negative_rho_witness(-0.05)
    except WitnessNotFoundError as e:
        return False, {"witness": None, "scanned_region": e.scanned_region}
    details = {"witness": witness.to_dict()}
    try:
        details["positive_rho_witness"] = negative_rho_witness(0.05).to_dict()
    except WitnessNotFoundError as e:
        details["positive_rho_witness"] = None
        details["positive_rho_scanned_region"] = e.scanned_region
    passed = witness.value < 0.0 and details["positive_rho_witness"] is None
    return passed, details


def check_ftc_reconstruction(rng: RandomSource) -> CheckOutcome:
    lhs, rhs = ftc_reconstruction(ConicalPartition.regular(3, 2), 0.3)
    return abs(lhs - rhs) <= 1e-4, {"J_difference": lhs, "psi_integral": rhs}


def check_discrete_stability(rng: RandomSource) -> CheckOutcome:
    rows = []
    worst = 0.0
    for m in (1, 3, 5):
        f = plurality_fn(m, 3)
        for rho in (-0.4, 0.1, 0.5):
            fourier = discrete_stability(f, rho)
            oracle = rerandomization_stability(f, rho)
            worst = max(worst, abs(fourier - oracle))
            rows.append({"m": m, "rho": rho, "fourier": fourier, "rerandomization": oracle})
    dictator = dictator_fn(3, 1)
    dictator_error = max(
        max(abs(discrete_stability(dictator, r) - (1 + 2 * r) / 3), abs(rerandomization_stability(dictator, r) - (1 + 2 * r) / 3))
        for r in (-0.4, 0.1, 0.5)
    )
    return worst <= 1e-12 and dictator_error <= 1e-12, {"rows": rows, "max_gap": worst, "dictator_error": dictator_error}


def check_alpha_three(rng: RandomSource) -> CheckOutcome:
    coarse = alpha_k(3, nodes=64)
    fine = alpha_k(3, nodes=128)
    passed = abs(coarse.infimum - fine.infimum) <= 1e-4 and abs(coarse.infimum - 0.836) <= 5e-3
    return passed, {
        "infimum_64": coarse.infimum,
        "infimum_128": fine.infimum,
        "argmin": coarse.argmin,
        "refined_infimum": coarse.refined_infimum,
    }


def check_maxkcut_pipeline(rng: RandomSource) -> CheckOutcome:
    graph_rng, pipeline_rng = rng.spawn(2)
    graphs = [WeightedGraph.random_graph(8, 0.5, s) for s in graph_rng.spawn(100)]
    rows = maxkcut_pipeline(graphs, 3, pipeline_rng, trials=20)
    good = sum(1 for r in rows if r["ratio"] >= 0.83)
    sound = all(r["best_rounded"] <= r["brute_force"] + 1e-9 for r in rows)
    return good >= 95 and sound, {"instances": len(rows), "ratio_at_least_0.83": good, "never_above_optimum": sound}


def check_stability_metric(rng: RandomSource) -> CheckOutcome:
    rows = lemma5_stability_probe([1e-4, 1e-6], directions=64, rng=rng)
    return all(r["passed"] for r in rows), {"rows": rows}


ACCEPTANCE_CHECKS: Dict[str, Callable[[RandomSource], CheckOutcome]] = {
    "closed_form_constants": check_closed_form_constants,
    "regular_geometry": check_regular_geometry,
    "borell_half_planes": check_borell_half_planes,
    "spectral_consistency": check_spectral_consistency,
    "operator_identities": check_operator_identities,
    "cone_moment": check_cone_moment,
    "first_variation": check_first_variation,
    "small_rho_optimality": check_small_rho_optimality,
    "negative_rho_witness": check_negative_rho_witness,
    "ftc_reconstruction": check_ftc_reconstruction,
    "discrete_stability": check_discrete_stability,
    "alpha_three": check_alpha_three,
    "maxkcut_pipeline": check_maxkcut_pipeline,
    "stability_metric": check_stability_metric,
}


def run_acceptance(seed: int = 0, only: Optional[Sequence[str]] = None) -> List[CheckResult]:
    """
    Run the acceptance checks in order; check i uses child stream i of the master seed,
    so a subset reproduces the numbers of the full run.
    """
    names = list(ACCEPTANCE_CHECKS)
    streams = RandomSource(seed).spawn(len(names))
    selected = set(only) if only else set(names)
    unknown = selected - set(names)
    if unknown:
        raise InvalidParameterError(f"Unknown acceptance checks: {', '.join(sorted(unknown))}")
    results = []
    for name, stream in zip(names, streams):
        if name not in selected:
            continue
        start = time.perf_counter()
        try:
            passed, details = ACCEPTANCE_CHECKS[name](stream)
        except NoiseStabilityError as e:
            logger.error(f"Acceptance check {name} raised: {e}")
            passed, details = False, {"error": str(e), "error_type": type(e).__name__}
        elapsed = time.perf_counter() - start
        results.append(CheckResult(name, bool(passed), details, elapsed))
        log = logger.info if passed else logger.error
        log("Acceptance check finished", extra={"check": name, "passed": bool(passed), "elapsed": elapsed})
    return results
