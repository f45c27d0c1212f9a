"""Command-line entry point: parse flags, run one experiment, write its run directory."""

import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from noisestab.errors import (
    EnumerationCapError,
    InvalidParameterError,
    ManifestError,
    NoiseStabilityError,
)
from noisestab.executor import ExperimentExecutor, ExperimentOutcome
from noisestab.logger import set_run_context, setup_logger
from noisestab.parallel import WORKERS_ENV
from noisestab.report import REPORT_FILE, ReportWriter
from noisestab.validators import ExperimentManifest, build_manifest

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_MANIFEST = 3
EXIT_ENUMERATION_CAP = 4
EXIT_LIBRARY = 5


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, help="Master seed (default 0)")
    parser.add_argument("--rho", type=str, help="rho grid: start:stop:step, comma list or a single value")
    parser.add_argument("--k", type=int, help="Number of cells / parts")
    parser.add_argument("--n", type=int, help="Ambient dimension")
    parser.add_argument("--method", type=str, help="J method: quadrature2d, montecarlo or hermite_series")
    parser.add_argument("--budget", type=int, help="Monte Carlo sample budget")
    parser.add_argument("--tol", type=float, help="Comparison tolerance")
    parser.add_argument("--out", type=str, help="Output root directory (default runs/)")
    parser.add_argument("--manifest", type=str, help="JSON experiment manifest")
    parser.add_argument("--workers", type=int, help=f"Worker count (overrides {WORKERS_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisestab", description="Gaussian noise stability experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)

    p = sub.add_parser("stability", help="J and psi_rho tables over a rho grid")
    _add_common(p)
    p.add_argument("--partition", type=str, help="regular, regular-sectors, half-planes or a JSON partition file")
    p.add_argument("--psi", action="store_true", default=None, help="Also tabulate psi_rho")

    p = sub.add_parser("variation", help="First-variation containment check")
    _add_common(p)
    p.add_argument("--partition", type=str)
    p.add_argument("--perturb", action="store_true", default=None, help="Move one breakpoint before checking")
    p.add_argument("--radial", type=int)
    p.add_argument("--angular", type=int)
    p.add_argument("--margin", type=float)

    p = sub.add_parser("optimize", help="sup psi_0 search or psi_rho perturbation search")
    _add_common(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--sup-psi0", dest="mode", action="store_const", const="sup_psi0")
    mode.add_argument("--perturb", dest="mode", action="store_const", const="perturb")
    p.add_argument("--restarts", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--empty-cells", type=int)
    p.add_argument("--bound", type=float)

    p = sub.add_parser("witness", help="Negative-rho witness scan")
    _add_common(p)

    p = sub.add_parser("discrete", help="Plurality stability tables")
    _add_common(p)
    p.add_argument("--ms", type=str, help="Comma list of vote counts m")

    p = sub.add_parser("maxkcut", help="alpha_k or the relax-and-round pipeline")
    _add_common(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--alpha", dest="mode", action="store_const", const="alpha")
    mode.add_argument("--pipeline", dest="mode", action="store_const", const="pipeline")
    p.add_argument("--graph", type=str, help="Edge list or JSON weight matrix")
    p.add_argument("--instances", type=int)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("verify", help="Full acceptance suite")
    _add_common(p)
    p.add_argument("--only", nargs="+", help="Run only the named checks")
    return parser


PARAM_FLAGS = (
    "partition", "psi", "perturb", "radial", "angular", "margin", "mode", "restarts", "starts",
    "empty_cells", "bound", "graph", "instances", "trials", "only",
)


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {key: getattr(args, key, None) for key in ("rho", "k", "n", "method", "budget", "tol", "seed", "out")}
    params = {key: getattr(args, key) for key in PARAM_FLAGS if getattr(args, key, None) is not None}
    if getattr(args, "ms", None):
        try:
            params["ms"] = [int(m) for m in args.ms.split(",")]
        except ValueError:
            raise ManifestError(f"--ms must be a comma list of integers, got {args.ms!r}")
    overrides["params"] = params
    return overrides


def write_run(manifest: ExperimentManifest, outcome: ExperimentOutcome) -> str:
    """Write report.json, manifest.json and the CSV tables into a fresh run directory."""
    run_dir = ReportWriter.create_run_dir(manifest.out, manifest.experiment, manifest.seed)
    report = ReportWriter.build_report(
        manifest.experiment,
        manifest.reproducible_dict(),
        manifest.seed,
        outcome.results,
        outcome.checks,
        run_id=run_dir.name,
    )
    if outcome.timings:
        report["metadata"]["elapsed_seconds"] = outcome.timings
    ReportWriter.write_json(run_dir / REPORT_FILE, report)
    ReportWriter.write_json(run_dir / "manifest.json", manifest.model_dump())
    for name, table in outcome.tables.items():
        ReportWriter.write_csv(run_dir / name, table.rows, table.columns)
    return str(run_dir)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 1 if a check failed, 2 on usage errors, 3 for manifests or invalid
        parameters, 4 when an enumeration cap is exceeded, 5 for other library errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        if args.workers is not None:
            if args.workers < 1:
                raise InvalidParameterError(f"--workers must be positive, got {args.workers}")
            os.environ[WORKERS_ENV] = str(args.workers)
        manifest = build_manifest(args.experiment, args.manifest, overrides_from_args(args))
        set_run_context(f"{manifest.experiment}-seed{manifest.seed}")
        outcome = ExperimentExecutor(manifest).execute()
        run_dir = write_run(manifest, outcome)
    except (ManifestError, InvalidParameterError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MANIFEST
    except EnumerationCapError as e:
        logger.error(f"Enumeration cap exceeded: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ENUMERATION_CAP
    except NoiseStabilityError as e:
        logger.error(f"Library error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_LIBRARY
    finally:
        set_run_context(None)

    sys.stdout.write(outcome.stdout)
    failed = [name for name, ok in outcome.checks.items() if not ok]
    if failed:
        logger.error("Checks failed", extra={"failed": failed, "run_dir": run_dir})
        return EXIT_CHECK_FAILED
    logger.info("Run complete", extra={"run_dir": run_dir, "checks": len(outcome.checks)})
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
