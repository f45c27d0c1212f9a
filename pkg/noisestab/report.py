"""Run directories and JSON / CSV report writing."""

import csv
import io
import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from noisestab.logger import setup_logger

logger = setup_logger(__name__)

REPORT_VERSION = "1"
REPORT_FILE = "report.json"


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars / arrays and objects with to_dict() into JSON-ready values."""
    if hasattr(value, "to_dict"):
        return to_builtin(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no NaN / inf
        return value if math.isfinite(value) else None
    return value


class ReportWriter:
    """Write experiment outputs into a fresh run directory."""

    @staticmethod
    def create_run_dir(out: str, experiment: str, seed: int) -> Path:
        """
        Create OUT/<experiment>-seed<seed>-<nnn>/ with the next unused index.

        Existing run directories are never reused.
        """
        root = Path(out)
        root.mkdir(parents=True, exist_ok=True)
        prefix = f"{experiment}-seed{seed}-"
        taken = [
            int(p.name[len(prefix):])
            for p in root.iterdir()
            if p.is_dir() and p.name.startswith(prefix) and p.name[len(prefix):].isdigit()
        ]
        index = max(taken, default=0) + 1
        while True:
            run_dir = root / f"{prefix}{index:03d}"
            try:
                run_dir.mkdir()
                break
            except FileExistsError:
                index += 1
        logger.info("Created run directory", extra={"run_dir": str(run_dir)})
        return run_dir

    @staticmethod
    def build_report(
        experiment: str,
        params: Dict[str, Any],
        seed: int,
        results: Dict[str, Any],
        checks: Dict[str, bool],
        run_id: Optional[str] = None,
    ) -> Dict[str, Any]:
        """Report body; wall-clock data lives only under metadata."""
        return {
            "experiment": experiment,
            "params": to_builtin(params),
            "seed": seed,
            "results": to_builtin(results),
            "checks": {name: bool(ok) for name, ok in checks.items()},
            "metadata": {
                "created_at": datetime.now(timezone.utc).isoformat(),
                "run_id": run_id,
                "report_version": REPORT_VERSION,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }

    @staticmethod
    def dumps_json(data: Dict[str, Any]) -> str:
        return json.dumps(to_builtin(data), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def write_json(path: Path, data: Dict[str, Any]) -> Path:
        with open(path, "w") as f:
            f.write(ReportWriter.dumps_json(data))
        logger.debug("Wrote JSON report", extra={"path": str(path)})
        return path

    @staticmethod
    def format_csv(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> str:
        """Comma-separated table with a header row; floats written with repr precision."""
        columns = columns or (list(rows[0].keys()) if rows else [])
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
        return buffer.getvalue()

    @staticmethod
    def write_csv(path: Path, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> Path:
        with open(path, "w", newline="") as f:
            f.write(ReportWriter.format_csv(rows, columns))
        logger.debug("Wrote CSV table", extra={"path": str(path), "rows": len(rows)})
        return path


def _cell(value: Any) -> str:
    value = to_builtin(value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return str(value)
