"""Experiment manifest schema, rho-grid parsing and manifest loading."""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from noisestab.errors import InvalidParameterError, ManifestError
from noisestab.logger import setup_logger
from noisestab.stability import METHODS

logger = setup_logger(__name__)

EXPERIMENTS = ("stability", "variation", "optimize", "witness", "discrete", "maxkcut", "verify")

DEFAULT_MANIFEST_PATH = Path(__file__).resolve().parent.parent / "default_manifest.json"

GRID_ENDPOINT_TOLERANCE = 1e-12


def parse_rho_grid(spec: Union[str, float, int, List[float]]) -> List[float]:
    """
    Parse a correlation grid.

    Accepts "start:stop:step" (stop included when it lies within 1e-12 of a grid point),
    a comma list "0.1,0.5,0.9", a single number, or a list of numbers.

    Raises:
        InvalidParameterError: If the grid is malformed, empty or leaves [-1, 1]
    """
    if isinstance(spec, (int, float)):
        values = [float(spec)]
    elif isinstance(spec, (list, tuple)):
        values = [float(v) for v in spec]
    else:
        text = str(spec).strip()
        try:
            if ":" in text:
                parts = [float(p) for p in text.split(":")]
                if len(parts) != 3:
                    raise InvalidParameterError(f"Grid '{text}' must be start:stop:step")
                start, stop, step = parts
                if step == 0.0 or (stop - start) * step < 0.0:
                    raise InvalidParameterError(f"Grid '{text}' has a step that never reaches stop")
                count = int(math.floor((stop - start) / step + GRID_ENDPOINT_TOLERANCE / abs(step))) + 1
                values = [start + i * step for i in range(count)]
                if abs(values[-1] - stop) <= GRID_ENDPOINT_TOLERANCE:
                    values[-1] = stop
            else:
                values = [float(p) for p in text.split(",") if p.strip()]
        except ValueError as e:
            raise InvalidParameterError(f"Malformed rho grid '{text}': {str(e)}")
    if not values:
        raise InvalidParameterError("rho grid is empty")
    # Round away accumulated step error
    values = [float(np.round(v, 12)) for v in values]
    for v in values:
        if not math.isfinite(v) or abs(v) > 1.0:
            raise InvalidParameterError(f"Correlation {v} outside [-1, 1]")
    return values


class ExperimentManifest(BaseModel):
    """One reproducible experiment: what to run, with which parameters and master seed."""

    model_config = ConfigDict(extra="forbid")

    experiment: Literal["stability", "variation", "optimize", "witness", "discrete", "maxkcut", "verify"]
    rho: List[float] = Field(default_factory=lambda: [0.05])
    k: int = Field(default=3, ge=2)
    n: int = Field(default=2, ge=1)
    method: Optional[str] = None
    budget: int = Field(default=1_000_000, gt=0)
    tol: float = Field(default=1e-6, gt=0.0)
    seed: int = Field(default=0, ge=0)
    out: str = "runs"
    params: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("rho", mode="before")
    @classmethod
    def _parse_rho(cls, value):
        return parse_rho_grid(value)

    @field_validator("method")
    @classmethod
    def _check_method(cls, value):
        if value is not None and value not in METHODS:
            raise ValueError(f"method must be one of {', '.join(METHODS)}")
        return value

    def reproducible_dict(self) -> Dict[str, Any]:
        """Parameters that determine the results (the output directory excluded)."""
        return self.model_dump(exclude={"out"})


def load_default_manifest(path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Load per-experiment defaults.

    Raises:
        ManifestError: If the file is missing or not valid JSON
    """
    path = path or DEFAULT_MANIFEST_PATH
    try:
        with open(path, "r") as f:
            defaults = json.load(f)
        logger.debug("Loaded default manifest", extra={"path": str(path)})
        return defaults
    except FileNotFoundError:
        logger.error("Default manifest not found", extra={"path": str(path)})
        raise ManifestError(f"Default manifest ({path}) not found")
    except json.JSONDecodeError as e:
        raise ManifestError(f"Invalid JSON in {path}: {str(e)}")


def _read_manifest_file(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"Manifest file {path} not found")
    except json.JSONDecodeError as e:
        raise ManifestError(f"Invalid JSON in manifest {path}: {str(e)}")
    if not isinstance(data, dict):
        raise ManifestError("Manifest must be a JSON object")
    return data


def build_manifest(
    experiment: Optional[str],
    manifest_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    defaults: Optional[Dict[str, Any]] = None,
) -> ExperimentManifest:
    """
    Merge defaults, an optional manifest file and command-line overrides (in that order).

    None-valued overrides are ignored; `params` dictionaries are merged key by key.

    Raises:
        ManifestError: If the merged manifest fails validation
    """
    defaults = defaults if defaults is not None else load_default_manifest()
    from_file = _read_manifest_file(manifest_path) if manifest_path else {}
    name = experiment or from_file.get("experiment")
    if name not in EXPERIMENTS:
        raise ManifestError(f"Unknown experiment: {name}")

    merged: Dict[str, Any] = dict(defaults.get("common", {}))
    merged["params"] = dict(defaults.get("experiments", {}).get(name, {}).get("params", {}))
    merged.update({k: v for k, v in defaults.get("experiments", {}).get(name, {}).items() if k != "params"})
    for source in (from_file, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key == "params":
                merged["params"].update(value)
            else:
                merged[key] = value
    merged["experiment"] = name

    try:
        manifest = ExperimentManifest.model_validate(merged)
    except ValidationError as e:
        messages = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ManifestError(f"Manifest validation errors: {', '.join(messages)}")
    logger.info("Manifest validated", extra={"experiment": name, "seed": manifest.seed})
    return manifest
