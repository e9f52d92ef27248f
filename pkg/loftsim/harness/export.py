"""
Artifact export: occupancy and dataset CSVs, JSON reports, model and a
manifest listing every written file with its SHA-256 digest.
"""

import hashlib
import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

from loftsim.flora.boosting import TrainedModel
from loftsim.harness.dataset import write_dataset_csv
from loftsim.harness.evaluate import Evaluation
from loftsim.harness.scenario import OCCUPANCY_COLUMNS, ExperimentResult
from loftsim.netsim import write_trace_csv
from loftsim.recon.probing import ReconReport

logger = logging.getLogger("Harness")

TRACKED_PACKAGES = ("numpy", "pandas", "scipy", "scikit-learn", "pydantic", "python-dotenv")


def write_json(data, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_occupancy_csv(occupancy: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    occupancy[OCCUPANCY_COLUMNS].to_csv(path, index=False)
    return path


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in ("loftsim",) + TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(out_dir: Path, files: Dict[str, Path], config: Optional[dict] = None, seeds: Optional[dict] = None) -> Path:
    entries = {
        name: {"path": str(path.relative_to(out_dir)), "sha256": sha256_file(path)}
        for name, path in sorted(files.items())
    }
    manifest = {"files": entries, "config": config or {}, "seeds": seeds or {}, "versions": package_versions()}
    return write_json(manifest, out_dir / "manifest.json")


def export_artifacts(
    out_dir: Path,
    result: Optional[ExperimentResult] = None,
    dataset: Optional[pd.DataFrame] = None,
    evaluation: Optional[Evaluation] = None,
    recon: Optional[ReconReport] = None,
    model: Optional[TrainedModel] = None,
    prefix: str = "",
    extra: Optional[Dict[str, Path]] = None,
) -> Dict[str, Path]:
    """Write whatever is supplied plus the manifest; returns name -> path including the manifest"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: Dict[str, Path] = dict(extra or {})
    if result is not None:
        files[f"{prefix}occupancy"] = write_occupancy_csv(result.occupancy, out_dir / f"{prefix}occupancy.csv")
        files[f"{prefix}summary"] = write_json(result.summary(), out_dir / f"{prefix}summary.json")
        if result.plan is not None:
            files[f"{prefix}plan"] = write_json(result.plan.to_dict(), out_dir / f"{prefix}plan.json")
        if result.trace:
            files[f"{prefix}trace"] = write_trace_csv(result.trace, out_dir / f"{prefix}trace.csv")
    if dataset is not None:
        files["dataset"] = write_dataset_csv(dataset, out_dir / "dataset.csv")
    if evaluation is not None:
        files["metrics"] = write_json(evaluation.to_dict(), out_dir / "metrics.json")
    if recon is not None:
        files["recon"] = write_json(recon.model_dump(), out_dir / "recon.json")
    if model is not None:
        path = out_dir / "model.json"
        path.write_text(model.to_json() + "\n")
        files["model"] = path

    config = result.config.model_dump(mode="json") if result is not None else None
    seeds = {"seed": result.config.seed} if result is not None else None
    files["manifest"] = write_manifest(out_dir, files, config, seeds)
    logger.info(f"Exported {len(files)} artifacts to {out_dir}")
    return files
