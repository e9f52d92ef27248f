"""Labelled detection dataset assembled from completed scenario runs"""

import logging
from pathlib import Path
from typing import Dict, Sequence

import numpy as np
import pandas as pd

from loftsim.errors import ConfigurationError
from loftsim.flora.features import DATASET_COLUMNS
from loftsim.harness.config import derive_seed
from loftsim.harness.scenario import ExperimentResult

logger = logging.getLogger("Harness")


def balance(frame: pd.DataFrame, seed: int) -> pd.DataFrame:
    """Down-sample the majority class to the minority count, keeping row order"""
    if frame.empty or frame["label"].nunique() < 2:
        return frame
    counts = frame["label"].value_counts()
    minority = int(counts.min())
    rng = np.random.default_rng(seed)
    keep = []
    for label in sorted(counts.index):
        index = frame.index[frame["label"] == label].to_numpy()
        if len(index) > minority:
            index = np.sort(rng.choice(index, size=minority, replace=False))
        keep.append(index)
    return frame.loc[np.sort(np.concatenate(keep))]


def build_dataset(results: Sequence[ExperimentResult], balance_classes: bool = True, seed: int = 0) -> pd.DataFrame:
    """One row per flow and dataset switch of every run, labelled by origin"""
    frames = []
    for result in results:
        frame = result.features
        if balance_classes:
            frame = balance(frame, derive_seed(seed, result.config.set_index, 3))
        frames.append(frame)
    frames = [f for f in frames if not f.empty]
    if not frames:
        return pd.DataFrame(columns=DATASET_COLUMNS)
    dataset = pd.concat(frames, ignore_index=True)[DATASET_COLUMNS]
    dataset["psi"] = dataset["psi"].astype(bool)
    dataset["label"] = dataset["label"].astype(int)
    counts = class_counts(dataset)
    logger.info(f"Dataset: {len(dataset)} rows ({counts['legitimate']} legitimate, {counts['attack']} attack)")
    return dataset


def class_counts(dataset: pd.DataFrame) -> Dict[str, int]:
    attack = int(dataset["label"].sum()) if not dataset.empty else 0
    return {"legitimate": len(dataset) - attack, "attack": attack}


def write_dataset_csv(dataset: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset[DATASET_COLUMNS].to_csv(path, index=False, float_format="%.10g")
    return path


def load_dataset(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"Cannot read dataset {path}: {e}")
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"Dataset {path} lacks columns {missing}")
    frame["psi"] = frame["psi"].astype(str).str.lower().isin(["true", "1"])
    return frame[DATASET_COLUMNS]
