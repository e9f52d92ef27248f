"""Shared fixtures for the loftsim test suite"""

import numpy as np
import pandas as pd
import pytest

from loftsim.flora.features import DATASET_COLUMNS, FEATURE_COLUMNS
from loftsim.netsim import build_topology, default_topology


@pytest.fixture
def topology():
    return default_topology(capacity=50, jitter_fraction=0.0)


@pytest.fixture
def sim(topology):
    return build_topology(topology, seed=1)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """No LOFTSIM_* variables and no .env file in the working directory"""
    for name in ("LOFTSIM_SEED", "LOFTSIM_OUT_DIR", "LOFTSIM_LOG_LEVEL", "LOFTSIM_PAPER_SCALE"):
        # set first so teardown also removes values a .env file loaded
        monkeypatch.setenv(name, "")
        monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
    return monkeypatch


@pytest.fixture
def separable_dataset():
    """400 rows whose label is the sign of pkt_count - 50, plus unrelated columns"""
    rng = np.random.default_rng(11)
    n = 400
    frame = pd.DataFrame({name: rng.normal(10.0, 2.0, n) for name in FEATURE_COLUMNS})
    frame["pkt_count"] = np.concatenate([rng.integers(1, 40, n // 2), rng.integers(60, 100, n // 2)])
    frame["psi"] = rng.random(n) < 0.5
    frame["label"] = (frame["pkt_count"] > 50).astype(int)
    frame["flow_id"] = np.arange(n)
    frame["src_ip"] = [f"10.0.{1 + i % 8}.10" for i in range(n)]
    return frame[DATASET_COLUMNS].sample(frac=1.0, random_state=3).reset_index(drop=True)
