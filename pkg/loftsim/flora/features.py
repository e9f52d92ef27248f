"""
Feature Extraction

Turns table snapshots into the 12 detection features per flow rule:
- rule counters: duration, packets, bytes
- per-source group means and coefficients of variation of those counters
- predictor scores: PAF, CRS, PSI

Usage:
    frame = extract_feature_frame(snapshot.rows, arrivals, prefix_map)
    vectors = extract_features([snapshot], arrivals, prefix_map)
"""

import logging
from bisect import bisect_left
from dataclasses import astuple, dataclass
from typing import List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from loftsim.flora.predictor import crs_per_row, spoofed_mask
from loftsim.flowtable import Origin
from loftsim.netsim import FlowObservation, Snapshot

logger = logging.getLogger("FloRa")

FEATURE_COLUMNS: List[str] = [
    "duration_s", "pkt_count", "byte_count",
    "mean_dur_src", "mean_pkt_src", "mean_byte_src",
    "cv_dur_src", "cv_pkt_src", "cv_byte_src",
    "paf_s", "crs_pct", "psi",
]
DATASET_COLUMNS: List[str] = ["flow_id", "src_ip"] + FEATURE_COLUMNS + ["label"]


@dataclass
class FeatureVector:
    flow_id: int
    src_ip: str
    duration_s: float
    pkt_count: int
    byte_count: int
    mean_dur_src: float
    mean_pkt_src: float
    mean_byte_src: float
    cv_dur_src: float
    cv_pkt_src: float
    cv_byte_src: float
    paf_s: float
    crs_pct: float
    psi: bool
    label: Optional[int] = None

    def predictors(self) -> np.ndarray:
        return np.array(astuple(self)[2:14], dtype=float)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in DATASET_COLUMNS}


def observation_frame(rows: Sequence[FlowObservation]) -> pd.DataFrame:
    """One row per observed rule with the raw columns the extractor reads"""
    if not rows:
        return pd.DataFrame(columns=list(FlowObservation._fields))
    columns = dict(zip(FlowObservation._fields, (list(values) for values in zip(*rows))))
    keys = columns.pop("key")
    columns["src_ip"] = [k.src_ip for k in keys]
    columns["dst_ip"] = [k.dst_ip for k in keys]
    return pd.DataFrame(columns)


def _paf_column(frame: pd.DataFrame, arrivals: Mapping[int, Sequence[float]]) -> np.ndarray:
    """Mean gap of the arrivals since each rule's install time"""
    out = np.empty(len(frame))
    for i, (flow_id, install, duration) in enumerate(
        zip(frame["flow_id"].tolist(), frame["install_time"].tolist(), frame["duration"].tolist())
    ):
        times = arrivals.get(flow_id, ())
        start = bisect_left(times, install - 1e-9)
        n = len(times) - start
        out[i] = (times[-1] - times[start]) / (n - 1) if n >= 2 else duration
    return out


def _group_stats(frame: pd.DataFrame, column: str):
    grouped = frame.groupby("src_ip", sort=False)[column]
    mean = grouped.transform("mean").to_numpy(dtype=float)
    std = grouped.transform("std", ddof=0).to_numpy(dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean > 0, std / mean, 0.0)
    return mean, cv


def extract_feature_frame(
    rows: Sequence[FlowObservation],
    arrivals: Mapping[int, Sequence[float]],
    prefix_map: Mapping[int, Sequence[str]],
    with_labels: bool = False,
) -> pd.DataFrame:
    """Vectorized extraction over one snapshot window; columns follow DATASET_COLUMNS"""
    columns = DATASET_COLUMNS if with_labels else DATASET_COLUMNS[:-1]
    obs = observation_frame(rows)
    if obs.empty:
        return pd.DataFrame(columns=columns)

    out = pd.DataFrame({
        "flow_id": obs["flow_id"].astype(int),
        "src_ip": obs["src_ip"],
        "duration_s": obs["duration"].astype(float),
        "pkt_count": obs["packet_count"].astype(int),
        "byte_count": obs["byte_count"].astype(int),
    })
    for column, mean_name, cv_name in (
        ("duration_s", "mean_dur_src", "cv_dur_src"),
        ("pkt_count", "mean_pkt_src", "cv_pkt_src"),
        ("byte_count", "mean_byte_src", "cv_byte_src"),
    ):
        out[mean_name], out[cv_name] = _group_stats(out, column)
    out["paf_s"] = _paf_column(obs, arrivals)

    crs_input = pd.DataFrame({
        "src_ip": obs["src_ip"],
        "dst_ip": obs["dst_ip"],
        "packet_size": obs["mean_packet_size"],
        "payload_size": obs["mean_payload_size"],
        "payload_entropy": obs["mean_payload_entropy"],
        "duration": obs["duration"],
    })
    out["crs_pct"] = crs_per_row(crs_input)
    out["psi"] = spoofed_mask(obs["src_ip"].tolist(), obs["in_port"].tolist(), prefix_map)
    if with_labels:
        out["label"] = (obs["origin"] == Origin.ATTACK).astype(int)
    return out[columns].reset_index(drop=True)


def extract_features(
    window: Sequence[Snapshot],
    arrivals: Mapping[int, Sequence[float]],
    prefix_map: Mapping[int, Sequence[str]],
) -> List[FeatureVector]:
    """
    One FeatureVector per distinct flow in the window, taken at its latest
    observation; per-source statistics span every flow in the window.
    """
    latest = {}
    for snapshot in window:
        for row in snapshot.rows:
            latest[row.flow_id] = row
    frame = extract_feature_frame(list(latest.values()), arrivals, prefix_map, with_labels=True)
    return [
        FeatureVector(
            flow_id=int(r.flow_id), src_ip=r.src_ip,
            duration_s=float(r.duration_s), pkt_count=int(r.pkt_count), byte_count=int(r.byte_count),
            mean_dur_src=float(r.mean_dur_src), mean_pkt_src=float(r.mean_pkt_src), mean_byte_src=float(r.mean_byte_src),
            cv_dur_src=float(r.cv_dur_src), cv_pkt_src=float(r.cv_pkt_src), cv_byte_src=float(r.cv_byte_src),
            paf_s=float(r.paf_s), crs_pct=float(r.crs_pct), psi=bool(r.psi), label=int(r.label),
        )
        for r in frame.itertuples(index=False)
    ]
