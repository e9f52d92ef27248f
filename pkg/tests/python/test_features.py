"""Per-flow feature extraction from table snapshots"""

import pytest

from loftsim.flora.features import (
    DATASET_COLUMNS,
    FEATURE_COLUMNS,
    extract_feature_frame,
    extract_features,
)
from loftsim.flowtable import Origin
from loftsim.netsim import Snapshot

from .factories import make_observation

PREFIX_MAP = {1: ["10.0.1.0/24"], 2: ["10.0.2.0/24"]}


def test_singleton_source_group():
    frame = extract_feature_frame([make_observation(1, "10.0.1.10", 4, duration=6.0)], {}, PREFIX_MAP)
    row = frame.iloc[0]
    assert row["mean_pkt_src"] == 4 and row["mean_dur_src"] == 6.0 and row["mean_byte_src"] == 400
    assert row["cv_pkt_src"] == 0.0 and row["cv_dur_src"] == 0.0 and row["cv_byte_src"] == 0.0
    assert list(frame.columns) == DATASET_COLUMNS[:-1]


def test_source_group_statistics():
    rows = [make_observation(1, "10.0.1.10", 1), make_observation(2, "10.0.1.10", 3), make_observation(3, "10.0.1.11", 8)]
    frame = extract_feature_frame(rows, {}, PREFIX_MAP)
    assert frame["mean_pkt_src"].tolist() == [2.0, 2.0, 8.0]
    assert frame["cv_pkt_src"].tolist() == pytest.approx([0.5, 0.5, 0.0])


def test_paf_counts_arrivals_since_install():
    rows = [make_observation(1, "10.0.1.10", 4, install=0.0), make_observation(2, "10.0.1.10", 2, install=1.5), make_observation(3, "10.0.1.10", 1, duration=9.0)]
    arrivals = {1: [0.0, 1.0, 2.0, 5.0], 2: [0.5, 2.0, 5.0], 3: [4.0]}
    frame = extract_feature_frame(rows, arrivals, PREFIX_MAP)
    assert frame["paf_s"].tolist() == pytest.approx([5 / 3, 3.0, 9.0])


def test_psi_and_labels():
    rows = [make_observation(1, "10.0.1.10", 5), make_observation(2, "172.16.3.4", 1, origin=Origin.ATTACK), make_observation(3, "10.0.2.10", 2, in_port=2)]
    frame = extract_feature_frame(rows, {}, PREFIX_MAP, with_labels=True)
    assert frame["psi"].tolist() == [False, True, False]
    assert frame["label"].tolist() == [0, 1, 0]
    assert frame["crs_pct"].between(0, 100).all()


def test_window_keeps_latest_observation_per_flow():
    early = Snapshot(10, "s2", 100, [make_observation(1, "10.0.1.10", 2, time_s=10), make_observation(2, "10.0.1.11", 1, time_s=10)])
    late = Snapshot(11, "s2", 100, [make_observation(1, "10.0.1.10", 6, time_s=11)])
    vectors = extract_features([early, late], {}, PREFIX_MAP)
    by_flow = {v.flow_id: v for v in vectors}
    assert set(by_flow) == {1, 2}
    assert by_flow[1].pkt_count == 6
    assert len(by_flow[1].predictors()) == len(FEATURE_COLUMNS) == 12
    assert by_flow[2].as_dict()["label"] == 0


def test_empty_window():
    assert extract_feature_frame([], {}, PREFIX_MAP).empty
    assert extract_features([], {}, PREFIX_MAP) == []
