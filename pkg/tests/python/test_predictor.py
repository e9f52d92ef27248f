"""PAF, entropy, information gain, CRS, PSI and the admission gate"""

import math
from collections import Counter

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from loftsim.errors import ConfigurationError, DomainError
from loftsim.flora.predictor import (
    CRS_ATTRIBUTES,
    admit,
    check_spoofed,
    compute_crs,
    compute_paf,
    crs_per_row,
    information_gain,
    shannon_entropy,
    spoofed_mask,
)


def test_paf():
    assert compute_paf([0.0, 2.0, 4.0, 10.0], 12.0) == pytest.approx(10 / 3)
    assert compute_paf([3.0], 7.5) == 7.5
    assert compute_paf([], 2.0) == 2.0


def test_shannon_entropy():
    assert shannon_entropy([0.5, 0.5]) == pytest.approx(1.0)
    assert shannon_entropy([0.25] * 4) == pytest.approx(2.0)
    assert shannon_entropy([1.0, 0.0]) == 0.0
    with pytest.raises(DomainError):
        shannon_entropy([0.5, 0.6])
    with pytest.raises(DomainError):
        shannon_entropy([])


def test_information_gain_examples():
    labels = [0, 0, 1, 1]
    assert information_gain(labels, ["a", "a", "b", "b"]) == pytest.approx(1.0)
    assert information_gain(labels, ["a", "a", "a", "a"]) == pytest.approx(0.0)
    assert information_gain(labels, ["a", "b", "a", "b"]) == pytest.approx(0.0)
    with pytest.raises(DomainError):
        information_gain([0, 1], ["a"])


def _entropy_of(values):
    counts = Counter(values)
    n = len(values)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def _ig_oracle(labels, attribute):
    parts = {}
    for label, value in zip(labels, attribute):
        parts.setdefault(value, []).append(label)
    n = len(labels)
    return _entropy_of(labels) - sum(len(p) / n * _entropy_of(p) for p in parts.values())


def _check_information_gain(pairs):
    labels = [p[0] for p in pairs]
    attribute = [p[1] for p in pairs]
    ig = information_gain(labels, attribute)
    assert ig == pytest.approx(_ig_oracle(labels, attribute), abs=1e-9)
    assert -1e-12 <= ig <= _entropy_of(labels) + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 4)), min_size=1, max_size=60))
def test_information_gain_matches_brute_force(pairs):
    _check_information_gain(pairs)


def _population():
    return pd.DataFrame({
        "src_ip": ["10.0.1.10", "10.0.2.10", "10.0.3.10", "10.0.4.10"],
        "dst_ip": ["10.0.7.10", "10.0.8.10", "10.0.7.11", "10.0.8.11"],
        "packet_size": [100.0, 200.0, 300.0, 400.0],
        "payload_size": [50.0] * 4,
        "payload_entropy": [7.0] * 4,
        "duration": [5.0] * 4,
    })


def test_crs_half_of_the_attributes_separate():
    frame = _population()
    score = compute_crs(frame, [True, False, False, False])
    assert not score.degenerate
    assert score.percent == pytest.approx(50.0)
    assert crs_per_row(frame) == pytest.approx([50.0] * 4)


def test_crs_degenerate_populations():
    frame = _population()
    assert compute_crs(frame.iloc[:1], [True]).degenerate
    assert compute_crs(frame, [True] * 4) == compute_crs(frame, [False] * 4)
    assert compute_crs(frame, [True] * 4).percent == 0.0
    assert len(crs_per_row(frame.iloc[:1])) == 1


def test_crs_per_row_matches_single_flow_scores():
    rng = np.random.default_rng(11)
    n = 40
    frame = pd.DataFrame({
        "src_ip": rng.choice(["10.0.1.10", "10.0.2.10", "172.16.0.9"], n),
        "dst_ip": rng.choice(["10.0.7.10", "10.0.8.10"], n),
        "packet_size": rng.uniform(64, 1500, n),
        "payload_size": rng.integers(0, 5, n).astype(float),
        "payload_entropy": rng.uniform(0, 8, n),
        "duration": rng.uniform(0, 40, n),
    })
    batch = crs_per_row(frame)
    for i in range(n):
        member = np.arange(n) == i
        assert batch[i] == pytest.approx(compute_crs(frame, member, CRS_ATTRIBUTES).percent, abs=1e-9)
    assert np.all((batch >= 0) & (batch <= 100))


def test_check_spoofed():
    prefix_map = {1: ["10.0.1.0/24"], 4: ["10.0.4.0/24", "10.0.5.0/24"]}
    assert not check_spoofed("10.0.1.10", 1, prefix_map)
    assert check_spoofed("172.16.0.5", 1, prefix_map)
    assert not check_spoofed("10.0.5.10", 4, prefix_map)
    assert check_spoofed("10.0.1.10", 4, prefix_map)
    with pytest.raises(ConfigurationError):
        check_spoofed("10.0.1.10", 9, prefix_map)
    mask = spoofed_mask(["10.0.1.10", "172.16.0.5", "10.0.1.10"], [1, 1, 4], prefix_map)
    assert mask.tolist() == [False, True, True]


@pytest.mark.parametrize("paf,crs,psi,expected", [
    (30.0, 80.0, False, False),
    (10.0, 80.0, False, True),
    (30.0, 40.0, False, True),
    (30.0, 80.0, True, True),
    (20.0, 50.0, False, False),
])
def test_admission_gate(paf, crs, psi, expected):
    assert admit(paf, crs, psi, t_idle=20.0) is expected


def test_admission_gate_over_columns():
    mask = admit(np.array([30.0, 10.0, 30.0, 30.0, 20.0]), [80.0, 80.0, 40.0, 80.0, 50.0],
                 [False, False, False, True, False], t_idle=20.0)
    assert mask.tolist() == [False, True, True, True, False]
    assert admit([], [], [], t_idle=20.0).tolist() == []


@pytest.mark.slow
@settings(max_examples=10_000, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=1, max_size=64))
def test_information_gain_matches_brute_force_exhaustively(pairs):
    _check_information_gain(pairs)
