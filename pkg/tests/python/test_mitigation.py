"""Analyzer gate, mitigation and the detection loop"""

import pytest

from loftsim.errors import DomainError
from loftsim.flora.analyzer import analyze_table
from loftsim.flora.boosting import ObliviousTree, TrainedModel
from loftsim.flora.detector import DetectorSettings, FloraDetector
from loftsim.flora.mitigation import Blacklist, Verdict, elephant_threshold, mitigate
from loftsim.flowtable import Origin
from loftsim.netsim import Snapshot

from .factories import make_observation

PREFIX_MAP = {1: ["10.0.1.0/24"], 2: ["10.0.2.0/24"]}
NO_ELEPHANTS = 1e12


class RecordingController:
    def __init__(self, refuse=()):
        self.evicted = []
        self.blocked = []
        self.refuse = set(refuse)

    def evict(self, key):
        if key.src_port in self.refuse:
            return False
        self.evicted.append(key)
        return True

    def block(self, src_ip):
        self.blocked.append(src_ip)


def _attack_verdicts(rows):
    return [Verdict(r.flow_id, r.key, 0.9, 1) for r in rows]


def test_every_attack_verdict_is_evicted():
    sources = ["172.16.0.1", "172.16.0.2", "172.16.0.3", "172.16.0.4"]
    rows = [make_observation(i, sources[i % 4], 1, origin=Origin.ATTACK) for i in range(10)]
    controller = RecordingController()
    report = mitigate(_attack_verdicts(rows), rows, {}, Blacklist(), controller, 50.0, NO_ELEPHANTS)
    assert report.evicted == list(range(10))
    assert len(controller.evicted) == 10
    assert report.occupancy_after == 0
    assert sorted(report.newly_blocked) == ["172.16.0.1", "172.16.0.2"]


def test_elephants_are_protected_unless_spoofed():
    rows = [make_observation(1, "10.0.1.10", 1, nbytes=10_000_000), make_observation(2, "172.16.0.9", 1, nbytes=10_000_000)]
    report = mitigate(_attack_verdicts(rows), rows, {1: False, 2: True}, Blacklist(), RecordingController(), 50.0, 1e6)
    assert report.protected == [1]
    assert report.evicted == [2]


def test_source_blocked_after_third_eviction():
    rows = [make_observation(i, "172.16.0.1", 1) for i in range(5)]
    blacklist = Blacklist(block_after_evictions=3)
    controller = RecordingController()
    mitigate(_attack_verdicts(rows[:2]), rows, {}, blacklist, controller, 10.0, NO_ELEPHANTS)
    assert not blacklist.is_blocked("172.16.0.1")
    report = mitigate(_attack_verdicts(rows[2:]), rows, {}, blacklist, controller, 11.0, NO_ELEPHANTS)
    assert report.newly_blocked == ["172.16.0.1"]
    assert controller.blocked == ["172.16.0.1"]
    assert blacklist.entries["172.16.0.1"].eviction_count == 5
    assert blacklist.blocked_sources == ["172.16.0.1"]


def test_oracle_verdicts_never_evict_legitimate_rules():
    rows = [make_observation(i, "10.0.1.10" if i % 3 else "172.16.0.7", 2,
                             origin=Origin.LEGITIMATE if i % 3 else Origin.ATTACK) for i in range(30)]
    verdicts = [Verdict(r.flow_id, r.key, 1.0, int(r.origin is Origin.ATTACK)) for r in rows]
    report = mitigate(verdicts, rows, {}, Blacklist(), RecordingController(), 5.0)
    attack_ids = {r.flow_id for r in rows if r.origin is Origin.ATTACK}
    assert set(report.evicted) <= attack_ids
    assert report.newly_blocked == ["172.16.0.7"]


def test_skipped_verdicts():
    rows = [make_observation(1, "172.16.0.1", 1), make_observation(2, "172.16.0.1", 1)]
    verdicts = [Verdict(1, rows[0].key, 0.2, 0), Verdict(2, rows[1].key, 0.9, 1), Verdict(99, rows[0].key, 0.9, 1)]
    report = mitigate(verdicts, rows, {}, Blacklist(), RecordingController(refuse={20002}), 5.0, NO_ELEPHANTS)
    assert report.evicted == []
    assert report.occupancy_after == 2


def test_elephant_threshold_and_blacklist_validation():
    assert elephant_threshold([]) == float("inf")
    assert elephant_threshold(list(range(101)), 95.0) == pytest.approx(95.0)
    with pytest.raises(DomainError):
        Blacklist(0)


# ============ Detection loop ============

def _snapshot(n_attack=3, n_legit=6, capacity=10, time_s=120):
    rows = [make_observation(i, "172.16.0.1", 2, duration=150.0, origin=Origin.ATTACK, time_s=time_s)
            for i in range(n_attack)]
    rows += [make_observation(100 + i, "10.0.1.10", 50, duration=150.0 if i < 2 else 5.0, time_s=time_s)
             for i in range(n_legit)]
    return Snapshot(time_s, "s2", capacity, rows)


def _psi_model():
    return TrainedModel(["psi"], [ObliviousTree([0], [0.5], [-10.0, 10.0])], learning_rate=1.0)


def test_analyzer_gate():
    assert not analyze_table(_snapshot(n_legit=2), 0.8, 100.0).active
    analysis = analyze_table(_snapshot(), 0.8, 100.0)
    assert analysis.active and analysis.occupancy == pytest.approx(0.9)
    assert {r.flow_id for r in analysis.suspicious} == {0, 1, 2, 100, 101}


def test_detector_evicts_and_blocks_spoofed_sources():
    detector = FloraDetector(_psi_model(), PREFIX_MAP, DetectorSettings(elephant_byte_threshold=NO_ELEPHANTS))
    controller = RecordingController()
    report = detector.process(_snapshot(), {}, controller)
    assert report.evicted == [0, 1, 2]
    assert report.newly_blocked == ["172.16.0.1"]
    assert detector.first_detection_time == 120.0
    assert {v.flow_id: v.label for v in report.verdicts}[100] == 0


def test_detector_inactive_below_occupancy_threshold():
    detector = FloraDetector(_psi_model(), PREFIX_MAP)
    assert detector.process(_snapshot(n_legit=2), {}, RecordingController()) is None
    assert detector.reports == [] and detector.first_detection_time is None
