"""Flow table: installation, FIFO replacement, idle expiry and a brute-force reference"""

import pytest
from hypothesis import given, settings, strategies as st

from loftsim.errors import ConfigurationError, DomainError, DuplicateRuleError
from loftsim.flowtable import (
    EvictionCause,
    FlowTable,
    InstallStatus,
    MatchKey,
    MatchResult,
    Origin,
    Protocol,
    field_projector,
    replay,
)

from .factories import make_key


def test_install_and_match_updates_counters():
    table = FlowTable(capacity=4)
    key = make_key(1)
    assert table.match_packet(key, 100, 0.0) is MatchResult.MISS
    assert table.install_rule(key, 0.0, 20).status is InstallStatus.INSTALLED
    assert table.match_packet(key, 100, 1.5) is MatchResult.HIT
    assert table.match_packet(key, 60, 2.0) is MatchResult.HIT
    rule = table.get(key)
    assert (rule.packet_count, rule.byte_count, rule.last_match_time) == (2, 160, 2.0)


def test_full_table_replaces_oldest_rule():
    table = FlowTable(capacity=3)
    for i in range(3):
        table.install_rule(make_key(i), float(i), 20)
    outcome = table.install_rule(make_key(3), 3.0, 20, Origin.ATTACK)
    assert outcome.status is InstallStatus.REPLACED
    assert outcome.evicted == make_key(0)
    assert len(table) == 3
    assert table.total_overflows == 1
    assert [r.key for r in table.rules()] == [make_key(1), make_key(2), make_key(3)]
    assert table.evictions_by_cause()[EvictionCause.FIFO_REPLACEMENT] == 1


def test_full_table_rejects_without_fifo():
    table = FlowTable(capacity=1, fifo_replacement=False)
    table.install_rule(make_key(0), 0.0, 20)
    assert table.install_rule(make_key(1), 1.0, 20).status is InstallStatus.REJECTED
    assert make_key(1) not in table
    assert table.total_overflows == 1


def test_idle_timeout_boundary_is_inclusive():
    table = FlowTable(capacity=4)
    table.install_rule(make_key(0), 0.0, 20)
    assert table.tick(19) == []
    assert table.tick(20) == [make_key(0)]
    assert len(table) == 0
    assert table.eviction_log[0].cause is EvictionCause.IDLE_TIMEOUT


def test_refresh_postpones_expiry():
    table = FlowTable(capacity=4)
    table.install_rule(make_key(0), 0.0, 20)
    table.match_packet(make_key(0), 64, 15.0)
    assert table.tick(20) == []
    assert table.tick(34) == []
    assert table.tick(35) == [make_key(0)]


def test_duplicate_install_is_an_error():
    table = FlowTable(capacity=4)
    table.install_rule(make_key(0), 0.0, 20)
    with pytest.raises(DuplicateRuleError):
        table.install_rule(make_key(0), 1.0, 20)


def test_invalid_parameters():
    with pytest.raises(ConfigurationError):
        FlowTable(capacity=0)
    with pytest.raises(ConfigurationError):
        FlowTable(capacity=4, match_fields=("vlan",))
    with pytest.raises(DomainError):
        FlowTable(capacity=4).install_rule(make_key(0), 0.0, 0)


def test_keys_agreeing_on_enabled_fields_share_a_rule():
    table = FlowTable(capacity=4, match_fields=("src_ip", "dst_ip"))
    key = make_key(0)
    table.install_rule(key, 0.0, 20)
    assert table.match_packet(key._replace(src_port=1, protocol=Protocol.UDP), 64, 1.0) is MatchResult.HIT
    assert table.match_packet(key._replace(dst_ip="10.0.8.9"), 64, 1.0) is MatchResult.MISS


def test_single_field_projector_returns_tuple():
    project = field_projector(["dst_port"])
    assert project(make_key(0)) == (80,)


def test_snapshot_rows_follow_installation_order():
    table = FlowTable(capacity=4)
    table.install_rule(make_key(2), 0.0, 20, Origin.ATTACK)
    table.install_rule(make_key(1), 1.0, 20)
    rows = table.snapshot(5.0)
    assert [row.key for row in rows] == [make_key(2), make_key(1)]
    assert [row.duration for row in rows] == [5.0, 4.0]
    assert table.origin_counts() == (1, 1)


def test_replay_rejects_unknown_operation():
    with pytest.raises(DomainError):
        replay(FlowTable(capacity=1), [("flush",)])


# ============ Brute-force reference ============

class ReferenceTable:
    """List-based table: scan everything on every operation"""

    def __init__(self, capacity, timeout):
        self.capacity = capacity
        self.timeout = timeout
        self.rules = []
        self.overflows = 0

    def tick(self, now):
        expired = [r for r in self.rules if now - r["last"] >= self.timeout]
        self.rules = [r for r in self.rules if now - r["last"] < self.timeout]
        return [r["key"] for r in expired]

    def packet(self, key, nbytes, now):
        for rule in self.rules:
            if rule["key"] == key:
                rule["last"] = now
                rule["pkts"] += 1
                rule["bytes"] += nbytes
                return "hit"
        if len(self.rules) >= self.capacity:
            self.overflows += 1
            self.rules.pop(0)
        self.rules.append({"key": key, "install": now, "last": now, "pkts": 0, "bytes": 0})
        return "miss"

    def state(self):
        return [(r["key"], r["install"], r["pkts"], r["bytes"]) for r in self.rules]


events = st.lists(
    st.tuples(st.integers(0, 12), st.integers(0, 29), st.integers(64, 1500)),
    max_size=500,
)


def _compare_with_reference(capacity, timeout, trace):
    table = FlowTable(capacity=capacity)
    reference = ReferenceTable(capacity, timeout)
    now, second = 0.0, 0
    for quarters, key_index, nbytes in trace:
        now += quarters * 0.25
        while second + 1 <= now:
            second += 1
            assert replay(table, [("tick", second)])[0] == reference.tick(second)
        key = MatchKey(f"10.0.1.{key_index + 2}", "10.0.7.2", 5000, 80)
        outcome = replay(table, [("match", key, nbytes, now)])[0]
        if outcome is MatchResult.MISS:
            replay(table, [("install", key, now, timeout)])
        assert outcome.value == reference.packet(key, nbytes, now)
        state = [(r.key, r.install_time, r.packet_count, r.byte_count) for r in table.rules()]
        assert state == reference.state()
    assert table.total_overflows == reference.overflows


@settings(max_examples=200, deadline=None)
@given(capacity=st.integers(1, 20), timeout=st.integers(1, 15), trace=events)
def test_matches_reference_on_random_traces(capacity, timeout, trace):
    _compare_with_reference(capacity, timeout, trace)


@pytest.mark.slow
@settings(max_examples=1000, deadline=None)
@given(capacity=st.integers(1, 20), timeout=st.integers(1, 15), trace=events)
def test_matches_reference_on_many_random_traces(capacity, timeout, trace):
    _compare_with_reference(capacity, timeout, trace)
