"""RTT reconnaissance against the simulator"""

import pytest

from loftsim.errors import DomainError, ProbeError
from loftsim.flowtable import DEFAULT_MATCH_FIELDS, Protocol
from loftsim.netsim import build_topology, default_topology
from loftsim.recon.probing import (
    MUTABLE_FIELDS,
    KeyFactory,
    SimulatorProber,
    build_report,
    estimate_idle_timeout,
    infer_match_fields,
)


def _prober(seed=0, **topology):
    spec = default_topology(capacity=1500, **topology)
    return SimulatorProber(build_topology(spec, seed), "h1", "h7")


def test_key_factory_mints_distinct_keys():
    factory = KeyFactory("10.0.7.0/24")
    base = factory.fresh()
    minted = {base} | {factory.mutate(base, name) for name in MUTABLE_FIELDS} | {factory.fresh()}
    assert len(minted) == len(MUTABLE_FIELDS) + 2
    assert factory.mutate(base, "protocol").protocol is Protocol.UDP
    for name in MUTABLE_FIELDS:
        changed = factory.mutate(base, name)
        assert [f for f in MUTABLE_FIELDS if getattr(changed, f) != getattr(base, f)] == [name]
    with pytest.raises(DomainError):
        factory.mutate(base, "in_port")


def test_infers_default_match_fields():
    result = infer_match_fields(_prober(), MUTABLE_FIELDS, repetitions=5)
    assert result.inferred_fields == set(DEFAULT_MATCH_FIELDS)
    assert result.t0_ms == pytest.approx(58.0, abs=9.0)
    assert result.t1_ms == pytest.approx(8.0, abs=1.5)


def test_infers_reduced_match_fields():
    prober = _prober(match_fields=("src_ip", "dst_ip"))
    assert infer_match_fields(prober, MUTABLE_FIELDS).inferred_fields == {"src_ip", "dst_ip"}


def test_indistinguishable_rtts_abort():
    with pytest.raises(ProbeError, match="indistinguishable"):
        infer_match_fields(_prober(controller_penalty_ms=0.0), MUTABLE_FIELDS)


def test_estimates_idle_timeout():
    prober = _prober(seed=3)
    probe = infer_match_fields(prober, MUTABLE_FIELDS)
    estimate = estimate_idle_timeout(prober, sorted(probe.inferred_fields))
    assert estimate.found
    assert estimate.t_idle_estimate == 20
    assert estimate.p_value <= 0.05
    report = build_report(probe, estimate, 5)
    assert report.t_idle_estimate_s == 20
    assert report.inferred_fields == sorted(DEFAULT_MATCH_FIELDS)


def test_short_timeout_is_found():
    prober = _prober(idle_timeout=7.0)
    estimate = estimate_idle_timeout(prober, DEFAULT_MATCH_FIELDS, repetitions=4)
    assert estimate.t_idle_estimate == 7


def test_sweep_bound_below_timeout_finds_nothing():
    estimate = estimate_idle_timeout(_prober(), DEFAULT_MATCH_FIELDS, max_int=10, repetitions=2)
    assert not estimate.found
    assert estimate.p_value == 1.0


def test_probing_arguments_are_validated():
    prober = _prober()
    with pytest.raises(DomainError):
        infer_match_fields(prober, [])
    with pytest.raises(DomainError):
        infer_match_fields(prober, ["in_port"])
    with pytest.raises(DomainError):
        estimate_idle_timeout(prober, DEFAULT_MATCH_FIELDS, alpha=1.5)
    with pytest.raises(DomainError):
        estimate_idle_timeout(prober, [])


def test_sweep_stops_once_significant():
    estimate = estimate_idle_timeout(_prober(seed=5), DEFAULT_MATCH_FIELDS, repetitions=10, min_runs=2)
    assert estimate.t_idle_estimate == 20
    assert len(estimate.first_miss_intervals) == 2
    single = estimate_idle_timeout(_prober(seed=5), DEFAULT_MATCH_FIELDS, repetitions=10, min_runs=1)
    assert len(single.first_miss_intervals) == 1
    with pytest.raises(DomainError):
        estimate_idle_timeout(_prober(), DEFAULT_MATCH_FIELDS, min_runs=0)
