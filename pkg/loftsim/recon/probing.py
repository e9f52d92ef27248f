"""
RTT Reconnaissance

Attacker-side inference of a switch's configuration from round-trip times:
- Match field inference: a fresh key costs a controller round trip (miss),
  a resend does not (hit); a packet differing in one field misses only when
  the switch matches on that field
- Idle timeout estimation: resend one key at intervals growing by 1 s until
  the RTT turns miss-like, confirm hits vs misses with one-way ANOVA

Usage:
    sim = build_topology(default_topology(), seed=3)
    prober = SimulatorProber(sim, src_host="h1", dst_host="h8")
    fields = infer_match_fields(prober, DEFAULT_MATCH_FIELDS, repetitions=5)
    estimate = estimate_idle_timeout(prober, fields.inferred_fields)
"""

import ipaddress
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol as TypingProtocol, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel

from loftsim.errors import DomainError, ProbeError
from loftsim.flowtable import MatchKey, Origin, Protocol
from loftsim.netsim import PacketEvent, Simulator
from loftsim.recon.anova import AnovaResult, anova_oneway

logger = logging.getLogger("Recon")

MUTABLE_FIELDS: Tuple[str, ...] = ("src_ip", "dst_ip", "src_port", "dst_port", "protocol")
PROBE_BYTES = 64
SEPARABILITY_EPSILON_MS = 1e-6


# ============ Probe Interface ============

class ProbeInterface(TypingProtocol):
    """What the attacker can do: send crafted packets, wait, read the clock"""

    @property
    def now(self) -> float: ...

    def send(self, key: MatchKey) -> float: ...

    def wait(self, seconds: float) -> None: ...

    def keys(self) -> "KeyFactory": ...


class KeyFactory:
    """
    Mints never-before-used probe keys toward one destination prefix.

    Every field draws from its own counter, so a minted key and each of its
    single-field mutations are distinct from every key minted earlier.
    """

    SOURCE_PREFIX = "198.18.0.0/15"

    def __init__(self, dst_prefix: str, base_port: int = 40000):
        self._dst = ipaddress.ip_network(dst_prefix)
        self._src = ipaddress.ip_network(self.SOURCE_PREFIX)
        self._dst_limit = self._dst.num_addresses - 2
        self._counter = 0
        self._base_port = base_port

    def _next(self) -> int:
        self._counter += 1
        return self._counter

    def _dst_address(self, n: int) -> str:
        if n >= self._dst_limit:
            raise ProbeError(f"Destination prefix {self._dst} exhausted after {n} probe keys")
        return str(self._dst.network_address + 1 + n)

    def fresh(self) -> MatchKey:
        n = self._next()
        return MatchKey(
            src_ip=str(self._src.network_address + n),
            dst_ip=self._dst_address(n),
            src_port=self._base_port + n,
            dst_port=1024 + n,
            protocol=Protocol.TCP,
        )

    def mutate(self, key: MatchKey, field_name: str) -> MatchKey:
        if field_name not in MUTABLE_FIELDS:
            raise DomainError(f"Field {field_name} cannot be set by a prober")
        if field_name == "protocol":
            return key.mutated("protocol", Protocol.UDP if key.protocol == Protocol.TCP else Protocol.TCP)
        n = self._next()
        values = {
            "src_ip": str(self._src.network_address + n),
            "dst_ip": self._dst_address(n),
            "src_port": self._base_port + n,
            "dst_port": 1024 + n,
        }
        return key.mutated(field_name, values[field_name])


class SimulatorProber:
    """ProbeInterface backed by a Simulator; probes start on whole seconds"""

    def __init__(self, sim: Simulator, src_host: str, dst_host: str):
        self.sim = sim
        self.src_host = src_host
        self.dst_host = dst_host
        self._factory = KeyFactory(sim.topology.host(dst_host).prefix)
        self.sim.advance_to(float(math.ceil(sim.clock)))
        self.sent = 0

    @property
    def now(self) -> float:
        return self.sim.clock

    def send(self, key: MatchKey) -> float:
        sample = self.sim.send_packet(PacketEvent(self.sim.clock, self.src_host, key, PROBE_BYTES, Origin.ATTACK))
        if sample is None:
            raise ProbeError(f"Probe source {key.src_ip} is blocked at ingress")
        self.sent += 1
        return sample.rtt

    def wait(self, seconds: float) -> None:
        self.sim.advance_to(self.sim.clock + seconds)

    def keys(self) -> KeyFactory:
        return self._factory


# ============ Results ============

@dataclass
class ProbeResult:
    inferred_fields: Set[str]
    t0: List[float]
    t1: List[float]
    t2: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def t0_ms(self) -> float:
        return float(np.mean(self.t0))

    @property
    def t1_ms(self) -> float:
        return float(np.mean(self.t1))


@dataclass
class TimeoutEstimate:
    t_idle_estimate: Optional[int]
    rtt_series: List[Tuple[int, float]]
    p_value: float
    alpha: float
    first_miss_intervals: List[int] = field(default_factory=list)

    @property
    def found(self) -> bool:
        return self.t_idle_estimate is not None


class ReconReport(BaseModel):
    inferred_fields: List[str]
    t0_ms: float
    t1_ms: float
    t_idle_estimate_s: Optional[int] = None
    p_value: float
    n: int


def build_report(probe: ProbeResult, timeout: TimeoutEstimate, repetitions: int) -> ReconReport:
    return ReconReport(
        inferred_fields=sorted(probe.inferred_fields),
        t0_ms=round(probe.t0_ms, 6),
        t1_ms=round(probe.t1_ms, 6),
        t_idle_estimate_s=timeout.t_idle_estimate,
        p_value=timeout.p_value,
        n=repetitions,
    )


# ============ Match Field Inference ============

def _check_separable(t0: Sequence[float], t1: Sequence[float]):
    gap = float(np.mean(t0)) - float(np.mean(t1))
    margin = 3.0 * float(np.std(t1)) + SEPARABILITY_EPSILON_MS
    if gap <= margin:
        logger.warning(f"Recon aborted: miss RTT {np.mean(t0):.3f}ms vs hit RTT {np.mean(t1):.3f}ms")
        raise ProbeError(f"miss/hit indistinguishable (gap {gap:.3f}ms, margin {margin:.3f}ms)")


def infer_match_fields(prober: ProbeInterface, candidate_fields: Sequence[str], repetitions: int = 5) -> ProbeResult:
    """
    Classify each candidate field as matched or not.

    Per repetition: a fresh key gives T0 (miss), the immediate resend T1 (hit),
    then one packet per field differing from the fresh key only in that field
    gives T2. A field is matched when mean T2 lies nearer mean T0 than mean T1.
    """
    if not candidate_fields:
        raise DomainError("At least one candidate field is required")
    if repetitions < 1:
        raise DomainError(f"repetitions must be positive, got {repetitions}")
    for name in candidate_fields:
        if name not in MUTABLE_FIELDS:
            raise DomainError(f"Field {name} cannot be set by a prober")

    factory = prober.keys()
    t0: List[float] = []
    t1: List[float] = []
    t2: Dict[str, List[float]] = {name: [] for name in candidate_fields}
    for _ in range(repetitions):
        base = factory.fresh()
        t0.append(prober.send(base))
        t1.append(prober.send(base))
        for name in candidate_fields:
            t2[name].append(prober.send(factory.mutate(base, name)))
        prober.wait(1.0)

    _check_separable(t0, t1)
    miss_mean, hit_mean = float(np.mean(t0)), float(np.mean(t1))
    inferred = {
        name for name, samples in t2.items()
        if abs(float(np.mean(samples)) - miss_mean) < abs(float(np.mean(samples)) - hit_mean)
    }
    logger.info(f"Inferred match fields {sorted(inferred)} (T0={miss_mean:.2f}ms, T1={hit_mean:.2f}ms)")
    return ProbeResult(inferred, t0, t1, t2)


# ============ Idle Timeout Estimation ============

def _sweep_anova(hits: List[float], miss_groups: List[List[float]]) -> Optional[AnovaResult]:
    """Hit baseline against each run's miss-like samples; None while degrees of freedom are missing"""
    if not miss_groups or not hits:
        return None
    if len(hits) + sum(len(g) for g in miss_groups) <= 1 + len(miss_groups):
        return None
    return anova_oneway([hits] + miss_groups)


def estimate_idle_timeout(
    prober: ProbeInterface,
    match_fields: Sequence[str],
    alpha: float = 0.05,
    max_iter: int = 50,
    max_int: int = 60,
    repetitions: int = 10,
    misses_per_run: int = 2,
    min_runs: int = 2,
) -> TimeoutEstimate:
    """
    Sweep growing resend intervals until the RTT turns miss-like.

    Every run starts from a fresh key and resends it after 1, 2, 3, ... s; a
    run ends after ``misses_per_run`` miss-like samples or when an interval
    would exceed ``max_int`` or ``max_iter`` probes were sent. Hits form one
    ANOVA group and each run's misses another. After every run from
    ``min_runs`` on the test is repeated; the sweep stops as soon as
    p <= alpha and the estimate is the smallest interval that produced a miss.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if max_iter < 1 or max_int < 1 or repetitions < 1 or min_runs < 1:
        raise DomainError("max_iter, max_int, repetitions and min_runs must be positive")
    if not match_fields:
        raise DomainError("Idle timeout estimation needs the inferred match fields")

    factory = prober.keys()
    series: List[Tuple[int, float]] = []
    hits: List[float] = []
    miss_groups: List[List[float]] = []
    first_misses: List[int] = []
    result: Optional[AnovaResult] = None

    for run in range(repetitions):
        key = factory.fresh()
        t0 = prober.send(key)
        t1 = prober.send(key)
        _check_separable([t0], [t1])
        threshold = (t0 + t1) / 2.0

        misses: List[float] = []
        interval = 0
        for _ in range(max_iter):
            interval += 1
            if interval > max_int:
                break
            prober.wait(float(interval))
            rtt = prober.send(key)
            series.append((interval, rtt))
            if rtt >= threshold:
                if not misses:
                    first_misses.append(interval)
                misses.append(rtt)
                if len(misses) >= misses_per_run:
                    break
            else:
                hits.append(rtt)
        if misses:
            miss_groups.append(misses)
        logger.debug(f"Timeout sweep run {run}: first miss at {first_misses[-1] if misses else None}s")

        if run + 1 >= min(min_runs, repetitions):
            result = _sweep_anova(hits, miss_groups)
            if result is not None and result.p_value <= alpha:
                logger.debug(f"Timeout sweep significant after {run + 1} runs")
                break

    if result is None:
        logger.info("Idle timeout not found within the sweep bounds")
        return TimeoutEstimate(None, series, 1.0, alpha, first_misses)

    estimate = min(first_misses) if result.p_value <= alpha else None
    logger.info(f"Idle timeout estimate {estimate}s (F={result.f_statistic:.1f}, p={result.p_value:.3g})")
    return TimeoutEstimate(estimate, series, result.p_value, alpha, first_misses)
