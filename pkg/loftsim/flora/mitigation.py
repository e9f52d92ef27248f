"""
Mitigation: eviction list, elephant-flow protection and source blacklist.

Rules predicted as attack are evicted unless they are elephants (byte count
above the threshold and a non-spoofed source). Every eviction counts against
the rule's source address; a source reaching ``block_after_evictions`` is
blocked at ingress for the rest of the run.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Protocol, Sequence

import numpy as np

from loftsim.errors import DomainError
from loftsim.flowtable import EvictionCause, MatchKey
from loftsim.netsim import FlowObservation, Simulator

logger = logging.getLogger("FloRa")

DEFAULT_ELEPHANT_PERCENTILE = 95.0
DEFAULT_BLOCK_AFTER_EVICTIONS = 3


# ============ Controller Actions ============

class ControllerActions(Protocol):
    def evict(self, key: MatchKey) -> bool: ...

    def block(self, src_ip: str) -> None: ...


class SimulatorController:
    """Evicts from one switch of a Simulator and blocks sources at ingress"""

    def __init__(self, sim: Simulator, switch: str):
        self.sim = sim
        self.switch = switch

    def evict(self, key: MatchKey) -> bool:
        return self.sim.evict_flow(self.switch, key, EvictionCause.MITIGATION) is not None

    def block(self, src_ip: str) -> None:
        self.sim.block_source(src_ip)


# ============ Blacklist ============

@dataclass
class BlacklistEntry:
    eviction_count: int
    blocked: bool
    first_seen: float
    last_seen: float


class Blacklist:
    def __init__(self, block_after_evictions: int = DEFAULT_BLOCK_AFTER_EVICTIONS):
        if block_after_evictions < 1:
            raise DomainError(f"block_after_evictions must be positive, got {block_after_evictions}")
        self.block_after_evictions = block_after_evictions
        self.entries: Dict[str, BlacklistEntry] = {}

    def record_eviction(self, src_ip: str, now: float) -> bool:
        """Count one eviction; True when this eviction blocks the source"""
        entry = self.entries.get(src_ip)
        if entry is None:
            entry = self.entries[src_ip] = BlacklistEntry(0, False, now, now)
        entry.eviction_count += 1
        entry.last_seen = now
        if not entry.blocked and entry.eviction_count >= self.block_after_evictions:
            entry.blocked = True
            return True
        return False

    def is_blocked(self, src_ip: str) -> bool:
        entry = self.entries.get(src_ip)
        return entry is not None and entry.blocked

    @property
    def blocked_sources(self) -> List[str]:
        return sorted(ip for ip, entry in self.entries.items() if entry.blocked)


# ============ Reports ============

@dataclass(frozen=True)
class Verdict:
    flow_id: int
    key: MatchKey
    probability: float
    label: int


@dataclass
class DetectionReport:
    time_s: float
    verdicts: List[Verdict] = field(default_factory=list)
    evicted: List[int] = field(default_factory=list)
    protected: List[int] = field(default_factory=list)
    newly_blocked: List[str] = field(default_factory=list)
    occupancy_before: int = 0
    occupancy_after: int = 0


def elephant_threshold(byte_counts: Sequence[int], percentile: float = DEFAULT_ELEPHANT_PERCENTILE) -> float:
    if len(byte_counts) == 0:
        return float("inf")
    return float(np.percentile(np.asarray(byte_counts, dtype=float), percentile))


def mitigate(
    verdicts: Sequence[Verdict],
    rows: Sequence[FlowObservation],
    psi: Mapping[int, bool],
    blacklist: Blacklist,
    controller: ControllerActions,
    now: float,
    elephant_byte_threshold: Optional[float] = None,
) -> DetectionReport:
    """Act on attack verdicts for the rules of one snapshot"""
    by_id = {row.flow_id: row for row in rows}
    if elephant_byte_threshold is None:
        elephant_byte_threshold = elephant_threshold([row.byte_count for row in rows])
    report = DetectionReport(now, list(verdicts), occupancy_before=len(rows))

    for verdict in verdicts:
        if verdict.label != 1 or verdict.flow_id not in by_id:
            continue
        row = by_id[verdict.flow_id]
        if row.byte_count > elephant_byte_threshold and not psi.get(verdict.flow_id, False):
            report.protected.append(verdict.flow_id)
            logger.debug(f"Protected elephant flow {verdict.flow_id} ({row.byte_count} bytes)")
            continue
        if not controller.evict(row.key):
            continue
        report.evicted.append(verdict.flow_id)
        if blacklist.record_eviction(row.key.src_ip, now):
            controller.block(row.key.src_ip)
            report.newly_blocked.append(row.key.src_ip)

    report.occupancy_after = report.occupancy_before - len(report.evicted)
    if report.evicted or report.newly_blocked:
        logger.info(f"Mitigation at t={now:.0f}s: evicted {len(report.evicted)}, protected {len(report.protected)}, "
                    f"blocked {report.newly_blocked}")
    return report
