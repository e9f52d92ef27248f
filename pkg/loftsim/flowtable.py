"""
OpenFlow Flow Table Model

Exact-match flow table of a single switch:
- Rule installation with FIFO replacement when the table is full
- Per-packet matching with counter updates
- Idle-timeout eviction at 1 s tick resolution (boundary inclusive)
- Eviction log with cause accounting
- Read-only snapshots in installation order

Usage:
    table = FlowTable(capacity=1500)
    table.install_rule(key, now=0.0, idle_timeout=20, origin=Origin.LEGITIMATE)
    table.match_packet(key, 512, now=3.5)
    evicted = table.tick(20)
"""

import heapq
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from operator import itemgetter
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from loftsim.errors import ConfigurationError, DomainError, DuplicateRuleError

logger = logging.getLogger("FlowTable")


# ============ Match Keys ============

class Protocol(IntEnum):
    """IP protocol numbers of the supported match values"""
    ICMP = 1
    TCP = 6
    UDP = 17


class Origin(str, Enum):
    """Ground-truth origin of a rule; never visible to the detector"""
    LEGITIMATE = "legitimate"
    ATTACK = "attack"


class EvictionCause(str, Enum):
    IDLE_TIMEOUT = "idle_timeout"
    FIFO_REPLACEMENT = "fifo_replacement"
    MITIGATION = "mitigation"


MATCH_FIELDS: Tuple[str, ...] = ("src_ip", "dst_ip", "src_port", "dst_port", "protocol", "in_port")
DEFAULT_MATCH_FIELDS: Tuple[str, ...] = ("src_ip", "dst_ip", "src_port", "dst_port", "protocol")


class MatchKey(NamedTuple):
    """Header fields a switch can match on"""
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: Protocol = Protocol.TCP
    in_port: int = 0

    def project(self, fields: Sequence[str]) -> tuple:
        return tuple(getattr(self, name) for name in fields)

    def mutated(self, field_name: str, value) -> "MatchKey":
        return self._replace(**{field_name: value})


def field_projector(fields: Sequence[str]):
    """Build a fast projection callable for a fixed set of enabled fields"""
    unknown = [name for name in fields if name not in MATCH_FIELDS]
    if unknown or not fields:
        raise ConfigurationError(f"Invalid match fields: {list(fields)}")
    indices = [MATCH_FIELDS.index(name) for name in fields]
    if len(indices) == 1:
        index = indices[0]
        return lambda key: (key[index],)
    return itemgetter(*indices)


# ============ Rules and Outcomes ============

@dataclass(slots=True)
class FlowRule:
    """One installed flow entry"""
    key: MatchKey
    install_time: float
    last_match_time: float
    idle_timeout: float
    origin: Origin
    seq: int
    packet_count: int = 0
    byte_count: int = 0

    def duration(self, now: float) -> float:
        return now - self.install_time

    def expired(self, now: float) -> bool:
        return now - self.last_match_time >= self.idle_timeout


class InstallStatus(str, Enum):
    INSTALLED = "installed"
    REPLACED = "replaced"
    REJECTED = "rejected"


@dataclass(frozen=True)
class InstallOutcome:
    status: InstallStatus
    evicted: Optional[MatchKey] = None


class MatchResult(str, Enum):
    HIT = "hit"
    MISS = "miss"


@dataclass(frozen=True)
class EvictionRecord:
    time: float
    key: MatchKey
    cause: EvictionCause
    origin: Origin


class SnapshotRow(NamedTuple):
    key: MatchKey
    duration: float
    packet_count: int
    byte_count: int
    origin: Origin
    install_time: float


# ============ Flow Table ============

class FlowTable:
    """
    Exact-match flow table with capacity limit and FIFO replacement.

    Rules are keyed by the projection of their MatchKey onto the enabled
    match fields, so two keys that agree on every enabled field share a rule.
    Idle expiry candidates are kept in a lazy min-heap of deadlines; ``tick``
    re-validates each candidate against its current ``last_match_time``.
    """

    def __init__(
        self,
        capacity: int,
        match_fields: Sequence[str] = DEFAULT_MATCH_FIELDS,
        fifo_replacement: bool = True,
        name: str = "",
    ):
        if capacity < 1:
            raise ConfigurationError(f"Flow table capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.match_fields = tuple(match_fields)
        self.fifo_replacement = fifo_replacement
        self.name = name
        self._project = field_projector(self.match_fields)
        self._rules: Dict[tuple, FlowRule] = {}
        self._deadlines: List[Tuple[float, int, tuple]] = []
        self._seq = 0
        self.total_overflows = 0
        self.installed_total = 0
        self.eviction_log: List[EvictionRecord] = []

    def __len__(self) -> int:
        return len(self._rules)

    def __contains__(self, key: MatchKey) -> bool:
        return self._project(key) in self._rules

    @property
    def occupancy(self) -> float:
        return len(self._rules) / self.capacity

    @property
    def is_full(self) -> bool:
        return len(self._rules) >= self.capacity

    def get(self, key: MatchKey) -> Optional[FlowRule]:
        return self._rules.get(self._project(key))

    def rules(self) -> List[FlowRule]:
        """Live rules in installation order"""
        return list(self._rules.values())

    # ---------- Installation ----------

    def install_rule(
        self,
        key: MatchKey,
        now: float,
        idle_timeout: float,
        origin: Origin = Origin.LEGITIMATE,
    ) -> InstallOutcome:
        if idle_timeout <= 0:
            raise DomainError(f"idle_timeout must be positive, got {idle_timeout}")
        projected = self._project(key)
        if projected in self._rules:
            raise DuplicateRuleError(f"Rule already installed in {self.name or 'table'} for {key}")

        evicted_key = None
        if len(self._rules) >= self.capacity:
            self.total_overflows += 1
            if not self.fifo_replacement:
                return InstallOutcome(InstallStatus.REJECTED)
            oldest = next(iter(self._rules))
            evicted_key = self._remove(oldest, now, EvictionCause.FIFO_REPLACEMENT).key

        self._seq += 1
        rule = FlowRule(
            key=key,
            install_time=now,
            last_match_time=now,
            idle_timeout=idle_timeout,
            origin=origin,
            seq=self._seq,
        )
        self._rules[projected] = rule
        self.installed_total += 1
        heapq.heappush(self._deadlines, (now + idle_timeout, rule.seq, projected))

        if evicted_key is None:
            return InstallOutcome(InstallStatus.INSTALLED)
        return InstallOutcome(InstallStatus.REPLACED, evicted_key)

    # ---------- Matching ----------

    def match_packet(self, key: MatchKey, nbytes: int, now: float) -> MatchResult:
        rule = self._rules.get(self._project(key))
        if rule is None:
            return MatchResult.MISS
        rule.packet_count += 1
        rule.byte_count += nbytes
        rule.last_match_time = now
        return MatchResult.HIT

    # ---------- Eviction ----------

    def tick(self, now: float) -> List[MatchKey]:
        """Evict every rule idle for at least its timeout; keys returned in installation order"""
        expired: List[FlowRule] = []
        deferred: List[Tuple[float, int, tuple]] = []
        heap = self._deadlines
        # deadlines are a candidate filter only; the elapsed-time check decides
        while heap and heap[0][0] <= now + 1e-6:
            deadline, seq, projected = heapq.heappop(heap)
            rule = self._rules.get(projected)
            if rule is None or rule.seq != seq:
                continue
            if rule.expired(now):
                expired.append(rule)
            else:
                next_deadline = rule.last_match_time + rule.idle_timeout
                if next_deadline <= now + 1e-6:
                    deferred.append((next_deadline + 1e-6, seq, projected))
                else:
                    deferred.append((next_deadline, seq, projected))
        for entry in deferred:
            heapq.heappush(heap, entry)

        expired.sort(key=lambda rule: rule.seq)
        for rule in expired:
            self._remove(self._project(rule.key), now, EvictionCause.IDLE_TIMEOUT)
        return [rule.key for rule in expired]

    def evict(self, key: MatchKey, now: float, cause: EvictionCause = EvictionCause.MITIGATION) -> Optional[FlowRule]:
        projected = self._project(key)
        if projected not in self._rules:
            return None
        return self._remove(projected, now, cause)

    def _remove(self, projected: tuple, now: float, cause: EvictionCause) -> FlowRule:
        rule = self._rules.pop(projected)
        self.eviction_log.append(EvictionRecord(now, rule.key, cause, rule.origin))
        return rule

    # ---------- Inspection ----------

    def snapshot(self, now: float) -> List[SnapshotRow]:
        return [
            SnapshotRow(rule.key, now - rule.install_time, rule.packet_count, rule.byte_count, rule.origin, rule.install_time)
            for rule in self._rules.values()
        ]

    def evictions_by_cause(self) -> Dict[EvictionCause, int]:
        counts = {cause: 0 for cause in EvictionCause}
        for record in self.eviction_log:
            counts[record.cause] += 1
        return counts

    def origin_counts(self) -> Tuple[int, int]:
        """(legitimate, attack) rule counts"""
        attack = sum(1 for rule in self._rules.values() if rule.origin is Origin.ATTACK)
        return len(self._rules) - attack, attack


def replay(table: FlowTable, operations: Iterable[tuple]) -> List[object]:
    """Apply a sequence of (op, *args) tuples; used by tooling and tests"""
    results = []
    for op, *args in operations:
        if op == "install":
            results.append(table.install_rule(*args))
        elif op == "match":
            results.append(table.match_packet(*args))
        elif op == "tick":
            results.append(table.tick(*args))
        else:
            raise DomainError(f"Unknown table operation: {op}")
    return results
