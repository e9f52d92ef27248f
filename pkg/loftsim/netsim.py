"""
Deterministic SDN Data-Plane Simulator

Hosts, switches (each owning a FlowTable) and a single controller:
- Packet-In / Flow-Mod miss path installing rules along the whole route
- RTT model: 2 * sum(one-way latencies) + controller penalty on a miss + truncated Gaussian jitter
- 1 s clock ticks driving idle-timeout eviction, per-second snapshots
- Ingress drop for sources blocked by the controller
- CSV export of event traces and snapshots

Usage:
    sim = build_topology(default_topology(capacity=1500), seed=7)
    result = sim.run_until(200, [background, attack])
"""

import heapq
import ipaddress
import logging
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from loftsim.errors import ConfigurationError, RoutingError
from loftsim.flowtable import (
    DEFAULT_MATCH_FIELDS,
    EvictionCause,
    FlowRule,
    FlowTable,
    MatchKey,
    MatchResult,
    Origin,
    Protocol,
)

logger = logging.getLogger("NetSim")

HEADER_BYTES = 54
TRACE_COLUMNS = ["time_s", "host", "src_ip", "dst_ip", "sport", "dport", "proto", "bytes", "hit_or_miss", "rtt_ms"]
SNAPSHOT_COLUMNS = [
    "time_s", "flow_id", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "in_port",
    "duration_s", "pkt_count", "byte_count", "origin",
]


# ============ Topology ============

class HostRole(str, Enum):
    LEGITIMATE = "legitimate"
    ATTACKER = "attacker"


@dataclass
class SwitchSpec:
    name: str
    capacity: int = 1500
    match_fields: Tuple[str, ...] = DEFAULT_MATCH_FIELDS
    idle_timeout: float = 20.0


@dataclass
class HostSpec:
    name: str
    switch: str
    port: int
    prefix: str
    role: HostRole = HostRole.LEGITIMATE
    latency_ms: float = 1.0
    bandwidth_gbps: float = 5.0

    @property
    def network(self) -> ipaddress.IPv4Network:
        return ipaddress.ip_network(self.prefix)

    @property
    def address(self) -> str:
        """The host's own configured address (.10 inside its prefix)"""
        return str(self.network.network_address + 10)


@dataclass
class LinkSpec:
    a: str
    b: str
    latency_ms: float = 1.0
    bandwidth_gbps: float = 1.0


@dataclass
class TopologySpec:
    """Switches, hosts, undirected links and the controller penalty"""
    switches: List[SwitchSpec]
    hosts: List[HostSpec]
    links: List[LinkSpec]
    controller_penalty_ms: float = 50.0
    jitter_fraction: float = 0.05
    controllers: int = 1

    def validate(self):
        names = [s.name for s in self.switches]
        if not names:
            raise ConfigurationError("Topology needs at least one switch")
        if len(set(names)) != len(names):
            raise ConfigurationError(f"Duplicate switch names: {names}")
        if self.controllers != 1:
            raise ConfigurationError(f"Exactly one controller is supported, got {self.controllers}")
        if self.controller_penalty_ms < 0 or self.jitter_fraction < 0:
            raise ConfigurationError("controller_penalty_ms and jitter_fraction must be non-negative")

        host_names = [h.name for h in self.hosts]
        if len(set(host_names)) != len(host_names):
            raise ConfigurationError(f"Duplicate host names: {host_names}")
        used_ports: Set[Tuple[str, int]] = set()
        for host in self.hosts:
            if host.switch not in names:
                raise ConfigurationError(f"Host {host.name} attached to missing switch {host.switch}")
            if (host.switch, host.port) in used_ports:
                raise ConfigurationError(f"Duplicate port {host.port} on switch {host.switch}")
            used_ports.add((host.switch, host.port))
            try:
                host.network
            except ValueError as e:
                raise ConfigurationError(f"Host {host.name} has invalid prefix {host.prefix}: {e}")

        if any(host.latency_ms < 0 for host in self.hosts):
            raise ConfigurationError("Host link latency must be non-negative")
        for link in self.links:
            if link.a not in names or link.b not in names:
                raise ConfigurationError(f"Link {link.a}-{link.b} must join two known switches")
            if link.latency_ms < 0:
                raise ConfigurationError(f"Negative latency on link {link.a}-{link.b}")

        # connectivity over switches; hosts hang off their switch
        adjacency = {n: set() for n in names}
        for link in self.links:
            adjacency[link.a].add(link.b)
            adjacency[link.b].add(link.a)
        seen = {names[0]}
        queue = deque([names[0]])
        while queue:
            node = queue.popleft()
            for nxt in adjacency[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if seen != set(names):
            raise ConfigurationError(f"Disconnected topology: unreachable switches {sorted(set(names) - seen)}")

    @property
    def attackers(self) -> List[HostSpec]:
        return [h for h in self.hosts if h.role is HostRole.ATTACKER]

    @property
    def legitimate_hosts(self) -> List[HostSpec]:
        return [h for h in self.hosts if h.role is HostRole.LEGITIMATE]

    def host(self, name: str) -> HostSpec:
        for host in self.hosts:
            if host.name == name:
                return host
        raise RoutingError(f"Unknown host: {name}")


def default_topology(
    capacity: int = 1500,
    idle_timeout: float = 20.0,
    match_fields: Sequence[str] = DEFAULT_MATCH_FIELDS,
    link_latency_ms: float = 1.0,
    controller_penalty_ms: float = 50.0,
    jitter_fraction: float = 0.05,
    attackers: Sequence[str] = ("h1", "h3", "h6"),
) -> TopologySpec:
    """Tree of one core and three edge switches with eight hosts"""
    switches = [SwitchSpec(name, capacity, tuple(match_fields), idle_timeout) for name in ("s1", "s2", "s3", "s4")]
    placement = {"h1": "s2", "h2": "s2", "h3": "s2", "h4": "s3", "h5": "s3", "h6": "s3", "h7": "s4", "h8": "s4"}
    hosts = []
    ports: Dict[str, int] = {}
    for index, (name, switch) in enumerate(placement.items(), start=1):
        ports[switch] = ports.get(switch, 0) + 1
        role = HostRole.ATTACKER if name in attackers else HostRole.LEGITIMATE
        hosts.append(HostSpec(name, switch, ports[switch], f"10.0.{index}.0/24", role, link_latency_ms))
    links = [LinkSpec("s1", edge, link_latency_ms, 1.0) for edge in ("s2", "s3", "s4")]
    return TopologySpec(switches, hosts, links, controller_penalty_ms, jitter_fraction)


# ============ Events and Samples ============

@dataclass(frozen=True, slots=True)
class PacketEvent:
    time: float
    src_host: str
    key: MatchKey
    nbytes: int
    origin: Origin = Origin.LEGITIMATE
    payload_entropy: float = 0.0

    def __post_init__(self):
        if self.time < 0 or self.nbytes <= 0:
            raise ConfigurationError(f"Invalid packet event: time={self.time}, bytes={self.nbytes}")


@dataclass(frozen=True, slots=True)
class RttSample:
    rtt: float
    send_time: float
    truth_miss: bool = field(repr=False)


class TraceRecord(NamedTuple):
    time_s: float
    host: str
    src_ip: str
    dst_ip: str
    sport: int
    dport: int
    proto: str
    bytes: int
    hit_or_miss: str
    rtt_ms: float


@dataclass(slots=True)
class FlowStats:
    """Per match key bookkeeping, kept by the network, not by any switch"""
    flow_id: int
    key: MatchKey
    src_host: str
    origin: Origin
    arrivals: List[float] = field(default_factory=list)
    packets: int = 0
    bytes_total: int = 0
    payload_total: int = 0
    entropy_total: float = 0.0

    @property
    def mean_packet_size(self) -> float:
        return self.bytes_total / self.packets if self.packets else 0.0

    @property
    def mean_payload_size(self) -> float:
        return self.payload_total / self.packets if self.packets else 0.0

    @property
    def mean_payload_entropy(self) -> float:
        return self.entropy_total / self.packets if self.packets else 0.0

    def arrivals_since(self, since: float) -> List[float]:
        return self.arrivals[bisect_left(self.arrivals, since):]


class FlowObservation(NamedTuple):
    """A snapshot row joined with the network-level flow bookkeeping"""
    time_s: int
    switch: str
    flow_id: int
    key: MatchKey
    in_port: int
    duration: float
    packet_count: int
    byte_count: int
    origin: Origin
    install_time: float
    mean_packet_size: float
    mean_payload_size: float
    mean_payload_entropy: float


@dataclass
class Snapshot:
    time_s: int
    switch: str
    capacity: int
    rows: List[FlowObservation]

    @property
    def occupancy(self) -> float:
        return len(self.rows) / self.capacity


@dataclass
class RunResult:
    trace: List[TraceRecord] = field(default_factory=list)
    snapshots: List[Snapshot] = field(default_factory=list)


# ============ Simulator ============

class _Switch:
    def __init__(self, spec: SwitchSpec):
        self.spec = spec
        self.table = FlowTable(spec.capacity, spec.match_fields, name=spec.name)
        self.uses_in_port = "in_port" in spec.match_fields


class _Route(NamedTuple):
    hops: Tuple[Tuple[_Switch, int], ...]
    base_rtt_ms: float


class Simulator:
    """
    Single-threaded discrete-time engine.

    Determinism: every random draw comes from one numpy Generator seeded at
    construction; event order is (time, source registration order, sequence).
    """

    def __init__(self, topology: TopologySpec, seed: int = 0):
        topology.validate()
        self.topology = topology
        self.seed = seed
        self.clock = 0.0
        self._last_tick = 0
        self._rng = np.random.default_rng(seed)
        self._jitter_buffer: np.ndarray = np.empty(0)
        self._jitter_pos = 0

        self.switches: Dict[str, _Switch] = {s.name: _Switch(s) for s in topology.switches}
        self.hosts: Dict[str, HostSpec] = {h.name: h for h in topology.hosts}
        self._ports = self._assign_ports()
        self._routes: Dict[Tuple[str, str], _Route] = {}
        self._address_cache: Dict[str, str] = {}
        self._ingress_cache: Dict[Tuple[str, str], int] = {}

        self.flows: Dict[MatchKey, FlowStats] = {}
        self._flows_by_id: List[FlowStats] = []
        self.blocked_sources: Set[str] = set()
        self.dropped_packets = 0
        self.first_overflow: Dict[str, float] = {}

        self._sources: List[Iterator[PacketEvent]] = []
        self._heap: List[Tuple[float, int, int, PacketEvent]] = []
        self._seq = 0
        self._tick_listeners: Tuple[Callable[["Simulator", int], None], ...] = ()

    # ---------- Topology helpers ----------

    def _assign_ports(self) -> Dict[Tuple[str, str], int]:
        """(switch, neighbor) -> port number; host ports come from HostSpec"""
        ports: Dict[Tuple[str, str], int] = {}
        next_port: Dict[str, int] = {}
        for host in self.topology.hosts:
            ports[(host.switch, host.name)] = host.port
            next_port[host.switch] = max(next_port.get(host.switch, 0), host.port)
        for link in self.topology.links:
            for here, there in ((link.a, link.b), (link.b, link.a)):
                next_port[here] = next_port.get(here, 0) + 1
                ports[(here, there)] = next_port[here]
        return ports

    def _neighbors(self) -> Dict[str, List[Tuple[str, float]]]:
        order = {name: i for i, name in enumerate(self.switches)}
        adjacency: Dict[str, List[Tuple[str, float]]] = {name: [] for name in self.switches}
        for link in self.topology.links:
            adjacency[link.a].append((link.b, link.latency_ms))
            adjacency[link.b].append((link.a, link.latency_ms))
        for name in adjacency:
            adjacency[name].sort(key=lambda item: order[item[0]])
        return adjacency

    def host_for_address(self, address: str) -> str:
        cached = self._address_cache.get(address)
        if cached is not None:
            return cached
        try:
            ip = ipaddress.ip_address(address)
        except ValueError:
            raise RoutingError(f"Invalid address: {address}")
        for host in self.topology.hosts:
            if ip in host.network:
                self._address_cache[address] = host.name
                return host.name
        raise RoutingError(f"No host owns address {address}")

    def switch_path(self, start: str, goal: str) -> List[str]:
        """Shortest switch path, lowest-index neighbor first on ties"""
        adjacency = self._neighbors()
        parents: Dict[str, Optional[str]] = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nxt, _ in adjacency[node]:
                if nxt not in parents:
                    parents[nxt] = node
                    queue.append(nxt)
        if goal not in parents:
            raise RoutingError(f"No path from {start} to {goal}")
        path = [goal]
        while parents[path[-1]] is not None:
            path.append(parents[path[-1]])
        path.reverse()
        return path

    def route(self, src_host: str, dst_host: str) -> _Route:
        cached = self._routes.get((src_host, dst_host))
        if cached is not None:
            return cached
        if src_host not in self.hosts or dst_host not in self.hosts:
            raise RoutingError(f"Unknown host in route {src_host} -> {dst_host}")
        src, dst = self.hosts[src_host], self.hosts[dst_host]
        path = self.switch_path(src.switch, dst.switch)

        latency = {}
        for link in self.topology.links:
            latency[(link.a, link.b)] = latency[(link.b, link.a)] = link.latency_ms
        one_way = src.latency_ms + sum(latency[(a, b)] for a, b in zip(path, path[1:])) + dst.latency_ms

        hops = []
        previous = src_host
        for name in path:
            hops.append((self.switches[name], self._ports[(name, previous)]))
            previous = name
        route = _Route(tuple(hops), 2.0 * one_way)
        self._routes[(src_host, dst_host)] = route
        return route

    def ingress_port(self, switch: str, src_host: str) -> int:
        """Port on which traffic from src_host enters the given switch"""
        cached = self._ingress_cache.get((switch, src_host))
        if cached is not None:
            return cached
        if src_host not in self.hosts or switch not in self.switches:
            raise RoutingError(f"Unknown ingress {src_host} -> {switch}")
        host = self.hosts[src_host]
        if host.switch == switch:
            port = host.port
        else:
            path = self.switch_path(host.switch, switch)
            port = self._ports[(switch, path[-2])]
        self._ingress_cache[(switch, src_host)] = port
        return port

    def prefix_map(self, switch: str) -> Dict[int, List[str]]:
        """Port -> prefixes allocated to the hosts whose traffic enters through it"""
        mapping: Dict[int, List[str]] = {}
        for host in self.topology.hosts:
            mapping.setdefault(self.ingress_port(switch, host.name), []).append(host.prefix)
        return mapping

    # ---------- Randomness ----------

    def _jitter(self, base_rtt: float) -> float:
        sigma = self.topology.jitter_fraction * base_rtt
        if sigma <= 0:
            return 0.0
        if self._jitter_pos >= len(self._jitter_buffer):
            draws = self._rng.standard_normal(4096)
            self._jitter_buffer = draws[np.abs(draws) <= 3.0]
            self._jitter_pos = 0
        z = self._jitter_buffer[self._jitter_pos]
        self._jitter_pos += 1
        return float(z) * sigma

    # ---------- Packet path ----------

    def block_source(self, src_ip: str):
        if src_ip not in self.blocked_sources:
            self.blocked_sources.add(src_ip)
            logger.info(f"Controller blocked source {src_ip} at ingress")

    def send_packet(self, event: PacketEvent) -> Optional[RttSample]:
        """Deliver one packet; None when the source is blocked at ingress"""
        if event.time < self.clock - 1e-9:
            raise ConfigurationError(f"Event at {event.time} precedes clock {self.clock}")
        self.advance_to(event.time)
        return self._deliver(event)

    def _deliver(self, event: PacketEvent) -> Optional[RttSample]:
        key = event.key
        if key.src_ip in self.blocked_sources:
            self.dropped_packets += 1
            return None
        route = self.route(event.src_host, self.host_for_address(key.dst_ip))
        now = event.time

        miss = False
        for index, (switch, in_port) in enumerate(route.hops):
            local_key = key._replace(in_port=in_port) if switch.uses_in_port else key
            if switch.table.match_packet(local_key, event.nbytes, now) is MatchResult.MISS:
                miss = True
                self._controller_install(route.hops[index:], key, now, event.nbytes, event.origin)
                break

        self._record_flow(event)
        rtt = route.base_rtt_ms + (self.topology.controller_penalty_ms if miss else 0.0) + self._jitter(route.base_rtt_ms)
        return RttSample(rtt, now, miss)

    def _controller_install(self, hops, key: MatchKey, now: float, nbytes: int, origin: Origin):
        """One Flow-Mod transaction covering every switch from the missing hop onwards"""
        first = True
        for switch, in_port in hops:
            local_key = key._replace(in_port=in_port) if switch.uses_in_port else key
            table = switch.table
            if first or local_key not in table:
                if table.is_full and switch.spec.name not in self.first_overflow:
                    self.first_overflow[switch.spec.name] = now
                    logger.info(f"First overflow on {switch.spec.name} at t={now:.1f}s")
                table.install_rule(local_key, now, switch.spec.idle_timeout, origin)
            else:
                table.match_packet(local_key, nbytes, now)
            first = False

    def _record_flow(self, event: PacketEvent):
        stats = self.flows.get(event.key)
        if stats is None:
            stats = FlowStats(len(self._flows_by_id), event.key, event.src_host, event.origin)
            self.flows[event.key] = stats
            self._flows_by_id.append(stats)
        stats.arrivals.append(event.time)
        stats.packets += 1
        stats.bytes_total += event.nbytes
        stats.payload_total += max(event.nbytes - HEADER_BYTES, 0)
        stats.entropy_total += event.payload_entropy

    def flow(self, flow_id: int) -> FlowStats:
        return self._flows_by_id[flow_id]

    def flow_for_key(self, key: MatchKey) -> Optional[FlowStats]:
        return self.flows.get(key._replace(in_port=0)) or self.flows.get(key)

    # ---------- Clock ----------

    def advance_to(self, t: float):
        """Move the clock, ticking every whole second passed on the way"""
        while self._last_tick + 1 <= t + 1e-9:
            self._last_tick += 1
            self._tick(self._last_tick)
        self.clock = max(self.clock, t)

    def _tick(self, second: int):
        for switch in self.switches.values():
            switch.table.tick(second)
        for callback in self._tick_listeners:
            callback(self, second)

    # ---------- Inspection ----------

    def observe(self, switch: str, now: Optional[float] = None) -> List[FlowObservation]:
        """Snapshot of one switch joined with flow bookkeeping"""
        sw = self.switches[switch]
        now = self.clock if now is None else now
        rows = []
        for row in sw.table.snapshot(now):
            stats = self.flow_for_key(row.key)
            if stats is None:
                continue
            rows.append(FlowObservation(
                int(now), switch, stats.flow_id, stats.key, self.ingress_port(switch, stats.src_host),
                row.duration, row.packet_count, row.byte_count, row.origin, row.install_time,
                stats.mean_packet_size, stats.mean_payload_size, stats.mean_payload_entropy,
            ))
        return rows

    def evict_flow(self, switch: str, key: MatchKey, cause: EvictionCause = EvictionCause.MITIGATION) -> Optional[FlowRule]:
        sw = self.switches[switch]
        if sw.uses_in_port:
            stats = self.flow_for_key(key)
            if stats is not None:
                key = key._replace(in_port=self.ingress_port(switch, stats.src_host))
        return sw.table.evict(key, self.clock, cause)

    # ---------- Event loop ----------

    def register_source(self, source: Iterable[PacketEvent]):
        index = len(self._sources)
        iterator = iter(source)
        self._sources.append(iterator)
        self._push_next(index)

    def _push_next(self, index: int):
        event = next(self._sources[index], None)
        if event is not None:
            self._seq += 1
            heapq.heappush(self._heap, (event.time, index, self._seq, event))

    def run_until(
        self,
        t_end: float,
        sources: Sequence[Iterable[PacketEvent]] = (),
        record_trace: bool = True,
        snapshot_switches: Optional[Sequence[str]] = None,
        on_second: Optional[Callable[["Simulator", int], None]] = None,
    ) -> RunResult:
        """
        Process every registered source event up to t_end in timestamp order.

        Each whole second s in (clock, t_end] ticks every table, then snapshots
        the requested switches, then calls on_second(sim, s); events stamped
        exactly s are processed after that.
        """
        if t_end < self.clock:
            raise ConfigurationError(f"t_end {t_end} precedes clock {self.clock}")
        for source in sources:
            self.register_source(source)
        result = RunResult()
        names = list(self.switches) if snapshot_switches is None else list(snapshot_switches)

        def per_second(sim: "Simulator", second: int):
            for name in names:
                sw = sim.switches[name]
                result.snapshots.append(Snapshot(second, name, sw.spec.capacity, sim.observe(name, second)))
            if on_second is not None:
                on_second(sim, second)

        self._tick_listeners = (per_second,)
        try:
            while self._heap and self._heap[0][0] <= t_end:
                time, index, _, event = heapq.heappop(self._heap)
                self.advance_to(time)
                sample = self._deliver(event)
                if record_trace:
                    result.trace.append(_trace_record(event, sample))
                self._push_next(index)
            self.advance_to(t_end)
        finally:
            self._tick_listeners = ()
        return result


def _trace_record(event: PacketEvent, sample: Optional[RttSample]) -> TraceRecord:
    key = event.key
    if sample is None:
        outcome, rtt = "drop", float("nan")
    else:
        outcome, rtt = ("miss" if sample.truth_miss else "hit"), sample.rtt
    return TraceRecord(event.time, event.src_host, key.src_ip, key.dst_ip, key.src_port, key.dst_port,
                       Protocol(key.protocol).name, event.nbytes, outcome, rtt)


def build_topology(spec: TopologySpec, seed: int = 0) -> Simulator:
    """Validate the topology and return a simulator at t=0 with empty tables"""
    sim = Simulator(spec, seed)
    logger.info(f"Built topology: {len(spec.switches)} switches, {len(spec.hosts)} hosts, "
                f"{len(spec.attackers)} attackers")
    return sim


# ============ CSV Export ============

def trace_frame(trace: Sequence[TraceRecord]) -> pd.DataFrame:
    return pd.DataFrame.from_records(list(trace), columns=TRACE_COLUMNS)


def write_trace_csv(trace: Sequence[TraceRecord], path: Path) -> Path:
    trace_frame(trace).to_csv(path, index=False)
    return path


def snapshot_frame(snapshots: Sequence[Snapshot]) -> pd.DataFrame:
    records = [
        (snap.time_s, row.flow_id, row.key.src_ip, row.key.dst_ip, row.key.src_port, row.key.dst_port,
         Protocol(row.key.protocol).name, row.in_port, row.duration, row.packet_count, row.byte_count, row.origin.value)
        for snap in snapshots
        for row in snap.rows
    ]
    return pd.DataFrame.from_records(records, columns=SNAPSHOT_COLUMNS)


def write_snapshot_csv(snapshots: Sequence[Snapshot], path: Path) -> Path:
    snapshot_frame(snapshots).to_csv(path, index=False)
    return path
