"""
Traffic Generation and Attack Planning

Legitimate background traffic and the low-rate flow table overflow attack:
- Attack arithmetic: used capacity, mean rate of increase, time to fill
- Attack planning (AF range, ANP, RPR) against a target table
- Synthetic background flows: Poisson arrivals, exponential lifetimes with a
  long-lived tail, Gaussian intra-flow gaps, optional reverse-direction replies
- Attack stream: per-cycle refreshes plus ANP new keys, paced at RPR
- CSV trace replay using the simulator's event export schema

All generators are pure functions of (configuration, seed).
"""

import ipaddress
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from loftsim.errors import ConfigurationError, DomainError
from loftsim.flowtable import MatchKey, Origin, Protocol
from loftsim.netsim import HostRole, HostSpec, PacketEvent, TopologySpec

logger = logging.getLogger("Traffic")

SERVICE_PORTS = (80, 443, 53, 22, 25, 110, 143, 993, 3306, 8080)
EPHEMERAL_PORTS = (1024, 65536)
DEFAULT_SPOOF_PREFIX = "172.16.0.0/12"


# ============ Attack Arithmetic ============

def compute_used_capacity(p: float, q: float, t_idle: float) -> float:
    """Entries held by background traffic: ports * flows/s/port * idle timeout"""
    if min(p, q, t_idle) < 0:
        raise DomainError(f"Used capacity inputs must be non-negative: p={p}, q={q}, t_idle={t_idle}")
    return p * q * t_idle


def compute_mri(anp: float, af: float) -> float:
    """Mean rate of increase of attack rules (rules/s)"""
    if af <= 0:
        raise DomainError(f"Attack frequency must be positive, got {af}")
    return anp / af


def compute_attack_duration(c: float, c_used: float, mri: float) -> float:
    """Seconds needed to fill the remaining capacity at the given MRI"""
    if mri <= 0:
        raise DomainError(f"MRI must be positive, got {mri}")
    if c < c_used:
        raise DomainError(f"Used capacity {c_used} exceeds capacity {c}")
    return (c - c_used) / mri


# ============ Profiles and Plans ============

@dataclass
class BackgroundProfile:
    """Statistics of the legitimate flow population"""
    flow_arrival_rate: float
    mean_flow_lifetime: float = 10.0
    long_lived_fraction: float = 0.001
    long_lived_duration: float = 200.0
    packet_size_range: Tuple[int, int] = (64, 1024)
    per_flow_packet_rate: Tuple[float, float] = (0.9, 0.2)  # mean pps, relative sd of the gap
    reply_fraction: float = 0.25
    warmup_s: float = 30.0
    payload_entropy: Tuple[float, float] = (7.2, 0.4)
    udp_fraction: float = 0.2

    def __post_init__(self):
        if self.flow_arrival_rate < 0 or self.mean_flow_lifetime <= 0 or self.per_flow_packet_rate[0] <= 0:
            raise ConfigurationError("Background rates and lifetimes must be positive")
        if not 0.0 <= self.long_lived_fraction <= 1.0 or not 0.0 <= self.reply_fraction <= 1.0:
            raise ConfigurationError("Fractions must lie in [0, 1]")
        low, high = self.packet_size_range
        if not 0 < low <= high:
            raise ConfigurationError(f"Invalid packet size range {self.packet_size_range}")
        if self.warmup_s < 0:
            raise ConfigurationError("warmup_s must be non-negative")

    @classmethod
    def from_transmission_rate(cls, pps: float, packets_per_flow: float = 10.0, **overrides) -> "BackgroundProfile":
        """Convert an aggregate packet rate into flow arrivals at a fixed packets-per-flow mean"""
        lifetime = overrides.get("mean_flow_lifetime", 10.0)
        rate = ((packets_per_flow - 1.0) / lifetime, overrides.pop("gap_sd", 0.2))
        overrides.setdefault("per_flow_packet_rate", rate)
        return cls(flow_arrival_rate=pps / packets_per_flow, **overrides)

    @property
    def rule_install_rate(self) -> float:
        """New rules per second including reverse-direction replies"""
        return self.flow_arrival_rate * (1.0 + self.reply_fraction)


@dataclass
class AttackPlan:
    af_min: int
    af_max: int
    anp: int
    rpr: int
    mri: float
    c: float
    c_used: float
    d_total: float

    @property
    def expected_af(self) -> float:
        return (self.af_min + self.af_max) / 2.0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "AttackPlan":
        return cls(**data)


def plan_attack(
    capacity: float,
    profile: BackgroundProfile,
    af_range: Tuple[int, int],
    anp: int,
    idle_timeout: float,
    ports: int = 4,
) -> AttackPlan:
    """
    Build an AttackPlan against a table of the given capacity.

    q is the background rule install rate per port; RPR is the packet rate
    that refreshes every rule still missing from the table once per af_min.
    """
    if any(float(af) != int(af) for af in af_range):
        raise DomainError(f"AF bounds must be whole seconds, got {af_range}")
    af_min, af_max = int(af_range[0]), int(af_range[1])
    if af_min <= 0 or af_min > af_max:
        raise DomainError(f"Invalid AF range {af_range}")
    if af_max >= idle_timeout:
        raise DomainError(f"AF max {af_max}s must stay below the idle timeout {idle_timeout}s")
    if anp < 0:
        raise DomainError(f"ANP must be non-negative, got {anp}")

    q = profile.rule_install_rate / ports
    c_used = min(compute_used_capacity(ports, q, idle_timeout), float(capacity))
    mri = compute_mri(anp, (af_min + af_max) / 2.0)
    d_total = compute_attack_duration(capacity, c_used, mri) if mri > 0 else math.inf
    rpr = max(math.ceil((capacity - c_used) / af_min), math.ceil(anp / af_min), 1)
    plan = AttackPlan(af_min, af_max, int(anp), int(rpr), mri, float(capacity), c_used, d_total)
    logger.info(f"Attack plan: AF={af_min}-{af_max}s ANP={anp} RPR={rpr}pps MRI={mri:.2f}/s "
                f"C_used={c_used:.0f} D_total={d_total:.1f}s")
    return plan


# ============ Address Helpers ============

def _address_in(network: ipaddress.IPv4Network, offset: int) -> str:
    return str(network.network_address + offset)


def _host_offsets(network: ipaddress.IPv4Network) -> Tuple[int, int]:
    """Usable offset range avoiding network, gateway and broadcast addresses"""
    return 2, max(network.num_addresses - 1, 3)


# ============ Background Traffic ============

@dataclass(frozen=True)
class FlowPlan:
    key: MatchKey
    src_host: str
    dst_host: str
    start: float
    lifetime: float
    reply_key: Optional[MatchKey] = None


class BackgroundGenerator:
    """
    Legitimate traffic among the topology's legitimate hosts.

    Destinations sit behind a different edge switch whenever one exists, so
    every flow crosses the core. Flows starting in [-warmup, 0) contribute
    only their packets at t >= 0.
    """

    def __init__(self, profile: BackgroundProfile, topology: TopologySpec, seed: int, t_end: float):
        self.profile = profile
        self.topology = topology
        self.seed = seed
        self.t_end = float(t_end)
        self._hosts = topology.legitimate_hosts
        self._flows: Optional[List[FlowPlan]] = None

    def _destinations(self) -> Dict[str, List[HostSpec]]:
        choices = {}
        for src in self._hosts:
            remote = [h for h in self._hosts if h.switch != src.switch]
            choices[src.name] = remote or [h for h in self._hosts if h.name != src.name]
        return choices

    def plan_flows(self) -> List[FlowPlan]:
        if self._flows is not None:
            return self._flows
        profile = self.profile
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1]))
        horizon = self.t_end + profile.warmup_s
        if profile.flow_arrival_rate == 0 or horizon <= 0 or len(self._hosts) < 2:
            self._flows = []
            self._rng = rng
            return self._flows

        n = int(rng.poisson(profile.flow_arrival_rate * horizon))
        starts = np.sort(rng.uniform(-profile.warmup_s, self.t_end, n))
        lifetimes = rng.exponential(profile.mean_flow_lifetime, n)
        lifetimes[rng.random(n) < profile.long_lived_fraction] = profile.long_lived_duration
        src_index = rng.integers(0, len(self._hosts), n)
        dst_draw = rng.random(n)
        src_offset_draw = rng.random(n)
        dst_offset_draw = rng.random(n)
        src_ports = rng.integers(*EPHEMERAL_PORTS, n)
        dst_ports = rng.choice(np.array(SERVICE_PORTS), n)
        udp = rng.random(n) < profile.udp_fraction
        replies = rng.random(n) < profile.reply_fraction

        destinations = self._destinations()
        used: Set[MatchKey] = set()
        flows = []
        for i in range(n):
            src = self._hosts[src_index[i]]
            candidates = destinations[src.name]
            dst = candidates[int(dst_draw[i] * len(candidates))]
            src_net, dst_net = src.network, dst.network
            lo, hi = _host_offsets(src_net)
            src_ip = _address_in(src_net, lo + int(src_offset_draw[i] * (hi - lo)))
            lo, hi = _host_offsets(dst_net)
            dst_ip = _address_in(dst_net, lo + int(dst_offset_draw[i] * (hi - lo)))
            protocol = Protocol.UDP if udp[i] else Protocol.TCP
            sport = int(src_ports[i])
            while True:
                key = MatchKey(src_ip, dst_ip, sport, int(dst_ports[i]), protocol)
                reply = MatchKey(dst_ip, src_ip, key.dst_port, sport, protocol) if replies[i] else None
                if key not in used and (reply is None or reply not in used):
                    break
                sport = EPHEMERAL_PORTS[0] + (sport + 1 - EPHEMERAL_PORTS[0]) % (EPHEMERAL_PORTS[1] - EPHEMERAL_PORTS[0])
            used.add(key)
            if reply is not None:
                used.add(reply)
            flows.append(FlowPlan(key, src.name, dst.name, float(starts[i]), float(lifetimes[i]), reply))
        self._flows = flows
        self._rng = rng
        return flows

    def _packet_arrays(self):
        flows = self.plan_flows()
        rng = self._rng
        profile = self.profile
        mean_gap = 1.0 / profile.per_flow_packet_rate[0]
        gap_sd = profile.per_flow_packet_rate[1] * mean_gap
        reply_delay = 0.003

        times, owners, directions = [], [], []
        for index, flow in enumerate(flows):
            draws = int(flow.lifetime / mean_gap * 1.5) + 3
            gaps = np.maximum(rng.normal(mean_gap, gap_sd, draws), 0.05 * mean_gap)
            offsets = np.concatenate(([0.0], np.cumsum(gaps)))
            offsets = offsets[offsets < flow.lifetime] if flow.lifetime > 0 else offsets[:1]
            stamps = flow.start + offsets
            times.append(stamps)
            owners.append(np.full(len(stamps), index))
            directions.append(np.zeros(len(stamps), dtype=np.int8))
            if flow.reply_key is not None:
                times.append(stamps + reply_delay)
                owners.append(np.full(len(stamps), index))
                directions.append(np.ones(len(stamps), dtype=np.int8))
        if not times:
            empty = np.empty(0)
            return empty, empty.astype(int), empty.astype(np.int8), empty.astype(int), empty

        times = np.concatenate(times)
        owners = np.concatenate(owners)
        directions = np.concatenate(directions)
        keep = (times >= 0.0) & (times < self.t_end)
        times, owners, directions = times[keep], owners[keep], directions[keep]
        order = np.lexsort((directions, owners, times))
        times, owners, directions = times[order], owners[order], directions[order]

        low, high = profile.packet_size_range
        sizes = rng.integers(low, high + 1, len(times))
        mean_entropy, sd_entropy = profile.payload_entropy
        entropy = np.clip(rng.normal(mean_entropy, sd_entropy, len(times)), 0.0, 8.0)
        return times, owners, directions, sizes, entropy

    def __iter__(self) -> Iterator[PacketEvent]:
        flows = self.plan_flows()
        times, owners, directions, sizes, entropy = self._packet_arrays()
        logger.info(f"Background: {len(flows)} flows, {len(times)} packets over {self.t_end:.0f}s")
        for t, owner, direction, size, h in zip(times.tolist(), owners.tolist(), directions.tolist(),
                                                sizes.tolist(), entropy.tolist()):
            flow = flows[owner]
            if direction:
                yield PacketEvent(t, flow.dst_host, flow.reply_key, size, Origin.LEGITIMATE, h)
            else:
                yield PacketEvent(t, flow.src_host, flow.key, size, Origin.LEGITIMATE, h)


def generate_background(profile: BackgroundProfile, topology: TopologySpec, seed: int, t_end: float) -> Iterator[PacketEvent]:
    return iter(BackgroundGenerator(profile, topology, seed, t_end))


# ============ Attack Traffic ============

@dataclass
class AttackCycle:
    start: float
    af: int
    length: float
    refreshed: int
    added: int


@dataclass
class AttackGenerator:
    """
    LOFT attack stream.

    Each cycle refreshes every previously introduced key in introduction
    order, then introduces up to ANP new keys round-robin across attackers.
    Packets are spaced 1/RPR apart. New keys are only introduced while the
    cycle's refresh load fits the RPR budget, so refresh gaps never exceed
    AF max.
    """
    plan: AttackPlan
    attackers: Sequence[HostSpec]
    victims: Sequence[HostSpec]
    seed: int
    t_start: float
    t_end: float
    packet_size_range: Tuple[int, int] = (64, 1024)
    spoofed_fraction: float = 0.5
    spoof_prefix: str = DEFAULT_SPOOF_PREFIX
    spoof_pool_size: int = 4
    payload_entropy: Tuple[float, float] = (1.0, 0.2)
    exclude_keys: Set[MatchKey] = field(default_factory=set)
    keys: List[Tuple[str, MatchKey]] = field(default_factory=list, init=False)
    cycles: List[AttackCycle] = field(default_factory=list, init=False)

    def __post_init__(self):
        if not self.attackers:
            raise ConfigurationError("Attack needs at least one attacker host")
        if not self.victims:
            raise ConfigurationError("Attack needs at least one victim host")
        if self.t_start < 0:
            raise ConfigurationError(f"Attack start must be non-negative, got {self.t_start}")
        if not 0.0 <= self.spoofed_fraction <= 1.0:
            raise ConfigurationError(f"spoofed_fraction must lie in [0, 1], got {self.spoofed_fraction}")

    def _spoof_pools(self, rng: np.random.Generator) -> Dict[str, List[str]]:
        network = ipaddress.ip_network(self.spoof_prefix)
        total = self.spoof_pool_size * len(self.attackers)
        offsets = rng.choice(network.num_addresses - 2, size=total, replace=False) + 1
        pools = {}
        for i, attacker in enumerate(self.attackers):
            chunk = offsets[i * self.spoof_pool_size:(i + 1) * self.spoof_pool_size]
            pools[attacker.name] = [_address_in(network, int(o)) for o in chunk]
        return pools

    def _new_key(self, rng, attacker: HostSpec, pools, used: Set[MatchKey], counter: int) -> MatchKey:
        targets = [v for v in self.victims if v.switch != attacker.switch] or list(self.victims)
        victim = targets[counter % len(targets)]
        lo, hi = _host_offsets(victim.network)
        dst_ip = _address_in(victim.network, int(rng.integers(lo, hi)))
        if self.spoof_pool_size > 0 and rng.random() < self.spoofed_fraction:
            src_ip = pools[attacker.name][int(rng.integers(0, len(pools[attacker.name])))]
        else:
            src_ip = attacker.address
        protocol = Protocol.UDP if rng.random() < 0.5 else Protocol.TCP
        dport = int(rng.choice(np.array(SERVICE_PORTS)))
        sport = int(rng.integers(*EPHEMERAL_PORTS))
        key = MatchKey(src_ip, dst_ip, sport, dport, protocol)
        while key in used or key in self.exclude_keys:
            sport = EPHEMERAL_PORTS[0] + (sport + 1 - EPHEMERAL_PORTS[0]) % (EPHEMERAL_PORTS[1] - EPHEMERAL_PORTS[0])
            key = key._replace(src_port=sport)
        used.add(key)
        return key

    def __iter__(self) -> Iterator[PacketEvent]:
        plan = self.plan
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 2]))
        pools = self._spoof_pools(rng)
        spacing = 1.0 / plan.rpr
        low, high = self.packet_size_range
        mean_entropy, sd_entropy = self.payload_entropy
        used: Set[MatchKey] = set()
        self.keys = []
        self.cycles = []
        counter = 0

        t = float(self.t_start)
        while t < self.t_end:
            af = int(rng.integers(plan.af_min, plan.af_max + 1))
            budget = int(plan.rpr * af)
            refreshed = len(self.keys)
            added = max(0, min(plan.anp, budget - refreshed))
            batch = list(self.keys)
            for _ in range(added):
                attacker = self.attackers[counter % len(self.attackers)]
                key = self._new_key(rng, attacker, pools, used, counter)
                batch.append((attacker.name, key))
                counter += 1
            length = max(float(af), len(batch) * spacing)
            self.cycles.append(AttackCycle(t, af, length, refreshed, added))
            logger.debug(f"Attack cycle at t={t:.1f}s: AF={af}s refresh={refreshed} new={added}")

            sizes = rng.integers(low, high + 1, len(batch))
            entropy = np.clip(rng.normal(mean_entropy, sd_entropy, len(batch)), 0.0, 8.0)
            for i, (host, key) in enumerate(batch):
                stamp = t + i * spacing
                if stamp >= self.t_end:
                    break
                yield PacketEvent(stamp, host, key, int(sizes[i]), Origin.ATTACK, float(entropy[i]))
            self.keys = batch
            t += length


def generate_attack(
    plan: AttackPlan,
    attackers: Sequence[HostSpec],
    seed: int,
    t_start: float,
    t_end: float,
    victims: Optional[Sequence[HostSpec]] = None,
    **options,
) -> AttackGenerator:
    """Attack stream; victims default to every legitimate host"""
    if victims is None:
        raise ConfigurationError("generate_attack needs the victim hosts")
    return AttackGenerator(plan, list(attackers), list(victims), seed, t_start, t_end, **options)


# ============ Trace Replay ============

class TraceSource:
    """Replays an exported event trace CSV (time_s, host, src_ip, ... rtt_ms)"""

    def __init__(self, path: Path, topology: TopologySpec):
        self.path = Path(path)
        self._attackers = {h.name for h in topology.hosts if h.role is HostRole.ATTACKER}

    def __iter__(self) -> Iterator[PacketEvent]:
        try:
            frame = pd.read_csv(self.path)
        except OSError as e:
            raise ConfigurationError(f"Cannot read trace {self.path}: {e}")
        missing = {"time_s", "host", "src_ip", "dst_ip", "sport", "dport", "proto", "bytes"} - set(frame.columns)
        if missing:
            raise ConfigurationError(f"Trace {self.path} lacks columns {sorted(missing)}")
        frame = frame.sort_values("time_s", kind="stable")
        for row in frame.itertuples(index=False):
            origin = Origin.ATTACK if row.host in self._attackers else Origin.LEGITIMATE
            key = MatchKey(row.src_ip, row.dst_ip, int(row.sport), int(row.dport), Protocol[row.proto])
            yield PacketEvent(float(row.time_s), row.host, key, int(row.bytes), origin)
