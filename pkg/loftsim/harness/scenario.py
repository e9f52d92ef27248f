"""
Scenario Execution

Builds the topology, wires background and attack generators, runs the
simulator and aggregates what the switches saw:
- per-second rule counts of the monitored switch split by origin
- overflow count, first overflow time, mean utilization, eviction log
- latest labelled feature row of every flow at every dataset switch
- detector reports when the defense is on

Usage:
    cfg = load_config(overrides={"detector_enabled": True})
    result = run_scenario(cfg)
    print(result.summary())
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from loftsim.errors import ConfigurationError
from loftsim.flora.boosting import TrainedModel, train_classifier
from loftsim.flora.detector import DetectorSettings, FloraDetector
from loftsim.flora.features import DATASET_COLUMNS, FEATURE_COLUMNS, extract_feature_frame
from loftsim.flora.mitigation import DetectionReport, SimulatorController
from loftsim.flora.predictor import admit
from loftsim.flowtable import EvictionRecord, Origin
from loftsim.harness.config import ScenarioConfig, derive_seed
from loftsim.netsim import FlowObservation, Simulator, Snapshot, TraceRecord, build_topology
from loftsim.traffic import AttackGenerator, AttackPlan, BackgroundGenerator, plan_attack

logger = logging.getLogger("Harness")

OCCUPANCY_COLUMNS = ["time_s", "normal_rules", "attack_rules", "capacity"]
COMPACT_EVERY_S = 50
BOOTSTRAP_ROWS_PER_CLASS = 10_000
FEATURE_LOG_COLUMNS = ["switch"] + DATASET_COLUMNS


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    occupancy: pd.DataFrame
    total_overflows: int
    first_overflow_s: Optional[float]
    features: pd.DataFrame
    plan: Optional[AttackPlan] = None
    first_detection_s: Optional[float] = None
    reports: List[DetectionReport] = field(default_factory=list)
    blocked_sources: List[str] = field(default_factory=list)
    evictions: Dict[str, int] = field(default_factory=dict)
    dropped_packets: int = 0
    trace: List[TraceRecord] = field(default_factory=list)
    gated_features: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=DATASET_COLUMNS))
    eviction_log: List[EvictionRecord] = field(default_factory=list)

    @property
    def mean_utilization(self) -> float:
        """Mean occupied share of the monitored table, percent"""
        if self.occupancy.empty:
            return 0.0
        used = self.occupancy["normal_rules"] + self.occupancy["attack_rules"]
        return float(100.0 * (used / self.occupancy["capacity"]).mean())

    @property
    def class_counts(self) -> Dict[str, int]:
        if self.features.empty:
            return {"legitimate": 0, "attack": 0}
        attack = int(self.features["label"].sum())
        return {"legitimate": len(self.features) - attack, "attack": attack}

    def summary(self) -> dict:
        return {
            "set_index": self.config.set_index,
            "attack_set_index": self.config.attack_index,
            "run_length_s": self.config.run_length,
            "capacity": self.config.capacity,
            "detector_enabled": self.config.detector_enabled,
            "total_overflows": self.total_overflows,
            "first_overflow_s": self.first_overflow_s,
            "first_detection_s": self.first_detection_s,
            "mean_utilization_pct": round(self.mean_utilization, 4),
            "max_attack_rules": int(self.occupancy["attack_rules"].max()) if not self.occupancy.empty else 0,
            "blocked_sources": self.blocked_sources,
            "dropped_packets": self.dropped_packets,
            "evictions": self.evictions,
            "class_counts": self.class_counts,
        }


class _FeatureLog:
    """Latest labelled feature row per (switch, flow id), compacted periodically"""

    def __init__(self):
        self._frames: List[pd.DataFrame] = []

    def add(self, switch: str, frame: pd.DataFrame):
        if not frame.empty:
            self._frames.append(frame.assign(switch=switch)[FEATURE_LOG_COLUMNS])

    def compact(self) -> pd.DataFrame:
        if not self._frames:
            return pd.DataFrame(columns=FEATURE_LOG_COLUMNS)
        merged = pd.concat(self._frames, ignore_index=True)
        merged = merged.drop_duplicates(["switch", "flow_id"], keep="last")
        merged = merged.sort_values(["switch", "flow_id"], kind="stable").reset_index(drop=True)
        self._frames = [merged]
        return merged


def past_gate(frame: pd.DataFrame, settings: DetectorSettings) -> pd.DataFrame:
    """Rows the detector would classify: resident past the duration threshold and admitted"""
    if frame.empty:
        return frame
    long_lived = frame["duration_s"].to_numpy(dtype=float) > settings.duration_threshold
    admitted = admit(frame["paf_s"], frame["crs_pct"], frame["psi"], settings.t_idle, settings.crs_threshold)
    return frame[long_lived & admitted]


def _per_class_sample(frame: pd.DataFrame, cap: int, seed: int) -> pd.DataFrame:
    n = min(int(frame["label"].value_counts().min()), cap)
    parts = [group.sample(n=n, random_state=seed) for _, group in frame.groupby("label")]
    return pd.concat(parts).sort_index()


def bootstrap_model(cfg: ScenarioConfig) -> TrainedModel:
    """
    Model trained on a defense-off run of the same scenario with a derived seed.

    Training rows are the per-second monitored-switch rows that would have
    reached the classifier: occupancy above the analyzer threshold, residency
    past the duration threshold and admitted by the gate.
    """
    training_cfg = cfg.for_set(cfg.set_index, attack_set_index=cfg.attack_index, detector_enabled=False,
                               attack_enabled=True, seed=derive_seed(cfg.seed, 99))
    logger.info(f"Training bootstrap model on set {cfg.set_index} without defense")
    result = run_scenario(training_cfg, collect_gated=True)
    frame = result.gated_features
    if frame.empty or frame["label"].nunique() < 2:
        logger.warning(f"Bootstrap run left {len(frame)} gated rows; adding every observed flow")
        frame = pd.concat([frame, result.features[DATASET_COLUMNS]], ignore_index=True)
    if frame.empty or frame["label"].nunique() < 2:
        raise ConfigurationError("Bootstrap run produced no labelled rows of both classes")
    frame = _per_class_sample(frame, BOOTSTRAP_ROWS_PER_CLASS, derive_seed(cfg.seed, 97))
    logger.info(f"Bootstrap training rows: {len(frame)} ({int(frame['label'].sum())} attack)")
    return train_classifier(
        frame[FEATURE_COLUMNS].to_numpy(dtype=float),
        frame["label"].to_numpy(dtype=int),
        cfg.classifier.params(derive_seed(cfg.seed, 98)),
        feature_names=FEATURE_COLUMNS,
    )


def _arrivals(sim: Simulator, rows: List[FlowObservation]) -> Dict[int, List[float]]:
    return {row.flow_id: sim.flow(row.flow_id).arrivals for row in rows}


def _dataset_switches(cfg: ScenarioConfig, names: List[str]) -> List[str]:
    if cfg.dataset_switches is None:
        return list(names)
    unknown = sorted(set(cfg.dataset_switches) - set(names))
    if unknown:
        raise ConfigurationError(f"Dataset switches {unknown} are not in the topology")
    return [name for name in names if name in cfg.dataset_switches]


def run_scenario(
    cfg: ScenarioConfig,
    model: Optional[TrainedModel] = None,
    collect_features: bool = True,
    collect_gated: bool = False,
) -> ExperimentResult:
    """
    Run one set end to end; deterministic per cfg.seed.

    Features are taken every feature_interval_s at the monitored switch and
    every edge_feature_interval_s at the other dataset switches.
    """
    capacity = cfg.capacity
    spec = cfg.topology.build(capacity)
    switch_names = [s.name for s in spec.switches]
    if cfg.monitored_switch not in switch_names:
        raise ConfigurationError(f"Monitored switch {cfg.monitored_switch} is not in the topology")
    dataset_switches = _dataset_switches(cfg, switch_names)
    if cfg.detector_enabled and model is None:
        model = bootstrap_model(cfg)

    sim = build_topology(spec, derive_seed(cfg.seed, cfg.set_index, 0))
    monitored = cfg.monitored_switch
    prefix_maps = {name: sim.prefix_map(name) for name in switch_names}
    prefix_map = prefix_maps[monitored]
    profile = cfg.background.profile(cfg.transmission_rate)
    background = BackgroundGenerator(profile, spec, derive_seed(cfg.seed, cfg.set_index, 1), cfg.run_length)
    sources = [background]

    plan = None
    if cfg.attack_enabled:
        ports = max(len(prefix_map), 1)
        plan = plan_attack(capacity, profile, cfg.af_range, cfg.anp, cfg.topology.idle_timeout, ports=ports)
        legit_keys = set()
        for flow in background.plan_flows():
            legit_keys.add(flow.key)
            if flow.reply_key is not None:
                legit_keys.add(flow.reply_key)
        sources.append(AttackGenerator(
            plan, spec.attackers, spec.legitimate_hosts, derive_seed(cfg.seed, cfg.set_index, 2),
            float(cfg.attack_start), float(cfg.run_length),
            packet_size_range=tuple(cfg.attack.packet_size_range),
            spoofed_fraction=cfg.attack.spoofed_fraction,
            spoof_prefix=cfg.attack.spoof_prefix,
            spoof_pool_size=cfg.attack.spoof_pool_size,
            payload_entropy=(cfg.attack.payload_entropy_mean, cfg.attack.payload_entropy_sd),
            exclude_keys=legit_keys,
        ))

    settings = cfg.detector_settings()
    detector = None
    controller = SimulatorController(sim, monitored)
    if cfg.detector_enabled:
        detector = FloraDetector(model, prefix_map, settings)

    counts: List[tuple] = []
    features = _FeatureLog()
    gated: List[pd.DataFrame] = []
    edge_switches = [name for name in dataset_switches if name != monitored]

    def on_second(sim: Simulator, second: int):
        rows = sim.observe(monitored, second)
        snapshot = Snapshot(second, monitored, capacity, rows)
        attack = sum(1 for row in rows if row.origin is Origin.ATTACK)
        counts.append((second, len(rows) - attack, attack, capacity))
        sample = (collect_features or collect_gated) and second % cfg.feature_interval_s == 0
        arrivals = _arrivals(sim, rows) if (detector is not None or sample) and rows else {}
        if sample and rows:
            frame = extract_feature_frame(rows, arrivals, prefix_map, with_labels=True)
            if collect_features and monitored in dataset_switches:
                features.add(monitored, frame)
            if collect_gated and snapshot.occupancy >= settings.occupancy_threshold:
                kept = past_gate(frame, settings)
                if not kept.empty:
                    gated.append(kept)
        if collect_features and second % cfg.edge_feature_interval_s == 0:
            for name in edge_switches:
                edge_rows = sim.observe(name, second)
                if edge_rows:
                    features.add(name, extract_feature_frame(
                        edge_rows, _arrivals(sim, edge_rows), prefix_maps[name], with_labels=True))
        if collect_features and second % COMPACT_EVERY_S == 0:
            features.compact()
        if detector is not None:
            detector.process(snapshot, arrivals, controller)

    logger.info(f"Scenario set {cfg.set_index}/{cfg.attack_index}: capacity {capacity}, "
                f"{cfg.transmission_rate:.0f}pps, {cfg.run_length}s, attack "
                f"{'from ' + str(cfg.attack_start) + 's' if cfg.attack_enabled else 'off'}, "
                f"detector {'on' if detector else 'off'}")
    run = sim.run_until(float(cfg.run_length), sources, record_trace=cfg.record_trace,
                        snapshot_switches=[], on_second=on_second)

    table = sim.switches[monitored].table
    occupancy = pd.DataFrame(counts, columns=OCCUPANCY_COLUMNS)
    result = ExperimentResult(
        config=cfg,
        occupancy=occupancy,
        total_overflows=table.total_overflows,
        first_overflow_s=sim.first_overflow.get(monitored),
        features=features.compact() if collect_features else pd.DataFrame(columns=FEATURE_LOG_COLUMNS),
        plan=plan,
        first_detection_s=detector.first_detection_time if detector else None,
        reports=detector.reports if detector else [],
        blocked_sources=sorted(sim.blocked_sources),
        evictions={cause.value: n for cause, n in table.evictions_by_cause().items()},
        dropped_packets=sim.dropped_packets,
        trace=run.trace,
        gated_features=pd.concat(gated, ignore_index=True) if gated else pd.DataFrame(columns=DATASET_COLUMNS),
        eviction_log=list(table.eviction_log),
    )
    logger.info(f"Scenario done: overflows={result.total_overflows}, first overflow={result.first_overflow_s}, "
                f"utilization={result.mean_utilization:.1f}%, rows={result.class_counts}")
    return result


def saturated_from(occupancy: pd.DataFrame, start_s: float, fraction: float = 0.98) -> bool:
    """True when the table holds at least fraction * capacity at every second from start_s on"""
    tail = occupancy[occupancy["time_s"] >= start_s]
    used = tail["normal_rules"] + tail["attack_rules"]
    return bool(len(tail) and np.all(used >= fraction * tail["capacity"]))
