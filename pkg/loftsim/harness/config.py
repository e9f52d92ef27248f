"""
Experiment Configuration

Pydantic models for every tunable of a scenario, loaded from TOML with
environment overrides:
- Background traffic settings (capacity, aggregate packet rate) per set
- Attack settings (AF range, ANP) per set
- Desk and paper profiles (run length, attack start, ANP and duration scaling)
- Detector and classifier parameters

Precedence: CLI flags > environment > config file > defaults.

Usage:
    cfg = load_config("configs/desk.toml", overrides={"seed": 7})
    cfg.capacity, cfg.transmission_rate, cfg.af_range, cfg.anp
"""

import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from loftsim.errors import ConfigurationError
from loftsim.flora.boosting import ClassifierParams
from loftsim.flora.detector import DetectorSettings
from loftsim.flowtable import DEFAULT_MATCH_FIELDS, MATCH_FIELDS
from loftsim.netsim import TopologySpec, default_topology
from loftsim.traffic import DEFAULT_SPOOF_PREFIX, BackgroundProfile

logger = logging.getLogger("Harness")

# (capacity entries, aggregate packets/s) per background set
BACKGROUND_SETTINGS: Dict[int, Tuple[int, float]] = {
    1: (1500, 250.0),
    2: (2000, 300.0),
    3: (2500, 400.0),
    4: (3000, 600.0),
}

# ((AF min, AF max) seconds, ANP) per attack set
ATTACK_SETTINGS: Dict[int, Tuple[Tuple[int, int], int]] = {
    1: ((4, 8), 20),
    2: ((8, 12), 40),
    3: ((12, 16), 60),
    4: ((16, 19), 80),
}


class Profile(BaseModel):
    run_length_s: int
    attack_start_s: int
    anp_scale: float
    duration_threshold_s: float


PROFILES: Dict[str, Profile] = {
    "desk": Profile(run_length_s=200, attack_start_s=60, anp_scale=5.0, duration_threshold_s=20.0),
    "paper": Profile(run_length_s=1000, attack_start_s=300, anp_scale=1.0, duration_threshold_s=100.0),
}


def derive_seed(seed: int, *tags: int) -> int:
    """Independent child seed for a (seed, tags...) path"""
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


# ============ Sections ============

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologyConfig(_Section):
    idle_timeout: float = Field(20.0, gt=0)
    match_fields: List[str] = Field(default_factory=lambda: list(DEFAULT_MATCH_FIELDS))
    link_latency_ms: float = Field(1.0, ge=0)
    controller_penalty_ms: float = Field(50.0, ge=0)
    jitter_fraction: float = Field(0.05, ge=0)
    attackers: List[str] = Field(default_factory=lambda: ["h1", "h3", "h6"])
    capacity: Optional[int] = Field(None, gt=0)

    @model_validator(mode="after")
    def _check_fields(self):
        unknown = [f for f in self.match_fields if f not in MATCH_FIELDS]
        if unknown or not self.match_fields:
            raise ValueError(f"invalid match fields {self.match_fields}")
        return self

    def build(self, capacity: int) -> TopologySpec:
        return default_topology(
            capacity=capacity,
            idle_timeout=self.idle_timeout,
            match_fields=self.match_fields,
            link_latency_ms=self.link_latency_ms,
            controller_penalty_ms=self.controller_penalty_ms,
            jitter_fraction=self.jitter_fraction,
            attackers=self.attackers,
        )


class BackgroundConfig(_Section):
    transmission_rate_pps: Optional[float] = Field(None, ge=0)
    packets_per_flow: float = Field(10.0, gt=1)
    mean_flow_lifetime: float = Field(10.0, gt=0)
    long_lived_fraction: float = Field(0.001, ge=0, le=1)
    long_lived_duration: float = Field(200.0, gt=0)
    packet_size_range: Tuple[int, int] = (64, 1024)
    gap_sd: float = Field(0.2, ge=0)
    reply_fraction: float = Field(0.25, ge=0, le=1)
    warmup_s: float = Field(30.0, ge=0)
    payload_entropy_mean: float = Field(7.2, ge=0, le=8)
    payload_entropy_sd: float = Field(0.4, ge=0)
    udp_fraction: float = Field(0.2, ge=0, le=1)

    def profile(self, pps: float) -> BackgroundProfile:
        return BackgroundProfile.from_transmission_rate(
            pps,
            packets_per_flow=self.packets_per_flow,
            mean_flow_lifetime=self.mean_flow_lifetime,
            long_lived_fraction=self.long_lived_fraction,
            long_lived_duration=self.long_lived_duration,
            packet_size_range=tuple(self.packet_size_range),
            gap_sd=self.gap_sd,
            reply_fraction=self.reply_fraction,
            warmup_s=self.warmup_s,
            payload_entropy=(self.payload_entropy_mean, self.payload_entropy_sd),
            udp_fraction=self.udp_fraction,
        )


class AttackConfig(_Section):
    af_min: Optional[int] = Field(None, gt=0)
    af_max: Optional[int] = Field(None, gt=0)
    anp: Optional[int] = Field(None, ge=0)
    anp_scale: Optional[float] = Field(None, gt=0)
    packet_size_range: Tuple[int, int] = (64, 1024)
    spoofed_fraction: float = Field(0.5, ge=0, le=1)
    spoof_prefix: str = DEFAULT_SPOOF_PREFIX
    spoof_pool_size: int = Field(4, ge=0)
    payload_entropy_mean: float = Field(1.0, ge=0, le=8)
    payload_entropy_sd: float = Field(0.2, ge=0)


class DetectorConfig(_Section):
    occupancy_threshold: float = Field(0.8, gt=0, le=1)
    duration_threshold_s: Optional[float] = Field(None, ge=0)
    crs_threshold: float = Field(50.0, ge=0, le=100)
    elephant_byte_threshold: Optional[float] = Field(None, ge=0)
    elephant_percentile: float = Field(95.0, ge=0, le=100)
    block_after_evictions: int = Field(3, ge=1)


class ClassifierConfig(_Section):
    tree_count: int = Field(200, ge=0)
    max_depth: int = Field(6, ge=1, le=16)
    learning_rate: float = Field(0.1, gt=0)
    l2_leaf_reg: float = Field(3.0, ge=0)
    subsample: float = Field(0.8, gt=0, le=1)
    border_count: int = Field(254, ge=1)
    boosting_type: Literal["plain", "ordered"] = "plain"
    seed: Optional[int] = None
    selector_tree_count: int = Field(60, ge=1)
    selector_max_depth: int = Field(4, ge=1, le=16)
    folds: int = Field(5, ge=2)

    def params(self, seed: int) -> ClassifierParams:
        return ClassifierParams(
            tree_count=self.tree_count,
            max_depth=self.max_depth,
            learning_rate=self.learning_rate,
            l2_leaf_reg=self.l2_leaf_reg,
            seed=self.seed if self.seed is not None else seed,
            subsample=self.subsample,
            border_count=self.border_count,
            boosting_type=self.boosting_type,
        )

    def selector_params(self, seed: int) -> ClassifierParams:
        params = self.params(seed)
        params.tree_count = self.selector_tree_count
        params.max_depth = self.selector_max_depth
        return params


# ============ Scenario ============

class ScenarioConfig(_Section):
    profile: Literal["desk", "paper"] = "desk"
    set_index: int = Field(1, ge=1, le=4)
    attack_set_index: Optional[int] = Field(None, ge=1, le=4)
    sets: List[int] = Field(default_factory=lambda: [1, 2, 3, 4])
    run_length_s: Optional[int] = Field(None, gt=0)
    attack_start_s: Optional[int] = Field(None, ge=0)
    detector_enabled: bool = False
    attack_enabled: bool = True
    seed: int = 0
    monitored_switch: str = "s1"
    balance_classes: bool = True
    feature_interval_s: int = Field(1, ge=1)
    edge_feature_interval_s: int = Field(5, ge=1)
    dataset_switches: Optional[List[str]] = None
    record_trace: bool = False
    topology: TopologyConfig = Field(default_factory=TopologyConfig)
    background: BackgroundConfig = Field(default_factory=BackgroundConfig)
    attack: AttackConfig = Field(default_factory=AttackConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)

    @model_validator(mode="after")
    def _check(self):
        if any(s not in BACKGROUND_SETTINGS for s in self.sets) or not self.sets:
            raise ValueError(f"set indices must lie in 1..4, got {self.sets}")
        if self.run_length <= self.attack_start:
            raise ValueError(f"run length {self.run_length}s must exceed attack start {self.attack_start}s")
        af_min, af_max = self.af_range
        if af_min > af_max:
            raise ValueError(f"AF min {af_min} exceeds AF max {af_max}")
        if af_max >= self.topology.idle_timeout:
            raise ValueError(f"AF max {af_max}s must stay below the idle timeout {self.topology.idle_timeout}s")
        return self

    @property
    def profile_values(self) -> Profile:
        return PROFILES[self.profile]

    @property
    def run_length(self) -> int:
        return self.run_length_s if self.run_length_s is not None else self.profile_values.run_length_s

    @property
    def attack_start(self) -> int:
        return self.attack_start_s if self.attack_start_s is not None else self.profile_values.attack_start_s

    @property
    def attack_index(self) -> int:
        return self.attack_set_index if self.attack_set_index is not None else self.set_index

    @property
    def capacity(self) -> int:
        if self.topology.capacity is not None:
            return self.topology.capacity
        return BACKGROUND_SETTINGS[self.set_index][0]

    @property
    def transmission_rate(self) -> float:
        if self.background.transmission_rate_pps is not None:
            return self.background.transmission_rate_pps
        return BACKGROUND_SETTINGS[self.set_index][1]

    @property
    def af_range(self) -> Tuple[int, int]:
        (af_min, af_max), _ = ATTACK_SETTINGS[self.attack_index]
        return (self.attack.af_min or af_min, self.attack.af_max or af_max)

    @property
    def anp(self) -> int:
        if self.attack.anp is not None:
            return self.attack.anp
        scale = self.attack.anp_scale if self.attack.anp_scale is not None else self.profile_values.anp_scale
        return int(round(ATTACK_SETTINGS[self.attack_index][1] * scale))

    @property
    def duration_threshold(self) -> float:
        if self.detector.duration_threshold_s is not None:
            return self.detector.duration_threshold_s
        return self.profile_values.duration_threshold_s

    def detector_settings(self) -> DetectorSettings:
        return DetectorSettings(
            occupancy_threshold=self.detector.occupancy_threshold,
            duration_threshold=self.duration_threshold,
            t_idle=self.topology.idle_timeout,
            crs_threshold=self.detector.crs_threshold,
            elephant_byte_threshold=self.detector.elephant_byte_threshold,
            elephant_percentile=self.detector.elephant_percentile,
            block_after_evictions=self.detector.block_after_evictions,
        )

    def for_set(self, set_index: int, **changes) -> "ScenarioConfig":
        """Copy targeting one background/attack set pair"""
        data = self.model_dump()
        data.update(set_index=set_index, attack_set_index=set_index)
        data.update(changes)
        try:
            return ScenarioConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration for set {set_index}: {e}")


# ============ Loading ============

def _load_env():
    """.env from the working directory, never overriding variables already set"""
    load_dotenv(find_dotenv(usecwd=True))


def _truthy(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def env_overrides() -> Dict[str, Any]:
    """Scenario keys set through the environment (.env honoured)"""
    _load_env()
    overrides: Dict[str, Any] = {}
    seed = os.getenv("LOFTSIM_SEED")
    if seed:
        try:
            overrides["seed"] = int(seed)
        except ValueError:
            raise ConfigurationError(f"LOFTSIM_SEED must be an integer, got {seed!r}")
    paper = os.getenv("LOFTSIM_PAPER_SCALE")
    if paper and _truthy(paper):
        overrides["profile"] = "paper"
    return overrides


def env_out_dir(default: str = "out") -> str:
    _load_env()
    return os.getenv("LOFTSIM_OUT_DIR", default)


def env_log_level(default: str = "INFO") -> str:
    _load_env()
    return os.getenv("LOFTSIM_LOG_LEVEL", default).upper()


def read_config_file(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Invalid TOML in {path}: {e}")
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}")


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    use_env: bool = True,
) -> ScenarioConfig:
    """Defaults, then the TOML file, then environment, then explicit overrides"""
    data: Dict[str, Any] = read_config_file(Path(path)) if path is not None else {}
    if use_env:
        data.update(env_overrides())
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}")
    logger.debug(f"Loaded config profile={cfg.profile} seed={cfg.seed} sets={cfg.sets}")
    return cfg
