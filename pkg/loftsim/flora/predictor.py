"""
Anomaly Predictor Scores

- PAF: mean inter-arrival gap of the packets a rule matched since install
- Shannon entropy and information gain
- CRS: cumulative information gain of six packet attributes separating one
  flow from the snapshot population, as a percentage of the achievable maximum
- PSI: ingress prefix filtering verdict for a source address
"""

import ipaddress
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Hashable, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from loftsim.errors import ConfigurationError, DomainError

logger = logging.getLogger("FloRa")

CRS_ATTRIBUTES: Tuple[str, ...] = (
    "src_ip", "dst_ip", "packet_size", "payload_size", "payload_entropy", "duration",
)
CRS_BINS = 10


# ============ Packet Arrival Frequency ============

def compute_paf(arrival_times: Sequence[float], rule_duration: float) -> float:
    """Mean consecutive inter-arrival gap; rule_duration for fewer than 2 arrivals"""
    n = len(arrival_times)
    if n < 2:
        return float(rule_duration)
    # consecutive gaps telescope
    return (float(arrival_times[-1]) - float(arrival_times[0])) / (n - 1)


# ============ Entropy and Information Gain ============

def shannon_entropy(distribution: Sequence[float]) -> float:
    p = np.asarray(distribution, dtype=float)
    if p.size == 0 or np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise DomainError(f"Not a probability distribution: {list(distribution)[:8]}")
    nz = p[p > 0]
    return float(max(-np.sum(nz * np.log2(nz)), 0.0))


def _label_entropy(labels: Sequence[Hashable]) -> float:
    counts = np.asarray(pd.Series(labels).value_counts(sort=False), dtype=float)
    return shannon_entropy(counts / counts.sum())


def information_gain(labels: Sequence[Hashable], attribute: Sequence[Hashable]) -> float:
    """H(D) minus the size-weighted entropy of the partitions induced by the attribute"""
    if len(labels) == 0 or len(labels) != len(attribute):
        raise DomainError(f"information_gain needs equal non-empty inputs, got {len(labels)} and {len(attribute)}")
    frame = pd.DataFrame({"label": list(labels), "attr": list(attribute)})
    total = _label_entropy(frame["label"])
    n = len(frame)
    conditional = sum(len(part) / n * _label_entropy(part["label"]) for _, part in frame.groupby("attr", sort=True))
    return float(min(max(total - conditional, 0.0), total))


# ============ Content Relevance Score ============

@dataclass(frozen=True)
class CrsScore:
    percent: float
    degenerate: bool = False


def _discretize(values: pd.Series, bins: int) -> pd.Series:
    """Equal-width bins for numeric columns with more distinct values than bins"""
    if not pd.api.types.is_numeric_dtype(values) or values.nunique() <= bins:
        return values
    return pd.cut(values, bins=bins, labels=False, include_lowest=True)


def compute_crs(
    population: pd.DataFrame,
    member: Sequence[bool],
    attributes: Sequence[str] = CRS_ATTRIBUTES,
    bins: int = CRS_BINS,
) -> CrsScore:
    """
    CRS of one flow against a population of records.

    The label of a record is whether it belongs to the flow; the score is the
    summed information gain of the attributes divided by its ceiling, the
    label entropy counted once per attribute.
    """
    labels = np.asarray(member, dtype=bool)
    if len(population) < 2 or len(labels) != len(population):
        logger.warning("CRS undefined for a population smaller than 2")
        return CrsScore(0.0, degenerate=True)
    ceiling = _label_entropy(labels)
    if ceiling <= 0:
        return CrsScore(0.0, degenerate=True)
    gained = sum(information_gain(labels, _discretize(population[name], bins)) for name in attributes)
    return CrsScore(float(np.clip(100.0 * gained / (ceiling * len(attributes)), 0.0, 100.0)))


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h, nan=0.0)


def crs_per_row(
    frame: pd.DataFrame,
    attributes: Sequence[str] = CRS_ATTRIBUTES,
    bins: int = CRS_BINS,
) -> np.ndarray:
    """
    compute_crs for every row of a one-row-per-flow population at once.

    With a single member row among N, a bin of size c leaves conditional
    entropy (c/N) * H2(1/c) and every other bin is pure.
    """
    n = len(frame)
    if n < 2:
        return np.zeros(n)
    ceiling = float(_binary_entropy(np.array([1.0 / n]))[0])
    gained = np.zeros(n)
    for name in attributes:
        column = _discretize(frame[name], bins)
        sizes = column.groupby(column, sort=False).transform("size").to_numpy(dtype=float)
        gained += ceiling - sizes / n * _binary_entropy(1.0 / sizes)
    return np.clip(100.0 * gained / (ceiling * len(attributes)), 0.0, 100.0)


# ============ Possible Spoofed IP ============

@lru_cache(maxsize=4096)
def _parse_networks(prefixes: Tuple[str, ...]) -> Tuple[ipaddress.IPv4Network, ...]:
    return tuple(ipaddress.ip_network(p) for p in prefixes)


def check_spoofed(src_ip: str, in_port: int, prefix_map: Mapping[int, Sequence[str]]) -> bool:
    """True when src_ip lies outside every prefix allocated to in_port"""
    if in_port not in prefix_map:
        raise ConfigurationError(f"No prefixes allocated to ingress port {in_port}")
    address = ipaddress.ip_address(src_ip)
    return not any(address in network for network in _parse_networks(tuple(prefix_map[in_port])))


def spoofed_mask(src_ips: Sequence[str], in_ports: Sequence[int], prefix_map: Mapping[int, Sequence[str]]) -> np.ndarray:
    cache: Dict[Tuple[str, int], bool] = {}
    out = np.empty(len(src_ips), dtype=bool)
    for i, pair in enumerate(zip(src_ips, in_ports)):
        verdict = cache.get(pair)
        if verdict is None:
            verdict = cache[pair] = check_spoofed(pair[0], int(pair[1]), prefix_map)
        out[i] = verdict
    return out


# ============ Admission Gate ============

def admit(paf, crs, psi, t_idle: float, crs_threshold: float = 50.0):
    """
    Flows passed to the classifier: short PAF, low CRS or a spoofed source.

    Scalars give a bool; array-likes give a boolean mask of the same length.
    """
    mask = (np.asarray(paf, dtype=float) < t_idle) | (np.asarray(crs, dtype=float) < crs_threshold)
    mask = mask | np.asarray(psi, dtype=bool)
    return bool(mask) if mask.ndim == 0 else mask
