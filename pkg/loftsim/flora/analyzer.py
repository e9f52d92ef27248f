"""Flow analyzer: occupancy gate and long-residency screening of a table snapshot"""

import logging
from dataclasses import dataclass, field
from typing import List

from loftsim.netsim import FlowObservation, Snapshot

logger = logging.getLogger("FloRa")

DEFAULT_OCCUPANCY_THRESHOLD = 0.8
DEFAULT_DURATION_THRESHOLD = 100.0


@dataclass
class TableAnalysis:
    active: bool
    occupancy: float
    suspicious: List[FlowObservation] = field(default_factory=list)


def analyze_table(
    snapshot: Snapshot,
    occupancy_threshold: float = DEFAULT_OCCUPANCY_THRESHOLD,
    duration_threshold: float = DEFAULT_DURATION_THRESHOLD,
) -> TableAnalysis:
    """Inactive below the occupancy threshold; otherwise flows resident longer than duration_threshold"""
    occupancy = snapshot.occupancy
    if occupancy < occupancy_threshold:
        return TableAnalysis(False, occupancy)
    suspicious = [row for row in snapshot.rows if row.duration > duration_threshold]
    logger.debug(f"Analyzer active at t={snapshot.time_s}s: occupancy {occupancy:.0%}, {len(suspicious)} suspicious")
    return TableAnalysis(True, occupancy, suspicious)
