"""
FloRa detection loop run on every table snapshot:
analyzer gate -> predictor scores -> admission filter -> classifier -> mitigation.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np

from loftsim.flora.analyzer import DEFAULT_DURATION_THRESHOLD, DEFAULT_OCCUPANCY_THRESHOLD, analyze_table
from loftsim.flora.boosting import TrainedModel
from loftsim.flora.features import extract_feature_frame
from loftsim.flora.mitigation import (
    DEFAULT_BLOCK_AFTER_EVICTIONS,
    DEFAULT_ELEPHANT_PERCENTILE,
    Blacklist,
    ControllerActions,
    DetectionReport,
    Verdict,
    elephant_threshold,
    mitigate,
)
from loftsim.flora.predictor import admit
from loftsim.netsim import Snapshot

logger = logging.getLogger("FloRa")


@dataclass
class DetectorSettings:
    occupancy_threshold: float = DEFAULT_OCCUPANCY_THRESHOLD
    duration_threshold: float = DEFAULT_DURATION_THRESHOLD
    t_idle: float = 20.0
    crs_threshold: float = 50.0
    elephant_byte_threshold: Optional[float] = None
    elephant_percentile: float = DEFAULT_ELEPHANT_PERCENTILE
    block_after_evictions: int = DEFAULT_BLOCK_AFTER_EVICTIONS


@dataclass
class FloraDetector:
    model: TrainedModel
    prefix_map: Mapping[int, Sequence[str]]
    settings: DetectorSettings = field(default_factory=DetectorSettings)
    reports: List[DetectionReport] = field(default_factory=list)
    first_detection_time: Optional[float] = None

    def __post_init__(self):
        self.blacklist = Blacklist(self.settings.block_after_evictions)

    def process(
        self,
        snapshot: Snapshot,
        arrivals: Mapping[int, Sequence[float]],
        controller: ControllerActions,
    ) -> Optional[DetectionReport]:
        """None while the analyzer is inactive or nothing is suspicious"""
        settings = self.settings
        analysis = analyze_table(snapshot, settings.occupancy_threshold, settings.duration_threshold)
        if not analysis.active or not analysis.suspicious:
            return None

        frame = extract_feature_frame(snapshot.rows, arrivals, self.prefix_map)
        suspicious_ids = {row.flow_id for row in analysis.suspicious}
        frame = frame[frame["flow_id"].isin(suspicious_ids)]
        gate = admit(frame["paf_s"], frame["crs_pct"], frame["psi"], settings.t_idle, settings.crs_threshold)
        admitted = frame[gate]
        if admitted.empty:
            return None

        probabilities = self.model.predict_proba(admitted[self.model.feature_names].to_numpy(dtype=float))
        keys = {row.flow_id: row.key for row in analysis.suspicious}
        verdicts = [
            Verdict(int(flow_id), keys[int(flow_id)], float(p), int(p >= 0.5))
            for flow_id, p in zip(admitted["flow_id"].tolist(), probabilities.tolist())
        ]
        threshold = settings.elephant_byte_threshold
        if threshold is None:
            threshold = elephant_threshold([row.byte_count for row in snapshot.rows], settings.elephant_percentile)
        psi = dict(zip(admitted["flow_id"].astype(int).tolist(), admitted["psi"].astype(bool).tolist()))

        report = mitigate(verdicts, snapshot.rows, psi, self.blacklist, controller, snapshot.time_s, threshold)
        if report.evicted and self.first_detection_time is None:
            self.first_detection_time = float(snapshot.time_s)
            logger.info(f"First detection at t={snapshot.time_s}s: {len(report.evicted)} attack rules evicted")
        logger.debug(f"Detector t={snapshot.time_s}s: admitted {len(admitted)}, "
                     f"attack verdicts {int(np.sum([v.label for v in verdicts]))}")
        self.reports.append(report)
        return report
