"""Working-area / saturation analysis of (active flows, utilization) samples.

The procedure: take the samples collected below a utilization threshold
(default 40%), fit the ideal "working" line through the origin as the mean
of the U/N ratios, fit a least-squares "saturation" line to the heavily
loaded samples, intersect the two lines to locate the overload knee, and
label every sample as Working / Moderate / Overloaded.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateData,
    InsufficientSaturationData,
    InsufficientWorkingData,
    NegativeIntersection,
    NoSaturationObserved,
    ParallelLines,
)
from .simulator import LinkSample

__all__ = [
    "AnalyzerConfig",
    "LineFit",
    "State",
    "WorkingAreaReport",
    "fit_working_line",
    "fit_saturation_line",
    "find_knee",
    "classify",
    "analyze",
    "report_to_dict",
    "write_report_json",
    "write_plot_data",
]

WORKING_AREA_NOT_EXCEEDED = "working area not exceeded"


def _canonical(samples):
    # fits reduce in a fixed order so results don't depend on input ordering
    return sorted(samples, key=lambda s: (s.active_flows, s.utilization, s.timestamp))


@dataclass(frozen=True)
class AnalyzerConfig:
    working_util_threshold: float = 40.0   # percent
    saturation_quantile: float = 0.8       # N_a percentile gating the top fit
    working_ratio_floor: float = 0.9
    moderate_ratio_floor: float = 0.6
    min_working_samples: int = 5
    min_saturation_samples: int = 3
    least_squares_working_line: bool = False  # opt-in alternative estimator

    def __post_init__(self):
        if not (0.0 < self.moderate_ratio_floor < self.working_ratio_floor <= 1.0):
            raise ValueError("need 0 < moderate_ratio_floor < working_ratio_floor <= 1")
        if not (0.0 < self.saturation_quantile < 1.0):
            raise ValueError("saturation_quantile must lie in (0, 1)")
        if self.working_util_threshold <= 0:
            raise ValueError("working_util_threshold must be > 0")


@dataclass(frozen=True)
class LineFit:
    intercept: float    # percent
    slope: float        # percent per flow
    sample_count: int
    rms_residual: float

    def value_at(self, n_flows: float) -> float:
        return self.intercept + self.slope * n_flows


class State(enum.Enum):
    WORKING = "Working"
    MODERATE = "Moderate"
    OVERLOADED = "Overloaded"


@dataclass(frozen=True)
class WorkingAreaReport:
    working_line: LineFit
    saturation_line: LineFit | None
    knee_flows: float | None
    knee_utilization: float | None
    state_labels: tuple             # of State, aligned with the input samples
    state_counts: dict              # State -> int
    flags: tuple = ()


def fit_working_line(samples, config: AnalyzerConfig = AnalyzerConfig()) -> LineFit:
    """Ideal-behaviour line through the origin.

    The slope is the arithmetic mean of the U/N ratios over samples whose
    utilization stays at or below the working threshold.  (A least-squares
    variant is available behind ``least_squares_working_line``.)
    """
    qual = [
        s
        for s in _canonical(samples)
        if s.utilization <= config.working_util_threshold and s.active_flows > 0
    ]
    if not qual:
        low = [s for s in samples if s.utilization <= config.working_util_threshold]
        if low:
            raise DegenerateData("all qualifying samples have active_flows = 0")
    if len(qual) < config.min_working_samples:
        raise InsufficientWorkingData(
            f"{len(qual)} qualifying samples, need {config.min_working_samples}"
        )
    n = np.array([s.active_flows for s in qual], dtype=float)
    u = np.array([s.utilization for s in qual], dtype=float)
    if config.least_squares_working_line:
        slope = float(np.dot(n, u) / np.dot(n, n))
    else:
        slope = float(np.mean(u / n))
    resid = u - slope * n
    return LineFit(
        intercept=0.0,
        slope=slope,
        sample_count=len(qual),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
    )


def fit_saturation_line(
    samples, working: LineFit, config: AnalyzerConfig = AnalyzerConfig()
) -> LineFit:
    """Least-squares top line over the heavily loaded samples.

    A sample qualifies when its flow count exceeds the configured N_a
    percentile and its utilization has visibly dropped below the working
    line (ratio under working_ratio_floor).
    """
    pos = [s for s in samples if s.active_flows > 0]
    if not pos:
        raise NoSaturationObserved("no samples with active flows")
    n_cut = float(
        np.quantile([s.active_flows for s in pos], config.saturation_quantile)
    )
    qual = [
        s
        for s in _canonical(pos)
        if s.active_flows > n_cut
        and s.utilization / (working.slope * s.active_flows) < config.working_ratio_floor
    ]
    if not qual:
        raise NoSaturationObserved(
            "no heavily loaded sample departs from the working line"
        )
    if len(qual) < config.min_saturation_samples:
        raise InsufficientSaturationData(
            f"{len(qual)} qualifying samples, need {config.min_saturation_samples}"
        )
    n = np.array([s.active_flows for s in qual], dtype=float)
    u = np.array([s.utilization for s in qual], dtype=float)
    if np.ptp(n) == 0:
        slope, intercept = 0.0, float(np.mean(u))  # vertical stack of N values
    else:
        slope, intercept = np.polyfit(n, u, 1)
    if slope >= working.slope:
        raise NoSaturationObserved(
            "top-line slope not below the working slope; no saturation bend"
        )
    resid = u - (intercept + slope * n)
    return LineFit(
        intercept=float(intercept),
        slope=float(slope),
        sample_count=len(qual),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
    )


def find_knee(working: LineFit, saturation: LineFit) -> tuple:
    """Intersection of the two lines: (knee_flows, knee_utilization)."""
    denom = working.slope - saturation.slope
    scale = max(abs(working.slope), abs(saturation.slope), 1e-300)
    if abs(denom) <= 1e-12 * scale:
        raise ParallelLines("working and saturation slopes are equal")
    n_star = (saturation.intercept - working.intercept) / denom
    if n_star <= 0:
        raise NegativeIntersection(f"lines cross at N = {n_star:.3g} <= 0")
    return n_star, working.slope * n_star


def _ratio(sample: LinkSample, working: LineFit) -> float:
    if sample.active_flows == 0:
        return 1.0
    return sample.utilization / (working.slope * sample.active_flows)


def classify(
    sample: LinkSample,
    working: LineFit,
    knee_flows: float | None,
    config: AnalyzerConfig = AnalyzerConfig(),
) -> State:
    """Label one sample by its departure from the ideal line.

    With no knee (saturation never observed) the label falls back to the
    ratio test alone.
    """
    rho = _ratio(sample, working)
    past_knee = knee_flows is not None and sample.active_flows > knee_flows
    if past_knee or rho < config.moderate_ratio_floor:
        return State.OVERLOADED
    if rho >= config.working_ratio_floor:
        return State.WORKING
    return State.MODERATE


def analyze(samples, config: AnalyzerConfig = AnalyzerConfig()) -> WorkingAreaReport:
    """Full procedure: both fits, the knee, and per-sample labels."""
    samples = list(samples)
    if not samples:
        raise InsufficientWorkingData("empty sample list")
    working = fit_working_line(samples, config)
    flags = []
    try:
        saturation = fit_saturation_line(samples, working, config)
        knee_flows, knee_util = find_knee(working, saturation)
    except NoSaturationObserved:
        saturation, knee_flows, knee_util = None, None, None
        flags.append(WORKING_AREA_NOT_EXCEEDED)
    labels = tuple(classify(s, working, knee_flows, config) for s in samples)
    counts = {state: 0 for state in State}
    for lab in labels:
        counts[lab] += 1
    return WorkingAreaReport(
        working_line=working,
        saturation_line=saturation,
        knee_flows=knee_flows,
        knee_utilization=knee_util,
        state_labels=labels,
        state_counts=counts,
        flags=tuple(flags),
    )


# --- serialization -----------------------------------------------------


def report_to_dict(report: WorkingAreaReport) -> dict:
    sat = report.saturation_line
    return {
        "working_slope": report.working_line.slope,
        "saturation_intercept": sat.intercept if sat else None,
        "saturation_slope": sat.slope if sat else None,
        "knee_flows": report.knee_flows,
        "knee_utilization_percent": report.knee_utilization,
        "state_counts": {state.value: report.state_counts[state] for state in State},
        "flags": list(report.flags),
    }


def write_report_json(report: WorkingAreaReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_data(samples, report: WorkingAreaReport, labeled_path, lines_path) -> None:
    """Two-file export for external plotting: labeled samples plus the
    fitted lines evaluated on the observed N range."""
    with open(labeled_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "utilization_percent", "active_flows", "state"])
        for s, lab in zip(samples, report.state_labels):
            w.writerow([int(round(s.timestamp)), f"{s.utilization:.6f}", s.active_flows, lab.value])
    n_max = max((s.active_flows for s in samples), default=0)
    grid = np.linspace(0, max(n_max, 1), 101)
    with open(lines_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "U_working", "U_saturation"])
        for n in grid:
            u_work = report.working_line.value_at(n)
            u_sat = report.saturation_line.value_at(n) if report.saturation_line else ""
            w.writerow(
                [f"{n:.6f}", f"{u_work:.6f}", f"{u_sat:.6f}" if u_sat != "" else ""]
            )
