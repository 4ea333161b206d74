"""Event-driven flow-level link simulation.

Two modes:

* Unconstrained: every flow keeps its sampled duration (the link behaves
  as an infinite-server queue), and the aggregate rate is the plain sum of
  the constant per-flow rates.
* ProcessorSharing: a link of capacity C divides bandwidth equally among
  the active flows, each capped at a per-flow peak rate; a flow completes
  when its served bits reach its size, so realized durations stretch under
  contention.  This is the mechanism that produces the saturating
  utilization-vs-flows curve the capacity analyzer consumes.

Runs are deterministic given the config (including seed).  All statistics
exclude the warmup prefix.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidConfig, UndefinedMoment
from .traffic_model import FlowRecord, TrafficModel

__all__ = [
    "Mode",
    "SimulationConfig",
    "LinkSample",
    "SimulationResult",
    "generate_arrivals",
    "simulate",
    "simulate_unconstrained",
    "simulate_processor_sharing",
    "load_sweep",
]

DEFAULT_BATCH_COUNT = 30


class Mode(enum.Enum):
    UNCONSTRAINED = "Unconstrained"
    PROCESSOR_SHARING = "ProcessorSharing"


@dataclass(frozen=True)
class LinkSample:
    """One periodic observation of the link."""

    timestamp: float
    utilization: float      # percent of capacity
    active_flows: int


@dataclass(frozen=True)
class SimulationConfig:
    model: TrafficModel
    horizon: float                      # seconds
    seed: int = 0
    mode: Mode = Mode.UNCONSTRAINED
    link_capacity: float | None = None  # bits/s; required for ProcessorSharing
    per_flow_peak_rate: float | None = None
    sample_interval: float = 1.0
    warmup: float | None = None         # None -> 10 * E[D]

    def __post_init__(self):
        if self.horizon <= 0:
            raise InvalidConfig("horizon must be > 0")
        if self.sample_interval <= 0:
            raise InvalidConfig("sample_interval must be > 0")
        if self.warmup is None:
            try:
                w = 10.0 * self.model.duration_dist.mean
            except UndefinedMoment:
                w = 0.0
            object.__setattr__(self, "warmup", min(w, 0.5 * self.horizon))
        if self.warmup < 0 or self.horizon <= self.warmup:
            raise InvalidConfig("need horizon > warmup >= 0")
        if self.mode is Mode.PROCESSOR_SHARING:
            if self.link_capacity is None or self.link_capacity <= 0:
                raise InvalidConfig("ProcessorSharing mode requires link_capacity > 0")
            if self.per_flow_peak_rate is None or self.per_flow_peak_rate <= 0:
                raise InvalidConfig("ProcessorSharing mode requires per_flow_peak_rate > 0")
            if self.per_flow_peak_rate > self.link_capacity:
                raise InvalidConfig("per_flow_peak_rate must not exceed link_capacity")


@dataclass(frozen=True)
class SimulationResult:
    samples: tuple              # of LinkSample, strictly increasing timestamps
    completed_flows: tuple      # of FlowRecord with realized durations
    empirical_mean_rate: float
    empirical_rate_variance: float
    empirical_mean_active: float
    rate_variance_ci: tuple     # (low, high), batch-means 95% interval


def generate_arrivals(lambda_: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted Poisson arrival times in [0, horizon)."""
    if lambda_ < 0 or horizon <= 0:
        raise InvalidConfig("need lambda >= 0 and horizon > 0")
    if lambda_ == 0:
        return np.empty(0)
    out = []
    t = 0.0
    # draw exponential gaps in chunks to keep this vectorized
    chunk = max(64, int(lambda_ * horizon * 1.1))
    while t < horizon:
        gaps = rng.exponential(1.0 / lambda_, chunk)
        times = t + np.cumsum(gaps)
        out.append(times[times < horizon])
        t = times[-1]
        chunk = max(64, chunk // 4)
    return np.concatenate(out)


def _utilization_reference(config: SimulationConfig) -> float:
    """Denominator for the percent axis in Unconstrained mode."""
    if config.link_capacity is not None and config.link_capacity > 0:
        return config.link_capacity
    ref = 2.0 * config.model.lambda_ * config.model.size_dist.mean
    return ref if ref > 0 else 1.0


def _sample_grid(config: SimulationConfig) -> np.ndarray:
    n = int(math.floor(config.horizon / config.sample_interval))
    return np.arange(n) * config.sample_interval


def _batch_means_variance_ci(values: np.ndarray, n_batches: int = DEFAULT_BATCH_COUNT):
    """95% CI for the variance of an autocorrelated series.

    The series is cut into non-overlapping batches; the per-batch sample
    variances are treated as (nearly) independent replicates.
    """
    n = len(values)
    if n < 2 * n_batches:
        v = float(np.var(values, ddof=1)) if n > 1 else 0.0
        return (0.0, math.inf) if n > 1 else (0.0, 0.0)
    size = n // n_batches
    batches = values[: size * n_batches].reshape(n_batches, size)
    per_batch = np.var(batches, axis=1, ddof=1)
    center = float(np.mean(per_batch))
    sem = float(np.std(per_batch, ddof=1)) / math.sqrt(n_batches)
    t95 = 2.045  # t-quantile, 29 dof
    return (center - t95 * sem, center + t95 * sem)


def _finalize(config: SimulationConfig, times, rates, counts, completed) -> SimulationResult:
    ref = (
        config.link_capacity
        if config.mode is Mode.PROCESSOR_SHARING
        else _utilization_reference(config)
    )
    util = 100.0 * rates / ref
    samples = tuple(
        LinkSample(float(t), float(u), int(n)) for t, u, n in zip(times, util, counts)
    )
    keep = times >= config.warmup
    r = rates[keep]
    if len(r) == 0:
        raise InvalidConfig("no samples past warmup; lower warmup or sample_interval")
    return SimulationResult(
        samples=samples,
        completed_flows=tuple(completed),
        empirical_mean_rate=float(np.mean(r)),
        empirical_rate_variance=float(np.var(r, ddof=1)) if len(r) > 1 else 0.0,
        empirical_mean_active=float(np.mean(counts[keep])),
        rate_variance_ci=_batch_means_variance_ci(r),
    )


def _draw_flows(config: SimulationConfig, rng: np.random.Generator):
    arrivals = generate_arrivals(config.model.lambda_, config.horizon, rng)
    n = len(arrivals)
    sizes = np.atleast_1d(config.model.size_dist.sample(rng, n)) if n else np.empty(0)
    durations = (
        np.atleast_1d(config.model.duration_dist.sample(rng, n)) if n else np.empty(0)
    )
    return arrivals, sizes, durations


def simulate_unconstrained(
    config: SimulationConfig, flows: list[FlowRecord] | None = None
) -> SimulationResult:
    """Infinite-server run: durations are taken as sampled.

    ``flows`` overrides random generation (used to inject hand-built flows).
    """
    if config.mode is not Mode.UNCONSTRAINED:
        raise InvalidConfig("simulate_unconstrained requires Unconstrained mode")
    if flows is not None:
        arrivals = np.array([f.arrival_time for f in flows])
        sizes = np.array([f.size for f in flows])
        durations = np.array([f.duration for f in flows])
        order = np.argsort(arrivals, kind="stable")
        arrivals, sizes, durations = arrivals[order], sizes[order], durations[order]
    else:
        rng = np.random.default_rng(config.seed)
        arrivals, sizes, durations = _draw_flows(config, rng)

    grid = _sample_grid(config)
    if len(arrivals) == 0:
        zeros = np.zeros(len(grid))
        return _finalize(config, grid, zeros, zeros.astype(int), [])

    rates = sizes / durations
    departures = arrivals + durations
    dep_order = np.argsort(departures, kind="stable")
    dep_sorted = departures[dep_order]
    cum_arr_rate = np.concatenate(([0.0], np.cumsum(rates)))
    cum_dep_rate = np.concatenate(([0.0], np.cumsum(rates[dep_order])))

    # flow n is active at t iff T_n <= t <= T_n + D_n (both ends inclusive)
    ia = np.searchsorted(arrivals, grid, side="right")
    idp = np.searchsorted(dep_sorted, grid, side="left")
    counts = ia - idp
    agg = cum_arr_rate[ia] - cum_dep_rate[idp]

    completed = [
        FlowRecord(float(a), float(s), float(d))
        for a, s, d in zip(arrivals, sizes, durations)
        if a + d <= config.horizon
    ]
    return _finalize(config, grid, agg, counts, completed)


def simulate_processor_sharing(
    config: SimulationConfig, flows: list[FlowRecord] | None = None
) -> SimulationResult:
    """Capacity-constrained run under egalitarian processor sharing.

    Every active flow is served at min(per_flow_peak_rate, C / N).  Because
    the instantaneous rate is identical for all active flows, each flow can
    be tracked by the cumulative per-flow service level V(t) at which it
    completes: flow n finishes when V reaches V(T_n) + S_n.

    ``flows`` overrides random generation; only arrival times and sizes are
    used (durations are realized by the service discipline).
    """
    if config.mode is not Mode.PROCESSOR_SHARING:
        raise InvalidConfig("simulate_processor_sharing requires ProcessorSharing mode")
    if flows is not None:
        arrivals = np.array(sorted(f.arrival_time for f in flows))
        order = np.argsort([f.arrival_time for f in flows], kind="stable")
        sizes = np.array([flows[i].size for i in order])
    else:
        rng = np.random.default_rng(config.seed)
        arrivals, sizes, _durations = _draw_flows(config, rng)
    cap = config.link_capacity
    peak = config.per_flow_peak_rate

    grid = _sample_grid(config)
    out_rates = np.zeros(len(grid))
    out_counts = np.zeros(len(grid), dtype=int)

    completion_heap = []  # (v_level, flow_index)
    arrival_of = {}
    t = 0.0
    v = 0.0  # cumulative service received by any continuously-active flow
    ai = 0   # next arrival index
    si = 0   # next sample index
    n_arr = len(arrivals)
    completed = []

    while si < len(grid) or ai < n_arr or completion_heap:
        n_active = len(completion_heap)
        rate = min(peak, cap / n_active) if n_active else 0.0

        t_arr = arrivals[ai] if ai < n_arr else math.inf
        if completion_heap and rate > 0:
            t_done = t + (completion_heap[0][0] - v) / rate
        else:
            t_done = math.inf
        t_sample = grid[si] if si < len(grid) else math.inf

        t_next = min(t_arr, t_done, t_sample)
        if t_next == math.inf:
            break
        v += rate * (t_next - t)
        t = t_next

        if t_done <= t_arr and t_done <= t_sample and completion_heap:
            level, idx = heapq.heappop(completion_heap)
            v = max(v, level)  # absorb fp slack in the segment advance
            completed.append(
                FlowRecord(float(arrivals[idx]), float(sizes[idx]), t - arrival_of.pop(idx))
            )
        elif t_arr <= t_sample and ai < n_arr:
            heapq.heappush(completion_heap, (v + sizes[ai], ai))
            arrival_of[ai] = t
            ai += 1
        else:
            n_active = len(completion_heap)
            out_counts[si] = n_active
            out_rates[si] = min(n_active * peak, cap) if n_active else 0.0
            si += 1

    completed.sort(key=lambda f: f.arrival_time)
    return _finalize(config, grid, out_rates, out_counts, completed)


def simulate(config: SimulationConfig) -> SimulationResult:
    if config.mode is Mode.UNCONSTRAINED:
        return simulate_unconstrained(config)
    return simulate_processor_sharing(config)


def load_sweep(base_config: SimulationConfig, lambda_values) -> list[tuple]:
    """One steady-state (mean utilization, mean active flows) point per
    arrival rate, in increasing-lambda order."""
    if base_config.mode is not Mode.PROCESSOR_SHARING:
        raise InvalidConfig("load_sweep requires ProcessorSharing mode")
    points = []
    for i, lam in enumerate(sorted(lambda_values)):
        child_seed = int(np.random.SeedSequence([int(base_config.seed), i]).generate_state(1)[0])
        cfg = replace(
            base_config,
            model=replace(base_config.model, lambda_=float(lam)),
            seed=child_seed,
        )
        res = simulate_processor_sharing(cfg)
        keep = [s for s in res.samples if s.timestamp >= cfg.warmup]
        points.append(
            (
                float(np.mean([s.utilization for s in keep])),
                float(np.mean([s.active_flows for s in keep])),
            )
        )
    return points
