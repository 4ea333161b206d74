"""Unconstrained (infinite-server) link simulation vs theory.

Runs the event-driven simulator with Poisson arrivals and checks the
empirical aggregate-rate mean/variance and the mean active-flow count
against their closed forms.  Also shows that the stationary flow count
has a Poisson marginal (variance/mean near 1).
"""

import numpy as np

from flowlink.simulator import SimulationConfig, simulate_unconstrained
from flowlink.traffic_model import (
    DistributionSpec,
    TrafficModel,
    mean_active_flows,
    mean_rate,
    rate_variance,
)

model = TrafficModel(
    50,
    DistributionSpec.deterministic(20_000),  # 20 kbit flows
    DistributionSpec.deterministic(2.0),
)
config = SimulationConfig(
    model, horizon=2000.0, seed=1, sample_interval=0.5, warmup=100.0
)
result = simulate_unconstrained(config)

print(f"{len(result.completed_flows)} flows completed over {config.horizon:.0f} s")
print(f"{'':22s}{'theory':>14s}{'simulated':>14s}")
print(f"{'mean rate (bit/s)':22s}{mean_rate(model):14.0f}{result.empirical_mean_rate:14.0f}")
print(
    f"{'rate variance':22s}{rate_variance(model):14.3e}"
    f"{result.empirical_rate_variance:14.3e}"
)
lo, hi = result.rate_variance_ci
print(f"{'  batch-means 95% CI':22s}  [{lo:.3e}, {hi:.3e}]")
print(
    f"{'mean active flows':22s}{mean_active_flows(model):14.1f}"
    f"{result.empirical_mean_active:14.1f}"
)

counts = np.array(
    [s.active_flows for s in result.samples if s.timestamp >= config.warmup]
)
print(f"active-flow variance/mean: {counts.var(ddof=1) / counts.mean():.3f} (Poisson -> 1)")
