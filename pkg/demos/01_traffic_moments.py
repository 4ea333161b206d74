"""Closed-form traffic moments vs Monte Carlo.

Builds a few traffic models and checks the three closed forms
(mean rate, rate variance, mean active flows) against brute-force
sampling of the size/duration distributions.
"""

import numpy as np

from flowlink.traffic_model import (
    DistributionSpec,
    TrafficModel,
    mean_active_flows,
    mean_rate,
    rate_variance,
)

rng = np.random.default_rng(0)

print("=== deterministic flows: 10 flows/s, 1 Mbit each, 8 s long ===")
m = TrafficModel(10, DistributionSpec.deterministic(1e6), DistributionSpec.deterministic(8.0))
print(f"mean rate          {mean_rate(m):12.0f} bit/s")
print(f"rate variance      {rate_variance(m):12.3e} (bit/s)^2")
print(f"mean active flows  {mean_active_flows(m):12.1f}")

print()
print("=== heavy-tailed sizes: lognormal web documents ===")
m = TrafficModel(
    40,
    DistributionSpec.lognormal(np.log(3e5), 1.2),
    DistributionSpec.pareto(2.5, 1.8),
)
s = m.size_dist.sample(rng, 10**6)
d = m.duration_dist.sample(rng, 10**6)
print(f"mean rate:    closed form {mean_rate(m):12.0f}   Monte Carlo {40 * s.mean():12.0f}")
print(
    f"rate var:     closed form {rate_variance(m):12.3e}   "
    f"Monte Carlo {40 * np.mean(s**2) * np.mean(1 / d):12.3e}"
)
print(
    f"active flows: closed form {mean_active_flows(m):12.1f}   "
    f"Monte Carlo {40 * d.mean():12.1f}"
)

print()
print("=== divergent moments are rejected, not approximated ===")
m = TrafficModel(
    5, DistributionSpec.deterministic(1e5), DistributionSpec.exponential(3.0)
)
try:
    rate_variance(m)
except Exception as exc:
    print(f"exponential durations: {type(exc).__name__}: {exc}")
