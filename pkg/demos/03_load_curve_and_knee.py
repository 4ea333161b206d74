"""Utilization-vs-flows curve and knee detection.

Sweeps a processor-sharing link from 10% to 150% offered load, then runs
the capacity analyzer on the resulting (utilization, active flows) points:
working-line fit, saturation-line fit, knee location, state labels.
Writes load_curve.png if matplotlib is available.
"""

import numpy as np

from flowlink.analyzer import AnalyzerConfig, analyze
from flowlink.simulator import LinkSample, Mode, SimulationConfig, load_sweep
from flowlink.traffic_model import DistributionSpec, TrafficModel

CAPACITY = 1e6     # 1 Mbit/s link
PEAK = 1e4         # per-flow peak rate

base = SimulationConfig(
    TrafficModel(1, DistributionSpec.deterministic(20_000), DistributionSpec.deterministic(2.0)),
    horizon=1000.0,
    seed=3,
    mode=Mode.PROCESSOR_SHARING,
    link_capacity=CAPACITY,
    per_flow_peak_rate=PEAK,
    sample_interval=0.5,
    warmup=100.0,
)

lambdas = [2.5, 5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 70, 80]
print(f"sweeping {len(lambdas)} arrival rates (offered load 5% -> 160% of C) ...")
points = load_sweep(base, lambdas)
samples = [
    LinkSample(float(i), u, int(round(n))) for i, (u, n) in enumerate(points)
]
for lam, (u, n) in zip(sorted(lambdas), points):
    print(f"  lambda {lam:5.1f}/s   utilization {u:6.2f}%   active flows {n:8.1f}")

report = analyze(samples, AnalyzerConfig(saturation_quantile=0.5, min_working_samples=3))
print()
print(f"working-line slope: {report.working_line.slope:.4f} % per flow")
if report.knee_flows is None:
    print("working area not exceeded in this sweep")
else:
    print(
        f"knee: {report.knee_flows:.0f} flows at {report.knee_utilization:.1f}% "
        "utilization (length of the working area)"
    )
labels = [lab.value for lab in report.state_labels]
print(f"state labels: {labels}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    print("matplotlib not installed; skipping plot")
else:
    n = np.array([s.active_flows for s in samples])
    u = np.array([s.utilization for s in samples])
    grid = np.linspace(0, n.max(), 200)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(n, u, "ko", label="sweep points")
    ax.plot(grid, report.working_line.value_at(grid), "g--", label="working line")
    if report.saturation_line is not None:
        ax.plot(grid, report.saturation_line.value_at(grid), "r:", label="saturation line")
        ax.plot([report.knee_flows], [report.knee_utilization], "b*", ms=14, label="knee")
    ax.set_xlabel("active flows")
    ax.set_ylabel("utilization (%)")
    ax.set_ylim(0, 110)
    ax.legend()
    fig.tight_layout()
    fig.savefig("load_curve.png", dpi=120)
    print("wrote load_curve.png")
