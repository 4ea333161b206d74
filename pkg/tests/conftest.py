import numpy as np
import pytest

from flowlink.simulator import LinkSample

# ground truth of the synthetic two-regime generator
TRUE_WORKING_SLOPE = 0.018
TRUE_KNEE_FLOWS = 2500.0
TRUE_KNEE_UTIL = 45.0
TRUE_SAT_SLOPE = 0.0004
TRUE_SAT_INTERCEPT = TRUE_KNEE_UTIL - TRUE_SAT_SLOPE * TRUE_KNEE_FLOWS  # 44


def two_regime_samples(seed=0, n_samples=200, noise=0.05, n_max=5000.0):
    """Linear working regime up to the knee, then a nearly flat top line,
    with multiplicative gaussian noise on the utilization."""
    rng = np.random.default_rng(seed)
    flows = np.linspace(50, n_max, n_samples)
    util = np.where(
        flows <= TRUE_KNEE_FLOWS,
        TRUE_WORKING_SLOPE * flows,
        TRUE_KNEE_UTIL + TRUE_SAT_SLOPE * (flows - TRUE_KNEE_FLOWS),
    )
    util = util * (1.0 + noise * rng.standard_normal(n_samples))
    return [
        LinkSample(float(i), float(u), int(round(n)))
        for i, (n, u) in enumerate(zip(flows, util))
    ]


@pytest.fixture
def knee_samples():
    return two_regime_samples(seed=0)
