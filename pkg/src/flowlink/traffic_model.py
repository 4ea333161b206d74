"""Parametric flow-traffic model and its closed-form moments.

Traffic is described by Poisson flow arrivals at rate ``lambda_`` together
with distributions for flow size (bits) and flow duration (seconds).  Under
constant-rate flow profiles the first two moments of the aggregate rate and
the mean number of concurrently active flows all have closed forms:

    mean rate          = lambda * E[S]
    rate variance      = lambda * E[S^2 / D]
    mean active flows  = lambda * E[D]

Sizes and durations are independent here, so E[S^2/D] = E[S^2] * E[1/D].
Divergent moments (e.g. E[1/D] for exponential durations, or low-shape
Pareto) raise :class:`UndefinedMoment` rather than returning junk.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameters, UndefinedMoment

__all__ = [
    "Family",
    "RateProfileKind",
    "DistributionSpec",
    "TrafficModel",
    "FlowRecord",
    "TheoreticalMoments",
    "mean_rate",
    "rate_variance",
    "mean_active_flows",
    "sample",
]


class Family(enum.Enum):
    DETERMINISTIC = "Deterministic"
    EXPONENTIAL = "Exponential"
    LOGNORMAL = "LogNormal"
    PARETO_TYPE_I = "ParetoTypeI"


class RateProfileKind(enum.Enum):
    """Shape of the per-flow rate function.

    Only the constant-rate profile exists: the flow transmits at
    size/duration for its whole lifetime and at zero outside it.
    """

    CONSTANT_RATE = "ConstantRate"


class Coupling(enum.Enum):
    INDEPENDENT = "Independent"


@dataclass(frozen=True)
class DistributionSpec:
    """A positive distribution family plus its parameters.

    Parameter conventions:
      Deterministic(value)
      Exponential(mean)
      LogNormal(mu, sigma)        # of the underlying normal
      ParetoTypeI(shape, scale)   # density ~ shape * scale^shape / x^(shape+1)
    """

    family: Family
    parameters: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.parameters)
        object.__setattr__(self, "parameters", p)
        self._validate()

    def _validate(self):
        f, p = self.family, self.parameters
        if f is Family.DETERMINISTIC:
            if len(p) != 1 or p[0] <= 0:
                raise InvalidParameters("Deterministic requires one value > 0")
        elif f is Family.EXPONENTIAL:
            if len(p) != 1 or p[0] <= 0:
                raise InvalidParameters("Exponential requires mean > 0")
        elif f is Family.LOGNORMAL:
            if len(p) != 2 or p[1] <= 0:
                raise InvalidParameters("LogNormal requires (mu, sigma) with sigma > 0")
        elif f is Family.PARETO_TYPE_I:
            if len(p) != 2 or p[0] <= 0 or p[1] <= 0:
                raise InvalidParameters("ParetoTypeI requires shape > 0 and scale > 0")
        else:  # pragma: no cover
            raise InvalidParameters(f"unknown family {f}")

    # -- convenience constructors -------------------------------------

    @staticmethod
    def deterministic(value):
        return DistributionSpec(Family.DETERMINISTIC, (value,))

    @staticmethod
    def exponential(mean):
        return DistributionSpec(Family.EXPONENTIAL, (mean,))

    @staticmethod
    def lognormal(mu, sigma):
        return DistributionSpec(Family.LOGNORMAL, (mu, sigma))

    @staticmethod
    def pareto(shape, scale):
        return DistributionSpec(Family.PARETO_TYPE_I, (shape, scale))

    # -- moments ------------------------------------------------------

    def moment(self, k: int) -> float:
        """E[X^k] for integer k (k may be negative); raises UndefinedMoment
        when the moment diverges."""
        f, p = self.family, self.parameters
        if f is Family.DETERMINISTIC:
            return p[0] ** k
        if f is Family.EXPONENTIAL:
            if k < 0:
                raise UndefinedMoment(
                    f"E[X^{k}] diverges for the Exponential family"
                )
            return math.factorial(k) * p[0] ** k
        if f is Family.LOGNORMAL:
            mu, sigma = p
            return math.exp(k * mu + 0.5 * (k * sigma) ** 2)
        if f is Family.PARETO_TYPE_I:
            shape, scale = p
            if k >= shape:
                raise UndefinedMoment(
                    f"E[X^{k}] diverges for Pareto with shape {shape} <= {k}"
                )
            return shape * scale**k / (shape - k)
        raise UndefinedMoment(f"unknown family {f}")  # pragma: no cover

    @property
    def mean(self) -> float:
        return self.moment(1)

    # -- sampling -----------------------------------------------------

    def sample(self, rng: np.random.Generator, size=None):
        """Draw from the family; deterministic given the generator state."""
        f, p = self.family, self.parameters
        if f is Family.DETERMINISTIC:
            return p[0] if size is None else np.full(size, p[0])
        if f is Family.EXPONENTIAL:
            return rng.exponential(p[0], size)
        if f is Family.LOGNORMAL:
            return rng.lognormal(p[0], p[1], size)
        if f is Family.PARETO_TYPE_I:
            shape, scale = p
            return (rng.pareto(shape, size) + 1.0) * scale
        raise InvalidParameters(f"unknown family {f}")  # pragma: no cover


@dataclass(frozen=True)
class TrafficModel:
    """Poisson flow arrivals plus size/duration laws."""

    lambda_: float
    size_dist: DistributionSpec
    duration_dist: DistributionSpec
    profile: RateProfileKind = RateProfileKind.CONSTANT_RATE
    coupling: Coupling = Coupling.INDEPENDENT

    def __post_init__(self):
        if self.lambda_ < 0:
            raise InvalidParameters("lambda must be >= 0")

    # -- plain-text key/value config ----------------------------------

    def to_config(self) -> dict:
        return {
            "lambda": repr(self.lambda_),
            "size.family": self.size_dist.family.value,
            "size.params": ",".join(repr(v) for v in self.size_dist.parameters),
            "duration.family": self.duration_dist.family.value,
            "duration.params": ",".join(repr(v) for v in self.duration_dist.parameters),
            "profile": self.profile.value,
        }

    @staticmethod
    def from_config(items: dict) -> "TrafficModel":
        try:
            lam = float(items["lambda"])
        except KeyError:
            raise InvalidParameters("missing key: lambda")
        except ValueError:
            raise InvalidParameters(f"lambda: not a number: {items['lambda']!r}")

        def dist(prefix):
            try:
                fam = Family(items[f"{prefix}.family"])
            except KeyError as e:
                raise InvalidParameters(f"missing key: {e.args[0]}")
            except ValueError:
                raise InvalidParameters(
                    f"{prefix}.family: unknown family {items[f'{prefix}.family']!r}"
                )
            raw = items.get(f"{prefix}.params", "")
            try:
                params = tuple(float(v) for v in raw.split(",") if v.strip())
            except ValueError:
                raise InvalidParameters(f"{prefix}.params: bad number list {raw!r}")
            return DistributionSpec(fam, params)

        profile = RateProfileKind(items.get("profile", "ConstantRate"))
        return TrafficModel(lam, dist("size"), dist("duration"), profile)


@dataclass(frozen=True)
class FlowRecord:
    """One flow: arrival time, size in bits, duration in seconds."""

    arrival_time: float
    size: float
    duration: float
    profile: RateProfileKind = RateProfileKind.CONSTANT_RATE

    def __post_init__(self):
        if self.size <= 0 or self.duration <= 0 or self.arrival_time < 0:
            raise InvalidParameters(
                "FlowRecord requires size > 0, duration > 0, arrival_time >= 0"
            )

    @property
    def rate(self) -> float:
        """Constant transmission rate while active, bits/s."""
        return self.size / self.duration

    def rate_at(self, t: float) -> float:
        """Instantaneous rate at time t; zero outside the active interval."""
        if self.arrival_time <= t <= self.arrival_time + self.duration:
            return self.rate
        return 0.0

    def active_at(self, t: float) -> bool:
        return self.arrival_time <= t <= self.arrival_time + self.duration


@dataclass(frozen=True)
class TheoreticalMoments:
    mean_rate: float            # bits/s
    rate_variance: float        # (bits/s)^2
    mean_active_flows: float    # dimensionless


def mean_rate(model: TrafficModel) -> float:
    """Average aggregate rate, lambda * E[S], bits/s."""
    return model.lambda_ * model.size_dist.mean


def rate_variance(model: TrafficModel) -> float:
    """Variance of the aggregate rate, lambda * E[S^2 / D], (bits/s)^2.

    With independent sizes and durations and constant-rate profiles this
    factorizes as lambda * E[S^2] * E[1/D].
    """
    return model.lambda_ * model.size_dist.moment(2) * model.duration_dist.moment(-1)


def mean_active_flows(model: TrafficModel) -> float:
    """Mean concurrent flow count by Little's law, lambda * E[D]."""
    return model.lambda_ * model.duration_dist.mean


def theoretical_moments(model: TrafficModel) -> TheoreticalMoments:
    return TheoreticalMoments(
        mean_rate=mean_rate(model),
        rate_variance=rate_variance(model),
        mean_active_flows=mean_active_flows(model),
    )


def sample(dist: DistributionSpec, rng: np.random.Generator, size=None):
    """Module-level alias for DistributionSpec.sample."""
    return dist.sample(rng, size)
