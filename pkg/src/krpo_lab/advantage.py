"""Per-group advantage estimators: Kalman-filtered, group-mean and fixed baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .kalman1d import (
    DEFAULT_PRIOR_MEAN,
    DEFAULT_PRIOR_VAR,
    FilterParams,
    filter_group,
    init_filter,
)

DEFAULT_EPS = 1e-8


@dataclass(frozen=True)
class KalmanFiltered:
    params: FilterParams = field(default_factory=FilterParams)
    prior_mean: float = DEFAULT_PRIOR_MEAN
    prior_var: float = DEFAULT_PRIOR_VAR
    name = "kalman"


@dataclass(frozen=True)
class GroupMean:
    name = "group_mean"


@dataclass(frozen=True)
class FixedBaseline:
    b: float = 0.0
    name = "fixed"


Variant = Union[KalmanFiltered, GroupMean, FixedBaseline]


@dataclass(frozen=True)
class EstimatorConfig:
    variant: Variant = field(default_factory=KalmanFiltered)
    eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        if not self.eps > 0.0:
            raise ValueError(f"eps must be > 0, got {self.eps}")


def _as_group(group: Sequence[float]) -> np.ndarray:
    values = np.asarray(group, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("reward group must be a nonempty 1-d sequence")
    return values


def kalman_advantage(group: Sequence[float], cfg: EstimatorConfig) -> np.ndarray:
    """A_i = (r_i - x_i|i) / (sqrt(P_i|i) + eps), each sample using its own posterior.

    A fresh filter is started for every call.
    """
    variant = cfg.variant
    if not isinstance(variant, KalmanFiltered):
        raise TypeError("kalman_advantage needs a KalmanFiltered estimator")
    values = _as_group(group)
    init = init_filter(variant.prior_mean, variant.prior_var, variant.params)
    steps = filter_group(values.tolist(), variant.params, init)
    out = np.empty_like(values)
    for i, (r, step) in enumerate(zip(values, steps)):
        post = step.posterior
        out[i] = (r - post.x_hat) / (math.sqrt(post.p) + cfg.eps)
    return out


def group_mean_advantage(group: Sequence[float], eps: float = DEFAULT_EPS) -> np.ndarray:
    """Center on the group mean and scale by the population std (divide by n).

    A zero-variance group gives all zeros. Sums use ``math.fsum``, which is
    order-independent, so permuting the group permutes the output exactly.
    """
    values = _as_group(group)
    if np.all(values == values[0]):
        return np.zeros_like(values)
    n = values.size
    centered = values - math.fsum(values) / n
    centered -= math.fsum(centered) / n
    std = math.sqrt(math.fsum(centered * centered) / n)
    return centered / (std + eps)


def fixed_baseline_advantage(group: Sequence[float], b: float = 0.0) -> np.ndarray:
    return _as_group(group) - b


def compute(group: Sequence[float], cfg: EstimatorConfig) -> np.ndarray:
    variant = cfg.variant
    if isinstance(variant, KalmanFiltered):
        return kalman_advantage(group, cfg)
    if isinstance(variant, GroupMean):
        return group_mean_advantage(group, cfg.eps)
    if isinstance(variant, FixedBaseline):
        return fixed_baseline_advantage(group, variant.b)
    raise TypeError(f"unknown estimator variant {variant!r}")
