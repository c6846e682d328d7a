"""Scalar Kalman filter over a stream of reward observations.

The latent state is the expected reward of one prompt under the current
policy. Dynamics are the identity (a random walk driven by process noise
``q``) and every observation is the latent value plus measurement noise of
variance ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_PRIOR_MEAN = 0.0
DEFAULT_PRIOR_VAR = 1e3


@dataclass(frozen=True)
class FilterParams:
    q: float = 1e-5
    r: float = 1e-2

    def __post_init__(self) -> None:
        if not self.q >= 0.0:
            raise ValueError(f"process noise q must be >= 0, got {self.q}")
        if not self.r > 0.0:
            raise ValueError(f"measurement noise r must be > 0, got {self.r}")


@dataclass(frozen=True)
class FilterState:
    x_hat: float
    p: float


@dataclass(frozen=True)
class FilterStep:
    x_prior: float
    p_prior: float
    gain: float
    posterior: FilterState


def init_filter(
    prior_mean: float = DEFAULT_PRIOR_MEAN,
    prior_var: float = DEFAULT_PRIOR_VAR,
    params: FilterParams | None = None,
) -> FilterState:
    """Build the starting state; ``params`` is accepted for symmetry and unused."""
    if not prior_var >= 0.0:
        raise ValueError(f"prior_var must be >= 0, got {prior_var}")
    return FilterState(float(prior_mean), float(prior_var))


def predict(state: FilterState, params: FilterParams) -> tuple[float, float]:
    return state.x_hat, state.p + params.q


def update(x_prior: float, p_prior: float, observation: float, params: FilterParams) -> FilterStep:
    """Measurement update with gain K = p_prior / (p_prior + r).

    ``1 - K`` is evaluated as ``r / (p_prior + r)``; subtracting K from 1
    loses most significant digits once p_prior >> r (e.g. a 1e12 prior).
    The mean is then the convex blend ``(1 - K) x_prior + K obs``, which is
    x_prior + K (obs - x_prior) without its cancellation.
    """
    denom = p_prior + params.r
    gain = p_prior / denom
    keep = params.r / denom
    x_hat = keep * x_prior + gain * observation
    p = keep * p_prior
    return FilterStep(x_prior, p_prior, gain, FilterState(x_hat, p))


def filter_group(
    rewards: Sequence[float] | Iterable[float],
    params: FilterParams,
    init: FilterState | None = None,
) -> list[FilterStep]:
    """Run predict/update over ``rewards`` in order, starting from ``init``.

    One ``FilterStep`` is returned per reward. Callers own the reset policy;
    passing the same ``init`` for every group gives the per-prompt reset.
    """
    rewards = list(rewards)
    if not rewards:
        raise ValueError("filter_group needs at least one reward")
    state = init if init is not None else init_filter(params=params)
    steps = []
    for obs in rewards:
        x_prior, p_prior = predict(state, params)
        step = update(x_prior, p_prior, float(obs), params)
        steps.append(step)
        state = step.posterior
    return steps
