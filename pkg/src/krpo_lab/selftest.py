"""Invariant checks runnable from the command line without pytest."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import advantage, kalman1d, policy, stats, tasks, trainer
from .kalman1d import FilterParams

Check = Callable[[np.random.Generator], str | None]
CHECKS: list[tuple[str, Check]] = []


def check(name: str):
    def register(fn: Check) -> Check:
        CHECKS.append((name, fn))
        return fn

    return register


def _random_group(rng: np.random.Generator, max_n: int = 64) -> np.ndarray:
    return rng.random(int(rng.integers(1, max_n + 1)))


@check("kalman gain in [0,1], variance contraction, p == K*r")
def _kalman_step_invariants(rng):
    for _ in range(500):
        params = FilterParams(float(rng.random() * 1e-2), float(rng.random() + 1e-6))
        steps = kalman1d.filter_group(_random_group(rng), params, kalman1d.init_filter(0.0, float(rng.random() * 1e3)))
        for s in steps:
            if not 0.0 <= s.gain <= 1.0:
                return f"gain {s.gain} out of range"
            if s.posterior.p > s.p_prior:
                return "posterior variance grew"
            expected = s.gain * params.r
            if abs(s.posterior.p - expected) > 1e-12 * max(abs(expected), 1e-300):
                return f"p={s.posterior.p} vs K*r={expected}"
    return None


@check("kalman sample-mean limit (q=0, P0=1e12, r=1)")
def _sample_mean_limit(rng):
    params = FilterParams(0.0, 1.0)
    for _ in range(500):
        group = _random_group(rng)
        last = kalman1d.filter_group(group, params, kalman1d.init_filter(0.0, 1e12))[-1]
        if abs(last.posterior.x_hat - group.mean()) >= 1e-6:
            return f"final mean {last.posterior.x_hat} vs {group.mean()}"
    return None


@check("group-mean advantages: zero sum and permutation equivariance")
def _group_mean_props(rng):
    for _ in range(500):
        group = _random_group(rng)
        adv = advantage.group_mean_advantage(group)
        if abs(adv.sum()) > 1e-9:
            return f"sum {adv.sum()}"
        perm = rng.permutation(group.size)
        if not np.array_equal(advantage.group_mean_advantage(group[perm]), adv[perm]):
            return "permutation changed advantages"
    return None


@check("reward rule truth table")
def _reward_rule(rng):
    cases = [("59", "59", 1.0), ("The answer is 59", "59", 0.5), ("60", "59", 0.0), ("159", "59", 0.5), ("", "7", 0.0)]
    for answer, truth, want in cases:
        if tasks.reward(answer, truth) != want:
            return f"reward({answer!r}, {truth!r}) != {want}"
    return None


@check("softmax rows normalize and log-prob gradient matches finite differences")
def _policy_grad(rng):
    prompt = tasks.generate_prompts(int(rng.integers(1 << 30)), "normal", 1)[0]
    params = policy.PolicyParams(rng.normal(size=(64, policy.V)))
    tokens = [int(t) for t in rng.integers(0, policy.V, size=4)]
    for t in range(4):
        if abs(policy.token_distribution(params, prompt, t, 0).sum() - 1.0) > 1e-12:
            return "softmax row does not sum to 1"
    grad = policy.sequence_logprob_grad(params, prompt, tokens)
    h = 1e-5
    for r, c in zip(*np.nonzero(grad)):
        saved = params.logits[r, c]
        params.logits[r, c] = saved + h
        up = policy.sequence_logprob(params, prompt, tokens)
        params.logits[r, c] = saved - h
        down = policy.sequence_logprob(params, prompt, tokens)
        params.logits[r, c] = saved
        fd = (up - down) / (2 * h)
        if abs(fd - grad[r, c]) > 1e-5 * max(abs(fd), 1e-3):
            return f"grad mismatch at ({r},{c}): {grad[r, c]} vs {fd}"
    return None


@check("clip dead zone gives zero surrogate gradient")
def _dead_zone(rng):
    prompt = tasks.generate_prompts(7, "easy", 1)[0]
    live = policy.PolicyParams(rng.normal(size=(32, policy.V)))
    rollout = tasks.Rollout(prompt.id, [1, 2, policy.EOS], "12")
    lp = policy.sequence_logprob(live, prompt, rollout.tokens)
    for adv, shift in ((1.0, math.log(1.5)), (-1.0, math.log(0.5))):
        entry = trainer.BufferEntry(prompt, rollout, adv, lp - shift, lp, 0.0)
        _, grad = trainer.clipped_surrogate_loss(live, [entry], 0.2, 0.0)
        if np.any(grad != 0.0):
            return f"nonzero gradient for A={adv}"
    return None


@check("paired t-test fixture")
def _ttest(rng):
    res = stats.paired_t_test_one_tailed([0.6, 0.5, 0.7], [0.9, 0.8, 0.7])
    exact = 0.5 - 2.0 / (2.0 * math.sqrt(6.0))  # closed-form df=2 upper tail at t=2
    if abs(res.t - 2.0) > 1e-9 or res.df != 2 or abs(res.p - exact) > 1e-6:
        return f"got {res}"
    return None


def run_all(seed: int = 0, echo=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            problem = fn(np.random.default_rng(seed))
        except Exception as exc:  # report and keep going
            problem = f"{type(exc).__name__}: {exc}"
        ok &= problem is None
        echo(f"{'PASS' if problem is None else 'FAIL'}  {name}" + (f"  ({problem})" if problem else ""))
    return ok
