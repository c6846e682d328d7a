"""Critic-free clipped policy-gradient training loop with pluggable advantage estimators.

One training step samples ``batch_size`` prompts, draws ``group_size``
rollouts per prompt from the live policy, turns each group's rewards into
advantages, and then runs minibatch passes of the clipped surrogate loss
with a KL penalty toward the frozen reference policy. Updates use Adam after
global-norm gradient clipping. The old (behavior) policy is re-snapshotted
at the end of every step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from . import advantage, policy, stats, tasks
from .advantage import EstimatorConfig, FixedBaseline, GroupMean, KalmanFiltered
from .kalman1d import FilterParams
from .policy import PolicyParams, SequenceBatch
from .tasks import Prompt, Rollout

ESTIMATORS = ("kalman", "group_mean", "fixed")
LLM_LEARNING_RATE = 5e-6
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# stream tags for np.random.default_rng([seed, step, index, tag])
_TAG_ROLLOUT = 0
_TAG_PROMPTS = 1
_TAG_SHUFFLE = 2
_TAG_MINIBATCH = 3


@dataclass
class TrainConfig:
    group_size: int = 12
    batch_size: int = 16
    learning_rate: float = 1e-2
    clip_eps: float = 0.2
    kl_weight: float = 0.01
    filter_q: float = 1e-5
    filter_r: float = 1e-2
    prior_mean: float = 0.0
    prior_var: float = 1e3
    numeric_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    steps: int = 300
    seed: int = 42
    estimator: str = "kalman"
    fixed_b: float = 0.0
    minibatch_size: int | None = None
    shuffle_group_rewards: bool = False
    skip_degenerate_groups: bool = False
    kl_sign_literal: bool = False
    tier: str = "easy"
    prompt_count: int = 64
    eval_count: int = 64
    buckets: int = policy.DEFAULT_BUCKETS
    operand_bins: int = policy.DEFAULT_OPERAND_BINS
    max_len: int = policy.DEFAULT_MAX_LEN

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        checks = [
            ("group_size", self.group_size >= 1),
            ("batch_size", self.batch_size >= 1),
            ("learning_rate", self.learning_rate > 0),
            ("clip_eps", 0 < self.clip_eps < 1),
            ("kl_weight", self.kl_weight >= 0),
            ("filter_q", self.filter_q >= 0),
            ("filter_r", self.filter_r > 0),
            ("prior_var", self.prior_var >= 0),
            ("numeric_eps", self.numeric_eps > 0),
            ("grad_clip_norm", self.grad_clip_norm > 0),
            ("steps", self.steps >= 1),
            ("estimator", self.estimator in ESTIMATORS),
            ("minibatch_size", self.minibatch_size is None or self.minibatch_size >= 1),
            ("tier", self.tier in tasks.TIERS),
            ("prompt_count", self.prompt_count >= 1),
            ("eval_count", self.eval_count >= 1),
            ("buckets", self.buckets >= 1),
            ("operand_bins", self.operand_bins >= 1),
            ("max_len", self.max_len >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid {name}: {getattr(self, name)!r}")

    @property
    def entries_per_step(self) -> int:
        return self.group_size * self.batch_size

    @property
    def effective_minibatch_size(self) -> int:
        if self.minibatch_size is not None:
            return self.minibatch_size
        return max(1, math.ceil(self.entries_per_step / 4))

    def estimator_config(self) -> EstimatorConfig:
        if self.estimator == "kalman":
            variant = KalmanFiltered(FilterParams(self.filter_q, self.filter_r), self.prior_mean, self.prior_var)
        elif self.estimator == "group_mean":
            variant = GroupMean()
        else:
            variant = FixedBaseline(self.fixed_b)
        return EstimatorConfig(variant, self.numeric_eps)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class BufferEntry:
    prompt: Prompt
    rollout: Rollout
    advantage: float
    old_logprob: float
    ref_logprob: float
    kl_sample: float


@dataclass
class Buffer:
    """Columnar store of one step's rollouts; row ``m`` is one buffer entry."""

    seqs: SequenceBatch
    advantages: np.ndarray
    old_logprobs: np.ndarray
    ref_logprobs: np.ndarray
    kl_samples: np.ndarray
    prompt_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.advantages)

    def select(self, idx) -> "Buffer":
        return Buffer(
            self.seqs.select(idx),
            self.advantages[idx],
            self.old_logprobs[idx],
            self.ref_logprobs[idx],
            self.kl_samples[idx],
            self.prompt_ids[idx],
        )

    @classmethod
    def from_entries(cls, params: PolicyParams, entries: Sequence[BufferEntry]) -> "Buffer":
        if not entries:
            raise ValueError("buffer needs at least one entry")
        seqs = policy.encode(params, [e.prompt for e in entries], [e.rollout.tokens for e in entries])
        col = lambda name: np.array([getattr(e, name) for e in entries], dtype=np.float64)  # noqa: E731
        return cls(
            seqs,
            col("advantage"),
            col("old_logprob"),
            col("ref_logprob"),
            col("kl_sample"),
            np.array([e.prompt.id for e in entries]),
        )


@dataclass
class StepMetrics:
    step: int
    sum_reward: float
    mean_reward: float
    mean_kl: float
    grad_norm: float
    loss: float


def collect_group(
    params: PolicyParams,
    prompt: Prompt,
    n: int,
    rng: np.random.Generator,
    max_len: int = policy.DEFAULT_MAX_LEN,
) -> tuple[list[Rollout], list[float]]:
    if n < 1:
        raise ValueError(f"group size must be >= 1, got {n}")
    uniforms = rng.random((n, max_len))
    batch, logps = policy.sample_tokens(params, [prompt] * n, uniforms)
    rollouts = policy.rollouts_from_batch([prompt] * n, batch, logps)
    return rollouts, [r.reward for r in rollouts]


def compute_advantages(rewards: Sequence[float], cfg: EstimatorConfig) -> np.ndarray:
    """Advantages for one group; the Kalman estimator starts a fresh filter every call."""
    return advantage.compute(rewards, cfg)


def clipped_surrogate_loss(
    live: PolicyParams,
    buffer: Buffer | Sequence[BufferEntry],
    clip_eps: float,
    kl_weight: float,
    kl_sign_literal: bool = False,
) -> tuple[float, np.ndarray]:
    """Loss and exact gradient w.r.t. the live logit table.

    loss = -mean(min(rho*A, clip(rho)*A)) + kl_weight * mean(logp_live - logp_ref)

    where rho = exp(logp_live - logp_old). ``kl_sign_literal`` flips the KL
    term to sit inside the negated expectation.
    """
    if not isinstance(buffer, Buffer):
        buffer = Buffer.from_entries(live, buffer)
    m = len(buffer)
    if m == 0:
        raise ValueError("clipped_surrogate_loss needs a nonempty batch")
    logp = policy.batch_logprobs(live.logits, buffer.seqs)
    ratio = np.exp(logp - buffer.old_logprobs)
    adv = buffer.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    kl = logp - buffer.ref_logprobs
    kl_sign = -1.0 if kl_sign_literal else 1.0
    loss = -surrogate.mean() + kl_sign * kl_weight * kl.mean()
    # gradient flows through rho only where the unclipped branch is the minimum
    active = unclipped <= clipped
    coef = (-np.where(active, unclipped, 0.0) + kl_sign * kl_weight) / m
    grad = policy.batch_logprob_grad(live.logits, buffer.seqs, coef)
    return float(loss), grad


def clip_global_norm(grad: np.ndarray, max_norm: float) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.sum(grad * grad)))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad, norm


class Adam:
    def __init__(self, shape, lr: float, beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_prompt_sets(cfg: TrainConfig) -> tuple[list[Prompt], list[Prompt]]:
    """Training pool and a held-out evaluation set with no shared expression."""
    train = tasks.generate_prompts(cfg.seed, cfg.tier, cfg.prompt_count)
    seen = {p.expression for p in train}
    evals: list[Prompt] = []
    next_id = cfg.prompt_count
    attempts = 0
    while len(evals) < cfg.eval_count:
        if attempts > 100 * cfg.eval_count:
            raise ValueError(
                f"cannot draw {cfg.eval_count} evaluation prompts disjoint from the "
                f"{cfg.prompt_count}-prompt training pool on tier {cfg.tier!r}"
            )
        (p,) = tasks.generate_prompts(cfg.seed, cfg.tier, 1, start_id=next_id)
        next_id += 1
        attempts += 1
        if p.expression not in seen:
            seen.add(p.expression)
            evals.append(p)
    return train, evals


@dataclass
class RunReport:
    config: dict[str, Any]
    metrics: list[StepMetrics]
    final_accuracy: float
    eval_scores: list[float]
    eval_answers: list[str] = field(default_factory=list)
    eval_prompt_ids: list[int] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def estimator(self) -> str:
        return str(self.config["estimator"])

    @property
    def mean_rewards(self) -> list[float]:
        return [m.mean_reward for m in self.metrics]

    @property
    def final_smoothed_reward(self) -> float:
        window = stats.smoothing_window(len(self.metrics))
        return stats.running_average(self.mean_rewards, window)[-1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "metrics": [asdict(m) for m in self.metrics],
            "final_accuracy": self.final_accuracy,
            "final_smoothed_reward": self.final_smoothed_reward,
            "eval_scores": self.eval_scores,
            "eval_answers": self.eval_answers,
            "eval_prompt_ids": self.eval_prompt_ids,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunReport":
        return cls(
            config=data["config"],
            metrics=[StepMetrics(**m) for m in data["metrics"]],
            final_accuracy=data["final_accuracy"],
            eval_scores=list(data["eval_scores"]),
            eval_answers=list(data.get("eval_answers", [])),
            eval_prompt_ids=list(data.get("eval_prompt_ids", [])),
        )

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "sum_reward", "mean_reward", "mean_kl", "grad_norm", "loss", "estimator", "seed"])
        for m in self.metrics:
            w.writerow(
                [m.step, repr(m.sum_reward), repr(m.mean_reward), repr(m.mean_kl), repr(m.grad_norm), repr(m.loss),
                 self.estimator, self.seed]
            )
        return buf.getvalue()


class Trainer:
    """Live, old and reference policies plus optimizer state for one run."""

    def __init__(self, cfg: TrainConfig):
        cfg.validate()
        self.cfg = cfg
        self.estimator = cfg.estimator_config()
        self.live = PolicyParams.zeros(cfg.buckets, cfg.operand_bins)
        self.ref = self.live.snapshot()
        self.old = self.live.snapshot()
        self.optim = Adam(self.live.logits.shape, cfg.learning_rate)
        self.train_prompts, self.eval_prompts = make_prompt_sets(cfg)
        self.step_index = 0
        self.last_buffer: Buffer | None = None

    def _rng(self, index: int, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, self.step_index, index, tag])

    def sample_prompts(self) -> list[Prompt]:
        cfg = self.cfg
        rng = self._rng(0, _TAG_PROMPTS)
        pool = len(self.train_prompts)
        idx = rng.choice(pool, size=cfg.batch_size, replace=cfg.batch_size > pool)
        return [self.train_prompts[i] for i in idx]

    def group_advantages(self, rewards: np.ndarray, index: int) -> np.ndarray:
        if not self.cfg.shuffle_group_rewards:
            return compute_advantages(rewards, self.estimator)
        perm = self._rng(index, _TAG_SHUFFLE).permutation(len(rewards))
        out = np.empty(len(rewards))
        out[perm] = compute_advantages(rewards[perm], self.estimator)
        return out

    def collect(self) -> tuple[Buffer, np.ndarray]:
        """Roll out every sampled prompt's group and build the step buffer.

        Returns the buffer and the raw rewards of all ``n * B`` rollouts.
        """
        cfg = self.cfg
        n = cfg.group_size
        prompts = self.sample_prompts()
        uniforms = np.concatenate([self._rng(j, _TAG_ROLLOUT).random((n, cfg.max_len)) for j in range(len(prompts))])
        rows = [p for p in prompts for _ in range(n)]
        seqs, logps = policy.sample_tokens(self.live, rows, uniforms)
        old_lp = logps.sum(axis=1)
        ref_lp = policy.batch_logprobs(self.ref.logits, seqs)
        answers = [policy.decode(seqs.tokens[i, : int(seqs.mask[i].sum())]) for i in range(len(rows))]
        rewards = np.array([tasks.reward(a, p.ground_truth) for a, p in zip(answers, rows)])
        adv = np.empty_like(rewards)
        keep = np.ones(len(rows), dtype=bool)
        for j in range(len(prompts)):
            sl = slice(j * n, (j + 1) * n)
            group = rewards[sl]
            adv[sl] = self.group_advantages(group, j)
            if cfg.skip_degenerate_groups and np.all(group == group[0]):
                keep[sl] = False
        buffer = Buffer(seqs, adv, old_lp, ref_lp, old_lp - ref_lp, np.array([p.id for p in rows]))
        return buffer.select(np.flatnonzero(keep)), rewards

    def optimize(self, buffer: Buffer) -> tuple[float, float]:
        """One epoch of minibatch updates; returns mean loss and mean pre-clip grad norm."""
        cfg = self.cfg
        if len(buffer) == 0:
            return 0.0, 0.0
        order = self._rng(0, _TAG_MINIBATCH).permutation(len(buffer))
        size = cfg.effective_minibatch_size
        losses, norms = [], []
        for start in range(0, len(buffer), size):
            mb = buffer.select(order[start : start + size])
            loss, grad = clipped_surrogate_loss(self.live, mb, cfg.clip_eps, cfg.kl_weight, cfg.kl_sign_literal)
            grad, norm = clip_global_norm(grad, cfg.grad_clip_norm)
            self.optim.step(self.live.logits, grad)
            losses.append(loss)
            norms.append(norm)
        return float(np.mean(losses)), float(np.mean(norms))

    def train_step(self) -> StepMetrics:
        self.step_index += 1
        buffer, rewards = self.collect()
        self.last_buffer = buffer
        mean_kl = float(buffer.kl_samples.mean()) if len(buffer) else 0.0
        loss, norm = self.optimize(buffer)
        self.old = self.live.snapshot()
        total = float(rewards.sum())
        return StepMetrics(self.step_index, total, total / len(rewards), mean_kl, norm, loss)

    def evaluate(self) -> tuple[float, list[float], list[str]]:
        answers = policy.greedy_decode(self.live, self.eval_prompts, self.cfg.max_len)
        scores = [tasks.reward(a, p.ground_truth) for a, p in zip(answers, self.eval_prompts)]
        return float(np.mean(scores)), scores, answers

    def run(self, on_step=None) -> RunReport:
        metrics = []
        for _ in range(self.cfg.steps):
            m = self.train_step()
            metrics.append(m)
            if on_step is not None:
                on_step(m)
        acc, scores, answers = self.evaluate()
        return RunReport(self.cfg.to_dict(), metrics, acc, scores, answers, [p.id for p in self.eval_prompts])


def run(cfg: TrainConfig, on_step=None) -> RunReport:
    return Trainer(cfg).run(on_step)
