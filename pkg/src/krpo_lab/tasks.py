"""Micro-arithmetic prompts and the rule-based {0, 0.5, 1} reward."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TIERS = ("easy", "normal", "hard")
TIER_MAX = {"easy": 9, "normal": 99, "hard": 999}
OPERATORS = ("+", "-")


@dataclass(frozen=True)
class Prompt:
    id: int
    tier: str
    a: int
    op: str
    b: int

    @property
    def expression(self) -> str:
        return f"{self.a} {self.op} {self.b}"

    @property
    def ground_truth(self) -> str:
        value = self.a + self.b if self.op == "+" else self.a - self.b
        return str(value)


@dataclass
class Rollout:
    prompt_id: int
    tokens: list[int]
    answer: str
    token_logprobs: list[float] = field(default_factory=list)
    reward: float = 0.0


def generate_prompts(seed: int, tier: str, count: int, start_id: int = 0) -> list[Prompt]:
    """Deterministic ``a op b`` prompts with operands in ``[0, TIER_MAX[tier]]``.

    Prompt ``k`` draws from its own stream keyed by ``(seed, tier, start_id + k)``,
    so the output never depends on how generation is scheduled.
    """
    if tier not in TIER_MAX:
        raise ValueError(f"unknown tier {tier!r}; expected one of {TIERS}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    hi = TIER_MAX[tier]
    tier_key = TIERS.index(tier)
    prompts = []
    for k in range(count):
        pid = start_id + k
        rng = np.random.default_rng([seed, tier_key, pid])
        a, b = (int(v) for v in rng.integers(0, hi + 1, size=2))
        op = OPERATORS[int(rng.integers(0, 2))]
        prompts.append(Prompt(pid, tier, a, op, b))
    return prompts


def reward(answer: str, ground_truth: str) -> float:
    if not ground_truth:
        raise ValueError("ground_truth must be nonempty")
    if answer == ground_truth:
        return 1.0
    # literal substring: "59" inside "159" is half credit too
    if ground_truth in answer:
        return 0.5
    return 0.0


def accuracy(pairs: Iterable[tuple[str, str]]) -> float:
    scores = [reward(answer, truth) for answer, truth in pairs]
    if not scores:
        raise ValueError("accuracy needs at least one (answer, ground_truth) pair")
    return sum(scores) / len(scores)


def write_prompts_csv(prompts: Sequence[Prompt], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "tier", "expression", "ground_truth"])
        for p in prompts:
            writer.writerow([p.id, p.tier, p.expression, p.ground_truth])


def read_prompts_csv(path: str | Path) -> list[Prompt]:
    prompts = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            a, op, b = row["expression"].split(" ")
            prompts.append(Prompt(int(row["id"]), row["tier"], int(a), op, int(b)))
    return prompts
