"""Autoregressive softmax policy over a 12-symbol digit vocabulary.

The policy is a table of logits, one row per hashed context bucket. A context
is (tier, operator, operand magnitude buckets, emit position, previous token),
which keeps log-probabilities and their gradients exact and closed-form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tasks
from .tasks import Prompt, Rollout

VOCAB = tuple("0123456789") + ("-", "<eos>")
V = len(VOCAB)
EOS = V - 1
MINUS = VOCAB.index("-")
BOS = V  # previous-token id at position 0; never emitted
DEFAULT_BUCKETS = 4096
DEFAULT_OPERAND_BINS = 100
DEFAULT_MAX_LEN = 5
CHECKPOINT_VERSION = "krpo-lab-policy v1"

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix(h: np.ndarray, v: np.ndarray) -> np.ndarray:
    z = (h ^ v.astype(np.uint64)) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@dataclass
class PolicyParams:
    logits: np.ndarray
    operand_bins: int = DEFAULT_OPERAND_BINS

    @classmethod
    def zeros(cls, buckets: int = DEFAULT_BUCKETS, operand_bins: int = DEFAULT_OPERAND_BINS) -> "PolicyParams":
        return cls(np.zeros((buckets, V)), operand_bins)

    @property
    def buckets(self) -> int:
        return self.logits.shape[0]

    def snapshot(self) -> "PolicyParams":
        """Deep, read-only copy for the old/reference roles."""
        frozen = self.logits.copy()
        frozen.flags.writeable = False
        return PolicyParams(frozen, self.operand_bins)

    def clone(self) -> "PolicyParams":
        return PolicyParams(self.logits.copy(), self.operand_bins)


def prompt_features(prompt: Prompt, operand_bins: int = DEFAULT_OPERAND_BINS) -> tuple[int, int, int, int]:
    hi = tasks.TIER_MAX[prompt.tier]
    width = max(1, math.ceil((hi + 1) / operand_bins))
    return (
        tasks.TIERS.index(prompt.tier),
        tasks.OPERATORS.index(prompt.op),
        abs(prompt.a) // width,
        abs(prompt.b) // width,
    )


def feature_matrix(prompts: Sequence[Prompt], operand_bins: int) -> np.ndarray:
    return np.array([prompt_features(p, operand_bins) for p in prompts], dtype=np.int64).reshape(-1, 4)


def bucket_ids(features: np.ndarray, position, prev_token, buckets: int) -> np.ndarray:
    """Hash (prompt features, position, previous token) rows into ``[0, buckets)``."""
    features = np.atleast_2d(features)
    m = features.shape[0]
    h = np.zeros(m, dtype=np.uint64)
    for col in range(features.shape[1]):
        h = _mix(h, features[:, col])
    h = _mix(h, np.broadcast_to(np.asarray(position, dtype=np.int64), (m,)))
    h = _mix(h, np.broadcast_to(np.asarray(prev_token, dtype=np.int64), (m,)))
    return (h % np.uint64(buckets)).astype(np.int64)


def _log_softmax(rows: np.ndarray) -> np.ndarray:
    if not np.isfinite(rows).all():
        raise FloatingPointError("non-finite logits in policy table")
    shifted = rows - rows.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def token_distribution(params: PolicyParams, prompt: Prompt, position: int, prev_token: int) -> np.ndarray:
    feats = feature_matrix([prompt], params.operand_bins)
    bucket = bucket_ids(feats, position, prev_token, params.buckets)[0]
    return np.exp(_log_softmax(params.logits[bucket]))


@dataclass
class SequenceBatch:
    """Padded token sequences with their context buckets.

    ``tokens`` and ``buckets`` are ``[M, L]``; ``mask`` marks real tokens.
    """

    tokens: np.ndarray
    buckets: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def select(self, idx) -> "SequenceBatch":
        return SequenceBatch(self.tokens[idx], self.buckets[idx], self.mask[idx])


def encode(params: PolicyParams, prompts: Sequence[Prompt], token_lists: Sequence[Sequence[int]]) -> SequenceBatch:
    m = len(token_lists)
    width = max([len(t) for t in token_lists] + [1])
    tokens = np.zeros((m, width), dtype=np.int64)
    mask = np.zeros((m, width), dtype=bool)
    for i, seq in enumerate(token_lists):
        if any(not 0 <= t < V for t in seq):
            raise ValueError(f"token ids must lie in [0, {V}), got {list(seq)}")
        tokens[i, : len(seq)] = seq
        mask[i, : len(seq)] = True
    feats = feature_matrix(prompts, params.operand_bins)
    buckets = np.zeros((m, width), dtype=np.int64)
    prev = np.full(m, BOS, dtype=np.int64)
    for t in range(width):
        buckets[:, t] = bucket_ids(feats, t, prev, params.buckets)
        prev = tokens[:, t]
    return SequenceBatch(tokens, buckets, mask)


def token_logprobs(logits: np.ndarray, batch: SequenceBatch) -> np.ndarray:
    """Per-token log-probabilities ``[M, L]``; padded slots are 0."""
    logp = _log_softmax(logits[batch.buckets])
    picked = np.take_along_axis(logp, batch.tokens[..., None], axis=-1)[..., 0]
    return np.where(batch.mask, picked, 0.0)


def batch_logprobs(logits: np.ndarray, batch: SequenceBatch) -> np.ndarray:
    return token_logprobs(logits, batch).sum(axis=1)


def batch_logprob_grad(logits: np.ndarray, batch: SequenceBatch, coef: np.ndarray) -> np.ndarray:
    """Gradient of ``sum_m coef[m] * log pi(seq_m)`` w.r.t. the logit table."""
    probs = np.exp(_log_softmax(logits[batch.buckets]))
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, batch.tokens[..., None], 1.0, axis=-1)
    weight = np.asarray(coef, dtype=np.float64)[:, None] * batch.mask
    contrib = (onehot - probs) * weight[..., None]
    grad = np.zeros_like(logits, dtype=np.float64)
    np.add.at(grad, batch.buckets.reshape(-1), contrib.reshape(-1, V))
    return grad


def sequence_logprob(params: PolicyParams, prompt: Prompt, tokens: Sequence[int]) -> float:
    batch = encode(params, [prompt], [list(tokens)])
    return float(batch_logprobs(params.logits, batch)[0])


def sequence_logprob_grad(params: PolicyParams, prompt: Prompt, tokens: Sequence[int]) -> np.ndarray:
    batch = encode(params, [prompt], [list(tokens)])
    return batch_logprob_grad(params.logits, batch, np.ones(1))


def decode(tokens: Sequence[int]) -> str:
    out = []
    for t in tokens:
        if t == EOS:
            break
        out.append(VOCAB[t])
    return "".join(out)


def sample_tokens(params: PolicyParams, prompts: Sequence[Prompt], uniforms: np.ndarray) -> tuple[SequenceBatch, np.ndarray]:
    """Sample one sequence per prompt row by inverse CDF on ``uniforms[M, max_len]``.

    Returns the batch and the per-token log-probabilities.
    """
    m, max_len = uniforms.shape
    feats = feature_matrix(prompts, params.operand_bins)
    tokens = np.zeros((m, max_len), dtype=np.int64)
    buckets = np.zeros((m, max_len), dtype=np.int64)
    mask = np.zeros((m, max_len), dtype=bool)
    logps = np.zeros((m, max_len))
    prev = np.full(m, BOS, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    for t in range(max_len):
        b = bucket_ids(feats, t, prev, params.buckets)
        logp = _log_softmax(params.logits[b])
        cdf = np.cumsum(np.exp(logp), axis=1)
        tok = np.minimum((cdf < uniforms[:, t : t + 1]).sum(axis=1), V - 1)
        tokens[:, t] = np.where(alive, tok, 0)
        buckets[:, t] = b
        mask[:, t] = alive
        logps[:, t] = np.where(alive, logp[np.arange(m), tok], 0.0)
        alive = alive & (tok != EOS)
        prev = tok
        if not alive.any():
            break
    return SequenceBatch(tokens, buckets, mask), logps


def greedy_decode(params: PolicyParams, prompts: Sequence[Prompt], max_len: int = DEFAULT_MAX_LEN) -> list[str]:
    m = len(prompts)
    feats = feature_matrix(prompts, params.operand_bins)
    prev = np.full(m, BOS, dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    emitted: list[list[int]] = [[] for _ in range(m)]
    for t in range(max_len):
        b = bucket_ids(feats, t, prev, params.buckets)
        tok = np.argmax(params.logits[b], axis=1)
        for i in np.flatnonzero(alive):
            emitted[i].append(int(tok[i]))
        alive = alive & (tok != EOS)
        prev = tok
        if not alive.any():
            break
    return [decode(seq) for seq in emitted]


def rollouts_from_batch(prompts: Sequence[Prompt], batch: SequenceBatch, logps: np.ndarray) -> list[Rollout]:
    out = []
    for i, prompt in enumerate(prompts):
        length = int(batch.mask[i].sum())
        toks = [int(t) for t in batch.tokens[i, :length]]
        answer = decode(toks)
        out.append(
            Rollout(
                prompt_id=prompt.id,
                tokens=toks,
                answer=answer,
                token_logprobs=[float(v) for v in logps[i, :length]],
                reward=tasks.reward(answer, prompt.ground_truth),
            )
        )
    return out


def sample_rollout(
    params: PolicyParams,
    prompt: Prompt,
    rng: np.random.Generator,
    max_len: int = DEFAULT_MAX_LEN,
) -> Rollout:
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    uniforms = rng.random((1, max_len))
    batch, logps = sample_tokens(params, [prompt], uniforms)
    return rollouts_from_batch([prompt], batch, logps)[0]


def kl_sample_estimate(params: PolicyParams, ref_params: PolicyParams, rollout: Rollout, prompt: Prompt) -> float:
    """Single-sample ``log pi(y|x) - log pi_ref(y|x)`` on the sampled sequence."""
    batch = encode(params, [prompt], [rollout.tokens])
    live = batch_logprobs(params.logits, batch)[0]
    ref = batch_logprobs(ref_params.logits, batch)[0]
    return float(live - ref)


def save_checkpoint(params: PolicyParams, path: str | Path) -> None:
    """CSV ``bucket,token,logit`` for every non-(+0.0) entry; logits use ``float.hex``."""
    table = params.logits
    rows, cols = np.nonzero((table != 0.0) | np.signbit(table))
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {CHECKPOINT_VERSION} buckets={table.shape[0]} vocab={V} operand_bins={params.operand_bins}\n")
        fh.write("bucket,token,logit\n")
        for r, c in zip(rows, cols):
            fh.write(f"{r},{c},{float(table[r, c]).hex()}\n")


def load_checkpoint(path: str | Path) -> PolicyParams:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(f"# {CHECKPOINT_VERSION}"):
            raise ValueError(f"{path}: unsupported checkpoint header {header!r}")
        meta = dict(kv.split("=") for kv in header.split()[3:])
        if int(meta["vocab"]) != V:
            raise ValueError(f"{path}: vocabulary size {meta['vocab']} != {V}")
        params = PolicyParams.zeros(int(meta["buckets"]), int(meta["operand_bins"]))
        if fh.readline().strip() != "bucket,token,logit":
            raise ValueError(f"{path}: missing column header")
        for line in fh:
            r, c, value = line.strip().split(",")
            params.logits[int(r), int(c)] = float.fromhex(value)
    return params
