"""Flat ``key = value`` experiment configuration.

Grammar, one setting per line::

    # comment
    group_size = 12
    filter.q = 1e-5
    sweep.kl_weight = 0, 0.001, 0.01, 0.05

Blank lines and ``#`` comments are ignored. Keys are dot-scoped, unknown keys
are rejected, and every error names the offending line and key. Sweep axes
take comma-separated lists. ``preset = llm`` applies the LLM-scale learning
rate before any explicit ``learning_rate`` line.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable

from . import tasks
from .trainer import ESTIMATORS, LLM_LEARNING_RATE, TrainConfig

PRESETS = {"llm": {"learning_rate": LLM_LEARNING_RATE}, "toy": {}}
PAIRINGS = ("question", "seed")


class ConfigError(ValueError):
    def __init__(self, line: int, key: str, message: str):
        super().__init__(f"line {line}: {key}: {message}")
        self.line = line
        self.key = key


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("auto", "none") else int(text)


def _choice(options) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


# config key -> (TrainConfig field, value parser)
TRAIN_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "group_size": ("group_size", int),
    "batch_size": ("batch_size", int),
    "learning_rate": ("learning_rate", float),
    "clip_eps": ("clip_eps", float),
    "kl_weight": ("kl_weight", float),
    "kl_sign_literal": ("kl_sign_literal", _bool),
    "numeric_eps": ("numeric_eps", float),
    "grad_clip_norm": ("grad_clip_norm", float),
    "steps": ("steps", int),
    "seed": ("seed", int),
    "estimator": ("estimator", _choice(ESTIMATORS)),
    "fixed_b": ("fixed_b", float),
    "minibatch_size": ("minibatch_size", _optional_int),
    "shuffle_group_rewards": ("shuffle_group_rewards", _bool),
    "skip_degenerate_groups": ("skip_degenerate_groups", _bool),
    "filter.q": ("filter_q", float),
    "filter.r": ("filter_r", float),
    "filter.prior_mean": ("prior_mean", float),
    "filter.prior_var": ("prior_var", float),
    "task.tier": ("tier", _choice(tasks.TIERS)),
    "task.prompt_count": ("prompt_count", int),
    "task.eval_count": ("eval_count", int),
    "policy.buckets": ("buckets", int),
    "policy.operand_bins": ("operand_bins", int),
    "policy.max_len": ("max_len", int),
}
FIELD_TO_KEY = {f: k for k, (f, _) in TRAIN_KEYS.items()}

# sweep axis -> TrainConfig field
SWEEP_AXES = {
    "estimator": "estimator",
    "fixed_b": "fixed_b",
    "group_size": "group_size",
    "kl_weight": "kl_weight",
    "learning_rate": "learning_rate",
    "q": "filter_q",
    "r": "filter_r",
    "seed": "seed",
    "tier": "tier",
}


def _axis_parser(axis: str) -> Callable[[str], Any]:
    name = SWEEP_AXES[axis]
    return TRAIN_KEYS[FIELD_TO_KEY[name]][1]


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    outdir: str = "runs"
    pairing: str = "question"
    preset: str | None = None
    sweep: dict[str, list[Any]] = field(default_factory=dict)

    def sweep_axes(self) -> list[str]:
        """Axis names in lexicographic order; this is the sweep iteration order."""
        return sorted(self.sweep)

    def with_overrides(self, **train_fields: Any) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, **train_fields))


def parse_config(text: str) -> ExperimentConfig:
    values: dict[str, Any] = {}
    value_lines: dict[str, tuple[int, str]] = {}
    sweep: dict[str, list[Any]] = {}
    outdir, pairing, preset = "runs", "question", None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(lineno, line, "expected 'key = value'")
        key, _, value = (part.strip() for part in line.partition("="))
        if not key:
            raise ConfigError(lineno, key, "empty key")
        if not value:
            raise ConfigError(lineno, key, "empty value")
        try:
            if key in TRAIN_KEYS:
                name, parse = TRAIN_KEYS[key]
                values[name] = parse(value)
                value_lines[name] = (lineno, key)
            elif key.startswith("sweep."):
                axis = key[len("sweep.") :]
                if axis not in SWEEP_AXES:
                    raise ConfigError(lineno, key, f"unknown sweep axis; expected one of {', '.join(sorted(SWEEP_AXES))}")
                parse = _axis_parser(axis)
                items = [item.strip() for item in value.split(",")]
                if any(not item for item in items):
                    raise ValueError("empty list item")
                sweep[axis] = [parse(item) for item in items]
            elif key == "output.dir":
                outdir = value
            elif key == "compare.pairing":
                pairing = _choice(PAIRINGS)(value)
            elif key == "preset":
                preset = _choice(tuple(PRESETS))(value)
            else:
                raise ConfigError(lineno, key, "unknown key")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(lineno, key, f"malformed value {value!r} ({exc})") from None
    merged = dict(PRESETS[preset]) if preset else {}
    merged.update(values)
    try:
        train = TrainConfig(**merged)
    except ValueError as exc:
        # name the line that set the offending field, if any
        bad = str(exc).split(":")[0].removeprefix("invalid ").strip()
        lineno, key = value_lines.get(bad, (0, FIELD_TO_KEY.get(bad, bad)))
        raise ConfigError(lineno, key, f"out of range ({exc})") from None
    for axis, items in sweep.items():
        for item in items:
            try:
                replace(train, **{SWEEP_AXES[axis]: item})
            except ValueError as exc:
                raise ConfigError(0, f"sweep.{axis}", f"out of range ({exc})") from None
    return ExperimentConfig(train, outdir, pairing, preset, sweep)


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = []
    if cfg.preset:
        lines.append(f"preset = {cfg.preset}")
    for f in fields(TrainConfig):
        lines.append(f"{FIELD_TO_KEY[f.name]} = {_fmt(getattr(cfg.train, f.name))}")
    lines.append(f"output.dir = {cfg.outdir}")
    lines.append(f"compare.pairing = {cfg.pairing}")
    for axis in cfg.sweep_axes():
        lines.append(f"sweep.{axis} = {', '.join(_fmt(v) for v in cfg.sweep[axis])}")
    return "\n".join(lines) + "\n"
