"""Evaluation curves over rounds and their multi-seed aggregates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

KINDS = ("cum_regret", "avg_reward", "avg_reward_sum", "best_reward", "info_gain")


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Curve:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")

    def __len__(self) -> int:
        return self.values.size


def _rewards(records) -> np.ndarray:
    """Accept RoundRecords or plain floats."""
    return np.array([getattr(r, "expected_reward", r) for r in records], dtype=float)


def cumulative_regret(records, optimum: float) -> Curve:
    return Curve(np.cumsum(optimum - _rewards(records)), "cum_regret")


def average_reward(records) -> Curve:
    """Running mean of expected rewards: the sum so far divided by the round count."""
    r = _rewards(records)
    return Curve(np.cumsum(r) / np.arange(1, r.size + 1), "avg_reward")


def average_reward_sum(records) -> Curve:
    """The same running sum, left undivided."""
    return Curve(np.cumsum(_rewards(records)), "avg_reward_sum")


def best_reward(records) -> Curve:
    return Curve(np.maximum.accumulate(_rewards(records)) if len(records) else np.zeros(0), "best_reward")


def info_gain(result) -> Curve:
    return Curve(result.info_gain_curve(), "info_gain")


def aggregate_seeds(curves: Sequence[Curve] | Iterable[Curve]) -> tuple[Curve, Curve]:
    """Pointwise mean and standard error (sample std / sqrt(n)); one curve has zero error."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to aggregate")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise LengthMismatch(f"curve lengths differ: {sorted(lengths)}")
    kind = curves[0].kind
    M = np.stack([c.values for c in curves])
    mean = M.mean(axis=0)
    if M.shape[0] == 1:
        se = np.zeros_like(mean)
    else:
        se = M.std(axis=0, ddof=1) / np.sqrt(M.shape[0])
    return Curve(mean, kind), Curve(se, kind)
