from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np


def logsumexp(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    top = a.max()
    return float(top + np.log(np.exp(a - top).sum()))


def boltzmann(weights: Iterable[int], beta: float) -> np.ndarray:
    """Normalised e^{-beta w} computed in log space."""
    logw = -beta * np.asarray(list(weights), dtype=float)
    return np.exp(logw - logsumexp(logw))


@dataclass
class Distribution:
    """Exact probabilities over packed states, in a fixed enumeration order."""

    states: list[int]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self._index = {s: i for i, s in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, state: int) -> float:
        i = self._index.get(state)
        return 0.0 if i is None else float(self.probs[i])

    def index(self, state: int) -> int:
        return self._index[state]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.states, self.probs.tolist()))

    def restrict(self, keep: Iterable[int]) -> "Distribution":
        keep = [s for s in self.states if s in set(keep)]
        p = np.array([self[s] for s in keep])
        return Distribution(keep, p / p.sum())

    def tv(self, other: Mapping[int, float] | "Distribution") -> float:
        other = other.as_dict() if isinstance(other, Distribution) else dict(other)
        keys = set(self.states) | set(other)
        return 0.5 * sum(abs(self[k] - other.get(k, 0.0)) for k in keys)


def empirical(samples: Iterable[int]) -> dict[int, float]:
    vals, counts = np.unique(np.fromiter(samples, dtype=np.int64), return_counts=True)
    total = counts.sum()
    return {int(v): c / total for v, c in zip(vals, counts)}


def tv_between(p: Mapping[int, float], q: Mapping[int, float]) -> float:
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))
