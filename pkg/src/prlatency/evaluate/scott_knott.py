"""Scott-Knott clustering with an effect-size gate.

Treatments are ordered by mean; the partition maximizing the between-group
sum of squares of treatment means is accepted only when Cohen's d between
the two sides' pooled observations is non-negligible (>= 0.2). Accepted
halves are partitioned recursively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import DegenerateError

NEGLIGIBLE_D = 0.2


@dataclass(frozen=True)
class SKGroups:
    groups: tuple[tuple[str, ...], ...]

    def rank_of(self, name: str) -> int:
        for rank, group in enumerate(self.groups, 1):
            if name in group:
                return rank
        raise KeyError(name)

    @property
    def ranks(self) -> dict[str, int]:
        return {n: r for r, g in enumerate(self.groups, 1) for n in g}

    def as_sets(self) -> list[set[str]]:
        return [set(g) for g in self.groups]

    def to_dict(self) -> dict:
        return {"groups": [list(g) for g in self.groups]}


def cohens_d(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = abs(a.mean() - b.mean())
    dof = len(a) + len(b) - 2
    if dof > 0:
        va = a.var(ddof=1) if len(a) > 1 else 0.0
        vb = b.var(ddof=1) if len(b) > 1 else 0.0
        sd = np.sqrt(((len(a) - 1) * va + (len(b) - 1) * vb) / dof)
    else:
        sd = 0.0
    if sd == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return float(diff / sd)


def _best_split(means: np.ndarray) -> int:
    grand = means.mean()
    best, cut = -1.0, 1
    for i in range(1, len(means)):
        left, right = means[:i], means[i:]
        bss = len(left) * (left.mean() - grand) ** 2 + len(right) * (right.mean() - grand) ** 2
        if bss > best:
            best, cut = bss, i
    return cut


def scott_knott_esd(treatments: Mapping[str, Sequence[float]], threshold: float = NEGLIGIBLE_D) -> SKGroups:
    if len(treatments) < 2:
        raise DegenerateError("Scott-Knott needs at least two treatments")
    lengths = {len(v) for v in treatments.values()}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("all treatments need the same, non-zero number of observations")
    obs = {n: np.asarray(v, dtype=float) for n, v in treatments.items()}
    names = sorted(obs, key=lambda n: (-obs[n].mean(), n))
    means = np.array([obs[n].mean() for n in names])

    groups: list[tuple[str, ...]] = []

    def recurse(lo: int, hi: int) -> None:
        if hi - lo < 2:
            groups.append(tuple(names[lo:hi]))
            return
        cut = lo + _best_split(means[lo:hi])
        left = np.concatenate([obs[n] for n in names[lo:cut]])
        right = np.concatenate([obs[n] for n in names[cut:hi]])
        if cohens_d(left, right) >= threshold:
            recurse(lo, cut)
            recurse(cut, hi)
        else:
            groups.append(tuple(names[lo:hi]))

    recurse(0, len(names))
    return SKGroups(tuple(groups))
