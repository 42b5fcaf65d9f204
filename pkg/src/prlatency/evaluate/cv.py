"""Expanding-window time-series splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LeakageError, TooFewRowsError


@dataclass(frozen=True)
class CVPlan:
    k: int
    n_rows: int
    splits: tuple[tuple[range, range], ...]

    def __iter__(self):
        return iter(self.splits)

    def __len__(self):
        return len(self.splits)


def time_series_split(n_rows: int, k: int = 5, instants=None) -> CVPlan:
    """Cut time-ordered rows into ``k + 1`` contiguous blocks; split ``i`` trains
    on blocks ``1..i`` and tests on block ``i + 1``.

    The first block absorbs the remainder. When ``instants`` is given, block
    boundaries move forward past rows sharing a timestamp so no instant
    straddles train and test; a split whose test block empties is dropped.
    """
    if k < 2:
        raise TooFewRowsError(f"need k >= 2 folds, got {k}")
    if n_rows < k + 1:
        raise TooFewRowsError(f"{n_rows} rows cannot form {k + 1} time blocks")
    size = n_rows // (k + 1)
    bounds = [0, size + n_rows % (k + 1)]
    for _ in range(k):
        bounds.append(bounds[-1] + size)
    if instants is not None:
        t = np.asarray(instants)
        if len(t) != n_rows:
            raise ValueError("instants must have one entry per row")
        for j in range(1, k + 1):
            b = max(bounds[j], bounds[j - 1])
            while 0 < b < n_rows and t[b] == t[b - 1]:
                b += 1
            bounds[j] = b
    splits = tuple(
        (range(0, bounds[i]), range(bounds[i], bounds[i + 1]))
        for i in range(1, k + 1)
        if bounds[i] < bounds[i + 1] and bounds[i] > 0
    )
    return CVPlan(k, n_rows, splits)


def check_no_leakage(instants, train_rows, test_rows) -> None:
    """Raise ``LeakageError`` unless every train instant precedes every test instant."""
    t = np.asarray(instants)
    train = t[np.asarray(list(train_rows), dtype=np.int64)]
    test = t[np.asarray(list(test_rows), dtype=np.int64)]
    if len(train) and len(test) and not train.max() < test.min():
        raise LeakageError(f"train instant {train.max()} is not before test instant {test.min()}")
