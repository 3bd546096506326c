"""Append-only JSONL metrics and interquartile-mean aggregation."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class MetricsWriter:
    """One self-describing JSON record per line: {"step", "name", "value"}."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a" if append else "w")

    def log(self, step: int, name: str, value: float) -> None:
        rec = {"step": int(step), "name": name, "value": float(value)}
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self._fh.flush()

    def log_many(self, step: int, values: dict[str, float]) -> None:
        for name in sorted(values):
            self.log(step, name, values[name])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: str | Path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def iqm(scores: list[float] | np.ndarray) -> float:
    """Mean of the middle 50%: drop floor(n/4) lowest and highest scores."""
    arr = np.sort(np.asarray(scores, dtype=np.float64))
    n = arr.size
    if n == 0:
        raise ValueError("iqm of an empty list")
    drop = n // 4
    return float(arr[drop:n - drop].mean())


def iqm_ci(scores: list[float] | np.ndarray, bootstrap_n: int = 2000,
           rng: np.random.Generator | None = None,
           ) -> tuple[float, float, float]:
    """IQM with a percentile bootstrap confidence interval (2.5/97.5)."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("iqm_ci of an empty list")
    rng = rng or np.random.default_rng(0)
    point = iqm(arr)
    resampled = np.empty(bootstrap_n)
    for i in range(bootstrap_n):
        resampled[i] = iqm(arr[rng.integers(0, arr.size, size=arr.size)])
    lo, hi = np.percentile(resampled, [2.5, 97.5])
    return point, float(lo), float(hi)
