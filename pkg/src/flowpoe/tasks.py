"""Regression tasks: context/target point sets with optional conditioning text."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractError

__all__ = ["RegressionTask", "task_to_record", "task_from_record",
           "write_tasks_jsonl", "read_tasks_jsonl"]


def _as_points(arr, name: str) -> np.ndarray:
    """Coerce to a float (n, d) array; 1-d input becomes a column of scalars."""
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ContractError(f"{name} must be a 1-d or 2-d array, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class RegressionTask:
    """A dataset of n observed (x, y) pairs plus m prediction locations.

    target_y, when present, holds held-out truth for evaluation.  text is an
    optional natural-language conditioning string passed through to prompt
    construction.
    """

    context_x: np.ndarray
    context_y: np.ndarray
    target_x: np.ndarray
    target_y: np.ndarray | None = None
    text: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "context_x", _as_points(self.context_x, "context_x"))
        object.__setattr__(self, "context_y", _as_points(self.context_y, "context_y"))
        object.__setattr__(self, "target_x", _as_points(self.target_x, "target_x"))
        if self.target_y is not None:
            object.__setattr__(self, "target_y", _as_points(self.target_y, "target_y"))
        n, m = len(self.context_x), len(self.target_x)
        if len(self.context_y) != n:
            raise ContractError(f"context_x has {n} points but context_y has {len(self.context_y)}")
        if m < 1:
            raise ContractError("a task needs at least one target location")
        if self.target_y is not None and len(self.target_y) != m:
            raise ContractError(f"target_x has {m} points but target_y has {len(self.target_y)}")
        if n > 0 and self.context_x.shape[1] != self.target_x.shape[1]:
            raise ContractError("context and target x dimensionalities differ")

    @property
    def n_context(self) -> int:
        return len(self.context_x)

    @property
    def n_target(self) -> int:
        return len(self.target_x)

    @property
    def x_dim(self) -> int:
        return self.target_x.shape[1]

    @property
    def y_dim(self) -> int:
        if self.n_context:
            return self.context_y.shape[1]
        if self.target_y is not None:
            return self.target_y.shape[1]
        return 1

    def joint_x(self) -> np.ndarray:
        """Context locations followed by target locations, shape (n+m, dx)."""
        if self.n_context == 0:
            return self.target_x
        return np.vstack([self.context_x, self.target_x])

    def joint_y(self) -> np.ndarray:
        """Context outputs followed by held-out target outputs (requires target_y)."""
        if self.target_y is None:
            raise ContractError("task has no target_y; joint_y is undefined")
        if self.n_context == 0:
            return self.target_y
        return np.vstack([self.context_y, self.target_y])


def task_to_record(task: RegressionTask, meta: dict | None = None) -> dict:
    rec = {
        "context_x": task.context_x.tolist(),
        "context_y": task.context_y.tolist(),
        "target_x": task.target_x.tolist(),
        "target_y": None if task.target_y is None else task.target_y.tolist(),
        "text": task.text,
    }
    if meta is not None:
        rec["meta"] = meta
    return rec


def task_from_record(rec: dict) -> RegressionTask:
    target_x = _as_points(rec["target_x"], "target_x")

    def _ctx(key: str, width: int) -> np.ndarray:
        vals = rec[key]
        if len(vals) == 0:
            return np.zeros((0, width))
        return _as_points(vals, key)

    return RegressionTask(
        context_x=_ctx("context_x", target_x.shape[1]),
        context_y=_ctx("context_y", 1),
        target_x=target_x,
        target_y=rec.get("target_y"),
        text=rec.get("text"),
    )


def write_tasks_jsonl(path, records: Iterable[dict]) -> int:
    """Write one JSON record per line; returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_tasks_jsonl(path) -> Iterator[tuple[RegressionTask, dict]]:
    """Yield (task, meta) pairs from a JSON-lines dataset file."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            yield task_from_record(rec), rec.get("meta", {})
