"""Tasks, offloading plans and the end-to-end delay of an offloaded task."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import SPEED_OF_LIGHT


@dataclass
class Task:
    id: int
    delta: float          # bits
    c: float              # CPU cycles per bit
    tau_max: float        # seconds
    legitimate: bool = True
    admitted: bool = True

    def __post_init__(self):
        if not (self.delta > 0 and self.c > 0 and self.tau_max > 0):
            raise ValueError(f"task {self.id}: delta, c and tau_max must be positive")

    @property
    def demand(self) -> float:
        """Cycles per second of deadline, the rejection ordering key."""
        return self.delta * self.c / self.tau_max


@dataclass
class OffloadPlan:
    task_ids: list[int]
    B: np.ndarray
    F: np.ndarray
    mu: float
    rejected: set[int] = field(default_factory=set)
    diagnostic: str = ""

    def assignment(self) -> dict[int, int]:
        """Task id -> LEO index for every placed task."""
        if self.B.size == 0:
            return {}
        return {tid: int(np.argmax(row)) for tid, row in zip(self.task_ids, self.B)}


def propagation_delay(d_ak) -> float | np.ndarray:
    d = np.asarray(d_ak, dtype=float)
    if np.any(d <= 0):
        raise ValueError("propagation distance must be positive")
    t = d / SPEED_OF_LIGHT
    return float(t) if t.ndim == 0 else t


def task_delays(B, F, delta, c, r_access, r_backhaul, tau_prop, overhead=0.0) -> np.ndarray:
    """Total delay of every task under assignment ``B`` and CPU shares ``F``.

    ``overhead`` is an extra per-task delay added to the access leg (used for
    authentication schemes that cost time above the physical layer).
    """
    B = np.asarray(B, float)
    F = np.asarray(F, float)
    delta = np.asarray(delta, float)
    load = B.T @ delta                                     # bits routed to each LEO
    with np.errstate(divide="ignore", invalid="ignore"):
        compute = np.where(B > 0, (delta * np.asarray(c, float))[:, None] / F, 0.0)
    if np.any((B > 0) & ~(F > 0)):
        raise ValueError("assigned task has no CPU share")
    per_leo = load / np.asarray(r_backhaul, float) + 2 * np.asarray(tau_prop, float)
    return (delta / np.asarray(r_access, float) + overhead
            + B @ per_leo + np.sum(B * compute, axis=1))


def total_delay(i: int, B, F, delta, c, r_access, r_backhaul, tau_prop, overhead=0.0) -> float:
    """Delay of task ``i`` (row index into ``B``)."""
    return float(task_delays(B, F, delta, c, r_access, r_backhaul, tau_prop, overhead)[i])


def relative_delay(tau, tau_max, admitted=True):
    """alpha * tau / tau_max; unadmitted tasks contribute zero."""
    r = np.where(np.asarray(admitted, bool), np.asarray(tau, float) / np.asarray(tau_max, float), 0.0)
    return float(r) if r.ndim == 0 else r


TASK_FIELDS = ("id", "delta", "c", "tau_max", "legitimate")


def save_tasks(tasks: list[Task], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TASK_FIELDS)
        for t in tasks:
            w.writerow([t.id, repr(t.delta), repr(t.c), repr(t.tau_max), int(t.legitimate)])


def load_tasks(path) -> list[Task]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [Task(int(r["id"]), float(r["delta"]), float(r["c"]), float(r["tau_max"]),
                 r["legitimate"].strip().lower() in ("1", "true", "yes"))
            for r in rows]
