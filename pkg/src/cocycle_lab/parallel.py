"""Deterministic map over trajectory indices.

Each record depends only on its index, results come back in index order and
every reduction happens in the parent, so the worker count never changes a
single bit of the output.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence


class BudgetExceeded(RuntimeError):
    """A run would spend more simulated steps than its cap allows."""


def _run_chunk(fn: Callable[[int], Any], indices: Sequence[int]) -> list:
    return [fn(i) for i in indices]


def _chunks(indices: Sequence[int], n_chunks: int) -> list[Sequence[int]]:
    size = max(1, -(-len(indices) // n_chunks))
    return [indices[i : i + size] for i in range(0, len(indices), size)]


@dataclass
class Pool:
    """Parallel-map capability handed to estimators by the orchestrator."""

    workers: int = 1
    chunks_per_worker: int = 4

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("worker count must be at least 1")

    def map(self, fn: Callable[[int], Any], indices: Sequence[int] | int) -> list:
        if isinstance(indices, int):
            indices = range(indices)
        indices = list(indices)
        if self.workers == 1 or len(indices) < 2:
            return [fn(i) for i in indices]
        parts = _chunks(indices, self.workers * self.chunks_per_worker)
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=self.workers, mp_context=ctx) as ex:
            futures = [ex.submit(_run_chunk, fn, p) for p in parts]
            out: list = []
            for f in futures:
                out.extend(f.result())
        return out


SERIAL = Pool(1)


def resolve(pool: Pool | None) -> Pool:
    return SERIAL if pool is None else pool


@dataclass
class Budget:
    """Cap on simulated walk steps; charged up front so the verdict is deterministic."""

    max_steps: float = float("inf")
    spent: float = 0.0

    def charge(self, steps: float, what: str = "") -> None:
        if self.spent + steps > self.max_steps:
            raise BudgetExceeded(
                f"{what or 'run'} needs {steps:.3g} steps; {self.max_steps - self.spent:.3g} left of {self.max_steps:.3g}"
            )
        self.spent += steps


def charge(budget: Budget | None, steps: float, what: str = "") -> None:
    if budget is not None:
        budget.charge(steps, what)
