"""Top-k priority buffer of promising morphologies with reevaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable

from .morphology import Morphology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BufferEntry:
    morphology: Morphology
    score: float
    evaluated_at_iteration: int
    episodes: int

    def __post_init__(self):
        if not (self.score == self.score and abs(self.score) != float("inf")):
            raise ValueError(f"score must be finite, got {self.score}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


def _sort_key(entry: BufferEntry):
    # Highest score first; deterministic tie-break on the content hash.
    return (-entry.score, entry.morphology.id_hex)


@dataclass(frozen=True)
class PriorityBuffer:
    capacity: int
    entries: tuple[BufferEntry, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if len(self.entries) > self.capacity:
            raise ValueError("more entries than capacity")
        ids = [e.morphology.id_hex for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate morphology ids in buffer")

    @property
    def best(self) -> BufferEntry | None:
        return self.entries[0] if self.entries else None

    @property
    def min_score(self) -> float | None:
        return self.entries[-1].score if self.entries else None

    def ids(self) -> tuple[str, ...]:
        return tuple(e.morphology.id_hex for e in self.entries)


def merge_topk(buffer: PriorityBuffer, fresh: Iterable[BufferEntry]) -> PriorityBuffer:
    """Top-k of the union of buffer and fresh entries (fresh score wins on
    duplicate ids; duplicate ids within fresh keep the highest score)."""
    pool: dict[str, BufferEntry] = {e.morphology.id_hex: e for e in buffer.entries}
    fresh_best: dict[str, BufferEntry] = {}
    for entry in fresh:
        key = entry.morphology.id_hex
        kept = fresh_best.get(key)
        if kept is None or entry.score > kept.score:
            fresh_best[key] = entry
    pool.update(fresh_best)
    ranked = sorted(pool.values(), key=_sort_key)
    return PriorityBuffer(capacity=buffer.capacity, entries=tuple(ranked[: buffer.capacity]))


def reevaluate(
    buffer: PriorityBuffer,
    evaluate: Callable[[Morphology], float],
    iteration: int,
    episodes: int | None = None,
) -> PriorityBuffer:
    """Rescore every entry with the callback; failing entries are dropped."""
    fresh: list[BufferEntry] = []
    for entry in buffer.entries:
        try:
            score = float(evaluate(entry.morphology))
        except Exception as exc:  # noqa: BLE001 - evaluator failures are data
            log.warning(
                "dropping %s from buffer: reevaluation failed (%s)",
                entry.morphology.id_hex,
                exc,
            )
            continue
        fresh.append(
            replace(
                entry,
                score=score,
                evaluated_at_iteration=iteration,
                episodes=episodes if episodes is not None else entry.episodes,
            )
        )
    ranked = sorted(fresh, key=_sort_key)
    return PriorityBuffer(capacity=buffer.capacity, entries=tuple(ranked))
