"""Working-memory focus with blended top-down/bottom-up priority."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .kernel import EdgeKind, MemoryGraph

DEFAULT_CAPACITY = 7
MIN_CAPACITY, MAX_CAPACITY = 5, 9


def blend(will_weight: float, internal: float, external: float) -> float:
    if not 0.0 <= will_weight <= 1.0:
        raise ValueError("will weight must lie in [0, 1]")
    if internal < 0 or external < 0 or not (math.isfinite(internal) and math.isfinite(external)):
        raise ValueError("priorities must be finite and non-negative")
    return will_weight * internal + (1.0 - will_weight) * external


@dataclass
class FocusSet:
    capacity: int = DEFAULT_CAPACITY
    priorities: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not MIN_CAPACITY <= self.capacity <= MAX_CAPACITY:
            raise ValueError(f"capacity must lie in [{MIN_CAPACITY}, {MAX_CAPACITY}]")

    def __len__(self) -> int:
        return len(self.priorities)

    def __contains__(self, eid: object) -> bool:
        return eid in self.priorities

    def entries(self) -> list[tuple[int, float]]:
        """Descending priority, ties by ascending id."""
        return sorted(self.priorities.items(), key=lambda kv: (-kv[1], kv[0]))

    def attend(self, graph: MemoryGraph, element: int, will_weight: float,
               internal: float, external: float) -> int | None:
        """Insert or re-prioritize ``element``; return whatever had to leave."""
        graph.element(element)
        self.priorities[element] = blend(will_weight, internal, external)
        if len(self.priorities) <= self.capacity:
            return None
        evicted = self.entries()[-1][0]
        del self.priorities[evicted]
        return evicted


def attend(focus: FocusSet, graph: MemoryGraph, element: int, will_weight: float,
           internal: float, external: float) -> tuple[FocusSet, int | None]:
    evicted = focus.attend(graph, element, will_weight, internal, external)
    return focus, evicted


class Operation(NamedTuple):
    name: str
    participants: tuple[int, ...]


def models_of(graph: MemoryGraph, element: int) -> tuple[int, ...]:
    """Direct classes of an instance; a class (or unclassed element) is its own model."""
    classes = sorted({e.dst for e in graph.out_edges(element, EdgeKind.INSTANCE_OF)})
    return tuple(classes) if classes else (element,)


def _participants(op) -> list[int]:
    return [p[1] if isinstance(p, tuple) else p for p in op.participants]


def focus_filter(focus: FocusSet, graph: MemoryGraph, operations: Iterable
                 ) -> tuple[list, list[tuple[object, tuple[int, ...]]]]:
    """Split operations into those whose models are all attended and the rest.

    Rejected operations come with the models that were missing. Nothing
    passes an empty focus.
    """
    permitted, rejected = [], []
    for op in operations:
        needed: list[int] = []
        for who in _participants(op):
            for m in models_of(graph, who):
                if m not in needed:
                    needed.append(m)
        missing = tuple(m for m in needed if m not in focus)
        if len(focus) and not missing:
            permitted.append(op)
        else:
            rejected.append((op, missing))
    return permitted, rejected
