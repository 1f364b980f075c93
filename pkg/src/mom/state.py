"""Story state snapshots and change records."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple


class Change(NamedTuple):
    object: int
    attribute: int
    old: int | None
    new: int | None


@dataclass(frozen=True)
class StoryState:
    """Objects on stage at one event index and their attribute values.

    Treated as immutable: every transition builds a new instance.
    """

    present: frozenset[int] = frozenset()
    values: Mapping[tuple[int, int], int] = field(default_factory=dict)
    time: int = 0

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValueError("time must be >= 0")
        for obj, _ in self.values:
            if obj not in self.present:
                raise ValueError(f"value keyed by absent object {obj}")

    def get(self, obj: int, attr: int) -> int | None:
        return self.values.get((obj, attr))

    def key(self) -> tuple:
        """Hashable canonical form (used for structural comparison)."""
        return (self.time, tuple(sorted(self.present)), tuple(sorted(self.values.items())))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StoryState):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())
