"""Memory graph: elements, typed associations, prior-knowledge statistics.

Every node of the memory is an :class:`Element`; associations between them
are :class:`Edge` records indexed by ``(src, kind)`` and ``(dst, kind)``.
Ids are assigned sequentially and never reused.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

from .errors import CycleViolation, LevelViolation, UnknownElement

DEFAULT_ALPHA = 0.1
DEFAULT_FLOOR = 0.05
RATE_SMOOTHING = 0.9


class ElementKind(str, enum.Enum):
    OBJECT = "Object"
    ACTION = "Action"
    ATTRIBUTE = "Attribute"
    RELATION = "Relation"
    VALUE = "Value"
    EVENT_CLASS = "EventClass"


class EdgeKind(str, enum.Enum):
    IS_A = "IsA"
    INSTANCE_OF = "InstanceOf"
    PART_OF = "PartOf"
    HAS = "Has"
    VALUE_OF = "ValueOf"
    ADMISSIBLE_ACTION = "AdmissibleAction"
    SYNONYM = "Synonym"
    ANTONYM = "Antonym"


SYMMETRIC_KINDS = frozenset({EdgeKind.SYNONYM, EdgeKind.ANTONYM})
HIERARCHY_KINDS = frozenset({EdgeKind.IS_A, EdgeKind.INSTANCE_OF})
# never pruned by forget/sparsify
STRUCTURAL_KINDS = frozenset({EdgeKind.INSTANCE_OF, EdgeKind.PART_OF})


@dataclass
class Stats:
    visits: int = 0
    uncertainty: float = 1.0
    update_rate: float = 0.0
    consolidation: float = 0.0

    def touch(self, alpha: float = DEFAULT_ALPHA, updated: bool = True) -> "Stats":
        self.visits += 1
        self.uncertainty = 1.0 / (1 + self.visits)
        self.consolidation = self.consolidation + alpha * (1.0 - self.consolidation)
        self.update_rate = RATE_SMOOTHING * self.update_rate + (1 - RATE_SMOOTHING) * float(updated)
        return self

    def check(self) -> None:
        assert self.visits >= 0
        assert 0.0 <= self.uncertainty <= 1.0
        assert 0.0 <= self.consolidation <= 1.0
        assert self.update_rate >= 0.0
        if self.visits == 0:
            assert self.uncertainty == 1.0 and self.consolidation == 0.0

    def copy(self) -> "Stats":
        return Stats(self.visits, self.uncertainty, self.update_rate, self.consolidation)


@dataclass
class Element:
    id: int
    kind: ElementKind
    name: str | None = None
    level: int = 0
    transient: bool = False
    stats: Stats = field(default_factory=Stats)

    @property
    def label(self) -> str:
        return self.name if self.name is not None else f"#{self.id}"


@dataclass
class Edge:
    """A typed directed association.

    ``value`` qualifies ``Has`` edges: the value element assigned to the
    attribute, or ``None`` for an attribute that is declared but unvalued.
    """

    id: int
    src: int
    dst: int
    kind: EdgeKind
    strength: float = 1.0
    stats: Stats = field(default_factory=Stats)
    value: int | None = None


class MemoryGraph:
    """Elements plus a multiset of typed edges.

    Mutating methods assume a single writer; readers may share a graph
    that is not being mutated.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA, floor: float = DEFAULT_FLOOR):
        self.alpha = alpha
        self.floor = floor
        self.elements: dict[int, Element] = {}
        self.edges: dict[int, Edge] = {}
        self._out: dict[tuple[int, EdgeKind], list[int]] = {}
        self._in: dict[tuple[int, EdgeKind], list[int]] = {}
        self.next_element_id = 0
        self.next_edge_id = 0
        # action id -> ActionBinding, method name -> MethodDef (see methods.py)
        self.bindings: dict[int, Any] = {}
        self.methods: dict[str, Any] = {}
        # ModelVersion records (see consolidation.py)
        self.versions: list[Any] = []
        # transient (temporal topmost-level) class ids of the current session
        self.session: set[int] = set()

    # -- elements -----------------------------------------------------

    def add_element(self, kind: ElementKind | str, name: str | None = None, level: int = 0,
                    transient: bool = False) -> int:
        kind = ElementKind(kind)
        if level < 0:
            raise ValueError("level must be >= 0")
        if name is not None and not name:
            raise ValueError("name must be nonempty when given")
        if transient and level < 1:
            raise ValueError("transient elements live at level >= 1")
        eid = self.next_element_id
        self.next_element_id += 1
        self.elements[eid] = Element(eid, kind, name, level, transient)
        return eid

    def element(self, eid: int) -> Element:
        try:
            return self.elements[eid]
        except (KeyError, TypeError):
            raise UnknownElement(f"no element {eid!r}") from None

    def __contains__(self, eid: object) -> bool:
        return eid in self.elements

    def find(self, name: str, kind: ElementKind | str | None = None,
             min_level: int | None = None, max_level: int | None = None) -> int | None:
        """Lowest id with this name (and kind/level filters), or None."""
        kind = ElementKind(kind) if kind is not None else None
        for eid in sorted(self.elements):
            el = self.elements[eid]
            if el.name != name:
                continue
            if kind is not None and el.kind != kind:
                continue
            if min_level is not None and el.level < min_level:
                continue
            if max_level is not None and el.level > max_level:
                continue
            return eid
        return None

    def intern(self, kind: ElementKind | str, name: str, level: int = 0) -> int:
        eid = self.find(name, kind, min_level=level, max_level=level)
        if eid is None:
            eid = self.add_element(kind, name, level)
        return eid

    def name_of(self, eid: int | None) -> str | None:
        if eid is None:
            return None
        return self.element(eid).label

    def remove_element(self, eid: int) -> None:
        self.element(eid)
        for edge in [e for e in self.edges.values() if eid in (e.src, e.dst) or e.value == eid]:
            self.remove_edge(edge.id)
        del self.elements[eid]
        self.session.discard(eid)
        self.bindings.pop(eid, None)

    # -- edges --------------------------------------------------------

    def add_edge(self, src: int, dst: int, kind: EdgeKind | str, strength: float = 1.0,
                 value: int | None = None, stats: Stats | None = None) -> int:
        kind = EdgeKind(kind)
        s, d = self.element(src), self.element(dst)
        if value is not None:
            self.element(value)
        if not 0.0 <= strength <= 1.0:
            raise ValueError("strength must lie in [0, 1]")
        if kind in HIERARCHY_KINDS and (src == dst or self._reaches(dst, src)):
            raise CycleViolation(f"{kind.value} {s.label} -> {d.label} closes a cycle")
        if kind is EdgeKind.IS_A:
            if s.kind != d.kind:
                raise LevelViolation(f"IsA joins {s.kind.value} to {d.kind.value}")
            if d.level < s.level:
                raise LevelViolation(f"IsA target level {d.level} below source level {s.level}")
        elif kind is EdgeKind.INSTANCE_OF and d.level != s.level + 1:
            raise LevelViolation(
                f"InstanceOf needs target level {s.level + 1}, got {d.level}")
        hid = self.next_edge_id
        self.next_edge_id += 1
        self.edges[hid] = Edge(hid, src, dst, kind, strength, stats or Stats(), value)
        self._out.setdefault((src, kind), []).append(hid)
        self._in.setdefault((dst, kind), []).append(hid)
        return hid

    def edge(self, hid: int) -> Edge:
        try:
            return self.edges[hid]
        except KeyError:
            raise UnknownElement(f"no edge {hid!r}") from None

    def remove_edge(self, hid: int) -> None:
        e = self.edges.pop(hid)
        self._out[(e.src, e.kind)].remove(hid)
        self._in[(e.dst, e.kind)].remove(hid)

    def out_edges(self, eid: int, kind: EdgeKind | str) -> list[Edge]:
        """Edges leaving ``eid``; symmetric kinds also report edges arriving."""
        kind = EdgeKind(kind)
        ids = list(self._out.get((eid, kind), ()))
        if kind in SYMMETRIC_KINDS:
            ids += self._in.get((eid, kind), ())
        return [self.edges[i] for i in sorted(ids)]

    def in_edges(self, eid: int, kind: EdgeKind | str) -> list[Edge]:
        kind = EdgeKind(kind)
        ids = list(self._in.get((eid, kind), ()))
        if kind in SYMMETRIC_KINDS:
            ids += self._out.get((eid, kind), ())
        return [self.edges[i] for i in sorted(ids)]

    def neighbors(self, eid: int, kinds: Iterable[EdgeKind | str], reverse: bool = False) -> list[int]:
        found = set()
        for kind in kinds:
            kind = EdgeKind(kind)
            edges = self.in_edges(eid, kind) if reverse else self.out_edges(eid, kind)
            for e in edges:
                if kind in SYMMETRIC_KINDS:
                    found.add(e.src if e.dst == eid else e.dst)
                else:
                    found.add(e.src if reverse else e.dst)
        found.discard(eid)
        return sorted(found)

    def _reaches(self, start: int, target: int) -> bool:
        stack, seen = [start], {start}
        while stack:
            cur = stack.pop()
            if cur == target:
                return True
            for kind in HIERARCHY_KINDS:
                for hid in self._out.get((cur, kind), ()):
                    nxt = self.edges[hid].dst
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return False

    # -- queries ------------------------------------------------------

    def closure_with_distance(self, eid: int, kinds: Iterable[EdgeKind | str],
                              reverse: bool = False) -> list[tuple[int, int]]:
        self.element(eid)
        kinds = [EdgeKind(k) for k in kinds]
        seen = {eid}
        out: list[tuple[int, int]] = []
        queue = deque([(eid, 0)])
        while queue:
            cur, dist = queue.popleft()
            for nxt in self.neighbors(cur, kinds, reverse):
                if nxt not in seen:
                    seen.add(nxt)
                    out.append((nxt, dist + 1))
                    queue.append((nxt, dist + 1))
        return out

    def closure(self, eid: int, kinds: Iterable[EdgeKind | str], reverse: bool = False) -> list[int]:
        """Breadth-first transitive closure over ``kinds``, excluding ``eid``.

        Neighbours are visited in ascending id order, so the result is
        deterministic.
        """
        return [x for x, _ in self.closure_with_distance(eid, kinds, reverse)]

    def ancestors(self, eid: int) -> list[int]:
        return self.closure(eid, (EdgeKind.INSTANCE_OF, EdgeKind.IS_A))

    def own_attributes(self, eid: int) -> list[tuple[int, int | None]]:
        """Own Has edges as (attribute, value); first edge per attribute wins."""
        seen: dict[int, int | None] = {}
        for e in self.out_edges(eid, EdgeKind.HAS):
            seen.setdefault(e.dst, e.value)
        return list(seen.items())

    def attributes_of(self, eid: int) -> list[tuple[int, int | None, int]]:
        """(attribute, value, provenance) triples, nearest definition first."""
        out = []
        seen: set[int] = set()
        for owner in [eid, *self.ancestors(eid)]:
            for attr, value in self.own_attributes(owner):
                if attr not in seen:
                    seen.add(attr)
                    out.append((attr, value, owner))
        return out

    def has_edge(self, eid: int, attr: int) -> Edge | None:
        for e in self.out_edges(eid, EdgeKind.HAS):
            if e.dst == attr:
                return e
        return None

    def set_attribute(self, eid: int, attr: int, value: int | None) -> int:
        e = self.has_edge(eid, attr)
        if e is None:
            return self.add_edge(eid, attr, EdgeKind.HAS, value=value)
        if value is not None:
            self.element(value)
        e.value = value
        return e.id

    def is_a(self, eid: int, cls: int) -> bool:
        return eid == cls or cls in self.ancestors(eid)

    # -- statistics ---------------------------------------------------

    def touch(self, eid: int, updated: bool = True) -> Stats:
        return self.element(eid).stats.touch(self.alpha, updated)

    def touch_edge(self, hid: int, updated: bool = True) -> Stats:
        return self.edge(hid).stats.touch(self.alpha, updated)

    def forget(self, decay: float) -> int:
        """Decay every consolidation by ``(1 - decay)``.

        Non-structural edges whose consolidation crosses below ``floor`` in
        this call are pruned. Elements are never removed here.
        """
        if not 0.0 < decay < 1.0:
            raise ValueError("decay must lie in the open interval (0, 1)")
        keep = 1.0 - decay
        for el in self.elements.values():
            el.stats.consolidation *= keep
        pruned = []
        for e in self.edges.values():
            before = e.stats.consolidation
            e.stats.consolidation = before * keep
            if (e.kind not in STRUCTURAL_KINDS and before >= self.floor
                    and e.stats.consolidation < self.floor):
                pruned.append(e.id)
        for hid in pruned:
            self.remove_edge(hid)
        return len(pruned)

    # -- integrity ----------------------------------------------------

    def iter_edges(self, kinds: Iterable[EdgeKind] | None = None) -> Iterator[Edge]:
        kinds = set(kinds) if kinds is not None else None
        for hid in sorted(self.edges):
            e = self.edges[hid]
            if kinds is None or e.kind in kinds:
                yield e

    def hierarchy_is_acyclic(self) -> bool:
        """Kahn topological sort over IsA/InstanceOf edges."""
        indeg = {eid: 0 for eid in self.elements}
        succ: dict[int, list[int]] = {eid: [] for eid in self.elements}
        for e in self.iter_edges(HIERARCHY_KINDS):
            indeg[e.dst] += 1
            succ[e.src].append(e.dst)
        ready = [eid for eid, d in indeg.items() if d == 0]
        done = 0
        while ready:
            cur = ready.pop()
            done += 1
            for nxt in succ[cur]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        return done == len(self.elements)

    def check_integrity(self) -> None:
        for e in self.edges.values():
            assert e.src in self.elements and e.dst in self.elements
            assert e.id in self._out[(e.src, e.kind)]
            assert e.id in self._in[(e.dst, e.kind)]
            e.stats.check()
        indexed = sum(len(v) for v in self._out.values())
        assert indexed == len(self.edges) == sum(len(v) for v in self._in.values())
        for el in self.elements.values():
            assert el.level >= 0
            assert not el.transient or el.level >= 1
            el.stats.check()
        assert self.hierarchy_is_acyclic()
