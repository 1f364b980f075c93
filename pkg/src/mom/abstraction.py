"""Grouping, instance/class abstraction and transient analogy classes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    CriterionUnsatisfied,
    MixedKinds,
    MixedLevels,
    TooFewMembers,
    UnknownAttributeInBinding,
    UnknownClass,
    WillMonotonicity,
)
from .kernel import EdgeKind, MemoryGraph
from .methods import admissible_actions


@dataclass(frozen=True)
class ClassSignature:
    common_attributes: frozenset[tuple[int, int | None]]
    common_actions: frozenset[int]
    member_count: int

    @property
    def attribute_ids(self) -> frozenset[int]:
        return frozenset(a for a, _ in self.common_attributes)


@dataclass(frozen=True)
class WillVariable:
    owner: int
    name: str
    significance: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.significance <= 1.0:
            raise ValueError("significance must lie in [0, 1]")


def _effective_attributes(graph: MemoryGraph, eid: int) -> dict[int, int | None]:
    return {a: v for a, v, _ in graph.attributes_of(eid)}


def _actions(graph: MemoryGraph, eid: int) -> set[int]:
    return {a for a, _ in admissible_actions(graph, eid)}


def intersect_signature(graph: MemoryGraph, members: Iterable[int], strip: Iterable[int] = (),
                        threshold: float = 1.0) -> tuple[dict[int, int | None], set[int]]:
    """Attributes and actions common to the members.

    With the default ``threshold`` of 1 this is the exact intersection; a
    lower threshold keeps anything possessed by at least that fraction of
    members. A value is kept only when every member carries the same one.
    """
    members = list(members)
    strip = set(strip)
    need = threshold * len(members)
    attr_maps = [_effective_attributes(graph, m) for m in members]
    counts: dict[int, int] = {}
    for m in attr_maps:
        for a in m:
            counts[a] = counts.get(a, 0) + 1
    attrs = {}
    for a in sorted(counts):
        if a in strip or counts[a] < need:
            continue
        values = {m.get(a) for m in attr_maps}
        attrs[a] = values.pop() if len(values) == 1 else None
    action_counts: dict[int, int] = {}
    for m in members:
        for act in _actions(graph, m):
            action_counts[act] = action_counts.get(act, 0) + 1
    actions = {a for a, c in action_counts.items() if c >= need and a not in strip}
    return attrs, actions


def _install(graph: MemoryGraph, cls: int, attrs: Mapping[int, int | None], actions: Iterable[int]) -> None:
    for a, v in attrs.items():
        graph.add_edge(cls, a, EdgeKind.HAS, value=v)
    for act in sorted(actions):
        graph.add_edge(cls, act, EdgeKind.ADMISSIBLE_ACTION)


def signature_of(graph: MemoryGraph, cls: int) -> ClassSignature:
    attrs = frozenset(graph.own_attributes(cls))
    actions = frozenset(e.dst for e in graph.out_edges(cls, EdgeKind.ADMISSIBLE_ACTION))
    members = {e.src for e in graph.in_edges(cls, EdgeKind.INSTANCE_OF)}
    members |= {e.src for e in graph.in_edges(cls, EdgeKind.IS_A)}
    return ClassSignature(attrs, actions, len(members))


def _uniform(graph: MemoryGraph, members: Sequence[int]) -> tuple:
    els = [graph.element(m) for m in members]
    kinds = {e.kind for e in els}
    if len(kinds) > 1:
        raise MixedKinds(f"members span kinds {sorted(k.value for k in kinds)}")
    levels = {e.level for e in els}
    if len(levels) > 1:
        raise MixedLevels(f"members span levels {sorted(levels)}")
    return kinds.pop(), levels.pop()


def abstract_instances(graph: MemoryGraph, members: Iterable[int], name: str | None = None,
                       threshold: float = 1.0) -> int:
    """Create the class one level above ``members``.

    The class holds the exact intersection of the members' attributes and
    admissible actions; each member gets an InstanceOf edge to it.
    """
    members = sorted(set(members))
    if len(members) < 2:
        raise TooFewMembers("abstraction needs at least two members")
    kind, level = _uniform(graph, members)
    attrs, actions = intersect_signature(graph, members, threshold=threshold)
    cls = graph.add_element(kind, name, level + 1)
    for m in members:
        graph.add_edge(m, cls, EdgeKind.INSTANCE_OF)
    _install(graph, cls, attrs, actions)
    return cls


def instantiate(graph: MemoryGraph, cls: int, bindings: Mapping[int, int] | None = None,
                name: str | None = None) -> int:
    """New instance one level below ``cls`` with the given attribute values.

    Unbound class attributes stay inherited (and unvalued unless the class
    carries a value).
    """
    if cls not in graph or graph.element(cls).level < 1:
        raise UnknownClass(f"{cls!r} is not a class")
    bindings = dict(bindings or {})
    known = {a for a, _, _ in graph.attributes_of(cls)}
    unknown = sorted(set(bindings) - known)
    if unknown:
        raise UnknownAttributeInBinding(
            f"{', '.join(graph.name_of(a) or str(a) for a in unknown)} not in {graph.name_of(cls)}")
    el = graph.element(cls)
    inst = graph.add_element(el.kind, name, el.level - 1)
    graph.add_edge(inst, cls, EdgeKind.INSTANCE_OF)
    for a in sorted(bindings):
        graph.add_edge(inst, a, EdgeKind.HAS, value=bindings[a])
    return inst


# -- grouping ----------------------------------------------------------------

@dataclass(frozen=True)
class Chronological:
    times: Mapping[int, float] | None = None


@dataclass(frozen=True)
class SharedAttribute:
    attribute: int


@dataclass(frozen=True)
class Explicit:
    pass


def group(graph: MemoryGraph, members: Sequence[int], criterion=Explicit(), name: str | None = None) -> int:
    if len(members) < 1:
        raise TooFewMembers("a group needs at least one member")
    for m in members:
        graph.element(m)
    kind, level = _uniform(graph, members)
    if isinstance(criterion, Chronological):
        if criterion.times is not None:
            missing = [m for m in members if m not in criterion.times]
            if missing:
                raise CriterionUnsatisfied(f"no time for {missing}")
            ordered = sorted(dict.fromkeys(members), key=lambda m: (criterion.times[m], m))
        else:
            ordered = list(dict.fromkeys(members))
    else:
        ordered = sorted(set(members))
    shared = None
    if isinstance(criterion, SharedAttribute):
        values = set()
        for m in ordered:
            attrs = _effective_attributes(graph, m)
            if criterion.attribute not in attrs or attrs[criterion.attribute] is None:
                raise CriterionUnsatisfied(f"{graph.name_of(m)} lacks {graph.name_of(criterion.attribute)}")
            values.add(attrs[criterion.attribute])
        if len(values) != 1:
            raise CriterionUnsatisfied(f"{graph.name_of(criterion.attribute)} differs across members")
        shared = values.pop()
    g = graph.add_element(kind, name, level)
    for m in ordered:
        graph.add_edge(m, g, EdgeKind.PART_OF)
    if shared is not None:
        graph.add_edge(g, criterion.attribute, EdgeKind.HAS, value=shared)
    return g


def group_members(graph: MemoryGraph, g: int) -> list[int]:
    """Members in stored order (chronological groups keep their time order)."""
    return [e.src for e in graph.in_edges(g, EdgeKind.PART_OF)]


# -- temporal topmost level --------------------------------------------------

def temporal_abstraction(graph: MemoryGraph, classes: Iterable[int], strip: Iterable[int] = (),
                         name: str | None = None) -> int:
    """Transient class over ``classes`` after stripping attributes/actions.

    The class sits one level above the highest member, is linked by IsA
    edges and lives only until :func:`clear_session`.
    """
    classes = sorted(set(classes))
    if len(classes) < 2:
        raise TooFewMembers("temporal abstraction needs at least two classes")
    kinds = {graph.element(c).kind for c in classes}
    if len(kinds) > 1:
        raise MixedKinds(f"members span kinds {sorted(k.value for k in kinds)}")
    attrs, actions = intersect_signature(graph, classes, strip)
    level = max(graph.element(c).level for c in classes) + 1
    cls = graph.add_element(kinds.pop(), name, level, transient=True)
    graph.session.add(cls)
    for c in classes:
        graph.add_edge(c, cls, EdgeKind.IS_A)
    _install(graph, cls, attrs, actions)
    return cls


def clear_session(graph: MemoryGraph) -> int:
    gone = sorted(graph.session)
    for cls in gone:
        if cls in graph:
            graph.remove_element(cls)
    graph.session.clear()
    return len(gone)


# -- consistency -------------------------------------------------------------

@dataclass(frozen=True)
class Conflict:
    kind: str  # "member-contradiction" | "diamond"
    attribute: int
    detail: str


def consistency_check(graph: MemoryGraph, candidate: int) -> list[Conflict]:
    """Conflicts a candidate class would introduce; empty means consistent."""
    conflicts: list[Conflict] = []
    promoted = dict(graph.own_attributes(candidate))
    members = sorted({e.src for e in graph.in_edges(candidate, EdgeKind.INSTANCE_OF)}
                     | {e.src for e in graph.in_edges(candidate, EdgeKind.IS_A)})
    for attr in sorted(promoted):
        value = promoted[attr]
        if value is None:
            continue
        for m in members:
            own = dict(graph.own_attributes(m))
            if attr in own and own[attr] is not None and own[attr] != value:
                conflicts.append(Conflict(
                    "member-contradiction", attr,
                    f"{graph.name_of(candidate)} promotes {graph.name_of(attr)}={graph.name_of(value)} "
                    f"but {graph.name_of(m)} has {graph.name_of(own[attr])}"))

    # nearest inherited definitions must agree
    by_attr: dict[int, tuple[int, dict[int, list[int]]]] = {}
    for anc, dist in graph.closure_with_distance(candidate, (EdgeKind.INSTANCE_OF, EdgeKind.IS_A)):
        for attr, value in graph.own_attributes(anc):
            if attr in promoted or value is None:
                continue
            best = by_attr.get(attr)
            if best is None or dist < best[0]:
                by_attr[attr] = (dist, {value: [anc]})
            elif dist == best[0]:
                best[1].setdefault(value, []).append(anc)
    for attr in sorted(by_attr):
        _, values = by_attr[attr]
        if len(values) > 1:
            parts = ", ".join(f"{graph.name_of(v)} via {','.join(graph.name_of(a) for a in owners)}"
                              for v, owners in sorted(values.items()))
            conflicts.append(Conflict("diamond", attr,
                                      f"{graph.name_of(candidate)} inherits {graph.name_of(attr)} as {parts}"))
    return conflicts


# -- will variables ----------------------------------------------------------

@dataclass
class WillRegistry:
    """Will variables attached to classes, kept monotone up IsA chains."""

    variables: dict[tuple[int, str], WillVariable] = field(default_factory=dict)

    def attach(self, graph: MemoryGraph, owner: int, name: str, significance: float) -> WillVariable:
        if graph.element(owner).level < 1:
            raise UnknownClass("will variables belong to classes")
        var = WillVariable(owner, name, significance)
        for anc in graph.closure(owner, [EdgeKind.IS_A]):
            other = self.variables.get((anc, name))
            if other is not None and other.significance < significance:
                raise WillMonotonicity(
                    f"{name}: {graph.name_of(anc)} has {other.significance} < {significance}")
        for desc in graph.closure(owner, [EdgeKind.IS_A], reverse=True):
            other = self.variables.get((desc, name))
            if other is not None and other.significance > significance:
                raise WillMonotonicity(
                    f"{name}: {graph.name_of(desc)} has {other.significance} > {significance}")
        self.variables[(owner, name)] = var
        return var

    def significance(self, owner: int, name: str) -> float | None:
        var = self.variables.get((owner, name))
        return var.significance if var else None
