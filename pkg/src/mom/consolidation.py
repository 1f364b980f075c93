"""Consolidation dynamics.

Competing model versions gather evidence from episodes and collapse once
one of them clearly dominates; recurring action sequences are induced as
event-class templates; weak associations are sparsified; repetition
strengthens whatever an episode touches.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import MomError, ReplayFailure
from .kernel import HIERARCHY_KINDS, STRUCTURAL_KINDS, EdgeKind, MemoryGraph
from .methods import Mode, admissible_actions, decode_value
from .state import StoryState
from .story import Episode, EventRecord, Rule, replay, replay_with_changes

MIN_EVIDENCE = 10


@dataclass
class ModelVersion:
    id: str
    rules: tuple[Rule, ...] = ()
    evidence_for: int = 0
    evidence_against: int = 0
    alive: bool = True

    @property
    def total(self) -> int:
        return self.evidence_for + self.evidence_against

    @property
    def score(self) -> float:
        # Laplace-smoothed support
        return (self.evidence_for + 1) / (self.total + 2)

    def kill(self) -> None:
        self.alive = False


def versions_from_episodes(episodes: Iterable[Episode]) -> list[ModelVersion]:
    """Collect ``rule`` declarations into versions, in first-seen order."""
    rules: dict[str, list[Rule]] = {}
    for ep in episodes:
        for decl in ep.rules:
            bucket = rules.setdefault(decl.version, [])
            if decl.rule not in bucket:
                bucket.append(decl.rule)
    return [ModelVersion(vid, tuple(rs)) for vid, rs in rules.items()]


def _holds(graph: MemoryGraph, state: StoryState, assignments) -> bool:
    # an unset attribute matches an explicit ``absent``
    for obj, attr, value in assignments:
        if obj not in state.present:
            return False
        have = state.get(obj, attr)
        if have != value and not (decode_value(graph, have) is None and decode_value(graph, value) is None):
            return False
    return True


def _replay(episode: Episode, graph: MemoryGraph) -> list[StoryState]:
    try:
        return replay(episode, graph)
    except ReplayFailure:
        raise
    except MomError as exc:
        raise ReplayFailure(f"episode {episode.id}: {exc}") from exc


def rule_outcome(graph: MemoryGraph, rule: Rule, states: Sequence[StoryState],
                 horizon: int = 1) -> bool | None:
    """None if the condition never fires before the last state; else whether the effect followed."""
    for t in range(len(states) - 1):
        if _holds(graph, states[t], rule.condition):
            window = states[t + 1:t + 1 + horizon]
            return any(_holds(graph, s, rule.effect) for s in window)
    return None


def observe(versions: list[ModelVersion], episode: Episode, graph: MemoryGraph,
            horizon: int = 1) -> list[ModelVersion]:
    """Score every alive version's rules against one episode (in place)."""
    states = _replay(episode, graph)
    for v in versions:
        if not v.alive:
            continue
        for rule in v.rules:
            outcome = rule_outcome(graph, rule, states, horizon)
            if outcome is True:
                v.evidence_for += 1
            elif outcome is False:
                v.evidence_against += 1
    return versions


def collapse(versions: list[ModelVersion], dominance: float,
             min_evidence: int = MIN_EVIDENCE) -> list[ModelVersion]:
    """Kill every version some rival out-scores by ``dominance``; return survivors.

    Both versions must have ``min_evidence`` observations before a kill.
    The top scorer can never be dominated, so at least one version survives.
    """
    if dominance <= 1:
        raise ValueError("dominance must exceed 1")
    alive = [v for v in versions if v.alive]
    if not alive:
        raise ValueError("collapse needs at least one alive version")
    doomed = []
    for v in alive:
        if v.total < min_evidence:
            continue
        if any(w is not v and w.total >= min_evidence and w.score >= dominance * v.score
               for w in alive):
            doomed.append(v)
    for v in doomed:
        v.kill()
    return [v for v in versions if v.alive]


# -- event-class induction ---------------------------------------------------

@dataclass(frozen=True, order=True)
class RoleSlot:
    position: int
    role: str
    cls: int | None  # None = no common class


@dataclass(frozen=True)
class EventClassTemplate:
    action_sequence: tuple[int, ...]
    roles: tuple[RoleSlot, ...]
    support: int

    def __post_init__(self) -> None:
        if not self.action_sequence:
            raise ValueError("template needs at least one action")

    def role_names(self, position: int) -> tuple[str, ...]:
        return tuple(sorted(r.role for r in self.roles if r.position == position))

    def matches(self, events: Sequence[EventRecord], graph: MemoryGraph) -> bool:
        if len(events) != len(self.action_sequence):
            return False
        for i, (ev, action) in enumerate(zip(events, self.action_sequence)):
            if ev.action != action or tuple(sorted(ev.roles)) != self.role_names(i):
                return False
        for slot in self.roles:
            who = events[slot.position].roles[slot.role]
            if slot.cls is not None and not graph.is_a(who, slot.cls):
                return False
        return True

    def describe(self, graph: MemoryGraph) -> str:
        parts = []
        for i, action in enumerate(self.action_sequence):
            slots = sorted((r for r in self.roles if r.position == i), key=lambda r: r.role)
            inner = ", ".join(f"{r.role}:{graph.name_of(r.cls) if r.cls is not None else 'Any'}"
                              for r in slots)
            parts.append(f"{graph.name_of(action)}({inner})")
        return " ; ".join(parts)


def least_common_class(graph: MemoryGraph, elements: Iterable[int]) -> int | None:
    """Shared ancestor minimizing the farthest member's distance (ties: lower id)."""
    dists = [dict(graph.closure_with_distance(e, HIERARCHY_KINDS)) for e in sorted(set(elements))]
    if not dists:
        return None
    common = set(dists[0]).intersection(*dists[1:])
    if not common:
        return None
    return min(common, key=lambda c: (max(d[c] for d in dists), sum(d[c] for d in dists), c))


def induce_event_class(episodes: Sequence[Episode], graph: MemoryGraph,
                       min_support: int = 2) -> list[EventClassTemplate]:
    """Templates for maximal contiguous event patterns seen ``min_support`` times.

    A pattern is the sequence of (action, role names) signatures; support
    counts every occurrence across all episodes. A pattern is maximal when
    no one-event extension of it is itself frequent.
    """
    if min_support < 2:
        raise ValueError("min_support must be >= 2")
    seqs = [[ev.signature() for ev in ep.events] for ep in episodes]
    frequent: dict[tuple, list[tuple[int, int]]] = {}
    length = 1
    candidates: set[tuple] | None = None
    while True:
        occ: dict[tuple, list[tuple[int, int]]] = {}
        for ei, seq in enumerate(seqs):
            for start in range(len(seq) - length + 1):
                window = tuple(seq[start:start + length])
                if candidates is not None and window[:-1] not in candidates:
                    continue
                occ.setdefault(window, []).append((ei, start))
        level = {w: o for w, o in occ.items() if len(o) >= min_support}
        if not level:
            break
        frequent.update(level)
        candidates = set(level)
        length += 1

    templates = []
    for pattern, occurrences in frequent.items():
        extended = any(len(other) == len(pattern) + 1 and (other[1:] == pattern or other[:-1] == pattern)
                       for other in frequent)
        if extended:
            continue
        slots = []
        for pos, (_, role_names) in enumerate(pattern):
            for role in role_names:
                who = [episodes[ei].events[start + pos].roles[role] for ei, start in occurrences]
                slots.append(RoleSlot(pos, role, least_common_class(graph, who)))
        templates.append(EventClassTemplate(tuple(a for a, _ in pattern), tuple(sorted(slots)),
                                            len(occurrences)))

    def order(t: EventClassTemplate):
        names = tuple(graph.name_of(a) or "" for a in t.action_sequence)
        roles = tuple((r.position, r.role, graph.name_of(r.cls) or "") for r in t.roles)
        return (-t.support, names, roles, t.action_sequence)

    return sorted(templates, key=order)


def recognize(templates: Sequence[EventClassTemplate], events: Sequence[EventRecord],
              graph: MemoryGraph) -> list[tuple[int, int]]:
    """(template index, start position) for every template match in ``events``."""
    hits = []
    for ti, tpl in enumerate(templates):
        n = len(tpl.action_sequence)
        for start in range(len(events) - n + 1):
            if tpl.matches(events[start:start + n], graph):
                hits.append((ti, start))
    return hits


# -- graph maintenance -------------------------------------------------------

def sparsify(graph: MemoryGraph, floor: float) -> int:
    if not 0.0 <= floor <= 1.0:
        raise ValueError("floor must lie in [0, 1]")
    doomed = [e.id for e in graph.iter_edges()
              if e.kind not in STRUCTURAL_KINDS and e.stats.consolidation < floor]
    for hid in doomed:
        graph.remove_edge(hid)
    return len(doomed)


def episode_references(episode: Episode, graph: MemoryGraph) -> tuple[set[int], set[int]]:
    """Elements and edges an episode exercises."""
    _, changes = _replay_changes(episode, graph)
    elements: set[int] = set()
    edges: set[int] = set()
    for ev, chs in zip(episode.events, changes):
        roles = ev.roles
        elements.add(ev.action)
        elements.update(roles.values())
        for obj, attr, value in ev.effects:
            elements.update((obj, attr, value))
        for ch in chs:
            elements.update(x for x in (ch.object, ch.attribute, ch.new) if x is not None)
            e = graph.has_edge(ch.object, ch.attribute)
            if e is not None:
                edges.add(e.id)
        for who in roles.values():
            for owner in [who, *graph.ancestors(who)]:
                hit = [e for e in graph.out_edges(owner, EdgeKind.ADMISSIBLE_ACTION) if e.dst == ev.action]
                if hit:
                    edges.add(hit[0].id)
                    break
    return elements, edges


def _replay_changes(episode: Episode, graph: MemoryGraph):
    try:
        return replay_with_changes(episode, graph)
    except MomError as exc:
        raise ReplayFailure(f"episode {episode.id}: {exc}") from exc


def repetition_boost(graph: MemoryGraph, episode: Episode) -> MemoryGraph:
    """Touch every element and edge the episode references, once each."""
    elements, edges = episode_references(episode, graph)
    for eid in sorted(elements):
        graph.touch(eid)
    for hid in sorted(edges):
        graph.touch_edge(hid)
    return graph


# -- exploration schedule ----------------------------------------------------

@dataclass
class Schedule:
    epsilon0: float = 0.5
    half_life: float = 20.0
    t: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if self.half_life <= 0:
            raise ValueError("half_life must be positive")

    def exploration_rate(self, t: float | None = None) -> float:
        t = self.t if t is None else t
        return self.epsilon0 * 2.0 ** (-t / self.half_life)


def choose_action(graph: MemoryGraph, element: int, schedule: Schedule,
                  rng: random.Random) -> int | None:
    """Pick the top action, from the creative ranking while still exploring."""
    explore = rng.random() < schedule.exploration_rate()
    schedule.t += 1
    ranked = admissible_actions(graph, element, Mode.CREATIVE if explore else Mode.NORMAL)
    return ranked[0][0] if ranked else None
