"""JSON snapshots of a memory graph and its ingested episodes.

Ids are preserved exactly. Transient classes and every edge touching one
are left out, so a reloaded graph holds only consolidated structure.
"""

from __future__ import annotations

import json
from typing import Iterable

from .consolidation import ModelVersion
from .errors import MomError, SnapshotError
from .kernel import EdgeKind, ElementKind, MemoryGraph, Stats
from .methods import bind_action, format_method, parse_method, register_method
from .state import StoryState
from .story import ClassDecl, Episode, EventRecord, ObjDecl, RelDecl, Rule, RuleDecl

FORMAT_VERSION = 1


def _stats(s: Stats) -> list:
    return [s.visits, s.uncertainty, s.update_rate, s.consolidation]


def _unstats(raw) -> Stats:
    visits, uncertainty, rate, consolidation = raw
    return Stats(int(visits), float(uncertainty), float(rate), float(consolidation))


def _rule(rule: Rule) -> dict:
    return {"if": [list(a) for a in rule.condition], "then": [list(a) for a in rule.effect]}


def _unrule(raw: dict) -> Rule:
    return Rule(tuple(tuple(a) for a in raw["if"]), tuple(tuple(a) for a in raw["then"]))


def _decl(d) -> list:
    if isinstance(d, ClassDecl):
        return ["class", d.cls, d.parent]
    if isinstance(d, ObjDecl):
        return ["obj", d.obj, d.cls, [list(a) for a in d.attrs]]
    if isinstance(d, RelDecl):
        return ["rel", d.src, d.kind.value, d.dst, d.strength]
    if isinstance(d, RuleDecl):
        return ["rule", d.version, _rule(d.rule)]
    return list(d)  # ("method", name)


def _undecl(raw: list):
    tag = raw[0]
    if tag == "class":
        return ClassDecl(raw[1], raw[2])
    if tag == "obj":
        return ObjDecl(raw[1], raw[2], tuple(tuple(a) for a in raw[3]))
    if tag == "rel":
        return RelDecl(raw[1], EdgeKind(raw[2]), raw[3], raw[4])
    if tag == "rule":
        return RuleDecl(raw[1], _unrule(raw[2]))
    if tag == "method":
        return ("method", raw[1])
    raise SnapshotError(f"unknown declaration {tag!r}")


def episode_to_json(ep: Episode) -> dict:
    return {
        "id": ep.id,
        "initial": {
            "present": sorted(ep.initial.present),
            "values": [[o, a, v] for (o, a), v in sorted(ep.initial.values.items())],
            "time": ep.initial.time,
        },
        "events": [{"time": ev.time, "action": ev.action,
                    "participants": [list(p) for p in ev.participants],
                    "effects": [list(e) for e in ev.effects]} for ev in ep.events],
        "declarations": [_decl(d) for d in ep.declarations],
    }


def episode_from_json(raw: dict) -> Episode:
    init = raw["initial"]
    initial = StoryState(frozenset(init["present"]), {(o, a): v for o, a, v in init["values"]},
                         init["time"])
    events = tuple(EventRecord(e["time"], e["action"],
                               tuple((r, i) for r, i in e["participants"]),
                               tuple(tuple(x) for x in e["effects"])) for e in raw["events"])
    return Episode(raw["id"], initial, events, tuple(_undecl(d) for d in raw["declarations"]))


def to_json(graph: MemoryGraph, episodes: Iterable[Episode] = ()) -> dict:
    transient = {eid for eid, el in graph.elements.items() if el.transient}
    elements = [{"id": el.id, "kind": el.kind.value, "name": el.name, "level": el.level,
                 "stats": _stats(el.stats)}
                for eid, el in sorted(graph.elements.items()) if eid not in transient]
    edges = [{"id": e.id, "src": e.src, "dst": e.dst, "kind": e.kind.value, "strength": e.strength,
              "value": e.value, "stats": _stats(e.stats)}
             for hid, e in sorted(graph.edges.items())
             if not transient & {e.src, e.dst, e.value}]
    methods = [format_method(m, graph) for _, m in sorted(graph.methods.items())]
    bindings = [[action, b.method.name] for action, b in sorted(graph.bindings.items())
                if action not in transient]
    versions = [{"id": v.id, "rules": [_rule(r) for r in v.rules], "for": v.evidence_for,
                 "against": v.evidence_against, "alive": v.alive} for v in graph.versions]
    return {
        "format_version": FORMAT_VERSION,
        "alpha": graph.alpha,
        "floor": graph.floor,
        "counters": {"element": graph.next_element_id, "edge": graph.next_edge_id},
        "elements": elements,
        "edges": edges,
        "methods": methods,
        "bindings": bindings,
        "versions": versions,
        "episodes": [episode_to_json(ep) for ep in episodes],
    }


def from_json(data: dict) -> tuple[MemoryGraph, list[Episode]]:
    try:
        return _from_json(data)
    except MomError as exc:
        if isinstance(exc, SnapshotError):
            raise
        raise SnapshotError(f"inconsistent snapshot: {exc}") from exc
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc!r}") from exc


def _from_json(data: dict) -> tuple[MemoryGraph, list[Episode]]:
    version = data.get("format_version") if isinstance(data, dict) else None
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported snapshot format {version!r}")
    graph = MemoryGraph(float(data["alpha"]), float(data["floor"]))
    for raw in sorted(data["elements"], key=lambda r: r["id"]):
        if raw["id"] < graph.next_element_id:
            raise SnapshotError(f"duplicate element id {raw['id']}")
        graph.next_element_id = raw["id"]
        eid = graph.add_element(ElementKind(raw["kind"]), raw["name"], raw["level"])
        graph.elements[eid].stats = _unstats(raw["stats"])
    for raw in sorted(data["edges"], key=lambda r: r["id"]):
        if raw["id"] < graph.next_edge_id:
            raise SnapshotError(f"duplicate edge id {raw['id']}")
        graph.next_edge_id = raw["id"]
        graph.add_edge(raw["src"], raw["dst"], EdgeKind(raw["kind"]), raw["strength"],
                       raw["value"], _unstats(raw["stats"]))
    counters = data["counters"]
    if counters["element"] < graph.next_element_id or counters["edge"] < graph.next_edge_id:
        raise SnapshotError("id counters lag behind stored ids")
    graph.next_element_id = counters["element"]
    graph.next_edge_id = counters["edge"]

    pending = list(data["methods"])
    # methods may call each other; parse until no progress
    while pending:
        left = []
        for text in pending:
            try:
                register_method(graph, parse_method(text, graph))
            except MomError:
                left.append(text)
        if len(left) == len(pending):
            register_method(graph, parse_method(left[0], graph))
        pending = left
    for action, name in data["bindings"]:
        if name not in graph.methods:
            raise SnapshotError(f"binding to unknown method {name!r}")
        bind_action(graph, action, graph.methods[name])
    if graph.next_element_id != counters["element"]:
        raise SnapshotError("method text introduced elements missing from the snapshot")
    graph.versions = [ModelVersion(v["id"], tuple(_unrule(r) for r in v["rules"]), v["for"],
                                   v["against"], v["alive"]) for v in data["versions"]]
    episodes = [episode_from_json(raw) for raw in data.get("episodes", [])]
    return graph, episodes


def dumps(graph: MemoryGraph, episodes: Iterable[Episode] = ()) -> str:
    return json.dumps(to_json(graph, episodes), indent=1, sort_keys=True) + "\n"


def loads(text: str) -> tuple[MemoryGraph, list[Episode]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"not JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    return from_json(data)


def save(path, graph: MemoryGraph, episodes: Iterable[Episode] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(graph, episodes))


def load(path) -> tuple[MemoryGraph, list[Episode]]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SnapshotError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def graphs_equal(a: MemoryGraph, b: MemoryGraph) -> bool:
    """Identical ids, attributes, stats and method text (transients ignored)."""
    return to_json(a) == to_json(b)

