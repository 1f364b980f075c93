"""``mom`` command line.

Every command produces a list of records (plain dicts with a ``type``
key). ``--json`` prints one JSON object per line; the default human mode
formats the same records as text. The graph and ingested episodes persist
in a JSON snapshot between invocations.

Exit status: 0 on success, 1 on a domain error (printed with its error
code and source location), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from . import snapshot
from .abstraction import abstract_instances, consistency_check, temporal_abstraction
from .attention import DEFAULT_CAPACITY, FocusSet, Operation, focus_filter
from .consolidation import (
    collapse,
    induce_event_class,
    observe,
    recognize,
    repetition_boost,
    versions_from_episodes,
)
from .errors import DslSyntaxError, MomError, ReplayFailure, UnknownReference
from .kernel import DEFAULT_ALPHA, EdgeKind, MemoryGraph
from .lexer import TokenStream, tokenize
from .methods import Mode, admissible_actions
from .planner import (
    SCORERS,
    Will,
    build_hierarchy,
    design,
    format_state,
    grid_space,
    load_space,
    solve,
)
from .state import StoryState
from .story import Episode, diff_states, load_episodes, parse_story, state_at

DEFAULT_SNAPSHOT = "mom-snapshot.json"


@dataclass
class SessionConfig:
    seed: int = 0
    alpha: float = DEFAULT_ALPHA
    wm_capacity: int = DEFAULT_CAPACITY
    snapshot: str = DEFAULT_SNAPSHOT
    json: bool = False


class Session:
    def __init__(self, config: SessionConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        if os.path.exists(config.snapshot):
            self.graph, episodes = snapshot.load(config.snapshot)
        else:
            self.graph, episodes = MemoryGraph(alpha=config.alpha), []
        self.episodes: dict[str, Episode] = {ep.id: ep for ep in episodes}

    def save(self, path: str | None = None) -> None:
        snapshot.save(path or self.config.snapshot, self.graph, self.episodes.values())

    def resolve(self, name: str) -> int:
        eid = self.graph.find(name)
        if eid is None:
            if name.startswith("#") and name[1:].isdigit() and int(name[1:]) in self.graph:
                return int(name[1:])
            raise UnknownReference(f"no element named {name!r}")
        return eid

    def episode(self, eid: str) -> Episode:
        if eid not in self.episodes:
            raise UnknownReference(f"no episode {eid!r}")
        return self.episodes[eid]

    def label(self, eid: int | None) -> str | None:
        return None if eid is None else self.graph.name_of(eid)


# -- records -----------------------------------------------------------------

def state_record(s: Session, episode: str, state: StoryState) -> dict:
    values = {}
    for (o, a), v in sorted(state.values.items(), key=lambda kv: (s.label(kv[0][0]), s.label(kv[0][1]))):
        values[f"{s.label(o)}.{s.label(a)}"] = s.label(v)
    return {"type": "state", "episode": episode, "time": state.time,
            "present": sorted(s.label(p) for p in state.present), "values": values}


def element_record(s: Session, eid: int, mode: Mode) -> dict:
    g = s.graph
    el = g.element(eid)
    return {
        "type": "element", "id": eid, "name": el.name, "kind": el.kind.value, "level": el.level,
        "visits": el.stats.visits, "consolidation": el.stats.consolidation,
        "classes": [s.label(c) for c in g.ancestors(eid)],
        "attributes": [{"attribute": s.label(a), "value": s.label(v), "from": s.label(p)}
                       for a, v, p in g.attributes_of(eid)],
        "actions": [{"action": s.label(a), "score": score}
                    for a, score in admissible_actions(g, eid, mode)],
    }


def plan_record(plan, kind: str = "plan", **extra) -> dict:
    rec = {"type": kind, **extra,
           "start": format_state(plan.start), "length": len(plan), "cost": plan.cost,
           "actions": plan.actions, "path": [format_state(x) for x in plan.states],
           "expansions": plan.expansions, "backtracks": plan.backtracks,
           "widenings": plan.widenings, "fallback": plan.fallback}
    return rec


def trace_records(plan) -> list[dict]:
    out = []
    for line in plan.trace:
        level, state, action = line.split(" ")
        out.append({"type": "trace", "level": int(level), "state": state, "action": action})
    return out


# -- commands ----------------------------------------------------------------

def cmd_ingest(s: Session, args) -> list[dict]:
    out = []
    for path in args.files:
        text = Path(path).read_text(encoding="utf-8")
        ep = parse_story(text, s.graph)
        replaced = ep.id in s.episodes
        s.episodes[ep.id] = ep
        out.append({"type": "episode", "id": ep.id, "events": len(ep.events),
                    "objects": len(ep.objects), "replaced": replaced})
    s.save()
    return out


def cmd_replay(s: Session, args) -> list[dict]:
    ep = s.episode(args.episode)
    if args.diff:
        t1, t2 = args.diff
        d = diff_states(state_at(ep, s.graph, t1), state_at(ep, s.graph, t2))
        return [{"type": "diff", "episode": ep.id, "from": t1, "to": t2,
                 "changes": [{"object": s.label(o), "attribute": s.label(a),
                              "old": s.label(old), "new": s.label(new)} for o, a, old, new in d.changes],
                 "joined": sorted(s.label(x) for x in d.joined),
                 "left": sorted(s.label(x) for x in d.left)}]
    t = len(ep.events) if args.at is None else args.at
    return [state_record(s, ep.id, state_at(ep, s.graph, t))]


def cmd_query(s: Session, args) -> list[dict]:
    eid = s.resolve(args.name)
    rec = element_record(s, eid, Mode.CREATIVE if args.creative else Mode.NORMAL)
    if args.closure:
        reached = s.graph.closure(eid, [EdgeKind(args.closure)], reverse=args.reverse)
        rec["closure"] = [s.label(x) for x in reached]
    return [rec]


def _names(text: str) -> list[str]:
    return [x for x in text.split(",") if x]


def cmd_abstract(s: Session, args) -> list[dict]:
    members = [s.resolve(n) for n in _names(args.members)]
    if args.temporal:
        strip = [s.resolve(n) for n in _names(args.strip or "")]
        cls = temporal_abstraction(s.graph, members, strip, name=args.name)
    else:
        cls = abstract_instances(s.graph, members, name=args.name)
    conflicts = consistency_check(s.graph, cls)
    rec = element_record(s, cls, Mode.NORMAL)
    rec["type"] = "class"
    rec["transient"] = s.graph.element(cls).transient
    rec["conflicts"] = [{"kind": c.kind, "attribute": s.label(c.attribute), "detail": c.detail}
                        for c in conflicts]
    s.save()
    return [rec]


def cmd_consolidate(s: Session, args) -> list[dict]:
    paths = sorted(Path(args.episodes).glob("*.story"))
    if not paths:
        raise ReplayFailure(f"no .story files in {args.episodes}")
    episodes = load_episodes(paths, s.graph)
    for ep in episodes:
        s.episodes[ep.id] = ep
    out = []
    templates = induce_event_class(episodes, s.graph, args.min_support)
    for i, t in enumerate(templates):
        out.append({"type": "template", "index": i,
                    "actions": [s.label(a) for a in t.action_sequence],
                    "roles": [{"position": r.position, "role": r.role, "class": s.label(r.cls)}
                              for r in t.roles],
                    "support": t.support, "pattern": t.describe(s.graph)})
    for ep in episodes:
        for ti, start in recognize(templates, ep.events, s.graph):
            out.append({"type": "match", "episode": ep.id, "template": ti, "start": start + 1})
        repetition_boost(s.graph, ep)
    known = {v.id for v in s.graph.versions}
    s.graph.versions += [v for v in versions_from_episodes(episodes) if v.id not in known]
    if s.graph.versions:
        for ep in episodes:
            observe(s.graph.versions, ep, s.graph)
        collapse(s.graph.versions, args.dominance)
    for v in s.graph.versions:
        out.append({"type": "version", "id": v.id, "for": v.evidence_for, "against": v.evidence_against,
                    "score": v.score, "alive": v.alive})
    s.save()
    return out


def _cell(text: str) -> tuple[int, int]:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y, got {text!r}") from None
    return x, y


def _random_grid(s: Session, size: str, density: float):
    try:
        w, h = (int(v) for v in size.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {size!r}") from None
    cells = [(x, y) for x in range(w) for y in range(h) if (x, y) not in ((0, 0), (w - 1, h - 1))]
    blocked = s.rng.sample(cells, int(round(density * w * h)))
    return grid_space(w, h, blocked), [(0, 0)], [(w - 1, h - 1)]


def cmd_plan(s: Session, args) -> list[dict]:
    if args.random:
        ground, start, goal = _random_grid(s, args.random, args.density)
    else:
        sf = load_space(args.space)
        ground, start, goal = sf.ground, sf.start, sf.goal
    if not start or not goal:
        raise UnknownReference("the space needs start and goal lines")
    plan = solve(build_hierarchy(ground, args.levels), Will(frozenset(start), frozenset(goal)), trace=args.trace)
    return trace_records(plan) + [plan_record(plan, goal=[format_state(g) for g in goal])]


def cmd_design(s: Session, args) -> list[dict]:
    sf = load_space(args.space)
    goal = args.goal or sf.goal
    if sf.ground.is_grid:
        goal = [_cell(g) if isinstance(g, str) else g for g in goal]
    start, plan = design(build_hierarchy(sf.ground, args.levels), goal, SCORERS[args.scorer])
    return [plan_record(plan, "design", scorer=args.scorer, goal=[format_state(g) for g in goal])]


def _focus_record(s: Session, focus: FocusSet, step: int, evicted) -> dict:
    return {"type": "focus", "step": step,
            "entries": [[s.label(e), p] for e, p in focus.entries()],
            "evicted": s.label(evicted)}


def cmd_attend(s: Session, args) -> list[dict]:
    focus = FocusSet(args.wm)
    out = []
    for i, item in enumerate(args.items, start=1):
        try:
            name, internal, external = item.rsplit(":", 2)
            internal, external = float(internal), float(external)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected NAME:INTERNAL:EXTERNAL, got {item!r}") from None
        evicted = focus.attend(s.graph, s.resolve(name), args.w, internal, external)
        out.append(_focus_record(s, focus, i, evicted))
    return out


def run_steps(s: Session, lines: Iterable[str], capacity: int, w: float, emit) -> None:
    """Drive a focus set from ``attend NAME I E`` and ``filter ACTION NAME...`` lines."""
    focus = FocusSet(capacity)
    step = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        ts = TokenStream(tokenize(line, lineno), lineno, len(line))
        if ts.at_end():
            continue
        verb = ts.expect_ident("'attend' or 'filter'")
        step += 1
        if verb.text == "attend":
            name = ts.expect_ident("element name")
            nums = []
            for _ in range(2):
                tok = ts.next("priority")
                if tok.kind != "number":
                    raise ts.error(f"expected a number, found {tok.text!r}", tok)
                nums.append(float(tok.text))
            if not ts.at_end():
                raise ts.error(f"unexpected {ts.peek().text!r}")
            try:
                eid = s.resolve(name.text)
            except UnknownReference as exc:
                raise UnknownReference(exc.message, line=lineno, column=name.column) from None
            evicted = focus.attend(s.graph, eid, w, nums[0], nums[1])
            emit(_focus_record(s, focus, step, evicted))
        elif verb.text == "filter":
            action = ts.expect_ident("operation name").text
            who = []
            while not ts.at_end():
                tok = ts.expect_ident("participant name")
                try:
                    who.append(s.resolve(tok.text))
                except UnknownReference as exc:
                    raise UnknownReference(exc.message, line=lineno, column=tok.column) from None
            permitted, rejected = focus_filter(focus, s.graph, [Operation(action, tuple(who))])
            emit({"type": "filter", "step": step, "operation": action,
                  "permitted": bool(permitted),
                  "missing": [s.label(m) for m in (rejected[0][1] if rejected else ())]})
        else:
            raise DslSyntaxError(f"unknown command {verb.text!r}", line=lineno, column=verb.column)


def cmd_step(s: Session, args) -> list[dict]:
    run_steps(s, args.input, args.wm, args.w, lambda rec: emit(rec, s.config.json, sys.stdout))
    return []


def cmd_snapshot(s: Session, args) -> list[dict]:
    if args.action == "save":
        s.save(args.path)
        target = args.path
    else:
        s.graph, episodes = snapshot.load(args.path)
        s.episodes = {ep.id: ep for ep in episodes}
        s.save()
        target = s.config.snapshot
    return [{"type": "snapshot", "action": args.action, "path": target,
             "elements": len(s.graph.elements), "edges": len(s.graph.edges),
             "episodes": len(s.episodes)}]


# -- output ------------------------------------------------------------------

def _plain(v) -> str:
    if isinstance(v, list):
        return ",".join(_plain(x) for x in v)
    if isinstance(v, dict):
        return "{" + " ".join(f"{k}={_plain(x)}" for k, x in v.items()) + "}"
    if v is None:
        return "-"
    return str(v)


def human(rec: dict) -> str:
    kind = rec["type"]
    if kind == "trace":
        return f"{rec['level']} {rec['state']} {rec['action']}"
    if kind == "state":
        lines = [f"state {rec['episode']} t={rec['time']}",
                 f"present: {', '.join(rec['present'])}"]
        lines += [f"  {k} = {v}" for k, v in rec["values"].items()]
        return "\n".join(lines)
    if kind == "element" or kind == "class":
        lines = [f"{kind} {rec['name'] or '#' + str(rec['id'])} (id {rec['id']}, "
                 f"{rec['kind']}, level {rec['level']})"]
        for key in ("classes", "closure"):
            if key in rec:
                lines.append(f"  {key}: {', '.join(rec[key]) or '-'}")
        for a in rec["attributes"]:
            lines.append(f"  has {a['attribute']} = {_plain(a['value'])} (from {a['from']})")
        for a in rec["actions"]:
            lines.append(f"  can {a['action']} ({a['score']:.4f})")
        for c in rec.get("conflicts", ()):
            lines.append(f"  conflict {c['kind']}: {c['detail']}")
        return "\n".join(lines)
    if kind == "focus":
        entries = " ".join(f"{name}:{p:.4g}" for name, p in rec["entries"])
        return f"focus step={rec['step']} [{entries}] evicted={_plain(rec['evicted'])}"
    # grid states contain commas, so paths get their own separator
    fields = " ".join(f"{k}={'>'.join(v) if k == 'path' and isinstance(v, list) else _plain(v)}"
                      for k, v in rec.items() if k != "type")
    return f"{kind} {fields}"


def emit(rec: dict, as_json: bool, out: TextIO) -> None:
    out.write((json.dumps(rec) if as_json else human(rec)) + "\n")
    out.flush()


# -- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _capacity(text: str) -> int:
    n = int(text)
    if not 5 <= n <= 9:
        raise argparse.ArgumentTypeError("working memory capacity must lie in 5..9")
    return n


def _weight(text: str) -> float:
    w = float(text)
    if not 0.0 <= w <= 1.0:
        raise argparse.ArgumentTypeError("will weight must lie in [0, 1]")
    return w


def _support(text: str) -> int:
    n = int(text)
    if n < 2:
        raise argparse.ArgumentTypeError("min-support must be >= 2")
    return n


def _dominance(text: str) -> float:
    d = float(text)
    if not d > 1:
        raise argparse.ArgumentTypeError("dominance must exceed 1")
    return d


def _levels(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("levels must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    # global options are accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for every random choice (default: 0)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="emit one JSON record per line")
    common.add_argument("--snapshot", default=argparse.SUPPRESS,
                        help=f"snapshot path (default: $MOM_SNAPSHOT or {DEFAULT_SNAPSHOT})")
    common.add_argument("--alpha", type=float, default=argparse.SUPPRESS,
                        help=f"consolidation step for a new graph (default: {DEFAULT_ALPHA})")
    p = _Parser(prog="mom", description="Semantic memory, stories, consolidation and planning.",
                parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub_add = sub.add_parser
    sub.add_parser = lambda name, **kw: sub_add(name, parents=[common], **kw)

    c = sub.add_parser("ingest", help="parse story files into the memory")
    c.add_argument("files", nargs="+")
    c.set_defaults(fn=cmd_ingest)

    c = sub.add_parser("replay", help="reconstruct an episode's state")
    c.add_argument("episode")
    c.add_argument("--at", type=int, help="event index (default: last)")
    c.add_argument("--diff", type=int, nargs=2, metavar=("T1", "T2"))
    c.set_defaults(fn=cmd_replay)

    c = sub.add_parser("query", help="show an element, its attributes and admissible actions")
    c.add_argument("name")
    c.add_argument("--creative", action="store_true", help="rank actions least-expected first")
    c.add_argument("--closure", choices=[k.value for k in EdgeKind], help="also list the closure over one edge kind")
    c.add_argument("--reverse", action="store_true", help="follow --closure edges backwards")
    c.set_defaults(fn=cmd_query)

    c = sub.add_parser("abstract", help="create a class over existing elements")
    c.add_argument("--members", required=True, help="comma-separated element names")
    c.add_argument("--name", help="name of the new class")
    c.add_argument("--temporal", action="store_true", help="transient class over classes")
    c.add_argument("--strip", help="attributes/actions to drop (with --temporal)")
    c.set_defaults(fn=cmd_abstract)

    c = sub.add_parser("consolidate", help="induce event classes and score model versions")
    c.add_argument("--episodes", required=True, help="directory of .story files")
    c.add_argument("--min-support", type=_support, default=2)
    c.add_argument("--dominance", type=_dominance, default=2.0)
    c.set_defaults(fn=cmd_consolidate)

    c = sub.add_parser("plan", help="coarse-to-fine plan in a state space")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--space", help="state-space file")
    src.add_argument("--random", metavar="WxH", help="seeded random grid from (0,0) to (W-1,H-1)")
    c.add_argument("--density", type=float, default=0.2, help="blocked fraction for --random")
    c.add_argument("--levels", type=_levels, default=3)
    c.add_argument("--trace", action="store_true", help="print every expansion as 'level state action'")
    c.set_defaults(fn=cmd_plan)

    c = sub.add_parser("design", help="pick the best start for a goal, then plan")
    c.add_argument("--space", required=True)
    c.add_argument("--goal", action="append", help="goal state (repeatable; default: the file's goals)")
    c.add_argument("--scorer", choices=sorted(SCORERS), default="far")
    c.add_argument("--levels", type=_levels, default=1)
    c.set_defaults(fn=cmd_design)

    c = sub.add_parser("attend", help="fill a focus set from NAME:INTERNAL:EXTERNAL items")
    c.add_argument("items", nargs="*")
    c.add_argument("--wm", type=_capacity, default=DEFAULT_CAPACITY)
    c.add_argument("--w", type=_weight, default=0.5, help="weight of the internal (will) priority")
    c.set_defaults(fn=cmd_attend)

    c = sub.add_parser("step", help="read 'attend NAME I E' / 'filter OP NAME...' lines from stdin")
    c.add_argument("--wm", type=_capacity, default=DEFAULT_CAPACITY)
    c.add_argument("--w", type=_weight, default=0.5)
    c.set_defaults(fn=cmd_step, input=None)

    c = sub.add_parser("snapshot", help="copy the session snapshot to or from a file")
    c.add_argument("action", choices=["save", "load"])
    c.add_argument("path")
    c.set_defaults(fn=cmd_snapshot)
    return p


GLOBAL_DEFAULTS = {"seed": 0, "json": False, "snapshot": None, "alpha": DEFAULT_ALPHA}


def _error_record(exc: MomError) -> dict:
    rec = {"type": "error", "code": exc.code, "message": exc.message}
    if exc.line is not None:
        rec["line"] = exc.line
        rec["column"] = exc.column
    event = getattr(exc, "event_index", None)
    if event is not None:
        rec["event"] = event
    return rec


def main(argv: Sequence[str] | None = None, stdin: TextIO | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # shared parent actions must keep SUPPRESS defaults, so fill them in here
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value)
    path = args.snapshot or os.environ.get("MOM_SNAPSHOT") or DEFAULT_SNAPSHOT
    config = SessionConfig(seed=args.seed, alpha=args.alpha, snapshot=path, json=args.json)
    if args.command == "step":
        args.input = stdin if stdin is not None else sys.stdin
    try:
        session = Session(config)
        records = args.fn(session, args)
    except MomError as exc:
        if config.json:
            emit(_error_record(exc), True, sys.stdout)
        loc = exc.location()
        sys.stderr.write(f"error {exc.code}{' at ' + loc if loc else ''}: {exc.message}\n")
        return 1
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"mom: error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error IOError: {exc.filename}: {exc.strerror}\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(f"error InvalidValue: {exc}\n")
        return 1
    for rec in records:
        emit(rec, config.json, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
