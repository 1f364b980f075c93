"""Story DSL, episode replay and state diffs.

A story file is line oriented (grammar in ``docs/grammar.ebnf``)::

    episode david
    class Place
    obj David : Person
    obj ball : Toy location=bed
    rel floor PartOf room
    method put(actor:Person, object:Any, location:Place) -> object.location=location
    act 1 enter actor=David location=room => David.location=room

Parsing is transactional: the graph is only updated when the whole file
parses and resolves.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import DslSyntaxError, DuplicateObject, MomError, ReplayFailure, UnknownReference
from .kernel import EdgeKind, ElementKind, MemoryGraph
from .lexer import Token, TokenStream, tokenize
from .methods import BUILTIN_PRESENCE, apply_action, bind_action, format_method, parse_method
from .state import Change, StoryState

Assignment = tuple[int, int, int]  # (object, attribute, value)


class Rule(NamedTuple):
    condition: tuple[Assignment, ...]
    effect: tuple[Assignment, ...]


@dataclass(frozen=True)
class EventRecord:
    time: int
    action: int
    participants: tuple[tuple[str, int], ...]
    effects: tuple[Assignment, ...] = ()

    @property
    def roles(self) -> dict[str, int]:
        return dict(self.participants)

    def signature(self) -> tuple[int, tuple[str, ...]]:
        return self.action, tuple(sorted(r for r, _ in self.participants))


@dataclass(frozen=True)
class ClassDecl:
    cls: int
    parent: int | None = None


@dataclass(frozen=True)
class ObjDecl:
    obj: int
    cls: int
    attrs: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class RelDecl:
    src: int
    kind: EdgeKind
    dst: int
    strength: float = 1.0


@dataclass(frozen=True)
class RuleDecl:
    version: str
    rule: Rule


@dataclass(frozen=True)
class Episode:
    id: str
    initial: StoryState
    events: tuple[EventRecord, ...] = ()
    declarations: tuple = field(default=(), compare=True)

    @property
    def objects(self) -> tuple[int, ...]:
        return tuple(d.obj for d in self.declarations if isinstance(d, ObjDecl))

    @property
    def rules(self) -> tuple[RuleDecl, ...]:
        return tuple(d for d in self.declarations if isinstance(d, RuleDecl))

    def __post_init__(self) -> None:
        for i, ev in enumerate(self.events, start=1):
            if ev.time != i:
                raise ValueError(f"event times must run 1..n, found {ev.time} at position {i}")


# -- parsing -----------------------------------------------------------------

@dataclass
class _Stmt:
    keyword: str
    ts: TokenStream
    line: int
    head: Token


def _split(text: str) -> list[_Stmt]:
    stmts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = tokenize(raw, lineno)
        if not toks:
            continue
        head = toks[0]
        if head.kind != "ident":
            raise DslSyntaxError(f"expected a keyword, found {head.text!r}", line=lineno,
                                 column=head.column)
        stmts.append(_Stmt(head.text, TokenStream(toks, lineno, len(raw)), lineno, head))
    return stmts


class _Parser:
    def __init__(self, graph: MemoryGraph):
        self.g = graph
        self.objects: dict[str, int] = {}
        self.decls: list = []
        self.events: list[EventRecord] = []
        self.values: dict[tuple[int, int], int] = {}

    # name resolution

    def obj_ref(self, tok: Token) -> int:
        if tok.kind == "ident":
            if tok.text in self.objects:
                return self.objects[tok.text]
            eid = self.g.find(tok.text, ElementKind.OBJECT, max_level=0)
            if eid is not None:
                return eid
        raise UnknownReference(f"undeclared object {tok.text!r}", line=tok.line, column=tok.column)

    def any_ref(self, tok: Token) -> int:
        if tok.kind == "ident":
            if tok.text in self.objects:
                return self.objects[tok.text]
            eid = self.g.find(tok.text)
            if eid is not None:
                return eid
        raise UnknownReference(f"undeclared element {tok.text!r}", line=tok.line, column=tok.column)

    def value(self, ts: TokenStream) -> int:
        tok = ts.next("value")
        if tok.kind == "number":
            if "." in tok.text:
                raise ts.error("values are identifiers, integers or 'absent'", tok)
            return self.g.intern(ElementKind.VALUE, str(int(tok.text)))
        if tok.kind != "ident":
            raise ts.error(f"expected a value, found {tok.text!r}", tok)
        if tok.text in ("absent", "true", "false"):
            return self.g.intern(ElementKind.VALUE, tok.text)
        if tok.text in self.objects:
            return self.objects[tok.text]
        eid = self.g.find(tok.text)
        return eid if eid is not None else self.g.intern(ElementKind.VALUE, tok.text)

    def klass(self, name: str) -> int:
        cls = self.g.find(name, ElementKind.OBJECT, min_level=1)
        if cls is None:
            cls = self.g.add_element(ElementKind.OBJECT, name, 1)
        return cls

    def assignment(self, ts: TokenStream) -> Assignment:
        obj = self.obj_ref(ts.expect_ident("object name"))
        ts.expect(".")
        attr = self.g.intern(ElementKind.ATTRIBUTE, ts.expect_ident("attribute name").text)
        ts.expect("=")
        return obj, attr, self.value(ts)

    def end(self, ts: TokenStream) -> None:
        if not ts.at_end():
            raise ts.error(f"unexpected {ts.peek().text!r}")

    # statements

    def do_class(self, ts: TokenStream) -> None:
        name = ts.expect_ident("class name").text
        parent = None
        tok = ts.peek()
        if tok is not None and tok.text == "isa":
            ts.next()
            parent = self.klass(ts.expect_ident("class name").text)
        self.end(ts)
        cls = self.klass(name)
        if parent is not None and parent not in self.g.closure(cls, [EdgeKind.IS_A]):
            self.g.add_edge(cls, parent, EdgeKind.IS_A)
        self.decls.append(ClassDecl(cls, parent))

    def declare_obj(self, ts: TokenStream) -> tuple[int, int]:
        tok = ts.expect_ident("object name")
        if tok.text in self.objects:
            raise DuplicateObject(f"object {tok.text!r} declared twice", line=tok.line,
                                  column=tok.column)
        ts.expect(":")
        cls = self.klass(ts.expect_ident("class name").text)
        obj = self.g.find(tok.text, ElementKind.OBJECT, max_level=0)
        if obj is None:
            obj = self.g.add_element(ElementKind.OBJECT, tok.text, 0)
        if not any(e.dst == cls for e in self.g.out_edges(obj, EdgeKind.INSTANCE_OF)):
            self.g.add_edge(obj, cls, EdgeKind.INSTANCE_OF)
        self.objects[tok.text] = obj
        return obj, cls

    def obj_attrs(self, ts: TokenStream, obj: int, cls: int) -> None:
        attrs = []
        while not ts.at_end():
            attr = self.g.intern(ElementKind.ATTRIBUTE, ts.expect_ident("attribute name").text)
            ts.expect("=")
            value = self.value(ts)
            self.g.set_attribute(obj, attr, value)
            self.values[(obj, attr)] = value
            attrs.append((attr, value))
        self.decls.append(ObjDecl(obj, cls, tuple(attrs)))

    def do_rel(self, ts: TokenStream) -> None:
        src = self.any_ref(ts.expect_ident("element name"))
        ktok = ts.expect_ident("edge kind")
        try:
            kind = EdgeKind(ktok.text)
        except ValueError:
            raise ts.error(f"unknown edge kind {ktok.text!r}", ktok) from None
        dst = self.any_ref(ts.expect_ident("element name"))
        strength = 1.0
        if not ts.at_end():
            strength = float(ts.next("strength").text)
        self.end(ts)
        if not any(e.dst == dst or (e.src == dst and e.dst == src)
                   for e in self.g.out_edges(src, kind)):
            self.g.add_edge(src, dst, kind, strength)
        self.decls.append(RelDecl(src, kind, dst, strength))

    def do_method(self, ts: TokenStream) -> None:
        ts.pos = 0
        method = parse_method(ts, self.g, elements=self.objects)
        action = self.g.intern(ElementKind.ACTION, method.name, 1)
        bind_action(self.g, action, method)
        self.decls.append(("method", method.name))

    def do_rule(self, ts: TokenStream) -> None:
        version = ts.expect_ident("version name").text
        cond = []
        while not ts.accept("=>"):
            cond.append(self.assignment(ts))
        effect = [self.assignment(ts)]
        while not ts.at_end():
            effect.append(self.assignment(ts))
        if not cond:
            raise ts.error("rule needs at least one condition")
        self.decls.append(RuleDecl(version, Rule(tuple(cond), tuple(effect))))

    def do_act(self, ts: TokenStream) -> None:
        ttok = ts.next("event time")
        if ttok.kind != "number" or "." in ttok.text:
            raise ts.error("event time must be an integer", ttok)
        expected = len(self.events) + 1
        if int(ttok.text) != expected:
            raise ts.error(f"expected event time {expected}, found {ttok.text}", ttok)
        verb = ts.expect_ident("verb")
        action = self.g.intern(ElementKind.ACTION, verb.text, 1)
        roles: list[tuple[str, int]] = []
        while not ts.at_end() and ts.peek().text != "=>":
            role = ts.expect_ident("role name")
            if any(r == role.text for r, _ in roles):
                raise ts.error(f"role {role.text!r} given twice", role)
            ts.expect("=")
            roles.append((role.text, self.obj_ref(ts.expect_ident("object name"))))
        effects = []
        if ts.accept("=>"):
            effects.append(self.assignment(ts))
            while not ts.at_end():
                effects.append(self.assignment(ts))
        self.events.append(EventRecord(expected, action, tuple(roles), tuple(effects)))
        # experience: the actor's classes may perform this verb
        if roles:
            actor = dict(roles).get("actor", roles[0][1])
            for e in self.g.out_edges(actor, EdgeKind.INSTANCE_OF):
                if not any(h.dst == action for h in self.g.out_edges(e.dst, EdgeKind.ADMISSIBLE_ACTION)):
                    self.g.add_edge(e.dst, action, EdgeKind.ADMISSIBLE_ACTION)

    def run(self, text: str) -> Episode:
        stmts = _split(text)
        if not stmts or stmts[0].keyword != "episode":
            line = stmts[0].line if stmts else 1
            raise DslSyntaxError("story must start with 'episode <id>'", line=line, column=1)
        first = stmts[0].ts
        first.next()
        episode_id = first.expect_ident("episode id").text
        self.end(first)

        handlers = {"class": self.do_class, "rel": self.do_rel, "method": self.do_method,
                    "rule": self.do_rule, "act": self.do_act}
        pending_attrs = []
        # objects first so values and relations may refer forward
        for st in stmts[1:]:
            self._guard(st, lambda st=st: self._pre(st, pending_attrs))
        for st in stmts[1:]:
            if st.keyword == "obj":
                ts, obj, cls = pending_attrs.pop(0)
                self._guard(st, lambda: self.obj_attrs(ts, obj, cls))
            elif st.keyword in handlers:
                self._guard(st, lambda st=st: handlers[st.keyword](st.ts))

        initial = StoryState(frozenset(self._initially_present()),
                             {k: v for k, v in self.values.items()}, 0)
        return Episode(episode_id, initial, tuple(self.events), tuple(self.decls))

    def _pre(self, st: _Stmt, pending: list) -> None:
        st.ts.next()
        if st.keyword == "obj":
            obj, cls = self.declare_obj(st.ts)
            pending.append((st.ts, obj, cls))
        elif st.keyword == "episode":
            raise DslSyntaxError("only one 'episode' line per story", line=st.line, column=1)
        elif st.keyword not in ("class", "rel", "method", "rule", "act"):
            raise DslSyntaxError(f"unknown keyword {st.keyword!r}", line=st.line, column=1)
        elif st.keyword == "class":
            # classes are registered up front so obj lines may use them
            save = st.ts.pos
            self.do_class(st.ts)
            self.decls.pop()
            st.ts.pos = save

    def _guard(self, st: _Stmt, fn) -> None:
        try:
            fn()
        except MomError as exc:
            if exc.line is None:
                exc.line, exc.column = st.line, st.head.column
            raise

    def _initially_present(self) -> set[int]:
        present = set(self.objects.values())
        decided: set[int] = set()
        for ev in self.events:
            entering = BUILTIN_PRESENCE.get(self.g.element(ev.action).name or "")
            if entering is None:
                continue
            roles = ev.roles
            mover = roles.get("actor", next(iter(roles.values()), None))
            if mover is None or mover in decided:
                continue
            decided.add(mover)
            if entering:
                present.discard(mover)
        for (obj, _attr) in list(self.values):
            if obj not in present:
                del self.values[(obj, _attr)]
        return present


def parse_story(text: str, graph: MemoryGraph) -> Episode:
    """Parse one story and register its declarations in ``graph``."""
    work = copy.deepcopy(graph)
    episode = _Parser(work).run(text)
    graph.__dict__.update(work.__dict__)
    return episode


# -- serialization -----------------------------------------------------------

def _name(graph: MemoryGraph, eid: int) -> str:
    el = graph.element(eid)
    if el.name is None:
        raise ValueError(f"element #{eid} has no name and cannot be written as DSL")
    return el.name


def _assign_text(graph: MemoryGraph, a: Assignment) -> str:
    obj, attr, value = a
    return f"{_name(graph, obj)}.{_name(graph, attr)}={_name(graph, value)}"


def serialize_story(episode: Episode, graph: MemoryGraph) -> str:
    lines = [f"episode {episode.id}"]
    for d in episode.declarations:
        if isinstance(d, ClassDecl):
            line = f"class {_name(graph, d.cls)}"
            if d.parent is not None:
                line += f" isa {_name(graph, d.parent)}"
        elif isinstance(d, ObjDecl):
            parts = [f"obj {_name(graph, d.obj)} : {_name(graph, d.cls)}"]
            parts += [f"{_name(graph, a)}={_name(graph, v)}" for a, v in d.attrs]
            line = " ".join(parts)
        elif isinstance(d, RelDecl):
            line = f"rel {_name(graph, d.src)} {d.kind.value} {_name(graph, d.dst)}"
            if d.strength != 1.0:
                line += f" {d.strength!r}"
        elif isinstance(d, RuleDecl):
            cond = " ".join(_assign_text(graph, a) for a in d.rule.condition)
            eff = " ".join(_assign_text(graph, a) for a in d.rule.effect)
            line = f"rule {d.version} {cond} => {eff}"
        else:
            line = format_method(graph.methods[d[1]], graph)
        lines.append(line)
    for ev in episode.events:
        parts = [f"act {ev.time} {_name(graph, ev.action)}"]
        parts += [f"{role}={_name(graph, who)}" for role, who in ev.participants]
        if ev.effects:
            parts.append("=>")
            parts += [_assign_text(graph, a) for a in ev.effects]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# -- replay ------------------------------------------------------------------

def step(graph: MemoryGraph, state: StoryState, event: EventRecord,
         record: bool = False) -> tuple[StoryState, list[Change]]:
    try:
        return apply_action(graph, state, event.action, event.roles, event.effects, record=record)
    except MomError as exc:
        exc.event_index = event.time
        exc.message = f"event {event.time}: {exc.message}"
        exc.args = (exc.message,)
        raise


def replay(episode: Episode, graph: MemoryGraph) -> list[StoryState]:
    """States 0..n of ``episode``; ``states[t]`` follows event ``t``."""
    states = [episode.initial]
    for ev in episode.events:
        nxt, _ = step(graph, states[-1], ev)
        states.append(nxt)
    return states


def replay_with_changes(episode: Episode, graph: MemoryGraph) -> tuple[list[StoryState], list[list[Change]]]:
    states, changes = [episode.initial], []
    for ev in episode.events:
        nxt, ch = step(graph, states[-1], ev)
        states.append(nxt)
        changes.append(ch)
    return states, changes


def state_at(episode: Episode, graph: MemoryGraph, t: int) -> StoryState:
    if not 0 <= t <= len(episode.events):
        raise ReplayFailure(f"time {t} outside 0..{len(episode.events)}")
    state = episode.initial
    for ev in episode.events[:t]:
        state, _ = step(graph, state, ev)
    return state


@dataclass(frozen=True)
class StateDiff:
    changes: tuple[tuple[int, int, int | None, int | None], ...] = ()
    joined: frozenset[int] = frozenset()
    left: frozenset[int] = frozenset()

    def __bool__(self) -> bool:
        return bool(self.changes or self.joined or self.left)


def diff_states(s1: StoryState, s2: StoryState) -> StateDiff:
    keys = sorted(set(s1.values) | set(s2.values))
    changes = tuple((o, a, s1.values.get((o, a)), s2.values.get((o, a))) for o, a in keys
                    if s1.values.get((o, a)) != s2.values.get((o, a)))
    return StateDiff(changes, frozenset(s2.present - s1.present), frozenset(s1.present - s2.present))


def load_episodes(paths: Iterable, graph: MemoryGraph) -> list[Episode]:
    episodes = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            episodes.append(parse_story(fh.read(), graph))
    return episodes
