"""Executable methods over the memory graph.

A method is a pure expression tree over a fixed primitive set, bound to an
action element. Evaluation never mutates the graph; elements a method
produces come back as a creation list for the caller to insert.

Primitive arities::

    And Or Eq Neq Lt Leq Gt Geq Add Sub Mul Div Min Max Union   2
    Not ForAll Exists Count Norm Log Sort                        1
    If While For Slice                                           3

``(while COND BODY INIT)`` iterates ``it`` from INIT while COND holds;
``(for COLL BODY INIT)`` folds BODY over COLL with ``each`` the item and
``it`` the accumulator. Besides primitives, bodies may read the graph and
the current story state through ``attr``, ``closure``, ``rclosure``,
``where``, ``present`` and ``list``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import (
    ArityMismatch,
    DivisionByZero,
    DomainError,
    DslSyntaxError,
    MalformedMethod,
    NonTermination,
    NotAdmissible,
    TypeInadmissible,
    UnknownReference,
)
from .kernel import EdgeKind, ElementKind, MemoryGraph
from .lexer import Token, TokenStream, tokenize
from .state import Change, StoryState

DEFAULT_BUDGET = 10**6


class Primitive(str, enum.Enum):
    AND = "And"
    OR = "Or"
    NOT = "Not"
    FORALL = "ForAll"
    EXISTS = "Exists"
    COUNT = "Count"
    EQ = "Eq"
    NEQ = "Neq"
    LT = "Lt"
    LEQ = "Leq"
    GT = "Gt"
    GEQ = "Geq"
    IF = "If"
    WHILE = "While"
    FOR = "For"
    ADD = "Add"
    SUB = "Sub"
    MUL = "Mul"
    DIV = "Div"
    MIN = "Min"
    MAX = "Max"
    NORM = "Norm"
    LOG = "Log"
    SLICE = "Slice"
    UNION = "Union"
    SORT = "Sort"


ARITY = {
    **{p: 2 for p in (Primitive.AND, Primitive.OR, Primitive.EQ, Primitive.NEQ, Primitive.LT,
                      Primitive.LEQ, Primitive.GT, Primitive.GEQ, Primitive.ADD, Primitive.SUB,
                      Primitive.MUL, Primitive.DIV, Primitive.MIN, Primitive.MAX, Primitive.UNION)},
    **{p: 1 for p in (Primitive.NOT, Primitive.FORALL, Primitive.EXISTS, Primitive.COUNT,
                      Primitive.NORM, Primitive.LOG, Primitive.SORT)},
    **{p: 3 for p in (Primitive.IF, Primitive.WHILE, Primitive.FOR, Primitive.SLICE)},
}
_PRIM_BY_NAME = {p.value.lower(): p for p in Primitive}

QUERY_OPS = ("attr", "closure", "rclosure", "where", "present", "list")
LOOP_VARS = ("it", "each")


@dataclass(frozen=True, order=True)
class Ref:
    """An element reference as an evaluation value."""

    id: int


# -- expression tree ---------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: Union[int, float, bool, None]


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class LoopVar:
    name: str


@dataclass(frozen=True)
class ElemRef:
    id: int


@dataclass(frozen=True)
class KindLit:
    kind: EdgeKind


@dataclass(frozen=True)
class Prim:
    tag: Primitive
    args: tuple


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Query:
    op: str
    args: tuple


Node = Union[Lit, Var, LoopVar, ElemRef, KindLit, Prim, Call, Query]


@dataclass(frozen=True)
class Param:
    name: str
    cls: int | None = None  # None = Any


@dataclass(frozen=True)
class Effect:
    target: str
    attribute: int
    value: Node


@dataclass(frozen=True)
class MethodDef:
    name: str
    params: tuple[Param, ...] = ()
    body: Node | None = None
    effects: tuple[Effect, ...] = ()
    produces: ElementKind | None = None

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


@dataclass
class ActionBinding:
    action: int
    method: MethodDef
    applicable_classes: dict[str, int | None] = field(default_factory=dict)


@dataclass(frozen=True)
class Creation:
    kind: ElementKind
    name: str


@dataclass(frozen=True)
class EvalResult:
    value: Any
    created: tuple[Creation, ...] = ()


class Mode(str, enum.Enum):
    NORMAL = "normal"
    CREATIVE = "creative"


def walk(node: Node):
    yield node
    if isinstance(node, (Prim, Call, Query)):
        for arg in node.args:
            yield from walk(arg)


def reuse_ratio(method: MethodDef) -> float:
    """Share of method-call nodes among call + primitive nodes in the body."""
    calls = prims = 0
    nodes = []
    if method.body is not None:
        nodes.append(method.body)
    nodes.extend(e.value for e in method.effects)
    for root in nodes:
        for n in walk(root):
            if isinstance(n, Call):
                calls += 1
            elif isinstance(n, Prim):
                prims += 1
    total = calls + prims
    return calls / total if total else 0.0


# -- value helpers -----------------------------------------------------------

_INT_RE = re.compile(r"-?\d+\Z")


def decode_value(graph: MemoryGraph, vid: int | None) -> Any:
    """Map a stored value element to an evaluation value."""
    if vid is None:
        return None
    el = graph.element(vid)
    if el.kind is ElementKind.VALUE and el.name is not None:
        if el.name == "absent":
            return None
        if el.name in ("true", "false"):
            return el.name == "true"
        if _INT_RE.match(el.name):
            return int(el.name)
        try:
            f = float(el.name)
        except ValueError:
            pass
        else:
            if repr(f) == el.name:
                return f
    return Ref(vid)


def encode_value(graph: MemoryGraph, value: Any) -> int:
    """Map an evaluation value to a (possibly interned) value element."""
    if isinstance(value, Ref):
        graph.element(value.id)
        return value.id
    if value is None:
        return graph.intern(ElementKind.VALUE, "absent")
    if isinstance(value, bool):
        return graph.intern(ElementKind.VALUE, "true" if value else "false")
    if isinstance(value, (int, float)):
        return graph.intern(ElementKind.VALUE, repr(value))
    raise TypeInadmissible(f"cannot store {type(value).__name__} as an attribute value")


def _truthy(v: Any) -> bool:
    if isinstance(v, Ref):
        return True
    return bool(v)


def _num(v: Any) -> Union[int, float]:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeInadmissible(f"expected a number, got {v!r}")
    return v


def _coll(v: Any) -> tuple:
    if not isinstance(v, tuple):
        raise TypeInadmissible(f"expected a collection, got {v!r}")
    return v


def _sort_key(v: Any):
    if v is None:
        return (0, 0)
    if isinstance(v, bool):
        return (1, int(v))
    if isinstance(v, (int, float)):
        return (2, v)
    if isinstance(v, Ref):
        return (3, v.id)
    if isinstance(v, tuple):
        return (4, tuple(_sort_key(x) for x in v))
    raise TypeInadmissible(f"unsortable value {v!r}")


# -- evaluation --------------------------------------------------------------

class _Evaluator:
    def __init__(self, graph: MemoryGraph, state: StoryState | None, budget: int):
        self.graph = graph
        self.state = state
        self.budget = budget
        self.steps = 0

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.budget:
            raise NonTermination(f"step budget of {self.budget} exhausted")

    def call(self, method: MethodDef, args: Sequence[Any]) -> Any:
        check_args(self.graph, method, args)
        env = dict(zip(method.param_names, args))
        if method.body is None:
            return True
        return self.eval(method.body, env, {})

    def eval(self, node: Node, env: Mapping[str, Any], loop: Mapping[str, Any]) -> Any:
        self.tick()
        if isinstance(node, Lit):
            return node.value
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, LoopVar):
            if node.name not in loop:
                raise TypeInadmissible(f"'{node.name}' used outside a loop")
            return loop[node.name]
        if isinstance(node, ElemRef):
            return Ref(node.id)
        if isinstance(node, KindLit):
            return node.kind
        if isinstance(node, Call):
            callee = self.graph.methods.get(node.name)
            if callee is None:
                raise MalformedMethod(f"unknown method {node.name!r}")
            args = [self.eval(a, env, loop) for a in node.args]
            return self.call(callee, args)
        if isinstance(node, Query):
            return self.query(node, env, loop)
        return self.prim(node, env, loop)

    def prim(self, node: Prim, env, loop) -> Any:
        tag, args = node.tag, node.args
        ev = lambda n, lp=loop: self.eval(n, env, lp)  # noqa: E731
        if tag is Primitive.IF:
            return ev(args[1]) if _truthy(ev(args[0])) else ev(args[2])
        if tag is Primitive.AND:
            return _truthy(ev(args[0])) and _truthy(ev(args[1]))
        if tag is Primitive.OR:
            return _truthy(ev(args[0])) or _truthy(ev(args[1]))
        if tag is Primitive.WHILE:
            acc = ev(args[2])
            while True:
                self.tick()
                inner = {**loop, "it": acc}
                if not _truthy(ev(args[0], inner)):
                    return acc
                acc = ev(args[1], inner)
        if tag is Primitive.FOR:
            items = _coll(ev(args[0]))
            acc = ev(args[2])
            for item in items:
                self.tick()
                acc = ev(args[1], {**loop, "it": acc, "each": item})
            return acc

        vals = [ev(a) for a in args]
        if tag is Primitive.NOT:
            return not _truthy(vals[0])
        if tag is Primitive.FORALL:
            return all(_truthy(v) for v in _coll(vals[0]))
        if tag is Primitive.EXISTS:
            return any(_truthy(v) for v in _coll(vals[0]))
        if tag is Primitive.COUNT:
            return len(_coll(vals[0]))
        if tag is Primitive.EQ:
            return vals[0] == vals[1]
        if tag is Primitive.NEQ:
            return vals[0] != vals[1]
        if tag in (Primitive.LT, Primitive.LEQ, Primitive.GT, Primitive.GEQ):
            a, b = _num(vals[0]), _num(vals[1])
            return {Primitive.LT: a < b, Primitive.LEQ: a <= b,
                    Primitive.GT: a > b, Primitive.GEQ: a >= b}[tag]
        if tag is Primitive.ADD:
            return _num(vals[0]) + _num(vals[1])
        if tag is Primitive.SUB:
            return _num(vals[0]) - _num(vals[1])
        if tag is Primitive.MUL:
            return _num(vals[0]) * _num(vals[1])
        if tag is Primitive.DIV:
            a, b = _num(vals[0]), _num(vals[1])
            if b == 0:
                raise DivisionByZero("division by zero")
            if isinstance(a, int) and isinstance(b, int) and a % b == 0:
                return a // b
            return a / b
        if tag is Primitive.MIN:
            return min(_num(vals[0]), _num(vals[1]))
        if tag is Primitive.MAX:
            return max(_num(vals[0]), _num(vals[1]))
        if tag is Primitive.NORM:
            v = vals[0]
            if isinstance(v, tuple):
                return math.hypot(*(_num(x) for x in v))
            return abs(_num(v))
        if tag is Primitive.LOG:
            x = _num(vals[0])
            if x <= 0:
                raise DomainError(f"log of non-positive value {x!r}")
            return math.log(x)
        if tag is Primitive.SLICE:
            items = _coll(vals[0])
            lo, hi = _num(vals[1]), _num(vals[2])
            if not (isinstance(lo, int) and isinstance(hi, int)):
                raise TypeInadmissible("slice bounds must be integers")
            return items[lo:hi]
        if tag is Primitive.UNION:
            return tuple(dict.fromkeys(_coll(vals[0]) + _coll(vals[1])))
        if tag is Primitive.SORT:
            return tuple(sorted(_coll(vals[0]), key=_sort_key))
        raise AssertionError(tag)

    def _ref(self, v: Any) -> int:
        if not isinstance(v, Ref):
            raise TypeInadmissible(f"expected an element, got {v!r}")
        self.graph.element(v.id)
        return v.id

    def query(self, node: Query, env, loop) -> Any:
        op = node.op
        if op == "list":
            return tuple(self.eval(a, env, loop) for a in node.args)
        if op == "present":
            return tuple(Ref(i) for i in sorted(self.state.present)) if self.state else ()
        if op in ("closure", "rclosure"):
            x = self._ref(self.eval(node.args[0], env, loop))
            kinds = [self.eval(a, env, loop) for a in node.args[1:]]
            return tuple(Ref(i) for i in self.graph.closure(x, kinds, reverse=op == "rclosure"))
        if op == "attr":
            x = self._ref(self.eval(node.args[0], env, loop))
            a = self._ref(self.eval(node.args[1], env, loop))
            return decode_value(self.graph, self.read_attr(x, a))
        if op == "where":
            a = self._ref(self.eval(node.args[0], env, loop))
            wanted = self.eval(node.args[1], env, loop)
            wanted = set(wanted) if isinstance(wanted, tuple) else {wanted}
            if self.state is not None:
                pool = sorted(self.state.present)
            else:
                pool = sorted(e for e, el in self.graph.elements.items() if el.level == 0)
            return tuple(Ref(o) for o in pool
                         if decode_value(self.graph, self.read_attr(o, a)) in wanted)
        raise AssertionError(op)

    def read_attr(self, obj: int, attr: int) -> int | None:
        if self.state is not None and obj in self.state.present:
            return self.state.get(obj, attr)
        for a, value, _ in self.graph.attributes_of(obj):
            if a == attr:
                return value
        return None


def check_args(graph: MemoryGraph, method: MethodDef, args: Sequence[Any]) -> None:
    if len(args) != len(method.params):
        raise ArityMismatch(
            f"{method.name} takes {len(method.params)} argument(s), got {len(args)}")
    for p, arg in zip(method.params, args):
        if p.cls is None:
            continue
        if not isinstance(arg, Ref) or arg.id not in graph or not graph.is_a(arg.id, p.cls):
            raise TypeInadmissible(
                f"{method.name}: argument {p.name}={arg!r} is not a {graph.name_of(p.cls)}")


def evaluate(method: MethodDef, args: Sequence[Any] | Mapping[str, Any], graph: MemoryGraph,
             state: StoryState | None = None, budget: int = DEFAULT_BUDGET) -> EvalResult:
    """Evaluate ``method`` on ``args`` against a read-only graph snapshot."""
    if isinstance(args, Mapping):
        if set(args) != set(method.param_names):
            raise ArityMismatch(f"{method.name} expects roles {list(method.param_names)}, "
                                f"got {sorted(args)}")
        args = [args[n] for n in method.param_names]
    value = _Evaluator(graph, state, budget).call(method, list(args))
    created: tuple[Creation, ...] = ()
    if method.produces is not None and value is not False and value is not None:
        label = ",".join(_label(graph, a) for a in args)
        created = (Creation(method.produces, f"{method.name}({label})"),)
    return EvalResult(value, created)


def _label(graph: MemoryGraph, v: Any) -> str:
    if isinstance(v, Ref):
        return graph.element(v.id).label
    return repr(v)


# -- admissibility and application -----------------------------------------

def applicable(graph: MemoryGraph, action: int, element: int) -> bool:
    binding = graph.bindings.get(action)
    if binding is None:
        return True
    scope = {element, *graph.ancestors(element)}
    return any(c is None or c in scope for c in binding.applicable_classes.values())


def admissible_actions(graph: MemoryGraph, element: int,
                       mode: Mode | str = Mode.NORMAL) -> list[tuple[int, float]]:
    """Actions reachable from ``element`` or its classes by AdmissibleAction edges.

    The score is the consolidation of the nearest such edge. Normal mode
    ranks the most consolidated first, creative mode the least; ties go to
    the lower element id in both modes.
    """
    mode = Mode(mode)
    scores: dict[int, float] = {}
    for owner in [element, *graph.ancestors(element)]:
        for e in graph.out_edges(owner, EdgeKind.ADMISSIBLE_ACTION):
            scores.setdefault(e.dst, e.stats.consolidation)
    ranked = [(a, s) for a, s in scores.items() if applicable(graph, a, element)]
    sign = -1 if mode is Mode.NORMAL else 1
    ranked.sort(key=lambda item: (sign * item[1], item[0]))
    return ranked


def register_method(graph: MemoryGraph, method: MethodDef) -> None:
    """Validate ``method`` against the library and add it."""
    validate_method(method, graph.methods)
    graph.methods[method.name] = method


def bind_action(graph: MemoryGraph, action: int, method: MethodDef) -> ActionBinding:
    el = graph.element(action)
    if el.kind is not ElementKind.ACTION:
        raise NotAdmissible(f"{el.label} is a {el.kind.value}, not an Action")
    if graph.methods.get(method.name) is not method:
        register_method(graph, method)
    binding = ActionBinding(action, method, {p.name: p.cls for p in method.params})
    graph.bindings[action] = binding
    return binding


def validate_method(method: MethodDef, library: Mapping[str, MethodDef]) -> None:
    declared = set(method.param_names)
    if len(declared) != len(method.params):
        raise MalformedMethod(f"{method.name}: duplicate parameter names")
    roots = ([method.body] if method.body is not None else []) + [e.value for e in method.effects]
    for eff in method.effects:
        if eff.target not in declared:
            raise MalformedMethod(f"{method.name}: effect target {eff.target!r} is not a parameter")
    for root in roots:
        for n in walk(root):
            if isinstance(n, Var) and n.name not in declared:
                raise MalformedMethod(f"{method.name}: undeclared parameter {n.name!r}")
            if isinstance(n, Prim) and len(n.args) != ARITY[n.tag]:
                raise MalformedMethod(
                    f"{method.name}: {n.tag.value} takes {ARITY[n.tag]} argument(s)")
            if isinstance(n, Call):
                callee = method if n.name == method.name else library.get(n.name)
                if callee is None:
                    raise MalformedMethod(f"{method.name}: unknown method {n.name!r}")
                if len(n.args) != len(callee.params):
                    raise MalformedMethod(f"{method.name}: {n.name} takes "
                                          f"{len(callee.params)} argument(s)")
    lib = {**library, method.name: method}
    _check_call_cycles(method.name, lib)


def _direct_calls(node: Node | None, inside_loop: bool = False) -> set[str]:
    """Calls not nested under While/For."""
    if node is None:
        return set()
    out: set[str] = set()
    if isinstance(node, Call) and not inside_loop:
        out.add(node.name)
    if isinstance(node, (Prim, Call, Query)):
        loop = inside_loop or (isinstance(node, Prim) and node.tag in (Primitive.WHILE, Primitive.FOR))
        for a in node.args:
            out |= _direct_calls(a, loop)
    return out


def _check_call_cycles(start: str, lib: Mapping[str, MethodDef]) -> None:
    def calls_of(name: str) -> set[str]:
        m = lib[name]
        found = _direct_calls(m.body)
        for e in m.effects:
            found |= _direct_calls(e.value)
        return {c for c in found if c in lib}

    stack = [(start, (start,))]
    while stack:
        name, path = stack.pop()
        for nxt in sorted(calls_of(name)):
            if nxt == start:
                raise MalformedMethod(f"call cycle outside loops: {' -> '.join(path + (nxt,))}")
            if nxt not in path:
                stack.append((nxt, path + (nxt,)))


BUILTIN_PRESENCE = {"enter": True, "exit": False}


def apply_action(graph: MemoryGraph, state: StoryState, action: int, bindings: Mapping[str, int],
                 effects: Iterable[tuple[int, int, int]] = (), *, force: bool = False,
                 record: bool = True, budget: int = DEFAULT_BUDGET) -> tuple[StoryState, list[Change]]:
    """Apply ``action`` to ``state`` and return the successor plus its changes.

    ``effects`` are explicit ``(object, attribute, value)`` assignments
    appended to the bound method's own effects. Actions named ``enter`` and
    ``exit`` move their ``actor`` on or off stage. With ``record`` every
    touched element is visited (``touch``) and produced elements are
    inserted into the graph; the input state is never modified.
    """
    act = graph.element(action)
    binding = graph.bindings.get(action)
    refs = {role: Ref(graph.element(eid).id) for role, eid in bindings.items()}
    assignments: list[tuple[int, int, Any]] = []
    created: tuple[Creation, ...] = ()

    if binding is not None:
        method = binding.method
        if set(refs) != set(method.param_names):
            raise ArityMismatch(f"{act.label} expects roles {list(method.param_names)}, "
                                f"got {sorted(refs)}")
        if not force:
            for p in method.params:
                if p.cls is not None and not graph.is_a(refs[p.name].id, p.cls):
                    raise NotAdmissible(f"{act.label}: {graph.name_of(refs[p.name].id)} "
                                        f"is not a {graph.name_of(p.cls)}")
        args = [refs[n] for n in method.param_names]
        if force:
            method = replace(method, params=tuple(Param(p.name) for p in method.params))
        result = evaluate(method, args, graph, state, budget=budget)
        if result.value is False:
            raise NotAdmissible(f"{act.label}: precondition does not hold")
        created = result.created
        ev = _Evaluator(graph, state, budget)
        env = dict(zip(method.param_names, args))
        for eff in method.effects:
            assignments.append((refs[eff.target].id, eff.attribute, ev.eval(eff.value, env, {})))
    for obj, attr, value in effects:
        graph.element(obj)
        graph.element(attr)
        assignments.append((obj, attr, Ref(value) if value is not None else None))

    present = set(state.present)
    values = dict(state.values)
    mover = bindings.get("actor", next(iter(bindings.values()), None))
    entering = BUILTIN_PRESENCE.get(act.name or "")
    if entering is True and mover is not None:
        present.add(mover)

    changes: list[Change] = []
    for obj, attr, value in assignments:
        if obj not in present:
            raise NotAdmissible(f"{act.label}: {graph.name_of(obj)} is not present")
        new = encode_value(graph, value)
        old = values.get((obj, attr))
        if old != new:
            values[(obj, attr)] = new
            changes.append(Change(obj, attr, old, new))

    produced: list[int] = []
    if record:
        for c in created:
            eid = graph.add_element(c.kind, c.name, 0)
            produced.append(eid)
            if c.kind is ElementKind.OBJECT:
                present.add(eid)

    if entering is False and mover is not None:
        present.discard(mover)
        values = {k: v for k, v in values.items() if k[0] != mover}

    if record:
        touched = {action, *bindings.values(), *produced}
        for ch in changes:
            touched.update(x for x in (ch.object, ch.attribute, ch.new) if x is not None)
        for eid in sorted(touched):
            graph.touch(eid)

    new_state = StoryState(frozenset(present), values, state.time + 1)
    return new_state, changes


# -- text format -------------------------------------------------------------

class _Names:
    """Name resolution used while parsing method text."""

    def __init__(self, graph: MemoryGraph, params: Iterable[str],
                 extra: Mapping[str, int] | None = None):
        self.graph = graph
        self.params = set(params)
        self.extra = dict(extra or {})

    def element(self, tok: Token) -> int:
        if tok.text in self.extra:
            return self.extra[tok.text]
        eid = self.graph.find(tok.text)
        if eid is None:
            raise UnknownReference(f"unknown element {tok.text!r}", line=tok.line, column=tok.column)
        return eid


def _parse_elem_ref(ts: TokenStream, names: _Names) -> int:
    tok = ts.next("element reference")
    if tok.kind == "number":
        eid = int(tok.text)
        if eid not in names.graph:
            raise UnknownReference(f"no element {eid}", line=tok.line, column=tok.column)
        return eid
    if tok.kind != "ident":
        raise ts.error(f"expected element reference, found {tok.text!r}", tok)
    return names.element(tok)


def parse_expr(ts: TokenStream, names: _Names) -> Node:
    tok = ts.next("expression")
    if tok.kind == "number":
        return Lit(float(tok.text) if "." in tok.text else int(tok.text))
    if tok.kind == "ident":
        if tok.text in names.params:
            return Var(tok.text)
        if tok.text in LOOP_VARS:
            return LoopVar(tok.text)
        if tok.text in ("true", "false"):
            return Lit(tok.text == "true")
        if tok.text == "absent":
            return Lit(None)
        return ElemRef(names.element(tok))
    if tok.text == "@":
        return ElemRef(_parse_elem_ref(ts, names))
    if tok.text != "(":
        raise ts.error(f"unexpected {tok.text!r}", tok)
    head = ts.expect_ident("operator")
    op = head.text
    args: list[Node] = []
    if op in ("attr", "where"):
        if op == "attr":
            args.append(parse_expr(ts, names))
        args.append(_parse_attribute(ts, names))
        if op == "where":
            args.append(parse_expr(ts, names))
    elif op in ("closure", "rclosure"):
        args.append(parse_expr(ts, names))
        while ts.peek() is not None and ts.peek().text != ")":
            k = ts.expect_ident("edge kind")
            try:
                args.append(KindLit(EdgeKind(k.text)))
            except ValueError:
                raise ts.error(f"unknown edge kind {k.text!r}", k) from None
        if len(args) < 2:
            raise ts.error(f"{op} needs at least one edge kind", head)
    else:
        while ts.peek() is not None and ts.peek().text != ")":
            args.append(parse_expr(ts, names))
    ts.expect(")")
    if op in QUERY_OPS:
        if op == "present" and args:
            raise ts.error("present takes no arguments", head)
        return Query(op, tuple(args))
    prim = _PRIM_BY_NAME.get(op.lower())
    if prim is not None:
        if len(args) != ARITY[prim]:
            raise DslSyntaxError(f"{prim.value} takes {ARITY[prim]} argument(s), got {len(args)}",
                                 line=head.line, column=head.column)
        return Prim(prim, tuple(args))
    return Call(op, tuple(args))


def _parse_attribute(ts: TokenStream, names: _Names) -> Node:
    tok = ts.peek()
    if tok is not None and tok.text == "@":
        ts.next()
        return ElemRef(_parse_elem_ref(ts, names))
    tok = ts.expect_ident("attribute name")
    return ElemRef(names.graph.intern(ElementKind.ATTRIBUTE, tok.text))


def parse_method(ts: TokenStream | str, graph: MemoryGraph, classes: Mapping[str, int] | None = None,
                 elements: Mapping[str, int] | None = None) -> MethodDef:
    """Parse ``method NAME(p:Class, ...) [= EXPR] [-> x.attr=EXPR ...] [produces KIND]``.

    Attribute names are interned as Attribute elements. ``classes`` and
    ``elements`` resolve names ahead of the graph (the story parser passes
    its pending declarations).
    """
    if isinstance(ts, str):
        ts = TokenStream(tokenize(ts, 1), 1, len(ts))
    classes = dict(classes or {})
    kw = ts.expect_ident("'method'")
    if kw.text != "method":
        raise ts.error("expected 'method'", kw)
    name = ts.expect_ident("method name").text
    ts.expect("(")
    params: list[Param] = []
    while not ts.accept(")"):
        if params:
            ts.expect(",")
        pname = ts.expect_ident("parameter name")
        ts.expect(":")
        if ts.accept("@"):
            ctok = ts.next("class id")
            cls = int(ctok.text) if ctok.kind == "number" else None
            if cls is None or cls not in graph:
                raise UnknownReference(f"unknown class {ctok.text!r}", line=ctok.line,
                                       column=ctok.column)
        else:
            ctok = ts.expect_ident("class name")
            if ctok.text == "Any":
                cls = None
            elif ctok.text in classes:
                cls = classes[ctok.text]
            else:
                cls = graph.find(ctok.text, min_level=1)
                if cls is None:
                    raise UnknownReference(f"unknown class {ctok.text!r}", line=ctok.line,
                                           column=ctok.column)
        if pname.text in LOOP_VARS:
            raise ts.error(f"{pname.text!r} is reserved", pname)
        params.append(Param(pname.text, cls))
    names = _Names(graph, (p.name for p in params), elements)
    body = None
    if ts.accept("="):
        body = parse_expr(ts, names)
    effects: list[Effect] = []
    if ts.accept("->"):
        while ts.peek() is not None and not (ts.peek().kind == "ident" and ts.peek().text == "produces"):
            target = ts.expect_ident("effect target")
            if target.text not in names.params:
                raise UnknownReference(f"effect target {target.text!r} is not a parameter",
                                       line=target.line, column=target.column)
            ts.expect(".")
            attr = ts.expect_ident("attribute name")
            ts.expect("=")
            value = parse_expr(ts, names)
            effects.append(Effect(target.text, graph.intern(ElementKind.ATTRIBUTE, attr.text), value))
            ts.accept(",")
    produces = None
    tok = ts.peek()
    if tok is not None and tok.text == "produces":
        ts.next()
        ktok = ts.expect_ident("element kind")
        try:
            produces = ElementKind(ktok.text)
        except ValueError:
            raise ts.error(f"unknown element kind {ktok.text!r}", ktok) from None
    if not ts.at_end():
        raise ts.error(f"unexpected {ts.peek().text!r}")
    return MethodDef(name, tuple(params), body, tuple(effects), produces)


def _ref_text(graph: MemoryGraph, eid: int, **filters) -> str:
    el = graph.element(eid)
    if el.name is not None and re.fullmatch(r"[A-Za-z_](?:[A-Za-z0-9_]|-(?=[A-Za-z0-9_]))*", el.name) \
            and graph.find(el.name, **filters) == eid and el.name not in ("true", "false", "absent",
                                                                        "it", "each", "Any"):
        return el.name
    return f"@{eid}"


def format_expr(node: Node, graph: MemoryGraph, params: Iterable[str] = ()) -> str:
    params = set(params)
    if isinstance(node, Lit):
        v = node.value
        if v is None:
            return "absent"
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v)
    if isinstance(node, (Var, LoopVar)):
        return node.name
    if isinstance(node, ElemRef):
        text = _ref_text(graph, node.id)
        return f"@{node.id}" if text in params else text
    if isinstance(node, KindLit):
        return node.kind.value
    if isinstance(node, Query):
        parts = []
        for i, a in enumerate(node.args):
            attr_pos = (node.op == "attr" and i == 1) or (node.op == "where" and i == 0)
            if attr_pos and isinstance(a, ElemRef):
                parts.append(_ref_text(graph, a.id, kind=ElementKind.ATTRIBUTE,
                                       min_level=0, max_level=0))
            else:
                parts.append(format_expr(a, graph, params))
        return "(" + " ".join([node.op, *parts]) + ")"
    head = node.tag.value.lower() if isinstance(node, Prim) else node.name
    return "(" + " ".join([head, *(format_expr(a, graph, params) for a in node.args)]) + ")"


def format_method(method: MethodDef, graph: MemoryGraph) -> str:
    ps = []
    for p in method.params:
        cls = "Any" if p.cls is None else _ref_text(graph, p.cls, min_level=1)
        ps.append(f"{p.name}:{cls}")
    text = f"method {method.name}({', '.join(ps)})"
    names = method.param_names
    if method.body is not None:
        text += " = " + format_expr(method.body, graph, names)
    if method.effects:
        effs = []
        for e in method.effects:
            attr = _ref_text(graph, e.attribute, kind=ElementKind.ATTRIBUTE, min_level=0, max_level=0)
            if attr.startswith("@"):
                raise MalformedMethod(f"attribute #{e.attribute} has no printable name")
            effs.append(f"{e.target}.{attr}={format_expr(e.value, graph, names)}")
        text += " -> " + " ".join(effs)
    if method.produces is not None:
        text += f" produces {method.produces.value}"
    return text
