import math

import pytest
from hypothesis import given, strategies as st

from mom.errors import (
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
from mom.kernel import EdgeKind as K, ElementKind as EK, MemoryGraph
from mom.methods import (
    ARITY,
    Call,
    Creation,
    Lit,
    MethodDef,
    Mode,
    Param,
    Prim,
    Primitive,
    Ref,
    admissible_actions,
    apply_action,
    bind_action,
    evaluate,
    format_method,
    parse_method,
    register_method,
    reuse_ratio,
)
from mom.snapshot import to_json
from mom.state import StoryState
from mom.story import state_at


def run(text, graph=None, *args, **kw):
    graph = graph or MemoryGraph()
    m = parse_method(text, graph)
    return evaluate(m, list(args), graph, **kw).value


def test_arity_table():
    assert len(Primitive) == 26
    twos = {"And", "Or", "Eq", "Neq", "Lt", "Leq", "Gt", "Geq", "Add", "Sub", "Mul", "Div",
            "Min", "Max", "Union"}
    ones = {"Not", "ForAll", "Exists", "Count", "Norm", "Log", "Sort"}
    threes = {"If", "While", "For", "Slice"}
    for p, n in ARITY.items():
        expected = 2 if p.value in twos else 1 if p.value in ones else 3 if p.value in threes else None
        assert n == expected, p


@pytest.mark.parametrize("expr, value", [
    ("(add 2 3)", 5),
    ("(sub 2 5)", -3),
    ("(mul 4 2.5)", 10.0),
    ("(div 6 3)", 2),
    ("(div 7 2)", 3.5),
    ("(min 3 -1)", -1),
    ("(max 3 -1)", 3),
    ("(norm (list 3 4))", 5.0),
    ("(norm -2)", 2),
    ("(and true false)", False),
    ("(or false true)", True),
    ("(not false)", True),
    ("(if (lt 1 2) 10 20)", 10),
    ("(eq 2 2)", True),
    ("(neq 2 2)", False),
    ("(geq 3 3)", True),
    ("(count (list 1 2 3))", 3),
    ("(forall (list true true))", True),
    ("(exists (list false false))", False),
    ("(union (list 1 2) (list 2 3))", (1, 2, 3)),
    ("(sort (list 3 1 2))", (1, 2, 3)),
    ("(slice (list 5 6 7 8) 1 3)", (6, 7)),
    ("(while (lt it 10) (add it 3) 0)", 12),
    ("(for (list 1 2 3) (add it each) 0)", 6),
    ("(for (list) (add it each) 7)", 7),
])
def test_primitive_semantics(expr, value):
    assert run(f"method m() = {expr}") == value


def test_log():
    assert run("method m() = (log 1)") == 0.0
    assert math.isclose(run("method m() = (log 10)"), math.log(10))
    with pytest.raises(DomainError):
        run("method m() = (log 0)")


def test_division_by_zero():
    with pytest.raises(DivisionByZero):
        run("method m() = (div 1 0)")


def test_lazy_branches_do_not_evaluate():
    assert run("method m() = (if true 1 (div 1 0))") == 1
    assert run("method m() = (and false (div 1 0))") is False


def test_step_budget():
    with pytest.raises(NonTermination):
        run("method m() = (while true it 0)", budget=1000)


def test_wrong_primitive_arity_is_a_syntax_error():
    with pytest.raises(DslSyntaxError) as info:
        run("method m() = (add 1)")
    assert info.value.column == 15


def test_loop_var_outside_loop():
    with pytest.raises(TypeInadmissible):
        run("method m() = (add it 1)")


def test_parameters_checked(graph):
    person = graph.add_element(EK.OBJECT, "Person", 1)
    place = graph.add_element(EK.OBJECT, "Place", 1)
    ann = graph.add_element(EK.OBJECT, "ann")
    graph.add_edge(ann, person, K.INSTANCE_OF)
    m = parse_method("method greet(who:Person) = true", graph)
    assert evaluate(m, [Ref(ann)], graph).value is True
    with pytest.raises(ArityMismatch):
        evaluate(m, [], graph)
    with pytest.raises(TypeInadmissible):
        evaluate(m, [Ref(place)], graph)
    with pytest.raises(ArityMismatch):
        evaluate(m, {"other": Ref(ann)}, graph)


def test_unknown_class_in_signature(graph):
    with pytest.raises(UnknownReference):
        parse_method("method m(x:Nope) = true", graph)


def test_count_objects_in_a_region(david):
    # at t=5 David is in the room and his mother at home; both lie in home's PartOf region
    graph, ep = david
    text = "method located(p:Place) = (count (where location (union (list p) (rclosure p PartOf))))"
    m = parse_method(text, graph)
    state = state_at(ep, graph, 5)
    home = graph.find("home")
    assert evaluate(m, [Ref(home)], graph, state).value == 2
    assert evaluate(m, [Ref(graph.find("bed"))], graph, state).value == 0


def test_evaluation_is_pure(david):
    graph, ep = david
    m = parse_method("method m(p:Place) = (sort (rclosure p PartOf)) produces Object", graph)
    state = state_at(ep, graph, 10)
    before = to_json(graph)
    r1 = evaluate(m, [Ref(graph.find("home"))], graph, state)
    r2 = evaluate(m, [Ref(graph.find("home"))], graph, state)
    assert r1 == r2
    assert r1.created == (Creation(EK.OBJECT, "m(home)"),)
    assert to_json(graph) == before


def test_method_calls_and_cycles(graph):
    register_method(graph, parse_method("method double(x:Any) = (mul x 2)", graph))
    quad = parse_method("method quad(x:Any) = (double (double x))", graph)
    register_method(graph, quad)
    assert evaluate(quad, [3], graph).value == 12
    with pytest.raises(MalformedMethod):
        register_method(graph, MethodDef("a", (Param("x"),), Call("a", (Lit(1),))))
    register_method(graph, MethodDef("b", (Param("x"),), Call("quad", (Lit(1),))))
    # replacing quad with a version calling b would close quad -> b -> quad
    with pytest.raises(MalformedMethod):
        register_method(graph, MethodDef("quad", (Param("x"),), Call("b", (Lit(1),))))


def test_recursion_allowed_inside_loops(graph):
    body = Prim(Primitive.WHILE, (Lit(False), Call("r", (Lit(0),)), Lit(5)))
    register_method(graph, MethodDef("r", (Param("x"),), body))
    assert evaluate(graph.methods["r"], [0], graph).value == 5


def test_unknown_call_rejected(graph):
    with pytest.raises(MalformedMethod):
        register_method(graph, parse_method("method m() = (nosuch 1)", graph))


def test_reuse_ratio(graph):
    register_method(graph, parse_method("method inc(x:Any) = (add x 1)", graph))
    m = parse_method("method m(x:Any) = (add (inc x) (inc x))", graph)
    assert reuse_ratio(m) == pytest.approx(2 / 3)
    assert reuse_ratio(MethodDef("empty")) == 0.0


def test_format_parse_round_trip(graph):
    graph.add_element(EK.OBJECT, "Place", 1)
    texts = [
        "method located(p:Place) = (count (where location (union (list p) (rclosure p PartOf))))",
        "method put(a:Any, b:Place) = (not (eq a b)) -> a.location=b a.moved=true",
        "method mk() produces Object",
        "method f(x:Any) = (for (list 1 2.5 x) (add it each) 0)",
    ]
    for text in texts:
        m = parse_method(text, graph)
        assert format_method(m, graph) == text
        assert parse_method(format_method(m, graph), graph) == m


# -- admissibility -----------------------------------------------------------

def _ranked_fixture(scores):
    g = MemoryGraph()
    cls = g.add_element(EK.OBJECT, "C", 1)
    x = g.add_element(EK.OBJECT, "x")
    g.add_edge(x, cls, K.INSTANCE_OF)
    for i, n in enumerate(scores):
        act = g.add_element(EK.ACTION, f"a{i}")
        h = g.add_edge(cls, act, K.ADMISSIBLE_ACTION)
        for _ in range(n):
            g.touch_edge(h)
    return g, x


def test_normal_mode_most_consolidated_first():
    g, x = _ranked_fixture([1, 5, 3])
    assert [g.name_of(a) for a, _ in admissible_actions(g, x)] == ["a1", "a2", "a0"]


def test_nearest_edge_decides_score():
    g, x = _ranked_fixture([5, 1])
    h = g.add_edge(x, g.find("a0"), K.ADMISSIBLE_ACTION)  # fresh, so score 0
    assert admissible_actions(g, x)[0][0] == g.find("a1")
    assert dict(admissible_actions(g, x))[g.find("a0")] == 0.0
    assert g.edge(h).stats.visits == 0


@given(st.lists(st.integers(0, 30), min_size=2, max_size=8, unique=True))
def test_creative_reverses_normal(scores):
    g, x = _ranked_fixture(scores)
    normal = admissible_actions(g, x, Mode.NORMAL)
    creative = admissible_actions(g, x, Mode.CREATIVE)
    assert creative == list(reversed(normal))


def test_binding_filters_inapplicable_actions():
    g, x = _ranked_fixture([1, 2])
    other = g.add_element(EK.OBJECT, "Other", 1)
    m = MethodDef("only_other", (Param("who", other),))
    bind_action(g, g.find("a1"), m)
    assert [a for a, _ in admissible_actions(g, x)] == [g.find("a0")]


# -- applying actions ---------------------------------------------------------

def test_apply_action_returns_new_state(david):
    graph, ep = david
    mother, keys, desk = (graph.find(n) for n in ("mother", "keys", "desk"))
    state = state_at(ep, graph, 5)
    snapshot_key = state.key()
    put = graph.find("put", EK.ACTION)
    new, changes = apply_action(graph, state, put, {"actor": mother, "object": keys, "location": desk})
    assert state.key() == snapshot_key
    location = graph.find("location", EK.ATTRIBUTE)
    assert new.get(keys, location) == desk
    assert [(c.object, c.attribute, c.new) for c in changes] == [(keys, location, desk)]
    assert new.time == state.time + 1


def test_apply_action_checks_classes(david):
    graph, ep = david
    state = state_at(ep, graph, 5)
    put = graph.find("put", EK.ACTION)
    roles = {"actor": graph.find("keys"), "object": graph.find("keys"), "location": graph.find("desk")}
    with pytest.raises(NotAdmissible):
        apply_action(graph, state, put, roles)
    new, _ = apply_action(graph, state, put, roles, force=True)
    assert new.time == 6
    with pytest.raises(ArityMismatch):
        apply_action(graph, state, put, {"actor": graph.find("mother")})


def test_effects_on_absent_objects_rejected(graph):
    a = graph.add_element(EK.OBJECT, "a")
    act = graph.add_element(EK.ACTION, "poke")
    attr = graph.add_element(EK.ATTRIBUTE, "poked")
    yes = graph.add_element(EK.VALUE, "true")
    with pytest.raises(NotAdmissible):
        apply_action(graph, StoryState(), act, {"actor": a}, [(a, attr, yes)])
    new, _ = apply_action(graph, StoryState(frozenset([a])), act, {"actor": a}, [(a, attr, yes)])
    assert new.get(a, attr) == yes


def test_enter_and_exit_move_the_actor(graph):
    a = graph.add_element(EK.OBJECT, "a")
    enter = graph.add_element(EK.ACTION, "enter")
    leave = graph.add_element(EK.ACTION, "exit")
    s1, _ = apply_action(graph, StoryState(), enter, {"actor": a})
    assert a in s1.present
    s2, _ = apply_action(graph, s1, leave, {"actor": a})
    assert a not in s2.present
