import random

import pytest
from hypothesis import given, strategies as st

from mom.consolidation import (
    EventClassTemplate,
    ModelVersion,
    RoleSlot,
    Schedule,
    choose_action,
    collapse,
    episode_references,
    induce_event_class,
    least_common_class,
    observe,
    recognize,
    repetition_boost,
    rule_outcome,
    sparsify,
    versions_from_episodes,
)
from mom.kernel import EdgeKind as K, ElementKind as EK, MemoryGraph
from mom.story import load_episodes, parse_story, replay

from oracles import maximal_windows

BELL = """episode {name}
class Dog
class Bell
obj rex : Dog
obj bell : Bell
rule pavlov bell.state=ringing => rex.saliva=yes
rule indifferent bell.state=ringing => rex.saliva=no
act 1 ring actor=bell => bell.state=ringing
act 2 react actor=rex => rex.saliva={saliva}
"""


def bell_episodes(graph):
    yes = parse_story(BELL.format(name="yes", saliva="yes"), graph)
    no = parse_story(BELL.format(name="no", saliva="no"), graph)
    return yes, no


def test_versions_collected_from_rule_lines(graph):
    yes, no = bell_episodes(graph)
    versions = versions_from_episodes([yes, no])
    assert [v.id for v in versions] == ["pavlov", "indifferent"]
    assert all(len(v.rules) == 1 for v in versions)


def test_observe_counts_evidence(graph):
    yes, no = bell_episodes(graph)
    versions = versions_from_episodes([yes])
    observe(versions, yes, graph)
    observe(versions, yes, graph)
    observe(versions, no, graph)
    pav, ind = versions
    assert (pav.evidence_for, pav.evidence_against) == (2, 1)
    assert (ind.evidence_for, ind.evidence_against) == (1, 2)
    assert pav.score == pytest.approx(3 / 5)


def test_rule_needs_a_following_state(graph):
    yes, _ = bell_episodes(graph)
    (pav, _) = versions_from_episodes([yes])
    states = replay(yes, graph)
    assert rule_outcome(graph, pav.rules[0], states[:2]) is None
    assert rule_outcome(graph, pav.rules[0], states) is True


def test_dead_versions_are_not_updated(graph):
    yes, _ = bell_episodes(graph)
    versions = versions_from_episodes([yes])
    versions[1].kill()
    observe(versions, yes, graph)
    assert versions[1].total == 0


def test_collapse_respects_min_evidence():
    a = ModelVersion("a", evidence_for=9, evidence_against=0)
    b = ModelVersion("b", evidence_for=0, evidence_against=9)
    assert collapse([a, b], 2.0) == [a, b]
    b.evidence_against = 10
    a.evidence_for = 10
    assert collapse([a, b], 2.0) == [a]
    assert not b.alive


def test_collapse_keeps_close_rivals():
    a = ModelVersion("a", evidence_for=12, evidence_against=8)
    b = ModelVersion("b", evidence_for=8, evidence_against=12)
    assert collapse([a, b], 2.0) == [a, b]


def test_collapse_argument_checks():
    with pytest.raises(ValueError):
        collapse([ModelVersion("a")], 1.0)
    dead = ModelVersion("a", alive=False)
    with pytest.raises(ValueError):
        collapse([dead], 2.0)


@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40)), min_size=1, max_size=6),
       st.floats(1.01, 5.0))
def test_collapse_never_kills_everyone(counts, d):
    vs = [ModelVersion(str(i), evidence_for=f, evidence_against=a) for i, (f, a) in enumerate(counts)]
    survivors = collapse(vs, d)
    assert survivors
    best = max(v.score for v in vs)
    assert any(v.score == best for v in survivors)


# -- event classes ------------------------------------------------------------

def test_search_template_from_shipped_stories(graph, data_dir):
    eps = load_episodes([data_dir / n for n in ("david.story", "search_tom.story", "search_sara.story")], graph)
    (t,) = induce_event_class(eps, graph, 3)
    assert t.describe(graph) == "search(actor:Person, location:Place)"
    assert t.support == 5
    new = parse_story("episode fresh\nobj Ann : Person\nobj porch : Place\n"
                      "act 1 search actor=Ann location=porch\n", graph)
    assert recognize([t], new.events, graph) == [(0, 0)]


def test_least_common_class(graph):
    animal = graph.add_element(EK.OBJECT, "Animal", 2)
    dog = graph.add_element(EK.OBJECT, "Dog", 1)
    cat = graph.add_element(EK.OBJECT, "Cat", 1)
    graph.add_edge(dog, animal, K.IS_A)
    graph.add_edge(cat, animal, K.IS_A)
    rex, tom = graph.add_element(EK.OBJECT, "rex"), graph.add_element(EK.OBJECT, "tom")
    graph.add_edge(rex, dog, K.INSTANCE_OF)
    graph.add_edge(tom, cat, K.INSTANCE_OF)
    assert least_common_class(graph, [rex]) is not None
    assert least_common_class(graph, [rex, tom]) == animal
    stray = graph.add_element(EK.OBJECT, "stray")
    assert least_common_class(graph, [rex, stray]) is None


def test_template_matching_checks_classes(graph):
    cls = graph.add_element(EK.OBJECT, "C", 1)
    x, y = graph.add_element(EK.OBJECT, "x"), graph.add_element(EK.OBJECT, "y")
    graph.add_edge(x, cls, K.INSTANCE_OF)
    act = graph.add_element(EK.ACTION, "go")
    t = EventClassTemplate((act,), (RoleSlot(0, "actor", cls),), 2)
    from mom.story import EventRecord
    assert t.matches([EventRecord(1, act, (("actor", x),))], graph)
    assert not t.matches([EventRecord(1, act, (("actor", y),))], graph)
    assert not t.matches([EventRecord(1, act, (("who", x),))], graph)


ACTIONS = ["go", "look", "take"]


def story_from(name, steps):
    lines = [f"episode {name}", "class Agent", "obj a1 : Agent", "obj a2 : Agent"]
    for i, (action, two_roles) in enumerate(steps, start=1):
        roles = "actor=a1 target=a2" if two_roles else "actor=a2"
        lines.append(f"act {i} {action} {roles}")
    return "\n".join(lines) + "\n"


episode_steps = st.lists(st.tuples(st.sampled_from(ACTIONS), st.booleans()), max_size=6)


@given(st.lists(episode_steps, min_size=1, max_size=4), st.integers(2, 3), st.randoms())
def test_induction_matches_window_oracle(stories, k, rnd):
    g = MemoryGraph()
    eps = [parse_story(story_from(f"e{i}", s), g) for i, s in enumerate(stories)]
    got = {(tuple(t.action_sequence), t.support) for t in induce_event_class(eps, g, k)}
    seqs = [[ev.signature() for ev in ep.events] for ep in eps]
    expected = {(tuple(a for a, _ in w), c) for w, c in maximal_windows(seqs, k).items()}
    assert got == expected
    # episode order does not matter
    shuffled = list(eps)
    rnd.shuffle(shuffled)
    assert induce_event_class(shuffled, g, k) == induce_event_class(eps, g, k)


def test_min_support_below_two_rejected(graph):
    with pytest.raises(ValueError):
        induce_event_class([], graph, 1)


# -- sparsify and repetition -------------------------------------------------

def test_sparsify(graph):
    a, b = graph.add_element(EK.OBJECT, "a"), graph.add_element(EK.OBJECT, "b")
    cls = graph.add_element(EK.OBJECT, "C", 1)
    weak = graph.add_edge(a, b, K.SYNONYM)
    strong = graph.add_edge(b, a, K.HAS)
    inst = graph.add_edge(a, cls, K.INSTANCE_OF)
    for _ in range(5):
        graph.touch_edge(strong)
    assert sparsify(graph, 0.0) == 0
    assert sparsify(graph, 0.3) == 1
    assert weak not in graph.edges and strong in graph.edges and inst in graph.edges


def test_repetition_boost_touches_once_per_replay(david):
    graph, ep = david
    action = graph.find("put", EK.ACTION)
    before = graph.element(action).stats.visits
    repetition_boost(graph, ep)
    assert graph.element(action).stats.visits == before + 1
    repetition_boost(graph, ep)
    assert graph.element(action).stats.visits == before + 2


def test_disjoint_episodes_touch_disjoint_sets(graph):
    one = parse_story("episode one\nclass P\nobj a : P\nact 1 wave actor=a => a.mood=glad\n", graph)
    two = parse_story("episode two\nclass Q\nobj b : Q\nact 1 nod actor=b => b.pose=up\n", graph)
    e1, h1 = episode_references(one, graph)
    e2, h2 = episode_references(two, graph)
    assert not e1 & e2 and not h1 & h2
    before = {eid: graph.element(eid).stats.visits for eid in graph.elements}
    repetition_boost(graph, one)
    changed = {eid for eid in graph.elements if graph.element(eid).stats.visits != before[eid]}
    assert changed == e1


# -- exploration ---------------------------------------------------------------

def test_exploration_rate_halves():
    s = Schedule(0.4, 10)
    assert s.exploration_rate(0) == 0.4
    assert s.exploration_rate(10) == pytest.approx(0.2)
    assert s.exploration_rate(30) == pytest.approx(0.05)


def test_choose_action_follows_schedule():
    g = MemoryGraph()
    x = g.add_element(EK.OBJECT, "x")
    acts = [g.add_element(EK.ACTION, n) for n in ("often", "rare")]
    h = g.add_edge(x, acts[0], K.ADMISSIBLE_ACTION)
    g.add_edge(x, acts[1], K.ADMISSIBLE_ACTION)
    for _ in range(4):
        g.touch_edge(h)
    never = Schedule(0.0, 5)
    always = Schedule(1.0, 1e9)
    rng = random.Random(0)
    assert {choose_action(g, x, never, rng) for _ in range(20)} == {acts[0]}
    assert {choose_action(g, x, always, rng) for _ in range(20)} == {acts[1]}
    assert never.t == 20
