import random

import pytest
from hypothesis import given, strategies as st

from mom.errors import (
    EmptyProblemRegion,
    InvalidPartition,
    NoGoalCandidates,
    NoReachableStart,
    SpaceFormatError,
    Unsolvable,
)
from mom.planner import (
    Explicit,
    Stage,
    Will,
    build_hierarchy,
    design,
    far_scorer,
    graph_space,
    grid_space,
    k_shortest,
    load_space,
    near_scorer,
    parse_space,
    refine_will,
    solve,
    SearchStats,
)

from oracles import brute_quotient, graph_bfs_distances, grid_bfs, grid_cells, validate_plan


def random_blocked(rng, w, h, density, keep=()):
    return {(x, y) for x in range(w) for y in range(h)
            if (x, y) not in keep and rng.random() < density}


def will(start, goal):
    return Will(frozenset([start]), frozenset([goal]))


def raw(space):
    return [(t.src, t.action, t.dst) for t in space.transitions()]


def test_grid_hierarchy_sizes():
    layered = build_hierarchy(grid_space(8, 8), 3)
    assert [len(s) for s in layered.levels] == [64, 16, 4]
    assert layered.lift((7, 7), 2) == (1, 1)
    assert layered.preimage({(0, 0)}, 1) == {(0, 0), (0, 1), (1, 0), (1, 1)}


@given(st.integers(1, 7), st.integers(1, 7), st.randoms(use_true_random=False), st.integers(1, 4))
def test_quotient_edges_match_brute_force(w, h, rnd, levels):
    ground = grid_space(w, h, random_blocked(rnd, w, h, 0.3))
    layered = build_hierarchy(ground, levels)
    for i, mapping in enumerate(layered.maps):
        got = {(t.src, t.dst) for t in layered.levels[i + 1].transitions()}
        assert got == brute_quotient(raw(layered.levels[i]), mapping)
        assert set(mapping) == set(layered.levels[i].states)


def test_open_grid_plan():
    plan = solve(build_hierarchy(grid_space(8, 8), 3), will((0, 0), (7, 7)))
    assert len(plan) == 14 and plan.cost == 14
    assert validate_plan(raw(grid_space(8, 8)), (0, 0), plan.steps, {(7, 7)})
    assert [len(p) for p in plan.level_paths][0] == 3
    assert not plan.fallback


@given(st.integers(2, 8), st.integers(2, 8), st.randoms(use_true_random=False), st.integers(1, 3))
def test_solve_agrees_with_bfs(w, h, rnd, levels):
    start, goal = (0, 0), (w - 1, h - 1)
    blocked = random_blocked(rnd, w, h, 0.25, keep=(start, goal))
    ground = grid_space(w, h, blocked)
    layered = build_hierarchy(ground, levels)
    best = grid_bfs(w, h, blocked, [start], [goal])
    if best is None:
        with pytest.raises(Unsolvable):
            solve(layered, will(start, goal))
        return
    plan = solve(layered, will(start, goal))
    assert validate_plan(raw(ground), start, plan.steps, {goal})
    assert best <= len(plan) <= 1.5 * best or best == 0
    if levels == 1:
        assert len(plan) == best


def test_wall_gap_corridor(data_dir):
    sf = load_space(data_dir / "wall8x8.grid")
    layered = build_hierarchy(sf.ground, 3)
    plan = solve(layered, Will(frozenset(sf.start), frozenset(sf.goal)))
    assert (3, 6) in plan.states and (5, 6) in plan.states
    best = grid_bfs(8, 8, {(4, y) for y in range(8) if y != 6}, [(0, 0)], [(7, 7)])
    assert len(plan) == best == 14


def test_solving_is_deterministic():
    rng = random.Random(7)
    blocked = random_blocked(rng, 8, 8, 0.2, keep=((0, 0), (7, 7)))
    layered = build_hierarchy(grid_space(8, 8, blocked), 3)
    p1 = solve(layered, will((0, 0), (7, 7)), trace=True)
    p2 = solve(layered, will((0, 0), (7, 7)), trace=True)
    assert p1 == p2
    assert p1.trace[0].endswith("-")


def test_start_inside_goal_gives_empty_plan():
    layered = build_hierarchy(grid_space(3, 3), 2)
    plan = solve(layered, Will(frozenset({(1, 1), (2, 2)}), frozenset({(2, 2), (0, 0)})))
    assert len(plan) == 0 and plan.start == (2, 2)


def test_unsolvable_and_unformulated():
    ground = grid_space(3, 1, [(1, 0)])
    layered = build_hierarchy(ground, 2)
    with pytest.raises(Unsolvable):
        solve(layered, will((0, 0), (2, 0)))
    with pytest.raises(NoGoalCandidates):
        solve(layered, Will(frozenset([(0, 0)])))


def test_k_shortest_yields_distinct_paths_in_cost_order():
    g = graph_space([("s", "a", 1), ("a", "t", 1), ("s", "b", 1), ("b", "t", 2), ("s", "t", 5)])
    stats = SearchStats([0])
    paths = list(k_shortest(g, {"s"}, {"t"}, 5, None, 0, stats))
    assert [[s for s, _ in p] for p in paths] == [["s", "a", "t"], ["s", "b", "t"], ["s", "t"]]


def test_explicit_partitions():
    g = graph_space([(i, i + 1, 1) for i in range(5)])
    layered = build_hierarchy(g, 2, Explicit([[[0, 1, 2], [3, 4, 5]]]))
    assert len(layered.levels[1]) == 2
    assert len(solve(layered, will(0, 5))) == 5
    with pytest.raises(InvalidPartition):
        build_hierarchy(g, 2, Explicit([[[0, 1], [1, 2, 3, 4, 5]]]))
    with pytest.raises(InvalidPartition):
        build_hierarchy(g, 2, Explicit([[[0, 1, 2], [3, 4]]]))
    with pytest.raises(InvalidPartition):
        build_hierarchy(g, 3, Explicit([[[0, 1, 2], [3, 4, 5]]]))
    with pytest.raises(InvalidPartition):
        build_hierarchy(g, 2)


# -- will --------------------------------------------------------------------

def test_refine_will_keeps_ties_and_exclusions():
    g = grid_space(3, 3)
    w = refine_will(g, lambda s: s == (0, 0), lambda s: s[0] + s[1] if s != (2, 2) else None)
    assert w.stage is Stage.PURPOSEFUL
    assert w.goal_region == {(1, 2), (2, 1)}
    with pytest.raises(EmptyProblemRegion):
        refine_will(g, lambda s: False, lambda s: 0)
    with pytest.raises(NoGoalCandidates):
        refine_will(g, lambda s: True, lambda s: 0)


def test_will_stages():
    assert Will(frozenset([1])).stage is Stage.UNFORMULATED


# -- design ------------------------------------------------------------------

def test_design_on_line_graph(data_dir):
    sf = load_space(data_dir / "line3.graph")
    layered = build_hierarchy(sf.ground, 1)
    start, plan = design(layered, sf.goal, lambda s, d: -int(s))
    assert start == "1"
    assert plan.actions == ["go_2", "go_3"]
    start, plan = design(layered, sf.goal, near_scorer)
    assert start == "2" and len(plan) == 1


@given(st.integers(2, 7), st.integers(2, 7), st.randoms(use_true_random=False))
def test_far_design_reaches_eccentricity(w, h, rnd):
    goal = (rnd.randrange(w), rnd.randrange(h))
    blocked = random_blocked(rnd, w, h, 0.2, keep=[goal])
    ground = grid_space(w, h, blocked)
    edges = [(a, b) for a, _, b in raw(ground)]
    dist = graph_bfs_distances(edges, [goal])
    start, plan = design(build_hierarchy(ground, 1), [goal], far_scorer)
    assert dist[start] == max(dist.values())
    assert len(plan) == dist[start]
    assert validate_plan(raw(ground), start, plan.steps, {goal})


def test_design_errors():
    layered = build_hierarchy(grid_space(2, 1), 1)
    with pytest.raises(NoReachableStart):
        design(layered, [], far_scorer)
    with pytest.raises(NoReachableStart):
        design(layered, [(5, 5)], far_scorer)
    with pytest.raises(NoReachableStart):
        design(layered, [(0, 0)], lambda s, d: None)


# -- space files -------------------------------------------------------------

def test_parse_grid_file():
    sf = parse_space("space grid 3 2\nblocked 1,0  # a rock\nstart 0,0\ngoal 2,1\n")
    assert len(sf.ground) == 5 and sf.ground.is_grid
    assert (sf.start, sf.goal) == ([(0, 0)], [(2, 1)])
    assert set(grid_cells(3, 2, {(1, 0)})) == set(sf.ground.states)


def test_parse_graph_file_labels():
    sf = parse_space("space graph\nedge a b 2 hop\nedge b c 1\nstart a\ngoal c\n")
    plan = solve(build_hierarchy(sf.ground, 1), will("a", "c"))
    assert plan.actions == ["hop", "go_c"] and plan.cost == 3


@pytest.mark.parametrize("text, line, column", [
    ("", 1, 1),
    ("blocked 1,1", 1, 1),
    ("space grid 3 x", 1, 14),
    ("space grid 3 3\nblocked 5,5", 2, 9),
    ("space grid 3 3\nblocked 1,1\nstart 1,1", 3, 7),
    ("space graph\nedge a b -1", 2, 10),
    ("space graph\nedge a b cheap", 2, 10),
    ("space graph\nblocked 1,1", 2, 1),
    ("space graph\nspace graph", 2, 1),
])
def test_space_format_errors(text, line, column):
    with pytest.raises(SpaceFormatError) as info:
        parse_space(text)
    assert (info.value.line, info.value.column) == (line, column)
