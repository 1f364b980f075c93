"""Will refinement, layered state spaces and coarse-to-fine search.

A ground space is a finite directed graph of states with labelled,
non-negative-cost transitions. Each layer above it is a quotient: states
are blocks of the layer below and a block transition exists when some
member transition crosses between the blocks. ``solve`` searches the top
layer first and restricts every finer search to the preimage of the
abstract path (the corridor), backtracking to alternative abstract paths
and wider corridors before falling back to flat search.
"""

from __future__ import annotations

import enum
import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Mapping, Sequence

from .errors import (
    EmptyProblemRegion,
    InvalidPartition,
    NoGoalCandidates,
    NoReachableStart,
    SpaceFormatError,
    Unsolvable,
)

State = Hashable
MAX_WIDENING = 3
ALTERNATIVES = 3


def _natural(s):
    # numeric names sort numerically, everything else by text
    if isinstance(s, tuple):
        return (0, s)
    if isinstance(s, int):
        return (1, s, "")
    text = str(s)
    return (1, int(text), "") if text.lstrip("-").isdigit() else (2, 0, text)


def format_state(s: State) -> str:
    if isinstance(s, tuple):
        return ",".join(str(x) for x in s)
    return str(s)


@dataclass(frozen=True)
class Transition:
    src: State
    action: str
    dst: State
    cost: float = 1.0


class Space:
    """Finite labelled transition system with a fixed state order."""

    def __init__(self, states: Iterable[State], transitions: Iterable[Transition]):
        self.states: tuple[State, ...] = tuple(sorted(set(states), key=_natural))
        self.rank = {s: i for i, s in enumerate(self.states)}
        succ: dict[State, list[Transition]] = {s: [] for s in self.states}
        pred: dict[State, list[Transition]] = {s: [] for s in self.states}
        for t in transitions:
            if t.src not in self.rank or t.dst not in self.rank:
                raise ValueError(f"transition {t} leaves the state set")
            if not t.cost >= 0:
                raise ValueError(f"negative cost on {t}")
            succ[t.src].append(t)
            pred[t.dst].append(t)
        key = lambda t: (self.rank[t.dst], self.rank[t.src], t.action, t.cost)
        self.succ = {s: sorted(ts, key=key) for s, ts in succ.items()}
        self.pred = {s: sorted(ts, key=lambda t: (self.rank[t.src], t.action, t.cost)) for s, ts in pred.items()}

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, s: object) -> bool:
        return s in self.rank

    def transitions(self) -> Iterable[Transition]:
        for s in self.states:
            yield from self.succ[s]

    def transition(self, src: State, action: str, dst: State) -> Transition | None:
        for t in self.succ.get(src, ()):
            if t.action == action and t.dst == dst:
                return t
        return None


class GroundSpace(Space):
    def __init__(self, states, transitions, width: int | None = None, height: int | None = None):
        super().__init__(states, transitions)
        self.width = width
        self.height = height

    @property
    def is_grid(self) -> bool:
        return self.width is not None


GRID_MOVES = (("right", 1, 0), ("left", -1, 0), ("up", 0, 1), ("down", 0, -1))


def grid_space(width: int, height: int, blocked: Iterable[tuple[int, int]] = ()) -> GroundSpace:
    """4-neighbour grid with unit costs; blocked cells are not states."""
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    blocked = set(blocked)
    cells = [(x, y) for x in range(width) for y in range(height) if (x, y) not in blocked]
    free = set(cells)
    moves = []
    for x, y in cells:
        for label, dx, dy in GRID_MOVES:
            if (x + dx, y + dy) in free:
                moves.append(Transition((x, y), label, (x + dx, y + dy), 1.0))
    return GroundSpace(cells, moves, width, height)


def graph_space(edges: Iterable[tuple], states: Iterable[State] = ()) -> GroundSpace:
    """Directed graph from ``(src, dst, cost[, label])`` tuples."""
    ts, nodes = [], set(states)
    for e in edges:
        src, dst, cost = e[0], e[1], float(e[2])
        label = e[3] if len(e) > 3 else f"go_{format_state(dst)}"
        ts.append(Transition(src, label, dst, cost))
        nodes.update((src, dst))
    return GroundSpace(nodes, ts)


# -- space files -------------------------------------------------------------

@dataclass
class SpaceFile:
    ground: GroundSpace
    start: list[State]
    goal: list[State]


def _cell(text: str, lineno: int, column: int, width: int, height: int) -> tuple[int, int]:
    parts = text.split(",")
    try:
        x, y = (int(p) for p in parts)
    except ValueError:
        raise SpaceFormatError(f"expected x,y, got {text!r}", line=lineno, column=column) from None
    if not (0 <= x < width and 0 <= y < height):
        raise SpaceFormatError(f"cell {text} outside {width}x{height}", line=lineno, column=column)
    return x, y


def parse_space(text: str) -> SpaceFile:
    """Parse the line-oriented state-space format.

    Grid files start with ``space grid W H`` and may list ``blocked x,y``;
    graph files start with ``space graph`` and list ``edge a b cost``.
    Both accept any number of ``start`` and ``goal`` lines.
    """
    kind = None
    width = height = 0
    blocked: list[tuple[int, int]] = []
    edges: list[tuple] = []
    raw_start: list[tuple[str, int, int]] = []
    raw_goal: list[tuple[str, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        words = body.split()
        if not words:
            continue
        cols = []
        pos = 0
        for w in words:
            pos = body.index(w, pos)
            cols.append(pos + 1)
            pos += len(w)
        head = words[0]
        if head == "space":
            if kind is not None:
                raise SpaceFormatError("duplicate space line", line=lineno, column=1)
            if words[1:2] == ["grid"] and len(words) == 4:
                kind = "grid"
                size = []
                for w, c in zip(words[2:], cols[2:]):
                    if not w.isdigit() or int(w) < 1:
                        raise SpaceFormatError(f"grid size must be a positive integer, found {w!r}",
                                               line=lineno, column=c)
                    size.append(int(w))
                width, height = size
            elif words[1:] == ["graph"]:
                kind = "graph"
            else:
                raise SpaceFormatError("expected 'space grid W H' or 'space graph'", line=lineno, column=1)
        elif kind is None:
            raise SpaceFormatError("file must begin with a space line", line=lineno, column=1)
        elif head == "blocked" and kind == "grid" and len(words) == 2:
            blocked.append(_cell(words[1], lineno, cols[1], width, height))
        elif head == "edge" and kind == "graph" and len(words) in (4, 5):
            try:
                cost = float(words[3])
            except ValueError:
                raise SpaceFormatError(f"bad cost {words[3]!r}", line=lineno, column=cols[3]) from None
            if not cost >= 0:
                raise SpaceFormatError("cost must be non-negative", line=lineno, column=cols[3])
            edges.append((words[1], words[2], cost, *words[4:]))
        elif head in ("start", "goal") and len(words) == 2:
            (raw_start if head == "start" else raw_goal).append((words[1], lineno, cols[1]))
        else:
            raise SpaceFormatError(f"unexpected {head!r} line", line=lineno, column=1)
    if kind is None:
        raise SpaceFormatError("empty space file", line=1, column=1)

    if kind == "grid":
        cells = lambda raw: [_cell(t, ln, c, width, height) for t, ln, c in raw]
        start, goal = cells(raw_start), cells(raw_goal)
        for t, ln, c in raw_start + raw_goal:
            if _cell(t, ln, c, width, height) in set(blocked):
                raise SpaceFormatError(f"cell {t} is blocked", line=ln, column=c)
        ground = grid_space(width, height, blocked)
    else:
        start = [t for t, _, _ in raw_start]
        goal = [t for t, _, _ in raw_goal]
        ground = graph_space(edges, start + goal)
    return SpaceFile(ground, start, goal)


def load_space(path) -> SpaceFile:
    with open(path, encoding="utf-8") as fh:
        return parse_space(fh.read())


# -- layered spaces ----------------------------------------------------------

@dataclass(frozen=True)
class Grid2x2:
    pass


@dataclass(frozen=True)
class Explicit:
    """One partition per level above the ground; block j becomes state j."""

    partitions: Sequence[Sequence[Sequence[State]]]


@dataclass
class LayeredSpace:
    levels: list[Space]
    maps: list[dict[State, State]]  # maps[i]: level i state -> level i+1 block

    @property
    def ground(self) -> Space:
        return self.levels[0]

    def lift(self, state: State, level: int) -> State:
        for i in range(level):
            state = self.maps[i][state]
        return state

    def preimage(self, blocks: Iterable[State], level: int) -> set[State]:
        """States of ``level - 1`` whose block lies in ``blocks``."""
        blocks = set(blocks)
        return {s for s, b in self.maps[level - 1].items() if b in blocks}


def quotient(space: Space, mapping: Mapping[State, State]) -> Space:
    """Block graph: an edge per crossing block pair, at the cheapest crossing cost."""
    best: dict[tuple[State, State], float] = {}
    for t in space.transitions():
        a, b = mapping[t.src], mapping[t.dst]
        if a != b and ((a, b) not in best or t.cost < best[(a, b)]):
            best[(a, b)] = t.cost
    ts = [Transition(a, f"to_{format_state(b)}", b, c) for (a, b), c in best.items()]
    return Space(set(mapping.values()), ts)


def build_hierarchy(ground: Space, levels: int, coarsening=Grid2x2()) -> LayeredSpace:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    spaces, maps = [ground], []
    for i in range(levels - 1):
        below = spaces[-1]
        if isinstance(coarsening, Grid2x2):
            if below.states and not all(isinstance(s, tuple) and len(s) == 2 for s in below.states):
                raise InvalidPartition("Grid2x2 needs x,y states")
            mapping = {s: (s[0] // 2, s[1] // 2) for s in below.states}
        elif isinstance(coarsening, Explicit):
            if i >= len(coarsening.partitions):
                raise InvalidPartition(f"no partition given for level {i + 1}")
            mapping = _partition_map(below, coarsening.partitions[i])
        else:
            raise TypeError(f"unknown coarsening {coarsening!r}")
        maps.append(mapping)
        spaces.append(quotient(below, mapping))
    return LayeredSpace(spaces, maps)


def _partition_map(space: Space, blocks: Sequence[Sequence[State]]) -> dict[State, State]:
    mapping: dict[State, State] = {}
    for j, block in enumerate(blocks):
        if not block:
            raise InvalidPartition(f"block {j} is empty")
        for s in block:
            if s not in space:
                raise InvalidPartition(f"{format_state(s)} is not a state of the level")
            if s in mapping:
                raise InvalidPartition(f"{format_state(s)} appears in blocks {mapping[s]} and {j}")
            mapping[s] = j
    missing = [s for s in space.states if s not in mapping]
    if missing:
        raise InvalidPartition(f"{format_state(missing[0])} is in no block")
    return mapping


# -- will --------------------------------------------------------------------

class Stage(str, enum.Enum):
    UNFORMULATED = "Unformulated"
    PURPOSEFUL = "Purposeful"


@dataclass(frozen=True)
class Will:
    problem_region: frozenset
    goal_region: frozenset | None = None

    @property
    def stage(self) -> Stage:
        return Stage.PURPOSEFUL if self.goal_region else Stage.UNFORMULATED


def refine_will(space: Space, problem_predicate: Callable[[State], bool],
                goal_scorer: Callable[[State], float | None]) -> Will:
    """Goals are the best-scoring states outside the problem region (all ties kept).

    A scorer returning None leaves that state out of consideration.
    """
    problem = frozenset(s for s in space.states if problem_predicate(s))
    if not problem:
        raise EmptyProblemRegion("the problem predicate holds nowhere")
    scored = {}
    for s in space.states:
        if s not in problem:
            v = goal_scorer(s)
            if v is not None:
                scored[s] = v
    if not scored:
        raise NoGoalCandidates("no scored state outside the problem region")
    top = max(scored.values())
    return Will(problem, frozenset(s for s, v in scored.items() if v == top))


# -- search ------------------------------------------------------------------

@dataclass
class SearchStats:
    expansions: list[int]
    backtracks: int = 0
    widenings: int = 0
    fallback: bool = False
    trace: list[str] | None = None


def _ucs(space: Space, sources: Iterable[State], goals: set, allowed: set | None,
         level: int, stats: SearchStats, banned_nodes: set = frozenset(),
         banned_edges: set = frozenset()) -> tuple[list, float] | None:
    """Cheapest path from any source to any goal, ties broken by state order.

    Returns ``(path, cost)`` with ``path`` a list of (state, action-into-state)
    pairs; the first pair's action is None.
    """
    rank = space.rank
    heap: list = []
    best: dict = {}
    parent: dict = {}
    for s in sorted(set(sources), key=rank.__getitem__):
        if s in banned_nodes or (allowed is not None and s not in allowed):
            continue
        best[s] = 0.0
        parent[s] = (None, None)
        heapq.heappush(heap, (0.0, rank[s], s))
    done = set()
    while heap:
        g, _, s = heapq.heappop(heap)
        if s in done:
            continue
        done.add(s)
        assert allowed is None or s in allowed
        stats.expansions[level] += 1
        if stats.trace is not None:
            stats.trace.append(f"{level} {format_state(s)} {parent[s][1] or '-'}")
        if s in goals:
            path = []
            cur = s
            while cur is not None:
                prev, action = parent[cur]
                path.append((cur, action))
                cur = prev
            path.reverse()
            return path, g
        for t in space.succ[s]:
            d = t.dst
            if d in done or d in banned_nodes or (s, d) in banned_edges:
                continue
            if allowed is not None and d not in allowed:
                continue
            ng = g + t.cost
            if d not in best or ng < best[d]:
                best[d] = ng
                parent[d] = (s, t.action)
                heapq.heappush(heap, (ng, rank[d], d))
    return None


def _path_cost(space: Space, path: list) -> float:
    total = 0.0
    for (a, _), (b, action) in zip(path, path[1:]):
        total += space.transition(a, action, b).cost
    return total


def k_shortest(space: Space, sources: set, goals: set, k: int, allowed: set | None,
               level: int, stats: SearchStats) -> Iterator[list]:
    """Up to ``k`` loopless cheapest paths (Yen), produced lazily in order."""
    first = _ucs(space, sources, goals, allowed, level, stats)
    if first is None:
        return
    found = [first[0]]
    yield first[0]
    pool: list = []
    seen = {tuple(first[0])}
    counter = 0
    while len(found) < k:
        last = found[-1]
        for j in range(len(last) - 1):
            spur = last[j][0]
            root = last[:j]
            root_states = [s for s, _ in root]
            banned_edges = {(spur, p[j + 1][0]) for p in found
                            if len(p) > j + 1 and [s for s, _ in p[:j + 1]] == root_states + [spur]}
            spur_path = _ucs(space, {spur}, goals, allowed, level, stats,
                             banned_nodes=set(root_states), banned_edges=banned_edges)
            if spur_path is None:
                continue
            total = root + [(spur, last[j][1])] + spur_path[0][1:]
            key = tuple(total)
            if key in seen:
                continue
            seen.add(key)
            order = tuple(space.rank[s] for s, _ in total)
            heapq.heappush(pool, (_path_cost(space, total), len(total), order, counter, total))
            counter += 1
        if not pool:
            return
        found.append(heapq.heappop(pool)[-1])
        yield found[-1]


def _ring(space: Space, blocks: set, width: int) -> set:
    """``blocks`` grown by ``width`` steps of (undirected) adjacency."""
    grown = set(blocks)
    frontier = set(blocks)
    for _ in range(width):
        nxt = set()
        for b in frontier:
            nxt.update(t.dst for t in space.succ[b])
            nxt.update(t.src for t in space.pred[b])
        frontier = nxt - grown
        grown |= frontier
    return grown


@dataclass
class Plan:
    start: State
    steps: tuple[tuple[State, str, State], ...]
    cost: float
    level_paths: list[list[State]]  # chosen abstract path per level, top first
    expansions: list[int]
    backtracks: int = 0
    widenings: int = 0
    fallback: bool = False
    trace: list[str] = field(default_factory=list)

    @property
    def states(self) -> list[State]:
        return [self.start] + [b for _, _, b in self.steps]

    @property
    def actions(self) -> list[str]:
        return [a for _, a, _ in self.steps]

    @property
    def ground_path(self) -> list[tuple[State, str | None]]:
        return [(a, act) for a, act, _ in self.steps] + [(self.states[-1], None)]

    def __len__(self) -> int:
        return len(self.steps)


def _to_plan(path: list, ground: Space, level_paths, stats: SearchStats) -> Plan:
    steps = tuple((a, action, b) for (a, _), (b, action) in zip(path, path[1:]))
    return Plan(path[0][0], steps, _path_cost(ground, path), level_paths, list(stats.expansions),
                stats.backtracks, stats.widenings, stats.fallback, list(stats.trace or []))


def solve(layered: LayeredSpace, will: Will, *, alternatives: int = ALTERNATIVES,
          max_widening: int = MAX_WIDENING, trace: bool = False) -> Plan:
    """Coarse-to-fine plan from the problem region into the goal region."""
    if will.stage is not Stage.PURPOSEFUL:
        raise NoGoalCandidates("the will has no goal region yet")
    ground = layered.ground
    for s in will.problem_region | will.goal_region:
        if s not in ground:
            raise Unsolvable(f"{format_state(s)} is not a ground state")
    depth = len(layered.levels)
    stats = SearchStats([0] * depth, trace=[] if trace else None)
    sources = [set(will.problem_region)]
    goals = [set(will.goal_region)]
    for i in range(depth - 1):
        sources.append({layered.maps[i][s] for s in sources[-1]})
        goals.append({layered.maps[i][s] for s in goals[-1]})

    inside = sorted(will.problem_region & will.goal_region, key=ground.rank.__getitem__)
    if inside:
        return Plan(inside[0], (), 0.0, [], list(stats.expansions))

    chosen: list[list[State]] = []

    def refine(level: int, allowed: set | None) -> list | None:
        paths = k_shortest(layered.levels[level], sources[level], goals[level],
                           1 if level == 0 else alternatives, allowed, level, stats)
        for n, path in enumerate(paths):
            if n:
                stats.backtracks += 1
            if level == 0:
                return path
            blocks = {s for s, _ in path}
            chosen.append([s for s, _ in path])
            previous = None
            for w in range(max_widening + 1):
                corridor = _ring(layered.levels[level], blocks, w)
                if allowed is not None:
                    corridor &= allowed
                if corridor == previous:
                    break  # nothing left to widen into
                if w:
                    stats.widenings += 1
                previous = corridor
                result = refine(level - 1, layered.preimage(corridor, level))
                if result is not None:
                    return result
            chosen.pop()
        return None

    path = refine(depth - 1, None)
    if path is None:
        stats.fallback = True
        chosen.clear()
        path = _ucs_flat(ground, sources[0], goals[0], stats)
        if path is None:
            raise Unsolvable("no ground path from the problem region to the goal region")
    return _to_plan(path, ground, [list(p) for p in chosen], stats)


def _ucs_flat(ground: Space, sources: set, goals: set, stats: SearchStats) -> list | None:
    found = _ucs(ground, sources, goals, None, 0, stats)
    return None if found is None else found[0]


# -- designing ---------------------------------------------------------------

def backward_distances(space: Space, goal_region: Iterable[State]) -> dict[State, int]:
    """Hop distance to the goal region over reversed transitions."""
    dist: dict[State, int] = {}
    queue = deque()
    for g in sorted(set(goal_region), key=space.rank.__getitem__):
        dist[g] = 0
        queue.append(g)
    while queue:
        s = queue.popleft()
        for t in space.pred[s]:
            if t.src not in dist:
                dist[t.src] = dist[s] + 1
                queue.append(t.src)
    return dist


def design(layered: LayeredSpace, goal_region: Iterable[State],
           start_scorer: Callable[[State, int], float | None], **solve_args) -> tuple[State, Plan]:
    """Choose the best start that can reach the goal, then plan forward from it.

    ``start_scorer(state, distance)`` may return None to exclude a state.
    """
    goal_region = frozenset(goal_region)
    if not goal_region:
        raise NoReachableStart("empty goal region")
    ground = layered.ground
    for g in goal_region:
        if g not in ground:
            raise NoReachableStart(f"{format_state(g)} is not a ground state")
    dist = backward_distances(ground, goal_region)
    scored = []
    for s in sorted(dist, key=ground.rank.__getitem__):
        v = start_scorer(s, dist[s])
        if v is not None:
            scored.append((s, v))
    if not scored:
        raise NoReachableStart("no state reaching the goal region is acceptable to the scorer")
    top = max(v for _, v in scored)
    start = next(s for s, v in scored if v == top)
    return start, solve(layered, Will(frozenset([start]), goal_region), **solve_args)


def far_scorer(state: State, distance: int) -> float:
    return distance


def near_scorer(state: State, distance: int) -> float | None:
    return -distance if distance > 0 else None


SCORERS = {"far": far_scorer, "near": near_scorer}
