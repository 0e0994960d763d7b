"""Score-based local search over DAGs: hill climbing and tabu search."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator

from bnbench import _rng
from bnbench.graphs import MixedGraph
from bnbench.learners.scores import FamilyScorer, LearnerError, ScoreConfig
from bnbench.sampling import Dataset

ADD, DELETE, REVERSE = 0, 1, 2
MOVE_NAMES = {ADD: "add", DELETE: "delete", REVERSE: "reverse"}


@dataclass(frozen=True)
class SearchConfig:
    tabu_length: int = 10
    tabu_escapes: int = 10
    restarts: int = 0
    perturb: int = 1
    max_iter: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tabu_length < 0 or self.tabu_escapes < 0 or self.restarts < 0:
            raise ValueError("tabu length, escapes and restarts must be >= 0")


Move = tuple[int, str, str]  # (kind, source, target); for REVERSE the arc source -> target is flipped


class _State:
    """Mutable DAG with cached family scores."""

    def __init__(self, nodes: list[str], scorer: FamilyScorer, max_in_degree: int | None):
        self.nodes = nodes
        self.scorer = scorer
        self.mid = max_in_degree
        self.parents: dict[str, set[str]] = {v: set() for v in nodes}
        self.family = {v: scorer(v, ()) for v in nodes}

    @property
    def score(self) -> float:
        return sum(self.family[v] for v in self.nodes)

    def key(self) -> frozenset[tuple[str, str]]:
        return frozenset((p, c) for c, ps in self.parents.items() for p in ps)

    def _reaches(self, src: str, dst: str, skip: tuple[str, str] | None = None) -> bool:
        """Directed path src ~> dst, optionally ignoring one arc."""
        children: dict[str, list[str]] = {v: [] for v in self.nodes}
        for c, ps in self.parents.items():
            for p in ps:
                if (p, c) != skip:
                    children[p].append(c)
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for w in children[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return False

    def moves(self) -> Iterator[Move]:
        """All structurally possible moves in tie-break order: kind, then source, then target."""
        for u in self.nodes:
            for v in self.nodes:
                if u != v and u not in self.parents[v] and v not in self.parents[u]:
                    yield ADD, u, v
        for u in self.nodes:
            for v in self.nodes:
                if u in self.parents[v]:
                    yield DELETE, u, v
        for u in self.nodes:
            for v in self.nodes:
                if u in self.parents[v]:
                    yield REVERSE, u, v

    def delta(self, move: Move) -> float:
        kind, u, v = move
        s = self.scorer
        if kind == ADD:
            return s(v, self.parents[v] | {u}) - self.family[v]
        if kind == DELETE:
            return s(v, self.parents[v] - {u}) - self.family[v]
        return (s(v, self.parents[v] - {u}) - self.family[v]) + (s(u, self.parents[u] | {v}) - self.family[u])

    def admissible(self, move: Move) -> bool:
        kind, u, v = move
        if kind == ADD:
            if self.mid is not None and len(self.parents[v]) >= self.mid:
                return False
            return not self._reaches(v, u)
        if kind == REVERSE:
            if self.mid is not None and len(self.parents[u]) >= self.mid:
                return False
            return not self._reaches(u, v, skip=(u, v))
        return True

    def key_after(self, move: Move) -> frozenset[tuple[str, str]]:
        kind, u, v = move
        k = set(self.key())
        if kind == ADD:
            k.add((u, v))
        elif kind == DELETE:
            k.discard((u, v))
        else:
            k.discard((u, v))
            k.add((v, u))
        return frozenset(k)

    def apply(self, move: Move) -> None:
        kind, u, v = move
        if kind == ADD:
            self.parents[v].add(u)
        elif kind == DELETE:
            self.parents[v].discard(u)
        else:
            self.parents[v].discard(u)
            self.parents[u].add(v)
            self.family[u] = self.scorer(u, self.parents[u])
        self.family[v] = self.scorer(v, self.parents[v])

    def best_move(self, eps: float, tabu=None) -> tuple[Move | None, float]:
        """Highest-delta admissible move; earlier moves in tie-break order win ties within ``eps``."""
        best, best_delta = None, float("-inf")
        for move in self.moves():
            d = self.delta(move)
            if best is not None and d <= best_delta + eps:
                continue
            if not self.admissible(move):
                continue
            if tabu and self.key_after(move) in tabu:
                continue
            best, best_delta = move, d
        return best, best_delta

    def to_graph(self) -> MixedGraph:
        return MixedGraph.from_arcs(self.nodes, sorted(self.key()), "DAG")

    def load(self, arcs) -> None:
        self.parents = {v: set() for v in self.nodes}
        for p, c in arcs:
            self.parents[c].add(p)
        self.family = {v: self.scorer(v, self.parents[v]) for v in self.nodes}


def _eps(score: float) -> float:
    return 1e-9 * (1.0 + abs(score))


def _climb(state: _State, max_iter: int | None, trace: list | None) -> None:
    it = 0
    while max_iter is None or it < max_iter:
        current = state.score
        move, d = state.best_move(_eps(current))
        if move is None or d <= _eps(current):
            break
        state.apply(move)
        it += 1
        if trace is not None:
            trace.append(state.score)


def _perturb(state: _State, rng, count: int) -> None:
    for _ in range(count):
        options = [m for m in state.moves() if state.admissible(m)]
        if not options:
            return
        state.apply(options[int(rng.integers(len(options)))])


def _prepare(ds: Dataset, score: ScoreConfig) -> _State:
    if ds.n == 0:
        raise LearnerError("cannot learn from an empty dataset")
    return _State(list(ds.names), FamilyScorer(ds, score), score.max_in_degree)


def hill_climb(
    ds: Dataset,
    score: ScoreConfig = ScoreConfig(),
    search: SearchConfig = SearchConfig(),
    trace: list | None = None,
) -> MixedGraph:
    """Greedy search from the empty graph using arc additions, deletions and reversals.

    ``trace``, when given, receives the total score after each accepted move.
    """
    state = _prepare(ds, score)
    if trace is not None:
        trace.append(state.score)
    _climb(state, search.max_iter, trace)
    if search.restarts:
        rng = _rng.generator(search.seed, "learner")
        best_key, best_score = state.key(), state.score
        for _ in range(search.restarts):
            state.load(best_key)
            _perturb(state, rng, search.perturb)
            _climb(state, search.max_iter, None)
            if state.score > best_score + _eps(best_score):
                best_key, best_score = state.key(), state.score
        state.load(best_key)
    return state.to_graph()


def tabu_search(
    ds: Dataset,
    score: ScoreConfig = ScoreConfig(),
    search: SearchConfig = SearchConfig(),
    trace: list | None = None,
) -> MixedGraph:
    """Hill climbing that keeps taking the best non-tabu move past local maxima.

    The last ``tabu_length`` visited structures may not be revisited. Search stops
    after ``tabu_escapes`` consecutive moves fail to beat the best score seen, and
    the best structure seen is returned.
    """
    state = _prepare(ds, score)
    tabu: deque = deque(maxlen=search.tabu_length) if search.tabu_length else deque(maxlen=0)
    if search.tabu_length:
        tabu.append(state.key())
    best_key, best_score = state.key(), state.score
    if trace is not None:
        trace.append(best_score)
    losses = 0
    it = 0
    while search.max_iter is None or it < search.max_iter:
        move, _ = state.best_move(_eps(state.score), tabu if search.tabu_length else None)
        if move is None:
            break
        state.apply(move)
        it += 1
        if search.tabu_length:
            tabu.append(state.key())
        if state.score > best_score + _eps(best_score):
            best_key, best_score = state.key(), state.score
            losses = 0
            if trace is not None:
                trace.append(best_score)
        else:
            losses += 1
            if losses > search.tabu_escapes:
                break
    state.load(best_key)
    return state.to_graph()
