"""Mixed-endpoint graphs (DAG, CPDAG, MAG, PAG), equivalence classes and latent projection."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping, Sequence

GRAPH_FORMAT_VERSION = 1
CLASSES = ("DAG", "CPDAG", "MAG", "PAG", "GENERIC")


class Mark(str, Enum):
    TAIL = "tail"
    ARROW = "arrow"
    CIRCLE = "circle"


TAIL, ARROW, CIRCLE = Mark.TAIL, Mark.ARROW, Mark.CIRCLE


class GraphError(ValueError):
    pass


Edge = tuple[str, str, Mark, Mark]


def _canon(u: str, v: str, mu: Mark, mv: Mark) -> Edge:
    return (u, v, mu, mv) if u < v else (v, u, mv, mu)


@dataclass(frozen=True, eq=False)
class MixedGraph:
    """Nodes plus at most one edge per pair; each edge carries a mark at both ends.

    Edges are stored as ``(u, v, mark_at_u, mark_at_v)`` with ``u < v``.
    """

    nodes: tuple[str, ...]
    edges: frozenset[Edge]
    kind: str = "GENERIC"

    @classmethod
    def build(cls, nodes: Iterable[str], edges: Iterable[tuple[str, str, Mark | str, Mark | str]], kind: str = "GENERIC") -> "MixedGraph":
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node names")
        known = set(nodes)
        seen: dict[tuple[str, str], Edge] = {}
        for u, v, mu, mv in edges:
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            if u not in known or v not in known:
                raise GraphError(f"edge {u!r}-{v!r} references an unknown node")
            e = _canon(u, v, Mark(mu), Mark(mv))
            if (e[0], e[1]) in seen:
                raise GraphError(f"more than one edge between {e[0]!r} and {e[1]!r}")
            seen[(e[0], e[1])] = e
        g = cls(nodes, frozenset(seen.values()), kind)
        g.validate()
        return g

    @classmethod
    def from_arcs(cls, nodes: Iterable[str], arcs: Iterable[tuple[str, str]], kind: str = "DAG") -> "MixedGraph":
        return cls.build(nodes, ((u, v, TAIL, ARROW) for u, v in arcs), kind)

    def validate(self) -> None:
        if self.kind not in CLASSES:
            raise GraphError(f"unknown graph class {self.kind!r}")
        marks = {m for e in self.edges for m in e[2:]}
        if self.kind == "DAG":
            if any({e[2], e[3]} != {TAIL, ARROW} for e in self.edges):
                raise GraphError("a DAG may only contain directed edges")
            if _has_directed_cycle(self):
                raise GraphError("directed cycle in DAG")
        elif self.kind == "CPDAG":
            if CIRCLE in marks or any(e[2] == e[3] == ARROW for e in self.edges):
                raise GraphError("a CPDAG may only contain directed and undirected edges")
        elif self.kind == "MAG":
            if CIRCLE in marks or any(e[2] == e[3] == TAIL for e in self.edges):
                raise GraphError("a MAG may only contain directed and bi-directed edges")

    # -- queries --

    def __eq__(self, other):
        if not isinstance(other, MixedGraph):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self.edges == other.edges and self.kind == other.kind

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges, self.kind))

    @property
    def _lookup(self) -> dict[tuple[str, str], tuple[Mark, Mark]]:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {}
            for u, v, mu, mv in self.edges:
                cache[(u, v)] = (mu, mv)
                cache[(v, u)] = (mv, mu)
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def marks(self, u: str, v: str) -> tuple[Mark, Mark] | None:
        """Marks at (u, v) for the edge between them, or None."""
        return self._lookup.get((u, v))

    def adjacent(self, u: str, v: str) -> bool:
        return (u, v) in self._lookup

    def neighbors(self, u: str) -> list[str]:
        return [v for v in self.nodes if (u, v) in self._lookup]

    def is_arc(self, u: str, v: str) -> bool:
        return self.marks(u, v) == (TAIL, ARROW)

    def arcs(self) -> list[tuple[str, str]]:
        out = []
        for u, v, mu, mv in sorted(self.edges):
            if (mu, mv) == (TAIL, ARROW):
                out.append((u, v))
            elif (mu, mv) == (ARROW, TAIL):
                out.append((v, u))
        return out

    def parents(self, v: str) -> list[str]:
        return [u for u in self.nodes if self.is_arc(u, v)]

    def children(self, u: str) -> list[str]:
        return [v for v in self.nodes if self.is_arc(u, v)]

    def skeleton(self) -> frozenset[frozenset[str]]:
        return frozenset(frozenset((u, v)) for u, v, _, _ in self.edges)

    def __len__(self) -> int:
        return len(self.edges)

    # -- serialisation --

    def to_dict(self) -> dict:
        return {
            "format_version": GRAPH_FORMAT_VERSION,
            "class": self.kind,
            "nodes": list(self.nodes),
            "edges": [
                {"from": u, "to": v, "mark_from": mu.value, "mark_to": mv.value}
                for u, v, mu, mv in sorted(self.edges)
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MixedGraph":
        try:
            edges = [(e["from"], e["to"], e["mark_from"], e["mark_to"]) for e in doc["edges"]]
            return cls.build(doc["nodes"], edges, doc.get("class", "GENERIC"))
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed graph document: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"malformed graph document: {exc}") from exc


def write_graph(g: MixedGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(g.to_dict(), indent=2) + "\n", encoding="utf-8")


def read_graph(path: str | Path) -> MixedGraph:
    return MixedGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _has_directed_cycle(g: MixedGraph) -> bool:
    children: dict[str, list[str]] = {n: [] for n in g.nodes}
    indeg = dict.fromkeys(g.nodes, 0)
    for u, v in g.arcs():
        children[u].append(v)
        indeg[v] += 1
    ready = [n for n in g.nodes if indeg[n] == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for c in children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return seen != len(g.nodes)


def dag_from_parents(parents: Mapping[str, Sequence[str]], nodes: Sequence[str] | None = None) -> MixedGraph:
    nodes = list(nodes) if nodes is not None else list(parents)
    return MixedGraph.from_arcs(nodes, [(p, c) for c in nodes for p in parents.get(c, ())], "DAG")


def dag_from_network(net) -> MixedGraph:
    return dag_from_parents(net.parents, net.names)


def _require_dag(g: MixedGraph) -> None:
    if g.kind != "DAG":
        raise GraphError(f"expected a DAG, got class {g.kind}")


# -- ancestry -----------------------------------------------------------------

def _parent_map(g: MixedGraph) -> dict[str, list[str]]:
    pa: dict[str, list[str]] = {n: [] for n in g.nodes}
    for u, v in g.arcs():
        pa[v].append(u)
    return pa


def ancestors(g: MixedGraph, node: str, pa: dict[str, list[str]] | None = None) -> set[str]:
    """Proper ancestors of ``node`` along directed edges."""
    if node not in g.nodes:
        raise GraphError(f"unknown node {node!r}")
    pa = pa if pa is not None else _parent_map(g)
    out: set[str] = set()
    stack = list(pa[node])
    while stack:
        p = stack.pop()
        if p not in out:
            out.add(p)
            stack.extend(pa[p])
    return out


def v_structures(g: MixedGraph) -> frozenset[tuple[str, str, str]]:
    """Unshielded colliders ``(a, c, b)`` meaning a -> c <- b with a < b non-adjacent."""
    out = set()
    for c in g.nodes:
        pa = sorted(g.parents(c))
        for a, b in combinations(pa, 2):
            if not g.adjacent(a, b):
                out.add((a, c, b))
    return frozenset(out)


def markov_equivalent(g1: MixedGraph, g2: MixedGraph) -> bool:
    _require_dag(g1)
    _require_dag(g2)
    if set(g1.nodes) != set(g2.nodes):
        raise GraphError("graphs have different node sets")
    return g1.skeleton() == g2.skeleton() and v_structures(g1) == v_structures(g2)


# -- partially directed graphs ---------------------------------------------------

class PDAG:
    """Mutable working copy with directed and undirected edges, used for orientation."""

    def __init__(self, nodes: Sequence[str]):
        self.nodes = sorted(nodes)
        self.directed: set[tuple[str, str]] = set()
        self.undirected: set[frozenset[str]] = set()
        self.adj: dict[str, set[str]] = {n: set() for n in nodes}

    @classmethod
    def from_skeleton(cls, nodes: Sequence[str], pairs: Iterable[Iterable[str]]) -> "PDAG":
        p = cls(nodes)
        for pair in pairs:
            u, v = tuple(pair)
            p.undirected.add(frozenset((u, v)))
            p.adj[u].add(v)
            p.adj[v].add(u)
        return p

    def is_undirected(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self.undirected

    def is_directed(self, u: str, v: str) -> bool:
        return (u, v) in self.directed

    def orient(self, u: str, v: str) -> bool:
        key = frozenset((u, v))
        if key not in self.undirected:
            return False
        self.undirected.discard(key)
        self.directed.add((u, v))
        return True

    def to_graph(self, kind: str = "CPDAG") -> MixedGraph:
        edges = [(u, v, TAIL, ARROW) for u, v in self.directed]
        edges += [(*sorted(e), TAIL, TAIL) for e in self.undirected]
        return MixedGraph.build(self.nodes, edges, kind)

    def apply_meek_rules(self) -> None:
        """Orient undirected edges with rules R1-R4 until nothing changes.

        Iteration follows sorted node names, so the result does not depend on
        the order nodes were supplied in.
        """
        changed = True
        while changed:
            changed = False
            for e in sorted(self.undirected, key=sorted):
                a, b = sorted(e)
                for x, y in ((a, b), (b, a)):
                    if self.is_undirected(x, y) and self._meek_orients(x, y):
                        self.orient(x, y)
                        changed = True
                        break

    def _meek_orients(self, a: str, b: str) -> bool:
        """Whether one of R1-R4 forces a -> b for the undirected edge a - b."""
        adj = self.adj
        # R1: c -> a - b, c and b non-adjacent
        for c in adj[a]:
            if self.is_directed(c, a) and c != b and b not in adj[c]:
                return True
        # R2: a -> c -> b
        for c in adj[a]:
            if self.is_directed(a, c) and self.is_directed(c, b):
                return True
        # R3: a - c -> b, a - d -> b, c and d non-adjacent
        cands = [c for c in adj[a] if self.is_undirected(a, c) and self.is_directed(c, b)]
        for c, d in combinations(cands, 2):
            if d not in adj[c]:
                return True
        # R4: a - c -> d -> b, a adjacent to d, c and b non-adjacent
        for c in adj[a]:
            if c == b or not self.is_undirected(a, c) or b in adj[c]:
                continue
            for d in adj[c]:
                if d != a and self.is_directed(c, d) and self.is_directed(d, b) and d in adj[a]:
                    return True
        return False


def dag_to_cpdag(g: MixedGraph) -> MixedGraph:
    """Completed partially directed graph of the Markov equivalence class of ``g``."""
    _require_dag(g)
    p = PDAG.from_skeleton(g.nodes, g.skeleton())
    for a, c, b in v_structures(g):
        p.orient(a, c)
        p.orient(b, c)
    p.apply_meek_rules()
    return p.to_graph("CPDAG")


# -- latent projection -----------------------------------------------------------

@lru_cache(maxsize=4096)
def _dag_bits(g: MixedGraph) -> tuple[tuple[str, ...], dict[str, int], tuple[int, ...], tuple[int, ...]]:
    nodes = tuple(g.nodes)
    idx = {n: i for i, n in enumerate(nodes)}
    pa = [0] * len(nodes)
    for u, v in g.arcs():
        pa[idx[v]] |= 1 << idx[u]
    anc = [0] * len(nodes)
    # inclusive ancestors by repeated expansion
    for i in range(len(nodes)):
        seen = 1 << i
        frontier = pa[i]
        while frontier & ~seen:
            new = frontier & ~seen
            seen |= new
            nxt = 0
            bits = new
            while bits:
                low = bits & -bits
                nxt |= pa[low.bit_length() - 1]
                bits ^= low
            frontier = nxt
        anc[i] = seen
    return nodes, idx, tuple(pa), tuple(anc)


def _d_connected(pa: Sequence[int], anc: Sequence[int], u: int, v: int, z: int) -> bool:
    """d-connection of u and v given z, via the moralised ancestral graph."""
    relevant = anc[u] | anc[v]
    bits = z
    while bits:
        low = bits & -bits
        relevant |= anc[low.bit_length() - 1]
        bits ^= low
    nbr: dict[int, int] = {}
    bits = relevant
    members = []
    while bits:
        low = bits & -bits
        members.append(low.bit_length() - 1)
        bits ^= low
    for i in members:
        nbr.setdefault(i, 0)
    for i in members:
        ps = pa[i] & relevant
        nbr[i] |= ps
        bits = ps
        while bits:
            low = bits & -bits
            j = low.bit_length() - 1
            nbr[j] |= (1 << i) | (ps & ~low)
            bits ^= low
    allowed = relevant & ~z
    reached = 1 << u
    frontier = 1 << u
    while frontier:
        nxt = 0
        bits = frontier
        while bits:
            low = bits & -bits
            nxt |= nbr[low.bit_length() - 1]
            bits ^= low
        nxt &= allowed & ~reached
        reached |= nxt
        frontier = nxt
    return bool(reached >> v & 1)


def dag_to_mag(g: MixedGraph, latents: Iterable[str]) -> MixedGraph:
    """Project a DAG onto its observed nodes as a maximal ancestral graph.

    Observed u, v are adjacent exactly when they are d-connected given their
    observed ancestors, which holds iff an inducing path relative to the
    latents joins them. Adjacent pairs become u -> v when u is an ancestor of
    v, and u <-> v when neither is an ancestor of the other.
    """
    _require_dag(g)
    latents = set(latents)
    if not latents <= set(g.nodes):
        raise GraphError(f"latent set contains unknown nodes {sorted(latents - set(g.nodes))}")
    nodes, idx, pa, anc = _dag_bits(g)
    observed = [n for n in nodes if n not in latents]
    obs_mask = 0
    for n in observed:
        obs_mask |= 1 << idx[n]
    edges = []
    for a, b in combinations(observed, 2):
        i, j = idx[a], idx[b]
        z = (anc[i] | anc[j]) & obs_mask & ~((1 << i) | (1 << j))
        if not _d_connected(pa, anc, i, j, z):
            continue
        if anc[j] >> i & 1:
            edges.append((a, b, TAIL, ARROW))
        elif anc[i] >> j & 1:
            edges.append((b, a, TAIL, ARROW))
        else:
            edges.append((a, b, ARROW, ARROW))
    return MixedGraph.build(observed, edges, "MAG")


def d_separated(g: MixedGraph, u: str, v: str, z: Iterable[str] = ()) -> bool:
    _require_dag(g)
    nodes, idx, pa, anc = _dag_bits(g)
    zm = 0
    for n in z:
        zm |= 1 << idx[n]
    return not _d_connected(pa, anc, idx[u], idx[v], zm)


def is_ancestral(g: MixedGraph) -> bool:
    """No directed cycles, and no arc or bi-directed edge against ancestry."""
    if _has_directed_cycle(g):
        return False
    pa = _parent_map(g)
    anc = {n: ancestors(g, n, pa) for n in g.nodes}
    for u, v, mu, mv in g.edges:
        if mu == ARROW and mv == ARROW and (u in anc[v] or v in anc[u]):
            return False
        if (mu, mv) == (TAIL, ARROW) and v in anc[u]:
            return False
        if (mu, mv) == (ARROW, TAIL) and u in anc[v]:
            return False
    return True
