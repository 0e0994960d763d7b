"""PC-Stable: order-independent skeleton search followed by collider and Meek orientation."""

from __future__ import annotations

from itertools import combinations

from bnbench.graphs import PDAG, MixedGraph
from bnbench.learners.citest import CiTestConfig, G2Tester
from bnbench.learners.scores import LearnerError
from bnbench.sampling import Dataset


def pc_skeleton(ds: Dataset, config: CiTestConfig = CiTestConfig(), tester: G2Tester | None = None):
    """Level-wise edge removal with adjacency sets frozen at the start of each level.

    Returns the remaining adjacencies and the separating set recorded for each
    removed pair. Nodes are visited in name order, so the result does not depend
    on the column order of the dataset.
    """
    tester = tester or G2Tester(ds, config)
    nodes = sorted(ds.names)
    adj = {x: set(nodes) - {x} for x in nodes}
    sepset: dict[frozenset[str], tuple[str, ...]] = {}
    level = 0
    while config.max_cond_size is None or level <= config.max_cond_size:
        frozen = {x: sorted(adj[x]) for x in nodes}
        if all(len(frozen[x]) - 1 < level for x in nodes):
            break
        for x in nodes:
            for y in frozen[x]:
                if y not in adj[x]:
                    continue
                others = [w for w in frozen[x] if w != y]
                if len(others) < level:
                    continue
                for cond in combinations(others, level):
                    if tester(x, y, cond).independent:
                        adj[x].discard(y)
                        adj[y].discard(x)
                        sepset[frozenset((x, y))] = cond
                        break
        level += 1
    return adj, sepset


def orient_colliders(nodes, adj, sepset) -> PDAG:
    """Orient x -> z <- y for unshielded triples whose sepset omits z.

    All demanded arrowheads are collected first; an edge demanded in both
    directions stays undirected, so the outcome does not depend on visit order.
    """
    pdag = PDAG.from_skeleton(nodes, {frozenset((x, y)) for x in adj for y in adj[x]})
    demanded: set[tuple[str, str]] = set()
    for z in sorted(nodes):
        for x, y in combinations(sorted(adj[z]), 2):
            if y in adj[x]:
                continue
            if z not in sepset.get(frozenset((x, y)), ()):
                demanded.add((x, z))
                demanded.add((y, z))
    for u, v in sorted(demanded):
        if (v, u) not in demanded:
            pdag.orient(u, v)
    return pdag


def pc_stable(ds: Dataset, config: CiTestConfig = CiTestConfig()) -> MixedGraph:
    if ds.n == 0:
        raise LearnerError("cannot learn from an empty dataset")
    adj, sepset = pc_skeleton(ds, config)
    pdag = orient_colliders(sorted(ds.names), adj, sepset)
    pdag.apply_meek_rules()
    return pdag.to_graph("CPDAG")
