import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from bnbench.bn_model import Variable, build_network
from bnbench.graphs import MixedGraph, dag_from_network, dag_to_cpdag
from bnbench.learners import (
    CiTestConfig,
    FamilyScorer,
    LearnerError,
    ScoreConfig,
    SearchConfig,
    family_score,
    g2_test,
    hill_climb,
    learn,
    pc_stable,
    resolve_params,
    tabu_search,
    total_score,
)
from bnbench.sampling import Dataset, sample
from conftest import chain_net


def dataset(columns: dict, cards: dict | None = None) -> Dataset:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n]) for n in names]).astype(np.int16)
    cards = cards or {n: int(data[:, i].max()) + 1 for i, n in enumerate(names)}
    cols = tuple((n, tuple(str(k) for k in range(max(2, cards[n])))) for n in names)
    return Dataset(cols, data, {})


def bic_oracle(data, cards, child, parents):
    """Maximised log-likelihood minus (ln n / 2) * free parameters, by explicit loops."""
    n = len(data)
    ll = 0.0
    for cfg in product(*[range(cards[p]) for p in parents]):
        rows = np.all(data[:, parents] == cfg, axis=1) if parents else np.ones(n, bool)
        nj = rows.sum()
        for k in range(cards[child]):
            njk = np.sum(data[rows, child] == k)
            if njk:
                ll += njk * math.log(njk / nj)
    q = math.prod(cards[p] for p in parents)
    return ll - math.log(n) / 2 * (cards[child] - 1) * q


def bdeu_oracle(data, cards, child, parents, iss):
    r = cards[child]
    q = math.prod(cards[p] for p in parents)
    out = 0.0
    for cfg in product(*[range(cards[p]) for p in parents]):
        rows = np.all(data[:, parents] == cfg, axis=1) if parents else np.ones(len(data), bool)
        nj = rows.sum()
        out += math.lgamma(iss / q) - math.lgamma(iss / q + nj)
        for k in range(r):
            njk = np.sum(data[rows, child] == k)
            out += math.lgamma(iss / (r * q) + njk) - math.lgamma(iss / (r * q))
    return out


# -- scores --

def test_bic_balanced_binary():
    ds = dataset({"X": [0] * 50 + [1] * 50})
    assert family_score(ds, "X", []) == pytest.approx(100 * math.log(0.5) - math.log(100) / 2, abs=1e-9)
    assert family_score(ds, "X", []) == pytest.approx(-71.617, abs=5e-4)


def test_bdeu_single_row():
    ds = dataset({"X": [0]}, {"X": 2})
    assert family_score(ds, "X", [], ScoreConfig("bdeu", iss=1.0)) == pytest.approx(math.log(0.5), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["bic", "bdeu"]), st.integers(0, 2))
def test_family_scores_match_loop_oracle(seed, kind, n_parents):
    rng = np.random.default_rng(seed)
    cards = [int(c) for c in rng.integers(2, 4, size=3)]
    n = int(rng.integers(1, 300))
    data = np.column_stack([rng.integers(0, c, n) for c in cards])
    ds = dataset({f"V{i}": data[:, i] for i in range(3)}, {f"V{i}": cards[i] for i in range(3)})
    parents = list(range(1, 1 + n_parents))
    cfg = ScoreConfig(kind, iss=float(rng.uniform(0.5, 10)))
    got = family_score(ds, "V0", [f"V{p}" for p in parents], cfg)
    want = (bic_oracle(data, cards, 0, parents) if kind == "bic"
            else bdeu_oracle(data, cards, 0, parents, cfg.iss))
    assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_scores_are_equal_on_equivalent_dags(asia):
    ds = sample(asia, 2000, 3)
    nodes = ("either", "lung", "tub", "xray")
    sub = Dataset(tuple((n, ds.states(n)) for n in nodes), ds.data[:, [ds.names.index(n) for n in nodes]], {})
    dags = [MixedGraph.from_arcs(nodes, a) for a in oracles.all_dags(nodes)]
    for kind in ("bic", "bdeu"):
        cfg = ScoreConfig(kind, iss=2.0)
        cache = {d: total_score(sub, d, cfg) for d in dags}
        by_class = {}
        for d, s in cache.items():
            by_class.setdefault(dag_to_cpdag(d), []).append(s)
        for scores in by_class.values():
            assert max(scores) - min(scores) <= 1e-6 * (1 + abs(scores[0]))


def test_total_is_sum_of_families(asia, asia_10k):
    g = dag_from_network(asia)
    sc = FamilyScorer(asia_10k, ScoreConfig("bic"))
    assert sc.total(g) == pytest.approx(sum(sc(v, g.parents(v)) for v in g.nodes))


def test_missing_token_is_a_category():
    ds = Dataset((("X", ("a", "b", "missing")),), np.array([[0], [1], [2], [2]], dtype=np.int16), {})
    want = 1 * math.log(0.25) * 2 + 2 * math.log(0.5) - math.log(4) / 2 * 2
    assert family_score(ds, "X", []) == pytest.approx(want)


def test_score_config_errors():
    with pytest.raises(ValueError):
        ScoreConfig("aic")
    with pytest.raises(ValueError):
        ScoreConfig("bdeu", iss=0)
    ds = dataset({"X": [0, 1]})
    with pytest.raises(LearnerError):
        family_score(ds, "Y", [])


# -- G² test --

def test_g2_copied_column_is_dependent():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, 1000)
    res = g2_test(dataset({"X": x, "Y": x}), "X", "Y")
    assert res.p_value < 1e-10 and not res.independent


def test_g2_independent_binaries():
    rng = np.random.default_rng(2)
    res = g2_test(dataset({"X": rng.integers(0, 2, 1000), "Y": rng.integers(0, 2, 1000)}), "X", "Y")
    assert res.df == 1 and res.independent


def test_g2_matches_first_principles():
    rng = np.random.default_rng(5)
    x, y = rng.integers(0, 3, 500), rng.integers(0, 4, 500)
    y = np.where(rng.random(500) < 0.3, x, y)
    table = np.zeros((3, 4))
    np.add.at(table, (x, y), 1)
    res = g2_test(dataset({"X": x, "Y": y}), "X", "Y")
    assert res.statistic == pytest.approx(oracles.exact_g2(table), rel=1e-10)
    assert res.df == 6


def test_g2_df_counts_occupied_strata():
    # z has 4 declared states, only 2 occur
    rng = np.random.default_rng(3)
    z = rng.integers(0, 2, 400)
    ds = dataset({"X": rng.integers(0, 2, 400), "Y": rng.integers(0, 2, 400), "Z": z}, {"X": 2, "Y": 2, "Z": 4})
    assert g2_test(ds, "X", "Y", ["Z"]).df == 2


def test_g2_zero_df_is_independent():
    ds = Dataset((("X", ("only",)), ("Y", ("0", "1"))), np.array([[0, 0], [0, 1], [0, 0]], dtype=np.int16), {})
    res = g2_test(ds, "X", "Y")
    assert res.independent and res.df == 0


def test_g2_conditional_independence_rejection_rate():
    # chain A -> B -> C: A and C are independent given B, so rejections stay near alpha
    net = chain_net()
    trials, rejections = 300, 0
    for s in range(trials):
        ds = sample(net, 300, 1000 + s)
        rejections += not g2_test(ds, "A", "C", ["B"], CiTestConfig(alpha=0.05)).independent
    assert rejections / trials <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / trials)
    assert not g2_test(sample(net, 3000, 1), "A", "C").independent


# -- search --

def test_hc_trace_strictly_increasing(asia_10k):
    trace = []
    hill_climb(asia_10k, ScoreConfig("bic"), SearchConfig(), trace)
    assert len(trace) > 1
    assert all(b > a for a, b in zip(trace, trace[1:]))


def test_hc_final_score_matches_trace(asia_10k):
    trace = []
    g = hill_climb(asia_10k, ScoreConfig("bic"), SearchConfig(), trace)
    assert total_score(asia_10k, g) == pytest.approx(trace[-1])


def test_tabu_without_memory_equals_hc(asia):
    for seed in range(3):
        ds = sample(asia, 1000, seed)
        assert tabu_search(ds, search=SearchConfig(tabu_length=0, tabu_escapes=0)) == hill_climb(ds)


def test_tabu_never_worse_than_hc(asia):
    for seed in range(3):
        ds = sample(asia, 500, seed)
        assert total_score(ds, tabu_search(ds)) >= total_score(ds, hill_climb(ds)) - 1e-9


def test_max_in_degree_respected(asia_10k):
    for algo in (hill_climb, tabu_search):
        g = algo(asia_10k, ScoreConfig("bic", max_in_degree=1))
        assert max(len(g.parents(v)) for v in g.nodes) <= 1


def test_independent_columns_give_empty_graph():
    rng = np.random.default_rng(4)
    ds = dataset({n: rng.integers(0, 2, 2000) for n in "XYZ"})
    assert len(hill_climb(ds)) == 0
    assert len(tabu_search(ds)) == 0
    assert len(pc_stable(ds)) == 0


def test_search_is_deterministic(asia):
    ds = sample(asia, 1000, 6)
    assert hill_climb(ds) == hill_climb(ds)
    assert tabu_search(ds) == tabu_search(ds)
    cfg = SearchConfig(restarts=3, perturb=2, seed=9)
    assert hill_climb(ds, search=cfg) == hill_climb(ds, search=cfg)


def test_hc_restarts_never_lower_score(asia):
    ds = sample(asia, 500, 2)
    base = total_score(ds, hill_climb(ds))
    assert total_score(ds, hill_climb(ds, search=SearchConfig(restarts=4, perturb=3, seed=1))) >= base - 1e-9


def test_empty_dataset_rejected(asia):
    with pytest.raises(LearnerError):
        hill_climb(sample(asia, 0, 0))


def test_learned_graph_is_acyclic(asia):
    g = hill_climb(sample(asia, 300, 1))
    assert oracles.is_acyclic(g.nodes, g.arcs())


# -- PC-Stable --

def test_pc_recovers_collider():
    v = [Variable(n, ("0", "1")) for n in "ABC"]
    net = build_network("col", v, {"C": ["A", "B"]},
                        {"A": [0.5, 0.5], "B": [0.5, 0.5], "C": [0.95, 0.05, 0.2, 0.8, 0.2, 0.8, 0.05, 0.95]})
    g = pc_stable(sample(net, 5000, 2))
    assert g.kind == "CPDAG"
    assert sorted(g.arcs()) == [("A", "C"), ("B", "C")]


def test_pc_chain_stays_undirected():
    g = pc_stable(sample(chain_net(), 5000, 3))
    assert g.skeleton() == {frozenset("AB"), frozenset("BC")} and g.arcs() == []


def test_pc_asia_recovers_equivalence_class_skeleton(asia):
    g = pc_stable(sample(asia, 50_000, 0))
    truth = dag_from_network(asia).skeleton()
    assert len(g.skeleton() ^ truth) <= 2


def test_pc_is_deterministic_and_order_free(asia):
    ds = sample(asia, 2000, 5)
    order = list(reversed(range(len(ds.names))))
    rev = Dataset(tuple(ds.columns[i] for i in order), ds.data[:, order], {})
    assert pc_stable(ds) == pc_stable(rev)


def test_max_cond_size_zero_only_marginal_tests(asia):
    ds = sample(asia, 2000, 5)
    g = pc_stable(ds, CiTestConfig(max_cond_size=0))
    for a, b in g.skeleton():
        assert not g2_test(ds, a, b).independent


# -- dispatch --

def test_resolve_params_and_learn(asia):
    assert resolve_params("tabu")["tabu_length"] == 10
    with pytest.raises(ValueError):
        resolve_params("mmhc")
    with pytest.raises(ValueError):
        resolve_params("hc", {"alpha": 0.1})
    ds = sample(asia, 500, 1)
    assert learn(ds, "hc") == hill_climb(ds)
    assert learn(ds, "hc", {"score": "bdeu", "iss": 5}) == hill_climb(ds, ScoreConfig("bdeu", 5.0))
    assert learn(ds, "pc-stable", {"alpha": 0.05}) == pc_stable(ds, CiTestConfig(alpha=0.05))
