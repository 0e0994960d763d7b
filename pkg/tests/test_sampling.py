import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from bnbench.bn_model import Variable, build_network
from bnbench.sampling import prefix, read_dataset, sample, sidecar_path, write_dataset
from conftest import chain_net


def test_empty_sample(asia):
    ds = sample(asia, 0, 1)
    assert ds.n == 0 and ds.names == asia.names


def test_rare_root_frequency(asia):
    n = 100_000
    ds = sample(asia, n, 7)
    freq = np.mean(ds.column("asia") == 0)
    assert abs(freq - 0.01) <= 3 * np.sqrt(0.01 * 0.99 / n)


def test_deterministic_cpt():
    v = [Variable("A", ("a0", "a1")), Variable("B", ("b0", "b1"))]
    net = build_network("det", v, {"B": ["A"]}, {"A": [0.5, 0.5], "B": [0, 1, 1, 0]})
    ds = sample(net, 5000, 3)
    assert np.all(ds.column("B") == 1 - ds.column("A"))


def test_same_seed_same_data(asia):
    assert sample(asia, 500, 11) == sample(asia, 500, 11)
    assert sample(asia, 500, 11) != sample(asia, 500, 12)


def test_prefix_examples(asia):
    ds = sample(asia, 1000, 5)
    assert prefix(ds, 1000) == ds
    assert prefix(ds, 100) == sample(asia, 100, 5)
    assert prefix(ds, 0).n == 0
    with pytest.raises(ValueError):
        prefix(ds, 1001)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 400), st.integers(0, 400), st.integers(0, 2**63 - 1))
def test_prefix_coherence(m, extra, seed):
    net = chain_net()
    big = sample(net, m + extra, seed)
    assert prefix(big, m) == sample(net, m, seed)


def test_chunks_in_any_order_match(asia):
    whole = sample(asia, 3000, 9)
    parts = [sample(asia, 1000, 9, start=s) for s in (2000, 0, 1000)]
    stitched = np.vstack([parts[1].data, parts[2].data, parts[0].data])
    assert np.array_equal(whole.data, stitched)


def test_root_marginals_within_binomial_interval(asia):
    n = 100_000
    ds = sample(asia, n, 21)
    z = norm.ppf(1 - 0.0001 / 2)
    for name in ("asia", "smoke"):
        probs = asia.cpts[name][0]
        for k, p in enumerate(probs):
            freq = np.mean(ds.column(name) == k)
            assert abs(freq - p) <= z * np.sqrt(p * (1 - p) / n)


def test_conditional_frequencies():
    net = chain_net()
    ds = sample(net, 100_000, 4)
    a, b, c = (ds.column(x) for x in "ABC")
    for parent, child, table in ((a, b, net.cpts["B"]), (b, c, net.cpts["C"])):
        for pv in (0, 1):
            rows = parent == pv
            for cv in (0, 1):
                assert abs(np.mean(child[rows] == cv) - table[pv, cv]) <= 0.02


def test_csv_round_trip(tmp_path, asia):
    ds = sample(asia, 50, 2)
    path = tmp_path / "d.csv"
    write_dataset(ds, path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.splitlines()[0].decode() == ",".join(asia.names)
    assert sidecar_path(path).exists()
    back = read_dataset(path)
    assert back == ds
    assert back.provenance["seed"] == 2


def test_csv_without_sidecar_uses_sorted_labels(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("X,Y\nb,q\na,q\nb,p\n", encoding="utf-8")
    ds = read_dataset(path)
    assert ds.states("X") == ("a", "b")
    assert ds.labels() == [["b", "q"], ["a", "q"], ["b", "p"]]
