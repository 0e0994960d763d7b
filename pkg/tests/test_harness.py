import csv
import json
from fractions import Fraction

import numpy as np
import pytest

from bnbench.harness import (
    INELIGIBLE,
    OK,
    OUT_OF_MEMORY,
    TIMEOUT,
    UNKNOWN_ERROR,
    ConfigError,
    ExperimentRecord,
    load_config,
    load_records,
    n_over_p,
    parse_config,
    rank_cell,
    rank_cells,
    report,
    run_matrix,
)


def rec(network, n, code, algo, status=OK, seed=0, repeat=0, wall=1.0, **scores):
    return ExperimentRecord(
        key=f"{network}-{n}-{code}-{algo}-{seed}-{repeat}", network=network, n=n, code=code,
        algorithm=algo, algo="hc", params={}, seed=seed, repeat=repeat, status=status,
        free_parameters=10, n_over_p=str(Fraction(n, 10)), wall_time=wall if status == OK else None,
        scores=scores or None if status == OK else None,
        learned_edges=3 if status == OK else None, true_edges=4 if status == OK else None,
    )


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


# -- n/p --

def test_n_over_p(asia):
    assert n_over_p(1_000_000, asia) == Fraction(1_000_000, 18)
    assert round(float(n_over_p(1_000_000, asia)), 1) == 55555.6
    assert n_over_p(0, asia) == 0


# -- ranking --

def test_rank_with_failures_shares_block_rank():
    values = {f"a{i}": float(i) for i in range(10)}
    values.update({f"f{i}": None for i in range(5)})
    ranks = rank_cell(values, "f1")
    assert all(ranks[f"f{i}"] == 11 for i in range(5))
    assert ranks["a9"] == 1 and ranks["a0"] == 10


def test_rank_ties_take_min():
    ranks = rank_cell({"a": 0.9, "b": 0.9, "c": 0.5, "d": 0.1}, "f1")
    assert [ranks[x] for x in "abcd"] == [1, 1, 3, 4]
    ranks = rank_cell({"a": 2.0, "b": 2.0, "c": 5.0, "d": 7.0}, "shd")
    assert [ranks[x] for x in "abcd"] == [1, 1, 3, 4]


def test_rank_toy_matrix_by_hand():
    f1 = {
        (100, "N"): {"a": 0.9, "b": 0.8, "c": 0.8, "d": None},
        (100, "M5"): {"a": 0.5, "b": 0.7, "c": None, "d": None},
        (1000, "N"): {"a": 0.6, "b": 0.6, "c": 0.6, "d": 0.7},
    }
    records = []
    for (n, code), vals in f1.items():
        for algo, v in vals.items():
            if v is None:
                records.append(rec("toy", n, code, algo, status=TIMEOUT))
            else:
                records.append(rec("toy", n, code, algo, f1=v, shd=1 - v, bsf=v))
    table = rank_cells(records, "f1")
    # worked by hand: per-cell ranks, then mean and population std of each column
    assert table.cells[("toy", 100, "N", 0)] == {"a": 1, "b": 2, "c": 2, "d": 4}
    assert table.cells[("toy", 100, "M5", 0)] == {"a": 2, "b": 1, "c": 3, "d": 3}
    assert table.cells[("toy", 1000, "N", 0)] == {"a": 2, "b": 2, "c": 2, "d": 1}
    assert table.average == pytest.approx({"a": 5 / 3, "b": 5 / 3, "c": 7 / 3, "d": 8 / 3})
    assert table.std["a"] == pytest.approx(np.sqrt(2 / 9))
    assert table.std["d"] == pytest.approx(np.sqrt(42 / 27))
    assert table.overall == {"a": 1, "b": 1, "c": 3, "d": 4}
    assert rank_cells(records, "shd").cells == table.cells


def test_rank_cells_skips_ineligible_and_checks_algorithms():
    records = [rec("t", 100, "N", "a", f1=1, shd=0, bsf=1), rec("t", 100, "N", "b", f1=0.5, shd=1, bsf=0.5),
               rec("t", 100, "S5", "a", status=INELIGIBLE), rec("t", 100, "S5", "b", status=INELIGIBLE)]
    assert list(rank_cells(records, "f1").cells) == [("t", 100, "N", 0)]
    with pytest.raises(ValueError):
        rank_cells(records[:1] + [rec("t", 1000, "N", "b", f1=1, shd=0, bsf=1)], "f1")
    with pytest.raises(ValueError):
        rank_cells(records[2:], "f1")


def test_repeats_are_averaged_before_ranking():
    records = [rec("t", 100, "N", "a", repeat=0, f1=0.2, shd=0, bsf=0), rec("t", 100, "N", "a", repeat=1, f1=1.0, shd=0, bsf=0),
               rec("t", 100, "N", "b", f1=0.5, shd=0, bsf=0)]
    assert rank_cells(records, "f1").cells[("t", 100, "N", 0)] == {"a": 1, "b": 2}


# -- report files --

def test_report_tables(tmp_path):
    records = [
        rec("t", 1000, "N", "a", f1=0.9, shd=1, bsf=0.8, wall=2.0),
        rec("t", 1000, "N", "b", status=UNKNOWN_ERROR),
        rec("t", 100, "N", "a", f1=0.5, shd=3, bsf=0.4, wall=1.0),
        rec("t", 100, "N", "b", f1=0.6, shd=2, bsf=0.5, wall=0.5),
    ]
    files = report(records, tmp_path, time_limit=60, runtime_scale=2.0)
    edges = read_csv(files["edges"])
    assert [r[1] for r in edges[1:]] == ["100", "100", "1000"]
    runtime = {(r[0], r[2]): r for r in read_csv(files["runtime"])[1:]}
    assert float(runtime[("b", "1000")][8]) == 120.0
    assert float(runtime[("b", "1000")][9]) == 121.0
    assert float(runtime[("a", "100")][8]) == 2.0
    ranks = read_csv(files["ranks_f1"])
    assert ranks[0] == ["network", "n", "code", "seed", "a", "b"]
    assert ranks[-1][0] == "overall rank"
    scores = read_csv(files["scores"])
    assert len(scores) == 5 and scores[0][:3] == ["network", "n", "n_over_p"]


def test_report_empty_raises(tmp_path):
    with pytest.raises(ValueError):
        report([], tmp_path)


# -- config --

def test_config_errors(tmp_path):
    base = {"networks": ["asia"], "sizes": [100], "codes": ["N"], "algorithms": ["hc"]}
    parse_config(base)
    for bad in ({**base, "colour": 1}, {**base, "codes": ["Q7"]}, {**base, "networks": ["no_such_net"]},
                {**base, "sizes": [0]}, {**base, "algorithms": [{"algo": "hc", "params": {"alpha": 0.1}}]},
                {**base, "algorithms": ["magic"]}, {k: v for k, v in base.items() if k != "networks"},
                {**base, "algorithms": [{"algo": "hc"}, {"algo": "tabu", "label": "hc"}]}):
        with pytest.raises(ConfigError):
            parse_config(bad)
    path = tmp_path / "m.yaml"
    path.write_text("networks: [asia]\nsizes: [100]\ncodes: [N, M5]\nalgorithms:\n  - algo: tabu\n    label: tabu5\n    params: {tabu_length: 5}\n")
    cfg = load_config(path)
    assert cfg.algorithms[0].label == "tabu5" and cfg.algorithms[0].param_dict() == {"tabu_length": 5}


# -- end to end --

def small_config(**over):
    doc = {"networks": ["asia"], "sizes": [100, 1000], "codes": ["N", "M5"], "algorithms": ["hc", "tabu"], "time_limit": 120}
    doc.update(over)
    return parse_config(doc)


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    records = run_matrix(small_config(workers=2), out)
    return out, records


def test_smoke_matrix_all_ok(smoke):
    out, records = smoke
    assert len(records) == 8
    assert all(r.status == OK for r in records)
    for r in records:
        assert (out / r.graph_path).exists()
        assert 0 <= r.scores["f1"] <= 1
    files = report(records, out / "report")
    assert all(p.exists() for p in files.values())


def test_resume_reproduces_report(smoke, tmp_path):
    out, records = smoke
    first = report(load_records(out), tmp_path / "a")
    # drop half the records and rerun only those
    for p in sorted((out / "records").glob("*.json"))[::2]:
        p.unlink()
    again = run_matrix(small_config(), out)
    second = report(again, tmp_path / "b")
    for name in first:
        if name == "runtime":
            continue
        assert first[name].read_bytes() == second[name].read_bytes(), name


def test_fresh_run_is_deterministic(smoke, tmp_path):
    _, records = smoke
    other = run_matrix(small_config(sizes=[100]), tmp_path)
    mine = {r.key: r.scores for r in records if r.n == 100}
    assert {r.key: r.scores for r in other} == mine


def test_ineligible_cell_recorded(tmp_path):
    records = run_matrix(small_config(sizes=[100], codes=["S5"], algorithms=["hc"]), tmp_path)
    assert [r.status for r in records] == [INELIGIBLE]
    assert "S" in records[0].notes


def test_timeout_cell(tmp_path):
    cfg = small_config(sizes=[100_000], codes=["N"], algorithms=["tabu"], time_limit=0.05)
    records = run_matrix(cfg, tmp_path)
    assert [r.status for r in records] == [TIMEOUT]
    assert records[0].scores is None
    files = report(records, tmp_path / "r", time_limit=0.05)
    assert float(read_csv(files["runtime"])[1][8]) == 0.05


def test_memory_limit_cell(tmp_path):
    cfg = small_config(sizes=[1_000_000], codes=["N"], algorithms=["hc"], memory_limit_mb=64)
    records = run_matrix(cfg, tmp_path)
    assert records[0].status == OUT_OF_MEMORY
    assert records[0].scores is None


def test_record_json_round_trip(smoke):
    out, records = smoke
    r = records[0]
    back = ExperimentRecord.from_dict(json.loads(r.to_json()))
    assert back == r and back.ratio == Fraction(r.n, 18)
