"""Experiment matrix: network x sample size x experiment code x algorithm.

Every cell runs in its own process under a wall-clock limit, and its record is
stored under a content-addressed file name so an interrupted run resumes by
computing only the cells that have no record yet.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import multiprocessing as mp
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from bnbench.bn_model import DiscreteBayesNet, free_parameters, load_network, parse_network, serialize_network
from bnbench.evaluation import score_graph
from bnbench.graphs import dag_from_network, dag_to_mag, write_graph
from bnbench.learners import ALGORITHMS, learn, resolve_params
from bnbench.noise import CODES, IneligibleExperiment, compose_experiment, resolve_code
from bnbench.sampling import DEFAULT_MISSING, sample

log = logging.getLogger(__name__)

OK = "OK"
TIMEOUT = "F1_timeout"
UNKNOWN_ERROR = "F2_unknown_error"
OUT_OF_MEMORY = "F3_out_of_memory"
INELIGIBLE = "INELIGIBLE"
FAILURES = (TIMEOUT, UNKNOWN_ERROR, OUT_OF_MEMORY)
METRICS = ("f1", "shd", "bsf")
DEFAULT_SIZES = (100, 1000, 10000, 100000, 1000000)


class ConfigError(ValueError):
    pass


def n_over_p(n: int, net: DiscreteBayesNet) -> Fraction:
    return Fraction(n, free_parameters(net))


# -- configuration -----------------------------------------------------------------

@dataclass(frozen=True)
class AlgorithmSpec:
    algo: str
    label: str
    params: tuple[tuple[str, Any], ...] = ()

    def param_dict(self) -> dict[str, Any]:
        return dict(self.params)


@dataclass
class MatrixConfig:
    networks: list[str]
    sizes: list[int]
    codes: list[str]
    algorithms: list[AlgorithmSpec]
    seeds: list[int] = field(default_factory=lambda: [0])
    time_limit: float = 600.0
    workers: int = 1
    repeats: int = 1
    runtime_scale: float = 1.0
    memory_limit_mb: int | None = None
    missing_token: str = DEFAULT_MISSING
    base_dir: Path = Path(".")

    def network_path(self, ref: str) -> str:
        p = self.base_dir / ref
        return str(p) if p.exists() else ref


def _algorithm_spec(entry) -> AlgorithmSpec:
    if isinstance(entry, str):
        entry = {"algo": entry}
    if not isinstance(entry, dict) or "algo" not in entry:
        raise ConfigError(f"algorithm entry must name an 'algo': {entry!r}")
    algo = entry["algo"]
    params = dict(entry.get("params") or {})
    try:
        resolve_params(algo, params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return AlgorithmSpec(algo, str(entry.get("label", algo)), tuple(sorted(params.items())))


def parse_config(doc: dict, base_dir: Path = Path(".")) -> MatrixConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    known = {"networks", "sizes", "codes", "algorithms", "seeds", "time_limit", "workers",
             "repeats", "runtime_scale", "memory_limit_mb", "missing_token"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = MatrixConfig(
            networks=[str(x) for x in doc["networks"]],
            sizes=[int(x) for x in doc.get("sizes", DEFAULT_SIZES)],
            codes=[str(x) for x in doc.get("codes", CODES)],
            algorithms=[_algorithm_spec(a) for a in doc.get("algorithms", ALGORITHMS)],
            seeds=[int(s) for s in doc.get("seeds", [0])],
            time_limit=float(doc.get("time_limit", 600)),
            workers=int(doc.get("workers", 1)),
            repeats=int(doc.get("repeats", 1)),
            runtime_scale=float(doc.get("runtime_scale", 1.0)),
            memory_limit_mb=doc.get("memory_limit_mb"),
            missing_token=str(doc.get("missing_token", DEFAULT_MISSING)),
            base_dir=Path(base_dir),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None
    if not cfg.networks or not cfg.sizes or not cfg.codes or not cfg.algorithms:
        raise ConfigError("networks, sizes, codes and algorithms must be non-empty")
    if any(n <= 0 for n in cfg.sizes):
        raise ConfigError("sample sizes must be positive")
    bad = [c for c in cfg.codes if c not in CODES]
    if bad:
        raise ConfigError(f"unknown experiment codes {bad}")
    if cfg.time_limit <= 0 or cfg.workers < 1 or cfg.repeats < 1 or cfg.runtime_scale <= 0:
        raise ConfigError("time_limit and runtime_scale must be positive, workers and repeats at least 1")
    labels = [a.label for a in cfg.algorithms]
    if len(set(labels)) != len(labels):
        raise ConfigError("algorithm labels must be unique")
    for ref in cfg.networks:
        try:
            load_network(cfg.network_path(ref))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"network {ref!r}: {exc}") from None
    return cfg


def load_config(path: str | Path) -> MatrixConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc, path.parent)


# -- records --------------------------------------------------------------------------

@dataclass
class ExperimentRecord:
    key: str
    network: str
    n: int
    code: str
    algorithm: str
    algo: str
    params: dict[str, Any]
    seed: int
    repeat: int
    status: str
    free_parameters: int
    n_over_p: str  # exact rational "n/p"
    wall_time: float | None = None
    graph_path: str | None = None
    truth: str | None = None
    scores: dict[str, float] | None = None
    learned_edges: int | None = None
    true_edges: int | None = None
    notes: str = ""

    def __post_init__(self):
        if self.status != OK and self.scores is not None:
            raise ValueError("only successful records carry scores")

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.n_over_p)

    @property
    def cell(self) -> tuple:
        return (self.network, self.n, self.code, self.seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(**d)


def cell_key(network_text: str, network: str, n: int, code: str, alg: AlgorithmSpec, seed: int, repeat: int, token: str) -> str:
    ident = {
        "network": network,
        "network_sha": hashlib.sha256(network_text.encode()).hexdigest(),
        "n": n, "code": code, "algo": alg.algo, "label": alg.label,
        "params": [list(p) for p in alg.params], "seed": seed, "repeat": repeat, "token": token,
    }
    digest = hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()[:16]
    return f"{network}-{n}-{code}-{alg.label}-s{seed}-r{repeat}-{digest}"


def _execute(task: dict) -> dict:
    """Body of one cell; runs inside the worker process."""
    net = parse_network(task["network_text"])
    clean = sample(net, task["n"], task["seed"])
    data, manifest, truth_spec = compose_experiment(net, clean, task["code"], task["seed"], task["token"])
    params = dict(task["params"])
    if task["repeat"]:
        params["seed"] = params.get("seed", 0) + task["repeat"]
    t0 = time.perf_counter()
    learned = learn(data, task["algo"], params)
    wall = time.perf_counter() - t0
    dag = dag_from_network(net)
    truth = dag if truth_spec.kind == "DAG" else dag_to_mag(dag, truth_spec.latent)
    report = score_graph(learned, truth, truth_spec.label)
    write_graph(learned, task["graph_path"])
    return {
        "wall_time": wall,
        "truth": truth_spec.label,
        "scores": report.row(),
        "learned_edges": len(learned.edges),
        "true_edges": len(truth.edges),
        "notes": "; ".join(f"{k}: {v}" for k, v in sorted(manifest.merged.items())) if manifest.merged else "",
    }


def _child(task: dict, conn) -> None:
    if task.get("memory_limit_mb"):
        import resource

        limit = int(task["memory_limit_mb"]) * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    try:
        conn.send((OK, _execute(task)))
    except MemoryError:
        conn.send((OUT_OF_MEMORY, "memory allocation failed"))
    except BaseException as exc:  # any failure becomes a status, never a crash of the matrix
        conn.send((UNKNOWN_ERROR, f"{type(exc).__name__}: {exc}"))
    finally:
        conn.close()


def _context():
    methods = mp.get_all_start_methods()
    ctx = mp.get_context("forkserver" if "forkserver" in methods else "spawn")
    if ctx.get_start_method() == "forkserver":
        ctx.set_forkserver_preload(["bnbench.harness"])
    return ctx


def run_cell(task: dict, time_limit: float, ctx=None) -> tuple[str, Any, float]:
    """Run one task in a fresh process; returns (status, payload, elapsed seconds)."""
    ctx = ctx or _context()
    recv, send = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_child, args=(task, send), daemon=True)
    start = time.perf_counter()
    proc.start()
    send.close()
    ready = recv.poll(time_limit)
    elapsed = time.perf_counter() - start
    if not ready:
        proc.terminate()
        proc.join(5)
        if proc.is_alive():
            proc.kill()
            proc.join()
        return TIMEOUT, "wall-clock limit exceeded", time_limit
    try:
        status, payload = recv.recv()
    except EOFError:
        proc.join()
        # the process died without reporting; a kill signal is most often the OOM killer
        code = proc.exitcode
        if code is not None and code < 0:
            return OUT_OF_MEMORY, f"worker killed by signal {-code}", elapsed
        return UNKNOWN_ERROR, f"worker exited with code {code}", elapsed
    proc.join()
    return status, payload, elapsed


def plan_cells(cfg: MatrixConfig) -> list[dict]:
    tasks = []
    for ref in cfg.networks:
        net = load_network(cfg.network_path(ref))
        text = serialize_network(net)
        p = free_parameters(net)
        for seed in cfg.seeds:
            for n in cfg.sizes:
                for code in cfg.codes:
                    try:
                        resolve_code(net, code, seed, cfg.missing_token)
                        eligible, why = True, ""
                    except IneligibleExperiment as exc:
                        eligible, why = False, str(exc)
                    for alg in cfg.algorithms:
                        for rep in range(cfg.repeats):
                            tasks.append({
                                "key": cell_key(text, net.name, n, code, alg, seed, rep, cfg.missing_token),
                                "network": net.name, "network_text": text, "free_parameters": p,
                                "n": n, "code": code, "algo": alg.algo, "label": alg.label,
                                "params": alg.param_dict(), "seed": seed, "repeat": rep,
                                "token": cfg.missing_token, "eligible": eligible, "why": why,
                                "memory_limit_mb": cfg.memory_limit_mb,
                            })
    return tasks


def _record_for(task: dict, status: str, payload: Any, elapsed: float | None, graph_rel: str | None) -> ExperimentRecord:
    base = dict(
        key=task["key"], network=task["network"], n=task["n"], code=task["code"],
        algorithm=task["label"], algo=task["algo"], params=task["params"], seed=task["seed"],
        repeat=task["repeat"], status=status, free_parameters=task["free_parameters"],
        n_over_p=str(Fraction(task["n"], task["free_parameters"])),
    )
    if status == OK:
        return ExperimentRecord(**base, graph_path=graph_rel, **payload)
    return ExperimentRecord(**base, wall_time=elapsed, notes=str(payload or ""))


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_matrix(cfg: MatrixConfig, out_dir: str | Path) -> list[ExperimentRecord]:
    """Execute every missing cell of the matrix and return all records, sorted by key."""
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    tasks = plan_cells(cfg)
    ctx = _context()

    def work(task: dict) -> ExperimentRecord:
        rec_path = out / "records" / f"{task['key']}.json"
        if rec_path.exists():
            return ExperimentRecord.from_dict(json.loads(rec_path.read_text(encoding="utf-8")))
        if not task["eligible"]:
            rec = _record_for(task, INELIGIBLE, task["why"], None, None)
        else:
            graph_rel = f"graphs/{task['key']}.json"
            status, payload, elapsed = run_cell({**task, "graph_path": str(out / graph_rel)}, cfg.time_limit, ctx)
            rec = _record_for(task, status, payload, elapsed, graph_rel)
            log.info("%s %s", task["key"], status)
        _write_atomic(rec_path, rec.to_json())
        return rec

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        records = list(pool.map(work, tasks))
    return sorted(records, key=lambda r: r.key)


def load_records(out_dir: str | Path) -> list[ExperimentRecord]:
    recs = [
        ExperimentRecord.from_dict(json.loads(p.read_text(encoding="utf-8")))
        for p in sorted((Path(out_dir) / "records").glob("*.json"))
    ]
    return sorted(recs, key=lambda r: r.key)


# -- ranking ------------------------------------------------------------------------

@dataclass
class RankTable:
    metric: str
    algorithms: list[str]
    cells: dict[tuple, dict[str, int]]
    average: dict[str, float]
    std: dict[str, float]
    overall: dict[str, int]


def _better(metric: str, x: float, y: float) -> bool:
    x, y = round(x, 12), round(y, 12)
    return x < y if metric == "shd" else x > y


def rank_cell(values: dict[str, float | None], metric: str) -> dict[str, int]:
    """Rank one cell; ``None`` marks a failure. Ties and failures share their block's best rank."""
    if not values:
        raise ValueError("cannot rank an empty cell")
    k = len(values)
    ok = {a: v for a, v in values.items() if v is not None}
    f = k - len(ok)
    ranks = {}
    for a, v in values.items():
        if v is None:
            ranks[a] = k - f + 1
        else:
            ranks[a] = 1 + sum(_better(metric, w, v) for w in ok.values())
    return ranks


def _min_rank(values: dict[str, float], lower_is_better: bool = True) -> dict[str, int]:
    out = {}
    for a, v in values.items():
        out[a] = 1 + sum((w < v - 1e-12) if lower_is_better else (w > v + 1e-12) for w in values.values())
    return out


def rank_cells(records: Iterable[ExperimentRecord], metric: str) -> RankTable:
    """Per-cell ranks for ``metric`` plus each algorithm's average rank, population std and overall rank.

    Repeats of the same cell and algorithm are averaged before ranking; ineligible cells are skipped.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    grouped: dict[tuple, dict[str, list]] = {}
    for r in records:
        if r.status == INELIGIBLE:
            continue
        grouped.setdefault(r.cell, {}).setdefault(r.algorithm, []).append(r)
    if not grouped:
        raise ValueError("no rankable records")
    algos = sorted({a for cell in grouped.values() for a in cell})
    cells = {}
    for cell, by_algo in sorted(grouped.items()):
        if set(by_algo) != set(algos):
            raise ValueError(f"cell {cell} lacks algorithms {sorted(set(algos) - set(by_algo))}")
        values = {}
        for a, recs in by_algo.items():
            good = [r.scores[metric] for r in recs if r.status == OK]
            values[a] = float(np.mean(good)) if len(good) == len(recs) else None
        cells[cell] = rank_cell(values, metric)
    avg = {a: float(np.mean([c[a] for c in cells.values()])) for a in algos}
    std = {a: float(np.std([c[a] for c in cells.values()])) for a in algos}
    return RankTable(metric, algos, cells, avg, std, _min_rank(avg))


# -- report ------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 10))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def report(
    records: Sequence[ExperimentRecord],
    out_dir: str | Path,
    time_limit: float = 600.0,
    runtime_scale: float = 1.0,
    metrics: Sequence[str] = METRICS,
) -> dict[str, Path]:
    """Write scores, rank, edge-count and runtime tables as CSV files into ``out_dir``."""
    if not records:
        raise ValueError("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recs = sorted(records, key=lambda r: (r.network, r.n, r.code, r.seed, r.algorithm, r.repeat))
    files = {}

    cols = ("tp", "tn", "fp", "fn", "precision", "recall", "f1", "shd", "bsf")
    files["scores"] = out / "scores.csv"
    _write_csv(
        files["scores"],
        ("network", "n", "n_over_p", "code", "seed", "repeat", "algorithm", "status", "truth", *cols),
        (
            (r.network, r.n, float(r.ratio), r.code, r.seed, r.repeat, r.algorithm, r.status, r.truth,
             *((r.scores or {}).get(c) for c in cols))
            for r in recs
        ),
    )

    rankable = [r for r in recs if r.status != INELIGIBLE]
    for metric in metrics:
        if not rankable:
            break
        table = rank_cells(rankable, metric)
        path = out / f"ranks_{metric}.csv"
        rows = [(*cell, *(table.cells[cell][a] for a in table.algorithms)) for cell in table.cells]
        rows.append(("average rank", "", "", "", *(table.average[a] for a in table.algorithms)))
        rows.append(("rank std", "", "", "", *(table.std[a] for a in table.algorithms)))
        rows.append(("overall rank", "", "", "", *(table.overall[a] for a in table.algorithms)))
        _write_csv(path, ("network", "n", "code", "seed", *table.algorithms), rows)
        files[f"ranks_{metric}"] = path

    ok = sorted((r for r in recs if r.status == OK), key=lambda r: (r.ratio, r.network, r.n, r.code, r.seed, r.algorithm, r.repeat))
    files["edges"] = out / "edges.csv"
    _write_csv(
        files["edges"],
        ("network", "n", "n_over_p", "code", "seed", "repeat", "algorithm", "learned_edges", "true_edges"),
        ((r.network, r.n, float(r.ratio), r.code, r.seed, r.repeat, r.algorithm, r.learned_edges, r.true_edges) for r in ok),
    )

    timed = sorted(rankable, key=lambda r: (r.algorithm, r.ratio, r.network, r.n, r.code, r.seed, r.repeat))
    rows = []
    totals: dict[str, float] = {}
    for r in timed:
        secs = time_limit if r.status in FAILURES else (r.wall_time or 0.0)
        secs *= runtime_scale
        totals[r.algorithm] = totals.get(r.algorithm, 0.0) + secs
        rows.append((r.algorithm, r.network, r.n, float(r.ratio), r.code, r.seed, r.repeat, r.status, secs, totals[r.algorithm]))
    files["runtime"] = out / "runtime.csv"
    _write_csv(
        files["runtime"],
        ("algorithm", "network", "n", "n_over_p", "code", "seed", "repeat", "status", "seconds", "cumulative_seconds"),
        rows,
    )
    return files


def has_failures(records: Iterable[ExperimentRecord]) -> bool:
    return any(r.status in FAILURES for r in records)
