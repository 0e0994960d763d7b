"""Datasets and deterministic forward sampling from a network."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from bnbench import _rng
from bnbench.bn_model import DiscreteBayesNet, topological_order

DEFAULT_MISSING = "missing"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar categorical table; cells hold indices into each column's state list."""

    columns: tuple[tuple[str, tuple[str, ...]], ...]
    data: np.ndarray  # (n, k) integer state indices
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise ValueError("data shape does not match columns")
        self.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def col_index(self, name: str) -> int:
        for i, (c, _) in enumerate(self.columns):
            if c == name:
                return i
        raise KeyError(f"unknown column {name!r}")

    def states(self, name: str) -> tuple[str, ...]:
        return self.columns[self.col_index(name)][1]

    def cardinality(self, name: str) -> int:
        return len(self.states(name))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.col_index(name)]

    def labels(self) -> list[list[str]]:
        return [[self.columns[j][1][int(x)] for j, x in enumerate(row)] for row in self.data]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.columns == other.columns and np.array_equal(self.data, other.data)

    def validate(self) -> None:
        for j, (name, states) in enumerate(self.columns):
            col = self.data[:, j]
            if col.size and (col.min() < 0 or col.max() >= len(states)):
                raise ValueError(f"column {name!r} has out-of-range state indices")

    def with_data(self, columns, data, **prov) -> "Dataset":
        return Dataset(tuple(columns), np.ascontiguousarray(data), {**self.provenance, **prov})

    def reorder(self, names: Sequence[str]) -> "Dataset":
        idx = [self.col_index(n) for n in names]
        return Dataset(tuple(self.columns[i] for i in idx), np.ascontiguousarray(self.data[:, idx]), dict(self.provenance))


def _dtype_for(max_states: int):
    return np.int16 if max_states < 2**15 else np.int32


def sample(net: DiscreteBayesNet, n: int, seed: int, *, start: int = 0) -> Dataset:
    """Draw rows ``start..start+n-1`` of the sample stream of ``net`` for ``seed``.

    Row r uses only its own counter block, so ``sample(net, n, s)`` is a prefix
    of ``sample(net, m, s)`` for n <= m, and row chunks can be generated in any order.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    k = len(net.variables)
    u = _rng.row_uniforms(_rng.philox_key(seed, 0), start, start + n, k)
    dtype = _dtype_for(max(v.cardinality for v in net.variables))
    out = np.zeros((n, k), dtype=dtype)
    for name in topological_order(net):
        j = net.index(name)
        table = net.cpts[name]
        row = np.zeros(n, dtype=np.int64)
        for p in net.parents[name]:
            row = row * net.variable(p).cardinality + out[:, net.index(p)]
        cdf = np.cumsum(table, axis=1)
        cdf[:, -1] = np.inf  # guard against rows summing to 1 - eps
        # inverse CDF over the declared state order
        out[:, j] = (u[:, j, None] >= cdf[row]).sum(axis=1)
    columns = tuple((v.name, v.states) for v in net.variables)
    return Dataset(columns, out, {"seed": int(seed), "network": net.name, "noise": [], "n": n})


def prefix(ds: Dataset, m: int) -> Dataset:
    if m < 0 or m > ds.n:
        raise ValueError(f"prefix size {m} outside [0, {ds.n}]")
    return Dataset(ds.columns, ds.data[:m].copy(), {**ds.provenance, "n": m})


# -- files -------------------------------------------------------------------

def sidecar_path(csv_path: str | Path) -> Path:
    return Path(str(csv_path) + ".meta.json")


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ds.names)
    lookup = [np.asarray(states, dtype=object) for _, states in ds.columns]
    if ds.n:
        cols = [lookup[j][ds.data[:, j]] for j in range(len(ds.columns))]
        writer.writerows(zip(*cols))
    return buf.getvalue()


def write_dataset(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.write_text(dataset_to_csv(ds), encoding="utf-8", newline="\n")
    meta = {
        "columns": [{"name": c, "states": list(s)} for c, s in ds.columns],
        **{k: v for k, v in ds.provenance.items() if k != "columns"},
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")


def read_dataset(path: str | Path) -> Dataset:
    """Read a CSV of state labels. State lists come from the sidecar when present,
    otherwise from the sorted distinct labels of each column."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    meta: dict[str, Any] = {}
    if sidecar_path(path).exists():
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        states = {c["name"]: tuple(c["states"]) for c in meta.pop("columns")}
    else:
        states = {h: tuple(sorted({r[j] for r in body})) for j, h in enumerate(header)}
    columns = tuple((h, states[h]) for h in header)
    data = np.zeros((len(body), len(header)), dtype=_dtype_for(max((len(s) for _, s in columns), default=2)))
    for j, (name, st) in enumerate(columns):
        pos = {s: i for i, s in enumerate(st)}
        try:
            data[:, j] = [pos[r[j]] for r in body]
        except KeyError as exc:
            raise ValueError(f"{path}: column {name!r} has undeclared label {exc.args[0]!r}") from None
    meta["n"] = len(body)
    return Dataset(columns, data, meta)


def with_provenance(ds: Dataset, **kv) -> Dataset:
    return replace(ds, provenance={**ds.provenance, **kv})
