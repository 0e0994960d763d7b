"""Decomposable network scores: BIC and BDeu over categorical counts.

A missing-value token, when present, is just another state of its column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import gammaln

from bnbench.graphs import MixedGraph
from bnbench.sampling import Dataset


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreConfig:
    kind: str = "bic"
    iss: float = 1.0
    max_in_degree: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in ("bic", "bdeu"):
            raise ValueError(f"unknown score {self.kind!r}")
        if not self.iss > 0:
            raise ValueError("iss must be positive")
        if self.max_in_degree is not None and self.max_in_degree < 0:
            raise ValueError("max_in_degree must be >= 0")


def _counts(codes: np.ndarray, n_cells: int) -> np.ndarray:
    """Occupied cell counts of an integer code vector."""
    if n_cells <= max(4 * len(codes), 1 << 20):
        c = np.bincount(codes, minlength=n_cells)
        return c
    _, c = np.unique(codes, return_counts=True)
    return c


class FamilyScorer:
    """Family scores for one dataset, cached by (child, parent set)."""

    def __init__(self, ds: Dataset, config: ScoreConfig):
        if ds.n == 0:
            raise LearnerError("cannot score an empty dataset")
        self.ds = ds
        self.config = config
        self.names = ds.names
        self._col = {name: i for i, name in enumerate(self.names)}
        self._data = np.asarray(ds.data, dtype=np.int64)
        self._card = [len(s) for _, s in ds.columns]
        self._cache: dict[tuple[str, frozenset[str]], float] = {}
        self.evaluations = 0

    def _index(self, name: str) -> int:
        try:
            return self._col[name]
        except KeyError:
            raise LearnerError(f"unknown column {name!r}") from None

    def __call__(self, child: str, parents: Iterable[str] = ()) -> float:
        key = (child, frozenset(parents))
        hit = self._cache.get(key)
        if hit is None:
            hit = self._compute(child, sorted(key[1]))
            self._cache[key] = hit
        return hit

    def _compute(self, child: str, parents: list[str]) -> float:
        self.evaluations += 1
        c = self._index(child)
        if child in parents:
            raise LearnerError(f"{child!r} cannot be its own parent")
        r = self._card[c]
        n = self.ds.n
        q = 1
        for p in parents:
            q *= self._card[self._index(p)]

        if q * r < 1 << 62:
            config = np.zeros(n, dtype=np.int64)
            for p in parents:
                j = self._index(p)
                config = config * self._card[j] + self._data[:, j]
            joint = _counts(config * r + self._data[:, c], q * r)
            if len(joint) == q * r:
                joint = joint.reshape(q, r)
                joint = joint[joint.sum(axis=1) > 0]
            else:
                joint = self._sparse_table(parents, c)
        else:
            joint = self._sparse_table(parents, c)
        nj = joint.sum(axis=1)

        if self.config.kind == "bic":
            nz = joint > 0
            ll = float(np.sum(joint[nz] * np.log(joint[nz] / np.broadcast_to(nj[:, None], joint.shape)[nz])))
            return ll - 0.5 * math.log(n) * (r - 1) * q
        a_j = self.config.iss / q
        a_jk = a_j / r
        score = np.sum(gammaln(a_j) - gammaln(a_j + nj))
        score += np.sum(gammaln(a_jk + joint) - gammaln(a_jk))
        return float(score)

    def _sparse_table(self, parents: list[str], c: int) -> np.ndarray:
        cols = [self._index(p) for p in parents]
        _, inv = np.unique(self._data[:, cols], axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        r = self._card[c]
        table = np.zeros((inv.max() + 1, r), dtype=np.int64)
        np.add.at(table, (inv, self._data[:, c]), 1)
        return table

    def total(self, dag: MixedGraph) -> float:
        return float(sum(self(v, dag.parents(v)) for v in dag.nodes))


def family_score(ds: Dataset, child: str, parents: Iterable[str], config: ScoreConfig = ScoreConfig()) -> float:
    """BIC (log-likelihood minus penalty, higher is better) or BDeu log marginal likelihood."""
    return FamilyScorer(ds, config)(child, parents)


def total_score(ds: Dataset, dag: MixedGraph, config: ScoreConfig = ScoreConfig()) -> float:
    missing = set(dag.nodes) - set(ds.names)
    if missing:
        raise LearnerError(f"graph nodes not in dataset: {sorted(missing)}")
    return FamilyScorer(ds, config).total(dag)
