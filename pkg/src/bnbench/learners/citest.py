"""G² likelihood-ratio test of conditional independence for categorical columns."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from bnbench.learners.scores import LearnerError
from bnbench.sampling import Dataset


@dataclass(frozen=True)
class CiTestConfig:
    alpha: float = 0.01
    max_cond_size: int | None = None
    test: str = "g2"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.test != "g2":
            raise ValueError(f"unsupported test {self.test!r}")


@dataclass(frozen=True)
class CiResult:
    statistic: float
    df: int
    p_value: float
    independent: bool


class G2Tester:
    def __init__(self, ds: Dataset, config: CiTestConfig = CiTestConfig()):
        if ds.n < 1:
            raise LearnerError("independence test needs at least one row")
        self.config = config
        self._col = {name: i for i, name in enumerate(ds.names)}
        self._data = np.asarray(ds.data, dtype=np.int64)
        self._card = [len(s) for _, s in ds.columns]
        self.calls = 0

    def _index(self, name: str) -> int:
        try:
            return self._col[name]
        except KeyError:
            raise LearnerError(f"unknown column {name!r}") from None

    def __call__(self, x: str, y: str, z: Sequence[str] = ()) -> CiResult:
        self.calls += 1
        xi, yi = self._index(x), self._index(y)
        rx, ry = self._card[xi], self._card[yi]
        code = np.zeros(len(self._data), dtype=np.int64)
        for name in sorted(z):
            j = self._index(name)
            code = code * self._card[j] + self._data[:, j]
        # compress to occupied strata
        _, strata = np.unique(code, return_inverse=True)
        strata = strata.reshape(-1)
        k = int(strata.max()) + 1
        table = np.bincount((strata * rx + self._data[:, xi]) * ry + self._data[:, yi], minlength=k * rx * ry)
        table = table.reshape(k, rx, ry).astype(np.float64)
        n_xz = table.sum(axis=2, keepdims=True)
        n_yz = table.sum(axis=1, keepdims=True)
        n_z = table.sum(axis=(1, 2), keepdims=True)
        expected = n_xz * n_yz / n_z
        pos = table > 0
        stat = float(2.0 * np.sum(table[pos] * np.log(table[pos] / expected[pos])))
        stat = max(stat, 0.0)
        df = (rx - 1) * (ry - 1) * k
        if df <= 0:
            return CiResult(stat, 0, 1.0, True)
        p = float(chi2.sf(stat, df))
        return CiResult(stat, df, p, p > self.config.alpha)


def g2_test(ds: Dataset, x: str, y: str, z: Sequence[str] = (), config: CiTestConfig = CiTestConfig()) -> CiResult:
    """G² = 2 Σ O ln(O/E); df counts only strata of ``z`` that occur in the data."""
    return G2Tester(ds, config)(x, y, z)
