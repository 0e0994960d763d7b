"""Synthetic noise: missing values (M), incorrect values (I), merged states (S),
latent variables (L), their combinations, and experiment eligibility.

Cell-level noise (M, I) gives every cell an independent chance of corruption and
draws from per-row counter blocks, so corrupting a prefix of a table gives the
prefix of the corrupted table. Variable-level noise (S, L) picks
``round_half_up(rate * |V|)`` variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from bnbench import _rng
from bnbench.bn_model import DiscreteBayesNet, Variable
from bnbench.sampling import DEFAULT_MISSING, Dataset, _dtype_for

KINDS = ("M", "I", "S", "L")
APPLY_ORDER = ("L", "S", "I", "M")
CODES = (
    "N", "M5", "M10", "I5", "I10", "S5", "S10", "L5", "L10",
    "cMI", "cMS", "cML", "cIS", "cIL", "cSL", "cMISL",
)
DEFAULT_RATES = (0.05, 0.10)
COMBO_RATE = 0.05
ESCALATED_RATE = 0.10


class NoiseError(ValueError):
    pass


class IneligibleExperiment(NoiseError):
    """The requested noise cannot be applied to this network."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0 < self.rate < 1:
            raise ValueError(f"noise rate must lie in (0, 1), got {self.rate}")

    @property
    def percent(self) -> int:
        return int(round(self.rate * 100))


@dataclass(frozen=True)
class ExperimentCode:
    code: str
    components: tuple[NoiseSpec, ...]
    notes: tuple[str, ...] = ()

    def component(self, kind: str) -> NoiseSpec | None:
        return next((c for c in self.components if c.kind == kind), None)


@dataclass
class NoiseManifest:
    code: str | None = None
    components: list[dict[str, Any]] = field(default_factory=list)
    merged: dict[str, dict[str, Any]] = field(default_factory=dict)
    latent: list[str] = field(default_factory=list)
    # in-memory only: (rows, cols, original state index) per cell-level component
    originals: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def extend(self, other: "NoiseManifest") -> "NoiseManifest":
        self.components.extend(other.components)
        self.merged.update(other.merged)
        self.latent.extend(other.latent)
        self.originals.update(other.originals)
        return self

    def original_label(self, ds: Dataset, kind: str, row: int, column: str) -> str | None:
        """Label a corrupted cell held before component ``kind`` touched it."""
        rows, cols, orig = self.originals[kind]
        j = ds.col_index(column)
        hit = np.flatnonzero((rows == row) & (cols == j))
        if not hit.size:
            return None
        states = self.components_by_kind(kind)["states_before"][column]
        return states[int(orig[hit[0]])]

    def components_by_kind(self, kind: str) -> dict[str, Any]:
        return next(c for c in self.components if c["kind"] == kind)

    def to_dict(self) -> dict[str, Any]:
        comps = [{k: v for k, v in c.items() if k != "states_before"} for c in self.components]
        return {"code": self.code, "components": comps, "merged": self.merged, "latent": list(self.latent)}


@dataclass(frozen=True)
class GroundTruthSpec:
    kind: str  # "DAG" or "MAG"
    latent: tuple[str, ...] = ()
    label: str = "DAG"  # DAG, MAG5, MAG10


# -- variable selection -----------------------------------------------------------

def round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def target_count(rate: float, n_vars: int) -> int:
    return round_half_up(Fraction(str(rate)) * n_vars)


def select_variables(
    net: DiscreteBayesNet,
    n_vars: int,
    rate: float,
    seed: int,
    eligible: Callable[[Variable], bool] | None = None,
) -> list[str]:
    """Pick ``round_half_up(rate * n_vars)`` distinct eligible variables uniformly at random."""
    target = target_count(rate, n_vars)
    if target == 0:
        raise IneligibleExperiment(f"rate {rate} of {n_vars} variables rounds to zero variables")
    pool = [v.name for v in net.variables if eligible is None or eligible(v)]
    if len(pool) < target:
        raise IneligibleExperiment(f"need {target} eligible variables, only {len(pool)} available")
    rng = np.random.Generator(np.random.Philox(key=_rng.philox_key(seed, 10)))
    picked = set(rng.choice(len(pool), size=target, replace=False).tolist())
    return [name for i, name in enumerate(pool) if i in picked]


def _mergeable(var: Variable, token: str = DEFAULT_MISSING) -> bool:
    return sum(1 for s in var.states if s != token) >= 3


# -- cell-level noise ---------------------------------------------------------------

def inject_missing(ds: Dataset, rate: float, seed: int, token: str = DEFAULT_MISSING) -> tuple[Dataset, NoiseManifest]:
    """Replace each cell by ``token`` with probability ``rate``; all columns gain the token state."""
    NoiseSpec("M", rate, seed)
    for name, states in ds.columns:
        if token in states:
            raise NoiseError(f"missing token {token!r} collides with a state of column {name!r}")
    n, k = ds.data.shape
    u = _rng.row_uniforms(_rng.philox_key(seed, 4), 0, n, k)
    mask = u < rate
    data = ds.data.astype(np.int32, copy=True)
    rows, cols = np.nonzero(mask)
    originals = data[rows, cols].copy()
    for j, (_, states) in enumerate(ds.columns):
        data[mask[:, j], j] = len(states)
    columns = tuple((name, states + (token,)) for name, states in ds.columns)
    corrupted = int(mask.sum())
    comp = {
        "kind": "M", "rate": rate, "seed": seed,
        "cells_corrupted": corrupted, "cells_total": n * k,
        "realized_rate": corrupted / (n * k) if n * k else 0.0,
        "per_column": {name: int(mask[:, j].sum()) for j, (name, _) in enumerate(ds.columns)},
        "states_before": {name: states for name, states in ds.columns},
    }
    dtype = _dtype_for(max(len(st) for _, st in columns))
    out = ds.with_data(columns, data.astype(dtype),
                       noise=[*ds.provenance.get("noise", []), f"M{int(round(rate * 100))}"])
    return out, NoiseManifest(components=[comp], originals={"M": (rows, cols, originals)})


def inject_incorrect(ds: Dataset, rate: float, seed: int, token: str = DEFAULT_MISSING) -> tuple[Dataset, NoiseManifest]:
    """With probability ``rate`` per non-missing cell, replace the value by a different declared state."""
    NoiseSpec("I", rate, seed)
    n, k = ds.data.shape
    alt_counts = []
    miss_idx = []
    for name, states in ds.columns:
        real = [s for s in states if s != token]
        if len(real) < 2:
            raise NoiseError(f"column {name!r} has fewer than two states to swap between")
        # the token, when present, is always appended last
        miss_idx.append(states.index(token) if token in states else -1)
        alt_counts.append(len(real))
    u = _rng.row_uniforms(_rng.philox_key(seed, 3), 0, n, 2 * k)
    data = ds.data.astype(np.int64, copy=True)
    hit = u[:, :k] < rate
    miss = np.array(miss_idx)
    hit &= data != miss[None, :]
    r = np.array(alt_counts)
    pick = np.floor(u[:, k:] * (r - 1)[None, :]).astype(np.int64)
    pick = np.minimum(pick, (r - 2)[None, :])
    new = np.where(pick >= data, pick + 1, pick)
    rows, cols = np.nonzero(hit)
    originals = data[rows, cols].copy()
    data[hit] = new[hit]
    corrupted = int(hit.sum())
    comp = {
        "kind": "I", "rate": rate, "seed": seed,
        "cells_corrupted": corrupted, "cells_total": n * k,
        "realized_rate": corrupted / (n * k) if n * k else 0.0,
        "per_column": {name: int(hit[:, j].sum()) for j, (name, _) in enumerate(ds.columns)},
        "states_before": {name: states for name, states in ds.columns},
    }
    out = ds.with_data(ds.columns, data.astype(ds.data.dtype),
                       noise=[*ds.provenance.get("noise", []), f"I{int(round(rate * 100))}"])
    return out, NoiseManifest(components=[comp], originals={"I": (rows, cols, originals)})


# -- variable-level noise ---------------------------------------------------------

def merge_states(
    ds: Dataset,
    net: DiscreteBayesNet | None,
    chosen: Sequence[str],
    seed: int,
    token: str = DEFAULT_MISSING,
) -> tuple[Dataset, NoiseManifest]:
    """Merge two random states of each chosen variable into one concatenated label."""
    rng = np.random.Generator(np.random.Philox(key=_rng.philox_key(seed, 2, 1)))
    columns = list(ds.columns)
    data = ds.data.astype(np.int64, copy=True)
    merged: dict[str, dict[str, Any]] = {}
    for name in chosen:
        if net is not None and name not in net.names:
            raise NoiseError(f"variable {name!r} is not in network {net.name!r}")
        try:
            j = ds.col_index(name)
        except KeyError:
            raise NoiseError(f"variable {name!r} is not a column of the dataset") from None
        states = columns[j][1]
        real = [i for i, s in enumerate(states) if s != token]
        if len(real) < 3:
            raise NoiseError(f"variable {name!r} has fewer than three states and cannot be merged")
        a, b = sorted(rng.choice(real, size=2, replace=False).tolist())
        label = states[a] + states[b]
        base, suffix = label, 1
        while label in states:
            label = f"{base}_{suffix}"
            suffix += 1
        new_states = tuple(label if i == a else s for i, s in enumerate(states) if i != b)
        remap = np.array([a if i == b else (i if i < b else i - 1) for i in range(len(states))])
        data[:, j] = remap[data[:, j]]
        columns[j] = (name, new_states)
        merged[name] = {"sources": [states[a], states[b]], "label": label}
    comp = {"kind": "S", "seed": seed, "variables": list(chosen), "merged": merged}
    out = ds.with_data(columns, data.astype(ds.data.dtype), noise=[*ds.provenance.get("noise", []), "S"])
    return out, NoiseManifest(components=[comp], merged=merged)


def drop_latent(ds: Dataset, chosen: Sequence[str]) -> tuple[Dataset, NoiseManifest]:
    missing = [c for c in chosen if c not in ds.names]
    if missing:
        raise NoiseError(f"cannot drop unknown column(s) {missing}")
    keep = [j for j, name in enumerate(ds.names) if name not in set(chosen)]
    if not keep:
        raise NoiseError("dropping these variables would leave no columns")
    columns = [ds.columns[j] for j in keep]
    out = ds.with_data(columns, ds.data[:, keep], noise=[*ds.provenance.get("noise", []), "L"])
    comp = {"kind": "L", "variables": list(chosen)}
    return out, NoiseManifest(components=[comp], latent=list(chosen))


# -- experiment codes -------------------------------------------------------------

_CODE_RE = re.compile(r"^(N|[MISL](5|10)|c[MISL]{2,4})$")


def _code_parts(code: str) -> tuple[bool, list[tuple[str, float | None]]]:
    if code not in CODES and not _CODE_RE.match(code or ""):
        raise ValueError(f"unknown experiment code {code!r}")
    if code == "N":
        return False, []
    if code.startswith("c"):
        return True, [(k, None) for k in code[1:]]
    return False, [(code[0], int(code[1:]) / 100)]


def _variable_feasible(net: DiscreteBayesNet, kind: str, rate: float, token: str) -> str | None:
    """None when feasible, otherwise the reason it is not."""
    n_vars = len(net.variables)
    target = target_count(rate, n_vars)
    if target == 0:
        return f"{kind}{int(rate * 100)}: round_half_up({rate} x {n_vars}) = 0 variables"
    if kind == "S":
        pool = sum(_mergeable(v, token) for v in net.variables)
        if pool < target:
            return f"{kind}{int(rate * 100)}: {pool} variables with >= 3 states, {target} needed"
    if kind == "L" and target >= n_vars:
        return f"L{int(rate * 100)}: no variable would remain observed"
    return None


def resolve_code(net: DiscreteBayesNet, code: str, seed: int = 0, token: str = DEFAULT_MISSING) -> ExperimentCode:
    """Resolve an experiment code to concrete noise components for ``net``.

    Combination experiments use 5% per component, escalate S or L to 10% when
    5% of |V| rounds to zero variables, and, for the four-way combination
    only, drop a component that is impossible at both rates.
    """
    combo, parts = _code_parts(code)
    notes: list[str] = []
    comps: dict[str, NoiseSpec] = {}
    for kind, rate in parts:
        if kind in ("M", "I"):
            comps[kind] = NoiseSpec(kind, rate or COMBO_RATE, _rng.component_seed(seed, kind))
            continue
        if not combo:
            reason = _variable_feasible(net, kind, rate, token)
            if reason:
                raise IneligibleExperiment(f"{code} on {net.name}: {reason}")
            comps[kind] = NoiseSpec(kind, rate, _rng.component_seed(seed, kind))
            continue
        first = _variable_feasible(net, kind, COMBO_RATE, token)
        if first is None:
            comps[kind] = NoiseSpec(kind, COMBO_RATE, _rng.component_seed(seed, kind))
            continue
        second = _variable_feasible(net, kind, ESCALATED_RATE, token)
        if second is None and target_count(COMBO_RATE, len(net.variables)) == 0:
            comps[kind] = NoiseSpec(kind, ESCALATED_RATE, _rng.component_seed(seed, kind))
            notes.append(f"{kind} escalated to 10% ({first})")
            continue
        if len(parts) > 2:
            notes.append(f"{kind} omitted ({second or first})")
            continue
        raise IneligibleExperiment(f"{code} on {net.name}: {second or first}")
    ordered = tuple(comps[k] for k in APPLY_ORDER if k in comps)
    return ExperimentCode(code, ordered, tuple(notes))


def experiment_catalog(net: DiscreteBayesNet, token: str = DEFAULT_MISSING) -> list[tuple[str, bool, str]]:
    """(code, eligible, notes) for all 16 experiment codes."""
    rows = []
    for code in CODES:
        try:
            exp = resolve_code(net, code, 0, token)
        except IneligibleExperiment as exc:
            rows.append((code, False, str(exc)))
        else:
            rows.append((code, True, "; ".join(exp.notes)))
    return rows


def apply_experiment(
    net: DiscreteBayesNet,
    ds: Dataset,
    exp: ExperimentCode,
    token: str = DEFAULT_MISSING,
) -> tuple[Dataset, NoiseManifest, GroundTruthSpec]:
    manifest = NoiseManifest(code=exp.code)
    n_vars = len(net.variables)
    latent: list[str] = []
    for comp in exp.components:  # already in L, S, I, M order
        if comp.kind == "L":
            latent = select_variables(net, n_vars, comp.rate, comp.seed)
            ds, m = drop_latent(ds, latent)
            m.components[0].update(rate=comp.rate, seed=comp.seed)
        elif comp.kind == "S":
            observed = set(ds.names)
            chosen = select_variables(
                net, n_vars, comp.rate, comp.seed,
                eligible=lambda v: v.name in observed and _mergeable(v, token),
            )
            ds, m = merge_states(ds, net, chosen, comp.seed, token)
            m.components[0].update(rate=comp.rate)
        elif comp.kind == "I":
            ds, m = inject_incorrect(ds, comp.rate, comp.seed, token)
        else:
            ds, m = inject_missing(ds, comp.rate, comp.seed, token)
        manifest.extend(m)
    ds = ds.with_data(ds.columns, ds.data, noise_code=exp.code)
    if latent:
        lrate = exp.component("L").percent
        truth = GroundTruthSpec("MAG", tuple(latent), f"MAG{lrate}")
    else:
        truth = GroundTruthSpec("DAG")
    return ds, manifest, truth


def compose_experiment(
    net: DiscreteBayesNet,
    ds_clean: Dataset,
    code: str,
    seed: int,
    token: str = DEFAULT_MISSING,
) -> tuple[Dataset, NoiseManifest, GroundTruthSpec]:
    """Apply experiment ``code`` to a clean dataset; returns data, manifest and truth spec."""
    exp = resolve_code(net, code, seed, token)
    return apply_experiment(net, ds_clean, exp, token)
