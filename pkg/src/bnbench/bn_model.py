"""Discrete Bayesian networks: validation, dimensionality and the JSON network format.

CPTs are stored flat. Parent configurations are enumerated with the
first-listed parent varying slowest and the last-listed parent fastest; within
a row, probabilities follow the child's declared state order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FORMAT_VERSION = 1
ROW_SUM_TOL = 1e-9


class NetworkFormatError(ValueError):
    """Raised when a network document violates the schema or the model invariants."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    @property
    def cardinality(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class DimensionReport:
    node_count: int
    arc_count: int
    average_in_degree: Fraction
    max_in_degree: int
    free_parameters: int
    average_degree: Fraction = Fraction(0)  # 2 * arcs / nodes, in- plus out-degree


@dataclass(frozen=True, eq=False)
class DiscreteBayesNet:
    """A validated discrete network. Build through :func:`build_network` or :func:`parse_network`."""

    name: str
    variables: tuple[Variable, ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, np.ndarray]  # shape (parent configs, child states)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index.update({v.name: i for i, v in enumerate(self.variables)})
        for table in self.cpts.values():
            table.setflags(write=False)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def variable(self, name: str) -> Variable:
        return self.variables[self._index[name]]

    def index(self, name: str) -> int:
        return self._index[name]

    def arcs(self) -> list[tuple[str, str]]:
        return [(p, v.name) for v in self.variables for p in self.parents[v.name]]

    def __eq__(self, other):
        if not isinstance(other, DiscreteBayesNet):
            return NotImplemented
        return (
            self.name == other.name
            and self.variables == other.variables
            and dict(self.parents) == dict(other.parents)
            and self.cpts.keys() == other.cpts.keys()
            and all(np.array_equal(self.cpts[k], other.cpts[k]) for k in self.cpts)
        )

    def __hash__(self):
        return hash((self.name, self.variables))


def build_network(
    name: str,
    variables: Sequence[Variable],
    parents: Mapping[str, Sequence[str]],
    cpts: Mapping[str, Sequence[float] | np.ndarray],
) -> DiscreteBayesNet:
    """Validate the pieces of a network and assemble it."""
    seen: set[str] = set()
    for i, var in enumerate(variables):
        if not var.name:
            raise NetworkFormatError("variable name must be non-empty", field=f"variables[{i}].name")
        if var.name in seen:
            raise NetworkFormatError(f"duplicate variable '{var.name}'", field=f"variables[{i}].name")
        seen.add(var.name)
        if len(var.states) < 2:
            raise NetworkFormatError(f"variable '{var.name}' needs at least 2 states", field=f"variables[{i}].states")
        if any(not s for s in var.states):
            raise NetworkFormatError(f"variable '{var.name}' has an empty state label", field=f"variables[{i}].states")
        if len(set(var.states)) != len(var.states):
            raise NetworkFormatError(f"variable '{var.name}' has duplicate state labels", field=f"variables[{i}].states")

    unknown = set(parents) - seen
    if unknown:
        raise NetworkFormatError(f"parents declared for unknown variable(s) {sorted(unknown)}", field="parents")
    card = {v.name: len(v.states) for v in variables}
    parent_map: dict[str, tuple[str, ...]] = {}
    for var in variables:
        plist = tuple(parents.get(var.name, ()))
        for p in plist:
            if p not in seen:
                raise NetworkFormatError(f"unknown parent '{p}' of '{var.name}'", field=f"parents.{var.name}")
            if p == var.name:
                raise NetworkFormatError(f"'{var.name}' lists itself as a parent", field=f"parents.{var.name}")
        if len(set(plist)) != len(plist):
            raise NetworkFormatError(f"duplicate parent of '{var.name}'", field=f"parents.{var.name}")
        parent_map[var.name] = plist

    _check_acyclic([v.name for v in variables], parent_map)

    tables: dict[str, np.ndarray] = {}
    for var in variables:
        if var.name not in cpts:
            raise NetworkFormatError(f"missing CPT for '{var.name}'", field=f"cpts.{var.name}")
        rows = math.prod(card[p] for p in parent_map[var.name])
        flat = np.asarray(cpts[var.name], dtype=np.float64).ravel()
        if flat.size != rows * var.cardinality:
            raise NetworkFormatError(
                f"CPT of '{var.name}' has {flat.size} entries, expected {rows} rows x {var.cardinality} states",
                field=f"cpts.{var.name}",
            )
        table = flat.reshape(rows, var.cardinality).copy()
        if not np.all(np.isfinite(table)) or np.any(table < 0) or np.any(table > 1):
            raise NetworkFormatError(f"CPT of '{var.name}' has entries outside [0, 1]", field=f"cpts.{var.name}")
        sums = table.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            r = int(bad[0])
            raise NetworkFormatError(
                f"CPT row {r} of '{var.name}' sums to {sums[r]:.12g}, not 1",
                field=f"cpts.{var.name}[row {r}]",
            )
        tables[var.name] = table
    extra = set(cpts) - seen
    if extra:
        raise NetworkFormatError(f"CPT given for unknown variable(s) {sorted(extra)}", field="cpts")
    return DiscreteBayesNet(name=name, variables=tuple(variables), parents=parent_map, cpts=tables)


def _check_acyclic(names: list[str], parents: Mapping[str, tuple[str, ...]]) -> None:
    state = dict.fromkeys(names, 0)  # 0 new, 1 on stack, 2 done
    for root in names:
        if state[root]:
            continue
        stack = [(root, iter(parents[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state[nxt] == 1:
                path = [n for n, _ in stack]
                cycle = path[path.index(nxt):] + [nxt]
                raise NetworkFormatError("cycle detected: " + " <- ".join(cycle), field="parents")
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(parents[nxt])))


def _line_of(text: str, needle: str, section: str | None = None) -> int | None:
    start = text.find(f'"{section}"') if section else 0
    pos = text.find(needle, max(start, 0))
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


def parse_network(text: str | bytes) -> DiscreteBayesNet:
    """Parse and validate a network document (see docs/network_format.md)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"malformed syntax: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise NetworkFormatError("top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported format_version {doc.get('format_version')!r}", field="format_version")
    for key in ("name", "variables", "parents", "cpts"):
        if key not in doc:
            raise NetworkFormatError("required field missing", field=key)
    if not isinstance(doc["name"], str):
        raise NetworkFormatError("must be a string", field="name")
    if not isinstance(doc["variables"], list):
        raise NetworkFormatError("must be a list", field="variables")
    variables = []
    for i, entry in enumerate(doc["variables"]):
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise NetworkFormatError("expected {name, states}", field=f"variables[{i}]")
        states = entry.get("states")
        if not isinstance(states, list) or not all(isinstance(s, str) for s in states):
            raise NetworkFormatError("states must be a list of strings", field=f"variables[{i}].states")
        variables.append(Variable(entry["name"], tuple(states)))
    if not isinstance(doc["parents"], dict) or not isinstance(doc["cpts"], dict):
        raise NetworkFormatError("parents and cpts must be objects", field="parents" if not isinstance(doc["parents"], dict) else "cpts")
    for var, plist in doc["parents"].items():
        if not isinstance(plist, list) or not all(isinstance(p, str) for p in plist):
            raise NetworkFormatError("must be a list of names", field=f"parents.{var}")
    for var, flat in doc["cpts"].items():
        if not isinstance(flat, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in flat):
            raise NetworkFormatError("must be a flat list of numbers", field=f"cpts.{var}", line=_line_of(text, f'"{var}"', "cpts"))
    try:
        return build_network(doc["name"], variables, doc["parents"], doc["cpts"])
    except NetworkFormatError as exc:
        if exc.line is None and exc.field:
            section, _, rest = exc.field.partition(".")
            head = (rest or section).split("[")[0]
            exc.line = _line_of(text, f'"{head}"', section if rest else None)
            exc.args = (f"[line {exc.line}] " + exc.args[0],) if exc.line else exc.args
        raise


def serialize_network(net: DiscreteBayesNet) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "name": net.name,
        "variables": [{"name": v.name, "states": list(v.states)} for v in net.variables],
        "parents": {v.name: list(net.parents[v.name]) for v in net.variables},
        "cpts": {v.name: [float(x) for x in net.cpts[v.name].ravel()] for v in net.variables},
    }
    return json.dumps(doc, indent=2) + "\n"


def load_network(path_or_name: str | Path) -> DiscreteBayesNet:
    """Load a network file, or a bundled network by bare name (e.g. ``"asia"``)."""
    path = Path(path_or_name)
    if path.exists():
        return parse_network(path.read_bytes())
    bundled = resources.files("bnbench") / "data" / f"{path_or_name}.json"
    if bundled.is_file():
        return parse_network(bundled.read_bytes())
    raise FileNotFoundError(f"no network file or bundled network named {path_or_name!r}")


def free_parameters(net: DiscreteBayesNet) -> int:
    total = 0
    for var in net.variables:
        q = math.prod(net.variable(p).cardinality for p in net.parents[var.name])
        total += (var.cardinality - 1) * q
    return total


def dimension_report(net: DiscreteBayesNet) -> DimensionReport:
    """Node/arc counts, in-degree summary and free parameters.

    The average in-degree is arcs / nodes; ``average_degree`` counts both
    endpoints of each arc (2 * arcs / nodes).
    """
    degrees = [len(net.parents[v.name]) for v in net.variables]
    arcs = sum(degrees)
    return DimensionReport(
        node_count=len(degrees),
        arc_count=arcs,
        average_in_degree=Fraction(arcs, len(degrees)) if degrees else Fraction(0),
        max_in_degree=max(degrees, default=0),
        free_parameters=free_parameters(net),
        average_degree=Fraction(2 * arcs, len(degrees)) if degrees else Fraction(0),
    )


def topological_order(net: DiscreteBayesNet) -> list[str]:
    """Parents before children; ties broken by declaration order."""
    names = net.names
    remaining = {n: len(net.parents[n]) for n in names}
    children: dict[str, list[str]] = {n: [] for n in names}
    for n in names:
        for p in net.parents[n]:
            children[p].append(n)
    done: list[str] = []
    placed: set[str] = set()
    while len(done) < len(names):
        # smallest declaration index among ready nodes
        nxt = next(n for n in names if n not in placed and remaining[n] == 0)
        done.append(nxt)
        placed.add(nxt)
        for c in children[nxt]:
            remaining[c] -= 1
    return done


def empty_network(state_counts: Mapping[str, int] | Sequence[int], name: str = "shape") -> DiscreteBayesNet:
    """Arc-free network with uniform marginals, useful for shape-only questions such as noise eligibility."""
    if not isinstance(state_counts, Mapping):
        state_counts = {f"V{i + 1}": int(k) for i, k in enumerate(state_counts)}
    variables = [Variable(n, tuple(f"s{j}" for j in range(k))) for n, k in state_counts.items()]
    cpts = {v.name: np.full(v.cardinality, 1.0 / v.cardinality) for v in variables}
    return build_network(name, variables, {}, cpts)
