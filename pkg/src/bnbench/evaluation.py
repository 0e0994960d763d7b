"""Graph accuracy: pair classification into fractional confusion counts, then F1, SHD and BSF.

Each unordered node pair gets exactly one outcome:

* true arc A -> B: learned A -> B or A o-> B is a full match (tp 1); any other
  learned edge is a half match (tp 0.5, fn 0.5, penalty 0.5); no edge is a miss
  (fn 1, penalty 1).
* true A <-> B: any learned edge is a match (tp 1); no edge is a miss (fn 1, penalty 1).
* true non-adjacent: no edge is tn; any edge is fp with penalty 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from bnbench.graphs import ARROW, CIRCLE, TAIL, MixedGraph

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class PairOutcome:
    u: str
    v: str
    rule: str  # full_match | partial_match | no_match | confounder_match | true_negative | false_edge
    penalty: Fraction


@dataclass(frozen=True)
class Confusion:
    tp: Fraction
    tn: Fraction
    fp: Fraction
    fn: Fraction
    a: int
    i: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")
        if self.tp + self.fn != self.a or self.tn + self.fp != self.i:
            raise ValueError("confusion counts do not partition the node pairs")


@dataclass(frozen=True)
class ScoreReport:
    precision: float
    recall: float
    f1: float
    shd: float
    bsf: float
    confusion: Confusion
    truth_class: str
    ledger: tuple[PairOutcome, ...] = field(default=(), repr=False)
    degenerate: str | None = None

    def row(self) -> dict:
        c = self.confusion
        return {
            "truth": self.truth_class,
            "tp": float(c.tp), "tn": float(c.tn), "fp": float(c.fp), "fn": float(c.fn),
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "shd": self.shd, "bsf": self.bsf,
        }


def _classify(truth_marks, learned_marks) -> tuple[str, Fraction, tuple]:
    """Returns (rule, penalty, (dtp, dtn, dfp, dfn))."""
    if truth_marks is None:
        if learned_marks is None:
            return "true_negative", Fraction(0), (0, 1, 0, 0)
        return "false_edge", Fraction(1), (0, 0, 1, 0)
    if learned_marks is None:
        return "no_match", Fraction(1), (0, 0, 0, 1)
    if truth_marks == (ARROW, ARROW):
        return "confounder_match", Fraction(0), (1, 0, 0, 0)
    if learned_marks[1] == ARROW and learned_marks[0] in (TAIL, CIRCLE):
        return "full_match", Fraction(0), (1, 0, 0, 0)
    return "partial_match", HALF, (HALF, 0, 0, HALF)


def classify_pairs(learned: MixedGraph, truth: MixedGraph) -> tuple[Confusion, list[PairOutcome]]:
    if set(learned.nodes) != set(truth.nodes):
        raise ValueError(
            f"node sets differ: only learned {sorted(set(learned.nodes) - set(truth.nodes))}, "
            f"only truth {sorted(set(truth.nodes) - set(learned.nodes))}"
        )
    for u, v, mu, mv in truth.edges:
        if (mu, mv) not in ((TAIL, ARROW), (ARROW, TAIL), (ARROW, ARROW)):
            raise ValueError("truth graph may only hold directed and bi-directed edges")
    counts = [Fraction(0)] * 4
    ledger = []
    for u, v in combinations(sorted(truth.nodes), 2):
        tm = truth.marks(u, v)
        if tm == (ARROW, TAIL):
            u, v, tm = v, u, (TAIL, ARROW)
        rule, pen, deltas = _classify(tm, learned.marks(u, v))
        counts = [c + d for c, d in zip(counts, deltas)]
        ledger.append(PairOutcome(u, v, rule, pen))
    a = len(truth.edges)
    k = len(truth.nodes)
    conf = Confusion(*counts, a=a, i=k * (k - 1) // 2 - a)
    return conf, ledger


def precision_recall(c: Confusion) -> tuple[float, float]:
    p = float(c.tp / (c.tp + c.fp)) if c.tp + c.fp else 0.0
    r = float(c.tp / (c.tp + c.fn)) if c.tp + c.fn else 0.0
    return p, r


def f1_from(precision: float, recall: float) -> float:
    s = precision + recall
    return 2 * precision * recall / s if s else 0.0


def f1(c: Confusion) -> float:
    return f1_from(*precision_recall(c))


def shd(ledger) -> float:
    return float(sum(o.penalty for o in ledger))


def bsf(c: Confusion) -> float:
    """0.5 (tp/a + tn/i - fp/i - fn/a); with a = 0 or i = 0 only the defined half is used, doubled."""
    if c.a == 0 and c.i == 0:
        return 0.0
    if c.a == 0:
        return float((c.tn - c.fp) / c.i)
    if c.i == 0:
        return float((c.tp - c.fn) / c.a)
    return float(HALF * (c.tp / c.a + c.tn / c.i - c.fp / c.i - c.fn / c.a))


def score_graph(learned: MixedGraph, truth: MixedGraph, truth_label: str | None = None) -> ScoreReport:
    conf, ledger = classify_pairs(learned, truth)
    p, r = precision_recall(conf)
    degenerate = "no true edges" if conf.a == 0 else "no true independences" if conf.i == 0 else None
    return ScoreReport(
        precision=p, recall=r, f1=f1_from(p, r), shd=shd(ledger), bsf=bsf(conf),
        confusion=conf, truth_class=truth_label or truth.kind, ledger=tuple(ledger), degenerate=degenerate,
    )
