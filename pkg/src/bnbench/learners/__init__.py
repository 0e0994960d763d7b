"""Structure learners: BIC/BDeu scores, G² test, hill climbing, tabu search, PC-Stable."""

from __future__ import annotations

from typing import Any

from bnbench.graphs import MixedGraph
from bnbench.learners.citest import CiResult, CiTestConfig, G2Tester, g2_test
from bnbench.learners.pc import pc_skeleton, pc_stable
from bnbench.learners.scores import FamilyScorer, LearnerError, ScoreConfig, family_score, total_score
from bnbench.learners.search import SearchConfig, hill_climb, tabu_search
from bnbench.sampling import Dataset

ALGORITHMS = ("hc", "tabu", "pc-stable")

# defaults per algorithm, keyed by the parameter names used in config files and CLI flags
DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "hc": {"score": "bic", "iss": 1.0, "max_in_degree": None},
    "tabu": {"score": "bic", "iss": 1.0, "max_in_degree": None, "tabu_length": 10, "tabu_escapes": 10},
    "pc-stable": {"alpha": 0.01, "max_cond_size": None},
}
_SEARCH_EXTRAS = ("seed", "restarts", "perturb", "max_iter")


def resolve_params(algo: str, params: dict[str, Any] | None = None) -> dict[str, Any]:
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    out = dict(DEFAULT_PARAMS[algo])
    for k, v in (params or {}).items():
        if k not in out and k not in _SEARCH_EXTRAS:
            raise ValueError(f"parameter {k!r} does not apply to {algo}")
        out[k] = v
    return out


def learn(ds: Dataset, algo: str, params: dict[str, Any] | None = None) -> MixedGraph:
    """Run one learner by id with config-file style parameters."""
    p = resolve_params(algo, params)
    if algo == "pc-stable":
        return pc_stable(ds, CiTestConfig(alpha=p["alpha"], max_cond_size=p["max_cond_size"]))
    score = ScoreConfig(p["score"], p["iss"], p["max_in_degree"])
    search = SearchConfig(
        tabu_length=p.get("tabu_length", 10),
        tabu_escapes=p.get("tabu_escapes", 10),
        restarts=p.get("restarts", 0),
        perturb=p.get("perturb", 1),
        max_iter=p.get("max_iter"),
        seed=p.get("seed", 0),
    )
    if algo == "hc":
        return hill_climb(ds, score, search)
    return tabu_search(ds, score, search)


__all__ = [
    "ALGORITHMS", "CiResult", "CiTestConfig", "FamilyScorer", "G2Tester", "LearnerError",
    "ScoreConfig", "SearchConfig", "family_score", "g2_test", "hill_climb", "learn",
    "pc_skeleton", "pc_stable", "resolve_params", "tabu_search", "total_score",
]
