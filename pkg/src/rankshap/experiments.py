"""Desk-scale fidelity experiments on synthetic retrieval corpora."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import fidelity
from .grem import infer_relevance, parse_value_fn
from .methods import AttributionProblem, attribute
from .rankers import BM25Ranker
from .synthetic import synthetic_suite, top_n_instance


@dataclass(frozen=True)
class Arm:
    """One row of an experiment: a method, its value function and label source."""

    label: str
    method: str
    value_fn: str = "ndcg"
    relevance: str = "model"  # model | bm25 | qrels


DEFAULT_ARMS = (
    Arm("random", "random"),
    Arm("rankshap-ndcg", "rankshap", "ndcg"),
    Arm("rankshap-dcg", "rankshap", "dcg"),
    Arm("rankshap-cg", "rankshap", "cg"),
    Arm("rankshap-map", "rankshap", "map"),
    Arm("rankingshap", "rankingshap"),
    Arm("exs", "exs"),
)

RELEVANCE_ARMS = (
    Arm("explicit", "rankshap", "ndcg", "qrels"),
    Arm("bm25-heuristic", "rankshap", "ndcg", "bm25"),
)


@dataclass
class ExperimentResult:
    arms: tuple[Arm, ...]
    per_query: dict[str, list[tuple[str, float, float]]] = field(default_factory=dict)

    def mean(self, label: str) -> tuple[float, float]:
        rows = self.per_query[label]
        return float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows]))

    def to_json(self) -> dict:
        return {
            "schema": "rankshap/1",
            "kind": "experiment",
            "arms": {a.label: {"method": a.method, "value_fn": a.value_fn, "relevance": a.relevance,
                               "fidelity": self.mean(a.label)[0], "wfidelity": self.mean(a.label)[1],
                               "queries": len(self.per_query[a.label])}
                     for a in self.arms},
        }

    def table(self) -> str:
        width = max(len(a.label) for a in self.arms)
        lines = [f"{'arm':<{width}}  fidelity  wfidelity"]
        for a in self.arms:
            f, w = self.mean(a.label)
            lines.append(f"{a.label:<{width}}  {f:8.3f}  {w:9.3f}")
        return "\n".join(lines)


def run_fidelity_suite(arms=DEFAULT_ARMS, n_queries: int = 100, top_n: int = 10,
                       n_samples: int = 5000, top_t: int = 7, seed: int = 0,
                       exs_k: int = 5, ranker=None) -> ExperimentResult:
    """Attribute and score every arm on ``n_queries`` synthetic queries.

    ``exs_k`` must stay below ``top_n``: when every document counts as
    "in the top k" the EXS labels are constant and its attributions vanish.
    """
    ranker = BM25Ranker() if ranker is None else ranker
    result = ExperimentResult(tuple(arms), {a.label: [] for a in arms})
    value_fns = {a.value_fn: parse_value_fn(a.value_fn) for a in arms}
    for sq in synthetic_suite(n_queries, n_candidates=max(20, top_n), seed=seed):
        inst = top_n_instance(sq, ranker, top_n)
        rels = {src: infer_relevance(src, inst, ranker, sq.qrels) for src in {a.relevance for a in arms}}
        for a in arms:
            problem = AttributionProblem(inst, ranker, rels[a.relevance], value_fns[a.value_fn],
                                         n_samples=n_samples, seed=seed, exs_k=exs_k)
            rep = fidelity(attribute(a.method, problem), ranker, inst, top_t=top_t)
            result.per_query[a.label].append((sq.query.id, rep.fidelity, rep.wfidelity))
    return result
