"""One entry point for every attribution method.

Methods take an :class:`AttributionProblem` and return an
:class:`~rankshap.core.AttributionVector`; the axiom harness and the CLI
only ever go through :func:`attribute`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .baselines import BaselineConfig, exs_attribution, random_attribution, rankingshap_attribution
from .core import AttributionVector, Instance
from .grem import Grem, RelevanceAssignment, ValueFn
from .shapley import GameOracle, SamplerConfig, exact_rankshap, kernel_rankshap, permutation_rankshap

METHODS = ("rankshap", "rankshap-exact", "permutation", "rankingshap", "rankingshap-exact", "exs", "random")


@dataclass(frozen=True)
class AttributionProblem:
    instance: Instance
    ranker: object
    rels: RelevanceAssignment | None
    value_fn: ValueFn = Grem("linear", "log", True, label="ndcg")
    n_samples: int = 5000
    seed: int = 0
    exs_k: int = 10
    enumeration_limit: int = 20

    def with_seed(self, seed: int) -> "AttributionProblem":
        return replace(self, seed=seed)

    def oracle(self) -> GameOracle:
        return GameOracle(self.instance, self.ranker, self.value_fn, self.rels)


def attribute(method: str, problem: AttributionProblem) -> AttributionVector:
    sampler = SamplerConfig(problem.n_samples, problem.seed)
    if method == "rankshap":
        return kernel_rankshap(problem.oracle(), sampler)
    if method == "rankshap-exact":
        return exact_rankshap(problem.oracle(), limit=problem.enumeration_limit)
    if method == "permutation":
        return permutation_rankshap(problem.oracle(), sampler)
    base = BaselineConfig(method, min(problem.exs_k, problem.instance.n), problem.n_samples, problem.seed)
    if method == "rankingshap":
        return rankingshap_attribution(problem.ranker, problem.instance, base)
    if method == "rankingshap-exact":
        return rankingshap_attribution(problem.ranker, problem.instance, replace(base, exact=True))
    if method == "exs":
        return exs_attribution(problem.ranker, problem.instance, problem.rels, base)
    if method == "random":
        return random_attribution(problem.instance.m, problem.seed, problem.instance.feature_space.features)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
