"""Competing rank-attribution methods: EXS, RankingSHAP and Random."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AttributionVector, Instance
from .grem import RelevanceAssignment, TauReference
from .rankers import id_order, orders_from_scores, rank_instance, score_coalitions
from .shapley import GameOracle, SamplerConfig, exact_rankshap, kernel_rankshap, sample_coalitions


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "exs"  # "exs" | "rankingshap" | "random"
    k: int = 10
    n_samples: int = 5000
    seed: int = 0
    exact: bool = False

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.n_samples, self.seed)


def exs_attribution(ranker, instance: Instance, rels: RelevanceAssignment | None = None,
                    cfg: BaselineConfig = BaselineConfig()) -> AttributionVector:
    """Sum of per-document surrogate fits over the top-``k`` documents.

    For each top-``k`` document of the full ranking, every sampled coalition
    is labelled 1 when the document still ranks within the top ``k`` and 0
    otherwise; a kernel-weighted linear model with intercept is fit to the
    labels.  ``rels`` is accepted for interface symmetry and ignored.
    """
    n, m = instance.n, instance.m
    k = min(cfg.k, n)
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the number of documents n={n}")
    full = rank_instance(ranker, instance)
    index = {d: j for j, d in enumerate(instance.doc_ids)}
    top = [index[d] for d in full.doc_ids[:k]]

    Z, w, _ = sample_coalitions(m, cfg.sampler) if m >= 2 else (None, None, None)
    if Z is None or len(Z) == 0:
        Z = np.array([np.zeros(m, bool), np.ones(m, bool)])
        w = np.ones(2)
    orders = orders_from_scores(score_coalitions(ranker, instance, Z), id_order(instance.doc_ids))
    pos = np.empty_like(orders)
    pos[np.arange(len(Z))[:, None], orders] = np.arange(1, n + 1)[None, :]
    labels = (pos[:, top] <= k).astype(float)  # (samples, k)

    X = np.hstack([np.ones((len(Z), 1)), Z.astype(float)])
    sw = np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(X * sw, labels * sw, rcond=None)
    total = coef.sum(axis=1)
    return AttributionVector(total[1:], total[0], method="exs", value_fn=f"top{k}-label",
                             features=instance.feature_space.features)


def rankingshap_attribution(ranker, instance: Instance, cfg: BaselineConfig = BaselineConfig()) -> AttributionVector:
    """Shapley values of ``v(z) = tau(ranking under z, full ranking)``."""
    oracle = GameOracle(instance, ranker, TauReference())
    if cfg.exact:
        return exact_rankshap(oracle, method="rankingshap")
    return kernel_rankshap(oracle, cfg.sampler, method="rankingshap")


def random_attribution(m: int, seed: int = 0, features: tuple[str, ...] = ()) -> AttributionVector:
    phi = np.random.default_rng(seed).uniform(-1.0, 1.0, size=m)
    return AttributionVector(phi, 0.0, method="random", value_fn="none", features=features)
