"""Ranking value functions: orderings plus fixed relevance labels to a score.

The gain/discount family ``sum_j g(rel_j) * h(j)`` covers CG, DCG and NDCG
(and precision@k through a cutoff).  Average precision, reciprocal rank and
the Kendall-tau-to-reference value used by the RankingSHAP baseline are
provided alongside.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Instance
from .evaluation import DocSetMismatchError, kendall_tau, tau_from_positions
from .rankers import BM25Ranker, Ranking, rank_instance


class MissingRelevanceError(KeyError):
    """A ranked document has no relevance label."""


@dataclass(frozen=True)
class RelevanceAssignment:
    rels: Mapping[str, float]
    source: str = "qrels"  # "qrels" | "model-score" | "bm25-heuristic"

    def __post_init__(self):
        for d, r in self.rels.items():
            if not r >= 0:
                raise ValueError(f"relevance of {d!r} must be >= 0, got {r}")

    def array(self, doc_ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.rels[d] for d in doc_ids], dtype=float)
        except KeyError as exc:
            raise MissingRelevanceError(f"no relevance label for document {exc.args[0]!r}") from None


def _rels_in_order(ranking: Ranking, rels: RelevanceAssignment) -> np.ndarray:
    return rels.array(ranking.doc_ids)


# --- gain and discount ------------------------------------------------------------

GAINS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "linear": lambda r: np.asarray(r, dtype=float),
    "exponential": lambda r: np.exp2(np.asarray(r, dtype=float)) - 1.0,
    # rel > 0 counts as relevant; used by precision@k
    "binary": lambda r: (np.asarray(r, dtype=float) > 0).astype(float),
}

DISCOUNTS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "none": lambda j: np.ones(len(j)),
    "log": lambda j: 1.0 / np.log2(j + 1.0),
    "reciprocal": lambda j: 1.0 / j,
}


def _discount_vector(discount, n: int, cutoff: int | None) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=float)
    h = DISCOUNTS[discount](j) if isinstance(discount, str) else np.array([discount(int(x)) for x in j], float)
    if cutoff is not None:
        h = np.where(j <= cutoff, h, 0.0)
    return h


class ValueFn:
    """Base class: ``fn(ranking, rels) -> float`` plus a batched variant."""

    name = "value"

    def __call__(self, ranking: Ranking, rels: RelevanceAssignment | None) -> float:
        raise NotImplementedError

    def batch(self, orders: np.ndarray, doc_ids: Sequence[str], rels: RelevanceAssignment | None) -> np.ndarray:
        """Values for each row of an ``(k, n)`` matrix of document indices."""
        ids = np.asarray(doc_ids, dtype=object)
        return np.array([
            self(Ranking(tuple(ids[row]), tuple(np.zeros(len(row)))), rels) for row in orders
        ])


@dataclass(frozen=True)
class Grem(ValueFn):
    """``sum_j g(rel_j) * h(j)``, optionally truncated at ``cutoff`` and normalized."""

    gain: str = "linear"
    discount: str | Callable[[int], float] = "log"
    normalize: bool = False
    cutoff: int | None = None
    label: str | None = None

    def __post_init__(self):
        if self.gain not in GAINS:
            raise ValueError(f"unknown gain {self.gain!r}")
        if isinstance(self.discount, str) and self.discount not in DISCOUNTS:
            raise ValueError(f"unknown discount {self.discount!r}")
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        d = self.discount if isinstance(self.discount, str) else "custom"
        s = f"grem({self.gain},{d}{',norm' if self.normalize else ''})"
        return s + (f"@{self.cutoff}" if self.cutoff else "")

    def unnormalized(self) -> "Grem":
        return Grem(self.gain, self.discount, False, self.cutoff)

    def _score(self, ordered_gains: np.ndarray, all_gains: np.ndarray) -> np.ndarray:
        n = ordered_gains.shape[-1]
        h = _discount_vector(self.discount, n, self.cutoff)
        value = (ordered_gains * h).sum(axis=-1)  # per-row, so batching cannot change rounding
        if not self.normalize:
            return value
        ideal = float((np.sort(all_gains)[::-1] * h).sum())
        if ideal == 0.0:
            return np.zeros_like(value)
        return value / ideal

    def __call__(self, ranking, rels) -> float:
        g = GAINS[self.gain](_rels_in_order(ranking, rels))
        return float(self._score(g, g))

    def batch(self, orders, doc_ids, rels) -> np.ndarray:
        g = GAINS[self.gain](rels.array(doc_ids))
        return self._score(g[orders], g)


def grem_value(ranking: Ranking, rels: RelevanceAssignment, gain: str = "linear",
               discount: str | Callable[[int], float] = "log") -> float:
    return Grem(gain, discount)(ranking, rels)


def ndcg(ranking: Ranking, rels: RelevanceAssignment, gain: str = "linear") -> float:
    return Grem(gain, "log", normalize=True)(ranking, rels)


@dataclass(frozen=True)
class AveragePrecision(ValueFn):
    threshold: float = 0.0
    name = "map"

    def __call__(self, ranking, rels) -> float:
        rel = _rels_in_order(ranking, rels) > self.threshold
        total = int(rel.sum())
        if total == 0:
            return 0.0
        hits = np.cumsum(rel)
        ranks = np.arange(1, len(rel) + 1)
        return float((hits[rel] / ranks[rel]).sum() / total)

    def batch(self, orders, doc_ids, rels) -> np.ndarray:
        rel = (rels.array(doc_ids) > self.threshold)[orders]
        total = rel.sum(axis=1)
        if not total.any():
            return np.zeros(len(orders))
        prec = np.cumsum(rel, axis=1) / np.arange(1, rel.shape[1] + 1)
        return (prec * rel).sum(axis=1) / np.maximum(total, 1)


def average_precision(ranking: Ranking, rels: RelevanceAssignment, threshold: float = 0.0) -> float:
    return AveragePrecision(threshold)(ranking, rels)


@dataclass(frozen=True)
class ReciprocalRank(ValueFn):
    threshold: float = 0.0
    name = "rr"

    def __call__(self, ranking, rels) -> float:
        hits = np.flatnonzero(_rels_in_order(ranking, rels) > self.threshold)
        return 1.0 / (hits[0] + 1) if len(hits) else 0.0


@dataclass(frozen=True)
class PrecisionAtK(ValueFn):
    k: int = 10
    threshold: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def name(self) -> str:
        return f"p@{self.k}"

    def __call__(self, ranking, rels) -> float:
        top = _rels_in_order(ranking, rels)[: self.k]
        return float((top > self.threshold).sum() / self.k)


def reciprocal_rank(ranking: Ranking, rels: RelevanceAssignment, threshold: float = 0.0) -> float:
    return ReciprocalRank(threshold)(ranking, rels)


def precision_at_k(ranking: Ranking, rels: RelevanceAssignment, k: int, threshold: float = 0.0) -> float:
    return PrecisionAtK(k, threshold)(ranking, rels)


@dataclass(frozen=True, eq=False)
class TauReference(ValueFn):
    """Kendall's tau between the coalition's ranking and a reference ranking.

    ``reference`` may be left as None and bound later to the full-feature
    ranking via :meth:`bind`.
    """

    reference: Ranking | None = None
    name = "tau"

    def bind(self, reference: Ranking) -> "TauReference":
        return TauReference(reference)

    def __call__(self, ranking, rels=None) -> float:
        if self.reference is None:
            raise ValueError("tau value function has no reference ranking")
        return tau_reference_value(ranking, self.reference)

    def batch(self, orders, doc_ids, rels=None) -> np.ndarray:
        if self.reference is None:
            raise ValueError("tau value function has no reference ranking")
        ref = self.reference.positions()
        if set(ref) != set(doc_ids):
            raise DocSetMismatchError("reference ranking covers different documents")
        n = len(doc_ids)
        pos = np.empty_like(orders)
        rows = np.arange(len(orders))[:, None]
        pos[rows, orders] = np.arange(1, n + 1)[None, :]
        ref_pos = np.array([ref[d] for d in doc_ids])
        return tau_from_positions(pos, ref_pos)


def tau_reference_value(ranking: Ranking, reference: Ranking) -> float:
    return kendall_tau(ranking, reference)


_VALUE_FN = re.compile(r"^(ndcg|dcg|cg|p)(?:@(\d+))?$")


def parse_value_fn(text: str) -> ValueFn:
    """Value function from a config string.

    ``ndcg``, ``dcg``, ``cg`` (each optionally ``@K``), ``map``, ``rr``,
    ``p@K`` and ``tau``.
    """
    s = text.strip().lower()
    if s == "map":
        return AveragePrecision()
    if s == "rr":
        return ReciprocalRank()
    if s == "tau":
        return TauReference()
    m = _VALUE_FN.match(s)
    if not m:
        raise ValueError(f"unknown value function {text!r}")
    kind, k = m.group(1), int(m.group(2)) if m.group(2) else None
    if kind == "p":
        if k is None:
            raise ValueError("precision needs a cutoff, e.g. p@5")
        return PrecisionAtK(k)
    if kind == "ndcg":
        return Grem("linear", "log", True, k, label=s)
    if kind == "dcg":
        return Grem("linear", "log", False, k, label=s)
    return Grem("linear", "none", False, k, label=s)


def infer_relevance(source: str, instance: Instance, ranker=None,
                    qrels: Mapping[str, float] | None = None) -> RelevanceAssignment:
    """Relevance labels for an instance, frozen from the full-feature run.

    ``qrels`` labels pass through (missing documents get 0 with a warning);
    ``model`` and ``bm25`` shift the full-instance scores so the minimum is 0.
    """
    ids = instance.doc_ids
    if source == "qrels":
        if qrels is None:
            raise ValueError("relevance source 'qrels' needs qrels")
        missing = [d for d in ids if d not in qrels]
        if missing:
            warnings.warn(f"query {instance.query.id}: no qrels for {len(missing)} doc(s), using rel 0",
                          stacklevel=2)
        return RelevanceAssignment({d: float(qrels.get(d, 0.0)) for d in ids}, "qrels")
    if source in ("model", "bm25"):
        if source == "model" and ranker is None:
            raise ValueError("relevance source 'model' needs a ranker")
        scorer = ranker if source == "model" else BM25Ranker()
        ranking = rank_instance(scorer, instance)
        lo = min(ranking.scores)
        tag = "model-score" if source == "model" else "bm25-heuristic"
        return RelevanceAssignment({d: s - lo for d, s in zip(ranking.doc_ids, ranking.scores)}, tag)
    raise ValueError(f"unknown relevance source {source!r}")
