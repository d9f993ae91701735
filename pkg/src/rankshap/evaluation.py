"""Fidelity of attributions: how well they reconstruct the model's ordering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AttributionVector, Instance
from .rankers import Ranking, rank_instance, rank_scores


class DocSetMismatchError(ValueError):
    """Two rankings do not order the same documents."""


def _positions(a: Ranking, b: Ranking) -> tuple[np.ndarray, np.ndarray]:
    pa, pb = a.positions(), b.positions()
    if set(pa) != set(pb) or len(pa) != len(a) or len(pb) != len(b):
        raise DocSetMismatchError("rankings order different document sets")
    if len(pa) < 2:
        raise ValueError("Kendall's tau needs at least two documents")
    ids = sorted(pa)
    return np.array([pa[d] for d in ids]), np.array([pb[d] for d in ids])


def tau_from_positions(pos_a: np.ndarray, pos_b: np.ndarray, weighted: bool = False) -> np.ndarray:
    """Kendall's tau for each row of ``pos_a`` (shape ``(k, n)``) against ``pos_b``.

    With ``weighted`` each pair is weighted by its distance in ``pos_a``.
    """
    pos_a = np.atleast_2d(pos_a)
    n = pos_a.shape[1]
    i, j = np.triu_indices(n, 1)
    da = pos_a[:, i] - pos_a[:, j]
    concord = np.sign(da) * np.sign(pos_b[i] - pos_b[j])
    if weighted:
        w = np.abs(da).astype(float)
        return (w * concord).sum(axis=1) / w.sum(axis=1)
    # one division of integer-valued sums keeps the result correctly rounded
    return concord.sum(axis=1) / (n * (n - 1) // 2)


def kendall_tau(a: Ranking, b: Ranking) -> float:
    pa, pb = _positions(a, b)
    return float(tau_from_positions(pa, pb)[0])


def weighted_kendall_tau(a: Ranking, b: Ranking) -> float:
    """Kendall's tau with pair weights ``|r_a[i] - r_a[j]|`` taken from ``a``."""
    pa, pb = _positions(a, b)
    return float(tau_from_positions(pa, pb, weighted=True)[0])


def truncate(phi: AttributionVector | np.ndarray, top_t: int) -> np.ndarray:
    """Zero all but the ``top_t`` largest attributions by magnitude."""
    if top_t < 1:
        raise ValueError("top_t must be >= 1")
    values = np.asarray(getattr(phi, "phi", phi), dtype=float)
    order = np.lexsort((np.arange(len(values)), -np.abs(values)))
    out = np.zeros_like(values)
    keep = order[:top_t]
    out[keep] = values[keep]
    return out


def reconstruct_ordering(phi: AttributionVector | np.ndarray, instance: Instance, top_t: int = 7) -> Ranking:
    """Rank documents by the summed (truncated) attributions of the tokens they contain."""
    kept = truncate(phi, top_t)
    if len(kept) != instance.m:
        raise ValueError(f"attribution length {len(kept)} does not match m={instance.m}")
    scores = instance.presence.astype(float) @ kept
    return rank_scores(instance.doc_ids, scores)


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    wfidelity: float
    top_t: int
    reconstructed: Ranking
    model: Ranking
    breakdown: dict = field(default_factory=dict)


def fidelity_from_rankings(model: Ranking, reconstructed: Ranking, top_t: int) -> FidelityReport:
    # pair weights come from the model ordering (the ordering being explained)
    return FidelityReport(
        fidelity=kendall_tau(reconstructed, model),
        wfidelity=weighted_kendall_tau(model, reconstructed),
        top_t=top_t, reconstructed=reconstructed, model=model,
    )


def fidelity(phi: AttributionVector | np.ndarray, ranker, instance: Instance, top_t: int = 7,
             model_ranking: Ranking | None = None) -> FidelityReport:
    model = model_ranking if model_ranking is not None else rank_instance(ranker, instance)
    return fidelity_from_rankings(model, reconstruct_ordering(phi, instance, top_t), top_t)
