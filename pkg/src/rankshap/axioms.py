"""Randomized checks of the ranking-metric and Shapley axioms.

Every trial draws its own generator from ``(seed, trial)``, so any reported
counterexample can be replayed on its own with :func:`replay_shapley_trial`
or :func:`replay_grem_trial`.  A pass means "no counterexample found in N
trials", nothing stronger.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grem import Grem, RelevanceAssignment, ValueFn
from .methods import attribute
from .rankers import Ranking, score_coalitions
from .synthetic import NDCG, SyntheticGame, random_game, with_absent_token, with_duplicate_token
from .shapley import GameOracle, all_coalitions
from .rankers import id_order, orders_from_scores

SHAPLEY_AXIOMS = ("efficiency", "missingness", "symmetry", "monotonicity")
GREM_AXIOMS = ("position_sensitivity", "relevance_sensitivity")

# engines whose output is exact on enumerable games (kernel methods enumerate
# every coalition at m <= 11 under the default 5000-sample budget)
EXACT_METHODS = {"rankshap", "rankshap-exact", "rankingshap", "rankingshap-exact"}
EXACT_TOL = 1e-6
SAMPLED_TOL = 0.02


@dataclass
class AxiomResult:
    trials: int = 0
    checked: int = 0
    violations: int = 0
    counterexample: dict | None = None

    @property
    def status(self) -> str:
        return "violated" if self.violations else "pass"

    def to_json(self) -> dict:
        out = {"status": self.status, "trials": self.trials, "checked": self.checked,
               "violations": self.violations}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
        return out


@dataclass
class ComplianceReport:
    method: str
    seed: int
    trials: int
    results: dict[str, AxiomResult] = field(default_factory=dict)

    def passed(self, axiom: str) -> bool:
        return self.results[axiom].status == "pass"

    def to_json(self) -> dict:
        return {"method": self.method, "seed": self.seed, "trials": self.trials,
                "axioms": {a: r.to_json() for a, r in self.results.items()}}


def _record(result: AxiomResult, ok: bool, example: Callable[[], dict]) -> None:
    result.checked += 1
    if not ok:
        result.violations += 1
        if result.counterexample is None:
            result.counterexample = example()


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


# --- ranking metric axioms ---------------------------------------------------------


def _as_ranking(ids) -> Ranking:
    return Ranking(tuple(ids), tuple(float(-j) for j in range(len(ids))))


def _grem_trial(value_fn: ValueFn, rng: np.random.Generator) -> dict[str, dict]:
    n = int(rng.integers(2, 11))
    ids = [f"d{j}" for j in range(n)]
    rels = {d: float(r) for d, r in zip(ids, rng.integers(0, 5, size=n))}
    order = list(rng.permutation(ids))
    hi, lo = sorted(rng.choice(n, size=2, replace=False))  # positions hi < lo (hi is better)
    # the worse-ranked document of the pair must be at least as relevant
    if rels[order[lo]] < rels[order[hi]]:
        order[hi], order[lo] = order[lo], order[hi]
    swapped = list(order)
    swapped[hi], swapped[lo] = swapped[lo], swapped[hi]
    ra = RelevanceAssignment(rels)
    before, after = value_fn(_as_ranking(order), ra), value_fn(_as_ranking(swapped), ra)
    out = {"position_sensitivity": {
        "ok": after >= before - 1e-12,
        "example": {"ordering": order, "swapped": swapped, "rels": rels, "before": before, "after": after},
    }}

    # relevance sensitivity; normalized metrics are checked on their DCG numerator
    target = value_fn.unnormalized() if isinstance(value_fn, Grem) and value_fn.normalize else value_fn
    j = ids[int(rng.integers(n))]
    raised = dict(rels)
    raised[j] = rels[j] + float(rng.integers(1, 4))
    ranking = _as_ranking(order)
    b, a = target(ranking, ra), target(ranking, RelevanceAssignment(raised))
    out["relevance_sensitivity"] = {
        "ok": a >= b - 1e-12,
        "example": {"ordering": order, "rels": rels, "raised_doc": j, "raised_rels": raised,
                    "before": b, "after": a},
    }
    return out


def check_grem_axioms(value_fn: ValueFn, trials: int = 10_000, seed: int = 0) -> ComplianceReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = ComplianceReport(value_fn.name, seed, trials, {a: AxiomResult(trials) for a in GREM_AXIOMS})
    for t in range(trials):
        for axiom, res in _grem_trial(value_fn, _trial_rng(seed, t)).items():
            _record(report.results[axiom], res["ok"],
                    lambda res=res, t=t: {"seed": seed, "trial": t, **res["example"]})
    return report


def replay_grem_trial(value_fn: ValueFn, seed: int, trial: int) -> dict[str, dict]:
    return _grem_trial(value_fn, _trial_rng(seed, trial))


# --- Shapley axioms ------------------------------------------------------------------


class DampedRanker:
    """A second model that ignores ``feature`` whenever including it would help.

    Under any coalition containing the feature it returns whichever of the
    scores with and without the feature gives the lower value, so its
    marginal value gains for the feature are ``min(0, gain)`` of the wrapped
    model: dominated by the original everywhere.
    """

    concurrency_safe = True

    def __init__(self, inner, feature: int, value_fn: ValueFn, rels: RelevanceAssignment):
        self.inner, self.feature, self.value_fn, self.rels = inner, feature, value_fn, rels

    def score(self, query, docs, doc_ids=None):
        raise NotImplementedError("DampedRanker scores coalitions of a fixed instance only")

    def score_batch(self, instance, Z):
        Z = np.asarray(Z, dtype=bool)
        Zo = Z.copy()
        Zo[:, self.feature] = False
        with_f = score_coalitions(self.inner, instance, Z)
        without = score_coalitions(self.inner, instance, Zo)
        idr = id_order(instance.doc_ids)
        v_with = self.value_fn.batch(orders_from_scores(with_f, idr), instance.doc_ids, self.rels)
        v_without = self.value_fn.batch(orders_from_scores(without, idr), instance.doc_ids, self.rels)
        use_without = Z[:, self.feature] & (v_without < v_with)
        return np.where(use_without[:, None], without, with_f)


def _marginals(oracle: GameOracle, i: int) -> np.ndarray:
    Z = all_coalitions(oracle.m)
    Z = Z[~Z[:, i]]
    Zi = Z.copy()
    Zi[:, i] = True
    return oracle.values(Zi) - oracle.values(Z)


def _shapley_trial(method: str, rng: np.random.Generator, n_samples: int) -> dict[str, dict]:
    game = random_game(rng, m=int(rng.integers(3, 9)))
    tol = EXACT_TOL if method in EXACT_METHODS else SAMPLED_TOL
    seeds = rng.integers(0, 2**31, size=5)
    out: dict[str, dict] = {}

    # efficiency, measured against the NDCG game
    phi = attribute(method, game.problem(int(seeds[0]), n_samples))
    ndcg_game = GameOracle(game.instance, game.ranker, NDCG, game.rels)
    v0, v1 = ndcg_game.values(np.array([np.zeros(game.instance.m, bool), np.ones(game.instance.m, bool)]))
    gap = abs(float(phi.phi.sum()) - (v1 - v0))
    out["efficiency"] = {"ok": gap <= EXACT_TOL, "example": {
        "game": game.describe(), "phi": phi.phi.tolist(), "sum_phi": float(phi.phi.sum()),
        "v_full_minus_v_empty": float(v1 - v0), "gap": gap}}

    # missingness: a token present in no document
    absent = with_absent_token(game)
    i = absent.instance.feature_space.index["zabsent"]
    phi = attribute(method, absent.problem(int(seeds[1]), n_samples))
    out["missingness"] = {"ok": abs(phi.phi[i]) <= tol, "example": {
        "game": absent.describe(), "feature": "zabsent", "phi_feature": float(phi.phi[i]), "tol": tol}}

    # symmetry: a duplicated token is interchangeable with the original
    token = game.instance.feature_space.features[int(rng.integers(game.instance.m))]
    dup = with_duplicate_token(game, token)
    a, b = dup.instance.feature_space.index[token], dup.instance.feature_space.index["zdup"]
    phi = attribute(method, dup.problem(int(seeds[2]), n_samples))
    diff = abs(float(phi.phi[a] - phi.phi[b]))
    out["symmetry"] = {"ok": diff <= tol, "example": {
        "game": dup.describe(), "features": [token, "zdup"],
        "phi_pair": [float(phi.phi[a]), float(phi.phi[b])], "diff": diff, "tol": tol}}

    # monotonicity: the damped model's marginals for feature i never exceed the original's
    i = int(rng.integers(game.instance.m))
    damped = SyntheticGame(game.instance, DampedRanker(game.ranker, i, NDCG, game.rels), game.rels)
    premise = bool(np.all(
        _marginals(ndcg_game, i) >= _marginals(GameOracle(game.instance, damped.ranker, NDCG, game.rels), i) - 1e-12))
    phi_v = attribute(method, game.problem(int(seeds[3]), n_samples))
    phi_w = attribute(method, damped.problem(int(seeds[4]), n_samples))
    fi, fw = float(phi_v.phi[i]), float(phi_w.phi[i])
    out["monotonicity"] = {"ok": premise and fi >= fw - tol, "premise": premise, "example": {
        "game": game.describe(), "feature": game.instance.feature_space.features[i],
        "phi_original": fi, "phi_dominated": fw, "tol": tol}}
    return out


def check_shapley_axioms(method: str, trials: int = 1000, seed: int = 0,
                         n_samples: int = 5000) -> ComplianceReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = ComplianceReport(method, seed, trials, {a: AxiomResult(trials) for a in SHAPLEY_AXIOMS})
    for t in range(trials):
        for axiom, res in _shapley_trial(method, _trial_rng(seed, t), n_samples).items():
            _record(report.results[axiom], res["ok"],
                    lambda res=res, t=t: {"seed": seed, "trial": t, **res["example"]})
    return report


def replay_shapley_trial(method: str, seed: int, trial: int, n_samples: int = 5000) -> dict[str, dict]:
    return _shapley_trial(method, _trial_rng(seed, trial), n_samples)


def compliance_table(methods, trials: int = 1000, seed: int = 0,
                     n_samples: int = 5000) -> dict[str, ComplianceReport]:
    return {m: check_shapley_axioms(m, trials, seed, n_samples) for m in methods}


def render_table(table: dict[str, ComplianceReport]) -> str:
    header = ["method", *SHAPLEY_AXIOMS]
    rows = [[m, *(("pass" if r.passed(a) else f"FAIL ({r.results[a].violations}/{r.results[a].checked})")
                  for a in SHAPLEY_AXIOMS)] for m, r in table.items()]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return "\n".join(lines)


def table_json(table: dict[str, ComplianceReport]) -> str:
    body = {"schema": "rankshap/1", "kind": "compliance",
            "methods": {m: r.to_json() for m, r in table.items()}}
    return json.dumps(body, indent=2, sort_keys=True)


__all__ = [
    "AxiomResult", "ComplianceReport", "DampedRanker", "GREM_AXIOMS", "SHAPLEY_AXIOMS",
    "check_grem_axioms", "check_shapley_axioms", "compliance_table", "render_table",
    "replay_grem_trial", "replay_shapley_trial", "table_json",
]
