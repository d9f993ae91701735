"""Shapley attribution engines over coalition games.

A *game* is any object with an integer attribute ``m`` and a method
``values(Z)`` mapping a boolean ``(k, m)`` coalition matrix to ``k`` real
values.  :class:`GameOracle` builds the ranking game ``v(z) = V(f(x_z))``
from an instance, a ranker, a value function and frozen relevance labels.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import permutations
from math import comb, factorial
from typing import Sequence

import numpy as np
from scipy import linalg

from .core import AttributionVector, Coalition, Instance
from .grem import RelevanceAssignment, TauReference, ValueFn
from .rankers import Ranking, id_order, orders_from_scores, score_coalitions


class EnumerationLimitError(ValueError):
    """Too many features for exact enumeration."""


class SingularSystemError(ValueError):
    """The sampled coalitions do not determine the regression."""


def _bits(z) -> np.ndarray:
    return np.asarray(getattr(z, "bits", z), dtype=bool)


class GameOracle:
    """Memoized ranking game ``v(z) = value_fn(ranking of instance masked by z)``.

    The ranker is called at most once per distinct coalition.  Built-in
    rankers are scored in batches of ``chunk`` coalitions.
    """

    def __init__(self, instance: Instance, ranker, value_fn: ValueFn,
                 rels: RelevanceAssignment | None = None, memoize: bool = True, chunk: int = 2048):
        self.instance = instance
        self.ranker = ranker
        self.rels = rels
        self.memoize = memoize
        self.chunk = chunk
        self.calls = 0
        self._memo: dict[bytes, float] = {}
        self._id_rank = id_order(instance.doc_ids)
        full = np.ones((1, instance.m), dtype=bool)
        scores = self._scores(full)
        self.full_ranking = self._to_ranking(scores[0])
        if isinstance(value_fn, TauReference) and value_fn.reference is None:
            value_fn = value_fn.bind(self.full_ranking)
        self.value_fn = value_fn
        if memoize:
            # the full coalition is already scored; keep it so endpoints cost nothing extra
            orders = orders_from_scores(scores, self._id_rank)
            self._memo[np.packbits(full, axis=1)[0].tobytes()] = float(
                value_fn.batch(orders, instance.doc_ids, rels)[0])

    @property
    def m(self) -> int:
        return self.instance.m

    @property
    def features(self) -> tuple[str, ...]:
        return self.instance.feature_space.features

    @property
    def value_name(self) -> str:
        return self.value_fn.name

    def _scores(self, Z: np.ndarray) -> np.ndarray:
        self.calls += len(Z)
        return score_coalitions(self.ranker, self.instance, Z)

    def _to_ranking(self, scores: np.ndarray) -> Ranking:
        order = orders_from_scores(scores, self._id_rank)[0]
        ids = self.instance.doc_ids
        return Ranking(tuple(ids[j] for j in order), tuple(float(scores[j]) for j in order))

    def ranking(self, z) -> Ranking:
        return self._to_ranking(self._scores(_bits(z)[None, :])[0])

    def _evaluate(self, Z: np.ndarray) -> np.ndarray:
        out = np.empty(len(Z))
        for start in range(0, len(Z), self.chunk):
            block = Z[start:start + self.chunk]
            orders = orders_from_scores(self._scores(block), self._id_rank)
            out[start:start + len(block)] = self.value_fn.batch(orders, self.instance.doc_ids, self.rels)
        return out

    def values(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=bool))
        if Z.shape[1] != self.m:
            raise ValueError(f"coalitions must have {self.m} columns")
        if not self.memoize:
            return self._evaluate(Z)
        keys = [r.tobytes() for r in np.packbits(Z, axis=1)]
        missing: dict[bytes, int] = {}
        for row, key in enumerate(keys):
            if key not in self._memo and key not in missing:
                missing[key] = row
        if missing:
            rows = np.fromiter(missing.values(), dtype=np.int64, count=len(missing))
            for key, val in zip(missing, self._evaluate(Z[rows])):
                self._memo[key] = float(val)
        return np.array([self._memo[k] for k in keys])

    def value(self, z) -> float:
        return float(self.values(_bits(z)[None, :])[0])


def coalition_value(oracle, z) -> float:
    return float(oracle.values(_bits(z)[None, :])[0])


class TableGame:
    """A game given by an explicit value table indexed by bitmask.

    Bit ``i`` of the index is feature ``i``; ``table[0]`` is the empty
    coalition.
    """

    def __init__(self, table: Sequence[float], features: Sequence[str] = (), value_name: str = "table"):
        table = np.asarray(table, dtype=float)
        m = int(round(np.log2(len(table))))
        if 2 ** m != len(table):
            raise ValueError("table length must be a power of two")
        self.m = m
        self.table = table
        self.features = tuple(features)
        self.value_name = value_name
        self.calls = 0
        self._weights = 1 << np.arange(m)

    @classmethod
    def from_function(cls, m: int, fn, **kwargs) -> "TableGame":
        return cls([fn(frozenset(i for i in range(m) if k >> i & 1)) for k in range(2 ** m)], **kwargs)

    def values(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=bool))
        self.calls += len(Z)
        return self.table[Z.astype(np.int64) @ self._weights]


def all_coalitions(m: int) -> np.ndarray:
    """Every coalition as rows of a ``(2**m, m)`` matrix; row ``k`` is bitmask ``k``."""
    idx = np.arange(2 ** m, dtype=np.int64)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(bool)


def _labels(game, method: str) -> dict:
    return {"method": method, "value_fn": getattr(game, "value_name", "custom"),
            "features": tuple(getattr(game, "features", ()))}


def _endpoints(game) -> tuple[float, float]:
    m = game.m
    v = game.values(np.array([np.zeros(m, bool), np.ones(m, bool)]))
    return float(v[0]), float(v[1])


def _snap(phi: np.ndarray, values: np.ndarray) -> np.ndarray:
    # round-off on flat games would otherwise decide reconstruction order
    scale = max(1.0, float(np.max(np.abs(values)))) if len(values) else 1.0
    phi = np.array(phi, dtype=float)
    phi[np.abs(phi) <= 1e-12 * scale] = 0.0
    return phi


def exact_rankshap(game, limit: int = 20, method: str = "rankshap-exact") -> AttributionVector:
    """Shapley values by enumerating all ``2**m`` coalitions."""
    m = game.m
    if m > limit:
        raise EnumerationLimitError(f"m={m} exceeds the enumeration limit of {limit}")
    v = np.asarray(game.values(all_coalitions(m)), dtype=float)
    idx = np.arange(2 ** m, dtype=np.int64)
    size = np.zeros(2 ** m, dtype=np.int64)
    for i in range(m):
        size += (idx >> i) & 1
    # |S|! (m - |S| - 1)! / m!  ==  1 / (m * C(m-1, |S|))
    w = np.array([1.0 / (m * comb(m - 1, s)) for s in range(m)] + [0.0])
    phi = np.empty(m)
    for i in range(m):
        without = idx[(idx >> i) & 1 == 0]
        phi[i] = np.sum(w[size[without]] * (v[without | (1 << i)] - v[without]))
    return AttributionVector(_snap(phi, v), v[0], **_labels(game, method))


def shapley_kernel_weight(m: int, s: int) -> float:
    """Shapley kernel ``(m-1) / (C(m, s) * s * (m-s))`` for ``0 < s < m``."""
    if not 0 < s < m:
        raise ValueError(f"coalition size must lie strictly between 0 and m={m}, got {s}")
    return (m - 1) / (comb(m, s) * s * (m - s))


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 5000
    seed: int = 0
    paired: bool = True

    def check(self, m: int) -> None:
        if self.n_samples < 2 * m:
            raise ValueError(f"n_samples={self.n_samples} must be at least 2*m={2 * m}")


def sample_coalitions(m: int, cfg: SamplerConfig) -> tuple[np.ndarray, np.ndarray, bool]:
    """Proper coalitions and their regression weights.

    With a budget covering all ``2**m - 2`` proper coalitions they are
    enumerated with exact kernel weights.  Otherwise sizes are drawn with
    probability proportional to the kernel mass of each size, members
    uniformly within a size, each draw optionally paired with its
    complement; duplicates are merged and their counts become the weights.
    Returns ``(Z, weights, enumerated)``.
    """
    if m < 2:
        return np.zeros((0, m), bool), np.zeros(0), True
    if cfg.n_samples >= 2 ** m - 2:
        Z = all_coalitions(m)[1:-1]
        sizes = Z.sum(axis=1)
        kw = np.array([0.0] + [shapley_kernel_weight(m, s) for s in range(1, m)])
        return Z, kw[sizes], True
    rng = np.random.default_rng(cfg.seed)
    s = np.arange(1, m)
    mass = (m - 1) / (s * (m - s))
    n_draws = cfg.n_samples // 2 if cfg.paired else cfg.n_samples
    sizes = rng.choice(s, size=n_draws, p=mass / mass.sum())
    keys = rng.random((n_draws, m))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    Z = ranks < sizes[:, None]
    if cfg.paired:
        parts = [Z, ~Z]
        if cfg.n_samples % 2:
            extra_size = rng.choice(s, p=mass / mass.sum())
            extra = np.zeros((1, m), bool)
            extra[0, rng.permutation(m)[:extra_size]] = True
            parts.append(extra)
        Z = np.concatenate(parts)
    Z, counts = np.unique(Z, axis=0, return_counts=True)
    return Z, counts.astype(float), False


def _solve_constrained(Z: np.ndarray, y: np.ndarray, w: np.ndarray, v0: float, v1: float) -> np.ndarray:
    """Weighted least squares for ``phi`` with ``sum(phi) == v1 - v0`` exact.

    The last coordinate is eliminated by substitution.
    """
    m = Z.shape[1]
    total = v1 - v0
    Zf = Z.astype(float)
    X = Zf[:, :-1] - Zf[:, [-1]]
    target = y - v0 - Zf[:, -1] * total
    Xw = X * w[:, None]
    A = X.T @ Xw
    b = Xw.T @ target
    try:
        head = linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), b, check_finite=False)
        if not np.all(np.isfinite(head)):
            raise linalg.LinAlgError("non-finite solution")
    except linalg.LinAlgError:
        warnings.warn("kernel regression is rank deficient; falling back to a pseudo-inverse",
                      RuntimeWarning, stacklevel=3)
        head = np.linalg.pinv(A) @ b
    phi = np.empty(m)
    phi[:-1] = head
    phi[-1] = total - head.sum()
    return phi


def kernel_rankshap(game, cfg: SamplerConfig = SamplerConfig(), method: str = "rankshap") -> AttributionVector:
    """Kernel-weighted least-squares approximation of the Shapley values.

    The empty and full coalitions enter as hard constraints, so the
    intercept equals ``v(empty)`` and the attributions sum to
    ``v(full) - v(empty)`` exactly.
    """
    m = game.m
    v0, v1 = _endpoints(game)
    if m == 1:
        return AttributionVector([v1 - v0], v0, **_labels(game, method))
    cfg.check(m)
    Z, w, _ = sample_coalitions(m, cfg)
    if len(Z) < m:
        raise SingularSystemError(
            f"only {len(Z)} distinct coalitions for m={m} features; increase n_samples")
    y = np.asarray(game.values(Z), dtype=float)
    phi = _snap(_solve_constrained(Z, y, w, v0, v1), np.append(y, [v0, v1]))
    return AttributionVector(phi, v0, **_labels(game, method))


def permutation_rankshap(game, cfg: SamplerConfig = SamplerConfig(),
                         method: str = "permutation") -> AttributionVector:
    """Average marginal contributions over ``cfg.n_samples`` random permutations.

    When the budget covers all ``m!`` orderings they are enumerated instead,
    which gives the exact Shapley values.
    """
    m = game.m
    rng = np.random.default_rng(cfg.seed)
    enumerate_all = m <= 8 and cfg.n_samples >= factorial(m)
    n_perm = factorial(m) if enumerate_all else cfg.n_samples
    every = np.array(list(permutations(range(m))), dtype=np.int64).reshape(-1, m) if enumerate_all else None
    phi = np.zeros(m)
    per_chunk = max(1, 250_000 // ((m + 1) * max(m, 1)))
    v0 = None
    for start in range(0, n_perm, per_chunk):
        k = min(per_chunk, n_perm - start)
        perms = every[start:start + k] if enumerate_all else np.argsort(rng.random((k, m)), axis=1)
        # prefix[p, t] holds the first t members of permutation p
        prefix = np.zeros((k, m + 1, m), dtype=bool)
        rows = np.arange(k)
        for t in range(m):
            prefix[:, t + 1] = prefix[:, t]
            prefix[rows, t + 1, perms[:, t]] = True
        v = np.asarray(game.values(prefix.reshape(-1, m)), dtype=float).reshape(k, m + 1)
        v0 = v[0, 0]
        marg = np.diff(v, axis=1)
        np.add.at(phi, perms.ravel(), marg.ravel())
    if v0 is None:
        v0 = _endpoints(game)[0]
    return AttributionVector(phi / max(n_perm, 1), v0, **_labels(game, method))


def make_oracle(instance: Instance, ranker, value_fn: ValueFn, rels: RelevanceAssignment | None,
                memoize: bool = True) -> GameOracle:
    return GameOracle(instance, ranker, value_fn, rels, memoize=memoize)


__all__ = [
    "Coalition", "EnumerationLimitError", "GameOracle", "SamplerConfig", "SingularSystemError",
    "TableGame", "all_coalitions", "coalition_value", "exact_rankshap", "kernel_rankshap",
    "make_oracle", "permutation_rankshap", "sample_coalitions", "shapley_kernel_weight",
]
