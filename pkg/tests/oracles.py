"""Independent brute-force reference implementations used to freeze expected values.

Plain Python on purpose: nothing here shares code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations, permutations


def shapley_by_permutations(m: int, v) -> list[float]:
    """Average marginal contribution over all m! orderings; ``v`` takes a frozenset."""
    phi = [0.0] * m
    count = 0
    for perm in permutations(range(m)):
        members: set[int] = set()
        prev = v(frozenset())
        for i in perm:
            members.add(i)
            cur = v(frozenset(members))
            phi[i] += cur - prev
            prev = cur
        count += 1
    return [p / count for p in phi]


def shapley_by_subsets(m: int, v) -> list[float]:
    """Shapley formula with exact rational weights."""
    phi = []
    for i in range(m):
        others = [j for j in range(m) if j != i]
        total = Fraction(0)
        for s in range(m):
            w = Fraction(math.factorial(s) * math.factorial(m - s - 1), math.factorial(m))
            for S in combinations(others, s):
                S = frozenset(S)
                total += w * Fraction(v(S | {i}) - v(S))
        phi.append(float(total))
    return phi


def tau_pairs(a: list[str], b: list[str]) -> Fraction:
    pa = {d: k for k, d in enumerate(a)}
    pb = {d: k for k, d in enumerate(b)}
    docs = list(a)
    s = 0
    n = 0
    for x, y in combinations(docs, 2):
        n += 1
        da, db = pa[x] - pa[y], pb[x] - pb[y]
        s += 1 if da * db > 0 else -1
    return Fraction(s, n)


def weighted_tau_pairs(a: list[str], b: list[str]) -> Fraction:
    pa = {d: k for k, d in enumerate(a)}
    pb = {d: k for k, d in enumerate(b)}
    num = den = 0
    for x, y in combinations(list(a), 2):
        w = abs(pa[x] - pa[y])
        sign = 1 if (pa[x] - pa[y]) * (pb[x] - pb[y]) > 0 else -1
        num += w * sign
        den += w
    return Fraction(num, den)


def dcg(rels_in_order: list[float]) -> float:
    return sum(r / math.log2(j + 1) for j, r in enumerate(rels_in_order, 1))


def ndcg(rels_in_order: list[float]) -> float:
    ideal = dcg(sorted(rels_in_order, reverse=True))
    return 0.0 if ideal == 0 else dcg(rels_in_order) / ideal


def bm25(query: list[str], docs: list[list[str]], k1: float = 1.2, b: float = 0.75) -> list[float]:
    n = len(docs)
    avgdl = sum(len(d) for d in docs) / n
    out = []
    for d in docs:
        score = 0.0
        for t in query:
            df = sum(1 for x in docs if t in x)
            idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
            tf = d.count(t)
            denom = tf + k1 * (1 - b + b * len(d) / avgdl) if avgdl > 0 else tf + k1
            score += idf * tf * (k1 + 1) / denom if denom else 0.0
        out.append(score)
    return out


def order_by_scores(ids: list[str], scores: list[float]) -> list[str]:
    return [d for _, d in sorted(zip(scores, ids), key=lambda p: (-p[0], p[1]))]


def linear_game(weights: dict[str, float], docs: dict[str, list[str]], rels: dict[str, float]):
    """NDCG game of a presence-sum linear ranker, recomputed from scratch per coalition."""
    feats = sorted({t for toks in docs.values() for t in toks} | set(weights))
    ids = sorted(docs)

    def v(S: frozenset) -> float:
        kept = {feats[i] for i in S}
        scores = [sum(weights.get(t, 0.0) for t in set(docs[d]) if t in kept) for d in ids]
        order = order_by_scores(ids, scores)
        return ndcg([rels[d] for d in order])

    return feats, v
