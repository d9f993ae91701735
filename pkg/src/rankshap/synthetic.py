"""Synthetic games and corpora for property checks and desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Document, Instance, Query, TokenizerConfig, make_instance, tokenize
from .grem import Grem, RelevanceAssignment, ValueFn
from .methods import AttributionProblem
from .rankers import LinearRanker, rank_instance

NDCG = Grem("linear", "log", True, label="ndcg")

_ONSETS = "b c d f g h j k l m n p r s t v w z".split()
_VOWELS = "a e i o u".split()


def pseudo_words(n: int, rng: np.random.Generator, syllables: int = 3) -> list[str]:
    """``n`` distinct pronounceable lowercase words."""
    words: set[str] = set()
    out: list[str] = []
    while len(out) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in words:
            words.add(w)
            out.append(w)
    return out


@dataclass(frozen=True)
class SyntheticGame:
    """A fully enumerable ranking game: linear ranker, random labels, NDCG."""

    instance: Instance
    ranker: LinearRanker
    rels: RelevanceAssignment
    value_fn: ValueFn = NDCG

    def problem(self, seed: int = 0, n_samples: int = 5000) -> AttributionProblem:
        return AttributionProblem(self.instance, self.ranker, self.rels, self.value_fn,
                                  n_samples=n_samples, seed=seed, exs_k=max(1, self.instance.n // 2))

    def describe(self) -> dict:
        return {
            "query": list(self.instance.query.tokens),
            "docs": {d.id: list(d.tokens) for d in self.instance.docs},
            "weights": dict(sorted(self.ranker.weights.items())),
            "rels": dict(sorted(self.rels.rels.items())),
            "value_fn": self.value_fn.name,
        }


def _rebuild(game: SyntheticGame, query_tokens, doc_tokens, weights) -> SyntheticGame:
    q = Query(game.instance.query.id, " ".join(query_tokens), tuple(query_tokens))
    docs = [Document(d.id, " ".join(t), tuple(t)) for d, t in zip(game.instance.docs, doc_tokens)]
    return replace(game, instance=make_instance(q, docs), ranker=LinearRanker(weights))


def random_game(rng: np.random.Generator, m: int | None = None, n_docs: int | None = None,
                value_fn: ValueFn = NDCG) -> SyntheticGame:
    """Random enumerable game with exactly ``m`` features (3..8 by default)."""
    m = int(rng.integers(3, 9)) if m is None else m
    n = int(rng.integers(3, 7)) if n_docs is None else n_docs
    if not 1 <= m <= 16:
        raise ValueError("synthetic games use 1 <= m <= 16")
    vocab = [f"t{i}" for i in range(m)]
    present = rng.random((n, m)) < 0.5
    q_mask = rng.random(m) < 0.3
    # every token must occur somewhere so the feature space has m entries
    for i in range(m):
        if not present[:, i].any() and not q_mask[i]:
            present[rng.integers(n), i] = True
    docs = []
    for j in range(n):
        toks = [t for t, p in zip(vocab, present[j]) for _ in range(int(rng.integers(1, 3))) if p]
        docs.append(Document(f"d{j}", " ".join(toks), tuple(toks)))
    q_toks = [t for t, p in zip(vocab, q_mask) if p]
    query = Query("q", " ".join(q_toks), tuple(q_toks))
    weights = {t: float(w) for t, w in zip(vocab, rng.normal(size=m))}
    rels = RelevanceAssignment({d.id: float(r) for d, r in zip(docs, rng.integers(0, 4, size=n))}, "qrels")
    return SyntheticGame(make_instance(query, docs), LinearRanker(weights), rels, value_fn)


def with_absent_token(game: SyntheticGame, name: str = "zabsent") -> SyntheticGame:
    """Add a query-only token that appears in no document (a null feature)."""
    q = list(game.instance.query.tokens) + [name]
    docs = [list(d.tokens) for d in game.instance.docs]
    return _rebuild(game, q, docs, {**game.ranker.weights, name: 1.0})


def with_duplicate_token(game: SyntheticGame, token: str, name: str = "zdup") -> SyntheticGame:
    """Add ``name`` next to every occurrence of ``token``, with the same weight."""
    def dup(tokens):
        out = []
        for t in tokens:
            out.append(t)
            if t == token:
                out.append(name)
        return out

    q = dup(game.instance.query.tokens)
    docs = [dup(d.tokens) for d in game.instance.docs]
    return _rebuild(game, q, docs, {**game.ranker.weights, name: game.ranker.weights.get(token, 0.0)})


# --- retrieval-style corpora -------------------------------------------------------

# probability that a document of each relevance grade contains a given query term
_GRADE_TERM_P = (0.1, 0.35, 0.65, 0.9)
_GRADE_P = (0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class SyntheticQuery:
    query: Query
    candidates: tuple[Document, ...]
    qrels: dict[str, float]


def synthetic_suite(n_queries: int = 100, n_candidates: int = 20, seed: int = 0,
                    vocab_size: int = 400, doc_len: tuple[int, int] = (15, 35),
                    config: TokenizerConfig = TokenizerConfig(stemming="none")) -> list[SyntheticQuery]:
    """Queries with graded candidate documents.

    Each candidate gets a latent grade 0..3; higher grades contain more of
    the query terms, more often.  The grade is the document's qrel.
    Background words follow a Zipf-like distribution.
    """
    rng = np.random.default_rng(seed)
    words = pseudo_words(vocab_size + 4 * n_queries, rng)
    background, topical = words[:vocab_size], words[vocab_size:]
    zipf = 1.0 / np.arange(1, vocab_size + 1)
    zipf /= zipf.sum()
    suite = []
    for qi in range(n_queries):
        n_terms = int(rng.integers(2, 5))
        terms = topical[4 * qi: 4 * qi + n_terms]
        qtext = " ".join(terms)
        query = Query(f"q{qi:03d}", qtext, tuple(tokenize(qtext, config)))
        docs, qrels = [], {}
        for j in range(n_candidates):
            grade = int(rng.choice(4, p=_GRADE_P))
            length = int(rng.integers(doc_len[0], doc_len[1] + 1))
            toks = list(rng.choice(background, size=length, p=zipf))
            for t in terms:
                if rng.random() < _GRADE_TERM_P[grade]:
                    toks += [t] * (1 + int(rng.poisson(grade / 2)))
            rng.shuffle(toks)
            text = " ".join(toks)
            did = f"{query.id}-d{j:02d}"
            docs.append(Document(did, text, tuple(tokenize(text, config))))
            qrels[did] = float(grade)
        suite.append(SyntheticQuery(query, tuple(docs), qrels))
    return suite


def top_n_instance(sq: SyntheticQuery, ranker, top_n: int, cap: int | None = None) -> Instance:
    """Instance over the ``top_n`` candidates as ranked by ``ranker`` on the full candidate set."""
    pool = make_instance(sq.query, sq.candidates, cap)
    ranking = rank_instance(ranker, pool)
    by_id = {d.id: d for d in sq.candidates}
    return make_instance(sq.query, [by_id[d] for d in ranking.doc_ids[:top_n]], cap)


__all__ = [
    "NDCG", "SyntheticGame", "SyntheticQuery", "pseudo_words", "random_game", "synthetic_suite",
    "top_n_instance", "with_absent_token", "with_duplicate_token",
]
