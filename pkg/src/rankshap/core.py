"""Text processing, feature spaces, coalitions and token masking.

Every attribution method in this package perturbs an :class:`Instance` by
dropping whole tokens from the query and all documents.  The instance keeps
a dense document-by-feature count matrix so that built-in rankers can score
many coalitions at once without rebuilding token lists.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusError(ValueError):
    """Raised for malformed corpus, query or qrels files."""


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    stemming: str = "porter"  # "none" | "porter"
    stopwords: frozenset[str] | None = None

    def __post_init__(self):
        if self.stemming not in ("none", "porter"):
            raise ValueError(f"unknown stemmer {self.stemming!r}")
        if self.stopwords is not None and not isinstance(self.stopwords, frozenset):
            object.__setattr__(self, "stopwords", frozenset(self.stopwords))


@lru_cache(maxsize=1)
def _porter():
    from nltk.stem.porter import PorterStemmer

    return PorterStemmer()


@lru_cache(maxsize=65536)
def _stem(token: str) -> str:
    return _porter().stem(token, to_lowercase=False)


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split ``text`` into normalized tokens.

    Tokens are maximal runs of unicode letters and digits.  Stopwords are
    removed after stemming, so the stopword set is matched against stemmed
    forms as well as raw forms.
    """
    if config.lowercase:
        text = text.lower()
    tokens = _TOKEN.findall(text)
    if config.stemming == "porter":
        tokens = [_stem(t) for t in tokens]
    if config.stopwords:
        stops = config.stopwords
        if config.stemming == "porter":
            stops = stops | {_stem(s.lower() if config.lowercase else s) for s in stops}
        tokens = [t for t in tokens if t not in stops]
    return tokens


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be non-empty")

    @classmethod
    def from_text(cls, id: str, text: str, config: TokenizerConfig = TokenizerConfig()) -> "Document":
        return cls(id, text, tuple(tokenize(text, config)))


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    tokens: tuple[str, ...]
    candidates: tuple[str, ...] | None = None

    @classmethod
    def from_text(cls, id: str, text: str, config: TokenizerConfig = TokenizerConfig(),
                  candidates: Sequence[str] | None = None) -> "Query":
        return cls(id, text, tuple(tokenize(text, config)),
                   tuple(candidates) if candidates is not None else None)


@dataclass(frozen=True)
class FeatureSpace:
    """The ``m`` token features of an instance, in lexicographic order."""

    features: tuple[str, ...]
    index: dict[str, int] = field(compare=False, repr=False)

    @property
    def m(self) -> int:
        return len(self.features)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "FeatureSpace":
        feats = tuple(sorted(set(tokens)))
        return cls(feats, {t: i for i, t in enumerate(feats)})


def build_feature_space(query: Query, docs: Sequence[Document], cap: int | None = None) -> FeatureSpace:
    """Distinct tokens of the query and documents, optionally capped.

    With ``cap`` set, the query tokens are always kept and the remaining
    slots go to the most frequent document tokens (total occurrences over
    query and documents), ties broken lexicographically.
    """
    if not docs:
        raise ValueError("at least one document is required")
    counts = Counter(query.tokens)
    for d in docs:
        counts.update(d.tokens)
    if not counts:
        raise ValueError("feature space is empty: query and documents have no tokens")
    if cap is None or cap >= len(counts):
        return FeatureSpace.from_tokens(counts)
    if cap < 1:
        raise ValueError("cap must be >= 1")
    keep = set(query.tokens)
    rest = sorted((t for t in counts if t not in keep), key=lambda t: (-counts[t], t))
    keep.update(rest[: max(cap - len(keep), 0)])
    return FeatureSpace.from_tokens(keep)


class Coalition:
    """Bit vector over the features: True keeps a token, False masks it."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        b = np.asarray(bits, dtype=bool).reshape(-1)
        b.setflags(write=False)
        self.bits = b

    @classmethod
    def full(cls, m: int) -> "Coalition":
        return cls(np.ones(m, dtype=bool))

    @classmethod
    def empty(cls, m: int) -> "Coalition":
        return cls(np.zeros(m, dtype=bool))

    @classmethod
    def from_members(cls, m: int, members: Iterable[int]) -> "Coalition":
        b = np.zeros(m, dtype=bool)
        b[list(members)] = True
        return cls(b)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def size(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, Coalition) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(np.packbits(self.bits).tobytes() + bytes([len(self.bits) % 256]))

    def __repr__(self) -> str:
        return "Coalition(" + "".join("1" if b else "0" for b in self.bits) + ")"


@dataclass(frozen=True, eq=False)
class Instance:
    """A query with its ``n`` candidate documents and their feature space.

    ``counts[j, i]`` is the number of occurrences of feature ``i`` in document
    ``j``; ``extra_len[j]`` counts tokens of document ``j`` outside the
    feature space (only non-zero under a vocabulary cap).
    """

    query: Query
    docs: tuple[Document, ...]
    feature_space: FeatureSpace
    counts: np.ndarray = field(repr=False)
    query_counts: np.ndarray = field(repr=False)
    extra_len: np.ndarray = field(repr=False)
    _doc_tok_idx: tuple[np.ndarray, ...] = field(repr=False)
    _query_tok_idx: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.docs)

    @property
    def m(self) -> int:
        return self.feature_space.m

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.docs)

    @property
    def presence(self) -> np.ndarray:
        return self.counts > 0

    def query_features(self) -> np.ndarray:
        """Feature indices of the distinct query tokens, ascending."""
        return np.flatnonzero(self.query_counts)


def make_instance(query: Query, docs: Sequence[Document], cap: int | None = None,
                  feature_space: FeatureSpace | None = None) -> Instance:
    docs = tuple(docs)
    if len(docs) < 2:
        raise ValueError("an instance needs at least two documents")
    ids = [d.id for d in docs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate document ids in instance")
    fs = feature_space or build_feature_space(query, docs, cap)
    m = fs.m
    counts = np.zeros((len(docs), m), dtype=np.int64)
    extra = np.zeros(len(docs), dtype=np.int64)
    doc_idx = []
    for j, d in enumerate(docs):
        idx = np.array([fs.index.get(t, -1) for t in d.tokens], dtype=np.int64)
        inside = idx[idx >= 0]
        np.add.at(counts[j], inside, 1)
        extra[j] = len(idx) - len(inside)
        doc_idx.append(idx)
    q_idx = np.array([fs.index.get(t, -1) for t in query.tokens], dtype=np.int64)
    q_counts = np.zeros(m, dtype=np.int64)
    np.add.at(q_counts, q_idx[q_idx >= 0], 1)
    for a in (counts, extra, q_counts, q_idx, *doc_idx):
        a.setflags(write=False)
    return Instance(query, docs, fs, counts, q_counts, extra, tuple(doc_idx), q_idx)


def _keep(idx: np.ndarray, bits: np.ndarray) -> np.ndarray:
    # tokens outside the feature space (index -1) always survive
    return (idx < 0) | bits[np.maximum(idx, 0)]


def apply_coalition(instance: Instance, z) -> tuple[list[str], list[list[str]]]:
    """Remove every masked token from the query and every document.

    Returns the surviving query tokens and per-document token lists, in
    their original order.
    """
    bits = z.bits if isinstance(z, Coalition) else np.asarray(z, dtype=bool)
    if bits.shape != (instance.m,):
        raise ValueError(f"coalition length {bits.shape} does not match m={instance.m}")
    q = [t for t, k in zip(instance.query.tokens, _keep(instance._query_tok_idx, bits)) if k]
    docs = [
        [t for t, k in zip(d.tokens, _keep(idx, bits)) if k]
        for d, idx in zip(instance.docs, instance._doc_tok_idx)
    ]
    return q, docs


@dataclass(frozen=True)
class AttributionVector:
    phi: np.ndarray
    intercept: float
    method: str
    value_fn: str
    features: tuple[str, ...] = ()

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float).reshape(-1)
        if not np.all(np.isfinite(phi)) or not np.isfinite(self.intercept):
            raise ValueError("attributions must be finite")
        if self.features and len(self.features) != len(phi):
            raise ValueError("features and phi lengths differ")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def m(self) -> int:
        return len(self.phi)

    def top(self, t: int) -> list[tuple[int, float]]:
        """The ``t`` largest attributions by magnitude, ties by feature index."""
        order = np.lexsort((np.arange(self.m), -np.abs(self.phi)))
        return [(int(i), float(self.phi[i])) for i in order[:t]]


# --- JSON-lines corpus files -------------------------------------------------


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _id_text(path, lineno, obj) -> tuple[str, str]:
    id_, text = obj.get("id"), obj.get("text")
    if not isinstance(id_, str) or not id_ or not isinstance(text, str):
        raise CorpusError(f"{path}:{lineno}: need non-empty string 'id' and string 'text'")
    return id_, text


def read_corpus(path, config: TokenizerConfig = TokenizerConfig()) -> dict[str, Document]:
    docs: dict[str, Document] = {}
    for lineno, obj in _read_jsonl(path):
        id_, text = _id_text(path, lineno, obj)
        if id_ in docs:
            raise CorpusError(f"{path}:{lineno}: duplicate id {id_!r}")
        docs[id_] = Document.from_text(id_, text, config)
    return docs


def read_queries(path, config: TokenizerConfig = TokenizerConfig()) -> dict[str, Query]:
    """Queries file; an optional ``candidates`` list restricts the documents."""
    queries: dict[str, Query] = {}
    for lineno, obj in _read_jsonl(path):
        id_, text = _id_text(path, lineno, obj)
        cands = obj.get("candidates")
        if cands is not None and not (isinstance(cands, list) and all(isinstance(c, str) for c in cands)):
            raise CorpusError(f"{path}:{lineno}: 'candidates' must be a list of doc ids")
        if id_ in queries:
            raise CorpusError(f"{path}:{lineno}: duplicate id {id_!r}")
        queries[id_] = Query.from_text(id_, text, config, cands)
    return queries


def read_qrels(path) -> dict[str, dict[str, float]]:
    qrels: dict[str, dict[str, float]] = {}
    for lineno, obj in _read_jsonl(path):
        qid, did, rel = obj.get("query_id"), obj.get("doc_id"), obj.get("rel")
        if not isinstance(qid, str) or not isinstance(did, str):
            raise CorpusError(f"{path}:{lineno}: need string 'query_id' and 'doc_id'")
        if isinstance(rel, bool) or not isinstance(rel, (int, float)) or rel < 0:
            raise CorpusError(f"{path}:{lineno}: 'rel' must be a number >= 0")
        qrels.setdefault(qid, {})[did] = float(rel)
    return qrels

