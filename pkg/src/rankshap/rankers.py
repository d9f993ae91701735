"""Black-box score-based rankers.

A ranker is anything with ``score(query_tokens, doc_token_lists, doc_ids)``
returning one real score per document.  Built-in rankers additionally
implement ``score_batch(instance, Z)`` which scores a whole matrix of
coalitions directly from the instance's count matrix; both paths share the
same arithmetic so they agree exactly.
"""

from __future__ import annotations

import hashlib
import json
import selectors
import shlex
import subprocess
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import Instance, apply_coalition


class RankerError(RuntimeError):
    """Base class for black-box ranker failures."""


class RankerTransportError(RankerError):
    """The ranker could not be reached, crashed, or timed out."""


class MalformedResponseError(RankerError):
    """The ranker answered with something that is not ``{"scores": [...]}``."""


class LengthMismatchError(RankerError):
    """The ranker returned a different number of scores than documents."""


@runtime_checkable
class Ranker(Protocol):
    concurrency_safe: bool

    def score(self, query: Sequence[str], docs: Sequence[Sequence[str]],
              doc_ids: Sequence[str] | None = None) -> list[float]: ...


@dataclass(frozen=True)
class Ranking:
    """Documents sorted by score descending, ties by ascending id."""

    doc_ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.doc_ids)

    def positions(self) -> dict[str, int]:
        """1-based rank of each document."""
        return {d: j for j, d in enumerate(self.doc_ids, 1)}

    def to_json(self) -> list[dict]:
        return [{"doc_id": d, "score": s} for d, s in zip(self.doc_ids, self.scores)]


def rank_scores(doc_ids: Sequence[str], scores: Sequence[float]) -> Ranking:
    if len(doc_ids) != len(scores):
        raise LengthMismatchError(f"{len(scores)} scores for {len(doc_ids)} documents")
    pairs = sorted(zip(doc_ids, (float(s) for s in scores)), key=lambda p: (-p[1], p[0]))
    return Ranking(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


def id_order(doc_ids: Sequence[str]) -> np.ndarray:
    """Lexicographic rank of each id, used as the secondary sort key."""
    order = sorted(range(len(doc_ids)), key=lambda j: doc_ids[j])
    r = np.empty(len(doc_ids), dtype=np.int64)
    r[order] = np.arange(len(doc_ids))
    return r


def orders_from_scores(scores: np.ndarray, id_rank: np.ndarray) -> np.ndarray:
    """Row-wise document order (indices) for a ``(k, n)`` score matrix."""
    scores = np.atleast_2d(scores)
    keys = (np.broadcast_to(id_rank, scores.shape), -scores)
    return np.lexsort(keys, axis=-1)


def score_coalitions(ranker, instance: Instance, Z: np.ndarray) -> np.ndarray:
    """Scores ``(k, n)`` of the instance's documents under each coalition row."""
    Z = np.atleast_2d(np.asarray(Z, dtype=bool))
    if hasattr(ranker, "score_batch"):
        return np.asarray(ranker.score_batch(instance, Z), dtype=float).reshape(len(Z), instance.n)
    rows = []
    for z in Z:
        q, docs = apply_coalition(instance, z)
        rows.append(ranker.score(q, docs, instance.doc_ids))
    return np.asarray(rows, dtype=float).reshape(len(Z), instance.n)


def rank_instance(ranker, instance: Instance, z=None) -> Ranking:
    """Rank the instance's documents, optionally under coalition ``z``."""
    if z is None:
        z = np.ones(instance.m, dtype=bool)
    scores = score_coalitions(ranker, instance, np.asarray(getattr(z, "bits", z), dtype=bool))[0]
    return rank_scores(instance.doc_ids, scores)


# --- BM25 ---------------------------------------------------------------------


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")


def _bm25(tf: np.ndarray, doc_len: np.ndarray, params: BM25Params) -> np.ndarray:
    """Okapi BM25 from per-document query-term counts.

    ``tf`` has shape ``(..., n, q)`` (one column per distinct query term in a
    fixed order) and ``doc_len`` shape ``(..., n)``.  Statistics are computed
    over the ``n`` documents of each leading slice.
    """
    tf = tf.astype(float)
    n_docs = tf.shape[-2]
    df = (tf > 0).sum(axis=-2, keepdims=True)
    idf = np.log1p((n_docs - df + 0.5) / (df + 0.5))
    dl = doc_len.astype(float)[..., None]
    avgdl = dl.mean(axis=-2, keepdims=True)
    ratio = np.divide(dl, avgdl, out=np.ones_like(dl), where=avgdl > 0)
    k1, b = params.k1, params.b
    term = idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio))
    return term.sum(axis=-1)


class BM25Ranker:
    """BM25 with statistics recomputed on whatever (masked) text it is given."""

    concurrency_safe = True

    def __init__(self, params: BM25Params = BM25Params()):
        self.params = params

    def __repr__(self) -> str:
        return f"BM25Ranker(k1={self.params.k1}, b={self.params.b})"

    def score(self, query, docs, doc_ids=None) -> list[float]:
        terms = sorted(set(query))
        tf = np.array([[c[t] for t in terms] for c in map(Counter, docs)], dtype=np.int64)
        tf = tf.reshape(len(docs), len(terms))
        dl = np.array([len(d) for d in docs], dtype=np.int64)
        return _bm25(tf, dl, self.params).tolist()

    def score_batch(self, instance: Instance, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=bool)
        q = instance.query_features()
        zq = Z[:, q].astype(np.int64)
        tf = instance.counts[None, :, q] * zq[:, None, :]
        dl = Z.astype(np.int64) @ instance.counts.T + instance.extra_len[None, :]
        return _bm25(tf, dl, self.params)


def bm25_rank(params: BM25Params, query: Sequence[str], docs: Sequence[Sequence[str]],
              doc_ids: Sequence[str] | None = None) -> Ranking:
    if not docs:
        raise ValueError("at least one document is required")
    ids = list(doc_ids) if doc_ids is not None else [f"d{j}" for j in range(len(docs))]
    return rank_scores(ids, BM25Ranker(params).score(query, docs))


# --- Linear oracle ranker -------------------------------------------------------


class LinearRanker:
    """Score = sum of weights of the distinct tokens present in the document.

    Exactly additive under masking, which makes its attributions analyzable
    by hand.
    """

    concurrency_safe = True

    def __init__(self, weights: Mapping[str, float]):
        self.weights = {str(k): float(v) for k, v in weights.items()}

    def __repr__(self) -> str:
        return f"LinearRanker({len(self.weights)} weights)"

    def score(self, query, docs, doc_ids=None) -> list[float]:
        w = self.weights
        return [float(sum(w.get(t, 0.0) for t in sorted(set(d)))) for d in docs]

    def score_batch(self, instance: Instance, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=bool)
        fs = instance.feature_space
        w = np.array([self.weights.get(t, 0.0) for t in fs.features])
        # tokens outside the feature space are never masked
        offset = np.array([
            sum(self.weights.get(t, 0.0) for t in sorted(set(d.tokens)) if t not in fs.index)
            for d in instance.docs
        ])
        contrib = instance.presence * w[None, :]
        # a per-row reduction (not BLAS matmul) keeps each row's rounding independent of batch shape
        return (Z[:, None, :] * contrib[None, :, :]).sum(axis=2) + offset[None, :]


def linear_ranker(weights: Mapping[str, float]) -> LinearRanker:
    return LinearRanker(weights)


# --- External rankers -------------------------------------------------------------


def _request(query: Sequence[str], docs: Sequence[Sequence[str]], doc_ids) -> dict:
    if doc_ids is None:
        doc_ids = [f"d{j}" for j in range(len(docs))]
    return {
        "query": " ".join(query),
        "docs": [{"id": i, "text": " ".join(d)} for i, d in zip(doc_ids, docs)],
    }


def _parse_scores(payload, n_docs: int) -> list[float]:
    if not isinstance(payload, dict) or not isinstance(payload.get("scores"), list):
        raise MalformedResponseError(f"expected {{'scores': [...]}}, got {str(payload)[:200]!r}")
    scores = payload["scores"]
    if not all(isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores):
        raise MalformedResponseError("scores must all be numbers")
    if len(scores) != n_docs:
        raise LengthMismatchError(f"ranker returned {len(scores)} scores for {n_docs} documents")
    return [float(s) for s in scores]


class _ExternalRanker:
    def __init__(self, timeout: float = 30.0, concurrency_safe: bool = False, memoize: bool = True):
        self.timeout = timeout
        self.concurrency_safe = concurrency_safe
        self._memo: dict[str, list[float]] | None = {} if memoize else None
        self._lock = threading.Lock()
        self.calls = 0

    def score(self, query, docs, doc_ids=None) -> list[float]:
        req = _request(query, docs, doc_ids)
        body = json.dumps(req, separators=(",", ":"), ensure_ascii=False)
        key = hashlib.sha256(body.encode("utf-8")).hexdigest()
        if self._memo is not None and key in self._memo:
            return list(self._memo[key])
        if self.concurrency_safe:
            payload = self._send(body)
        else:
            with self._lock:
                payload = self._send(body)
        self.calls += 1
        scores = _parse_scores(payload, len(docs))
        if self._memo is not None:
            self._memo[key] = scores
        return scores

    def _send(self, body: str):
        raise NotImplementedError


class SubprocessRanker(_ExternalRanker):
    """Talks to a long-lived child process, one JSON object per line each way."""

    def __init__(self, command: str | Sequence[str], **kwargs):
        super().__init__(**kwargs)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc: subprocess.Popen | None = None

    def __repr__(self) -> str:
        return f"SubprocessRanker({' '.join(self.command)!r})"

    def _start(self) -> subprocess.Popen:
        try:
            return subprocess.Popen(self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                    stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise RankerTransportError(f"cannot start {self.command!r}: {exc}") from exc

    def _send(self, body: str):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = self._start()
        proc = self._proc
        try:
            proc.stdin.write(body + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self.close()
            raise RankerTransportError(f"ranker process closed its input: {exc}") from exc
        line = self._readline(proc)
        try:
            return json.loads(line)
        except json.JSONDecodeError:
            raise MalformedResponseError(f"not JSON: {line[:200]!r}") from None

    def _readline(self, proc: subprocess.Popen) -> str:
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        deadline = time.monotonic() + self.timeout
        try:
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0 or not sel.select(remaining):
                    self.close()
                    raise RankerTransportError(f"ranker did not answer within {self.timeout} s")
                line = proc.stdout.readline()
                if line == "":
                    self.close()
                    raise RankerTransportError("ranker process exited")
                if line.strip():
                    return line
        finally:
            sel.close()

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                pass
            for stream in (self._proc.stdin, self._proc.stdout):
                try:
                    stream.close()
                except OSError:
                    pass
            self._proc = None

    def __del__(self):
        self.close()


class HTTPRanker(_ExternalRanker):
    """POSTs the request JSON to ``url`` and expects a 200 JSON response."""

    def __init__(self, url: str, **kwargs):
        super().__init__(**kwargs)
        self.url = url

    def __repr__(self) -> str:
        return f"HTTPRanker({self.url!r})"

    def _send(self, body: str):
        import httpx

        try:
            resp = httpx.post(self.url, content=body.encode("utf-8"),
                              headers={"Content-Type": "application/json"}, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise RankerTransportError(f"POST {self.url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise RankerTransportError(f"POST {self.url} returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError:
            raise MalformedResponseError(f"not JSON: {resp.text[:200]!r}") from None


def external_ranker(transport: str, timeout: float = 30.0, concurrency_safe: bool = False):
    """Build an external ranker from ``subprocess:<cmd>`` or ``http(s)://...``."""
    if transport.startswith("subprocess:"):
        return SubprocessRanker(transport[len("subprocess:"):], timeout=timeout,
                                concurrency_safe=concurrency_safe)
    if transport.startswith(("http://", "https://")):
        return HTTPRanker(transport, timeout=timeout, concurrency_safe=concurrency_safe)
    if transport.startswith("http:"):
        url = transport[len("http:"):]
        if not url.startswith(("http://", "https://")):
            url = "http://" + url
        return HTTPRanker(url, timeout=timeout, concurrency_safe=concurrency_safe)
    raise ValueError(f"unknown transport {transport!r}")


class CountingRanker:
    """Wraps a ranker and counts scored coalitions (one per masked instance)."""

    def __init__(self, inner):
        self.inner = inner
        self.concurrency_safe = getattr(inner, "concurrency_safe", False)
        self.calls = 0
        if hasattr(inner, "score_batch"):
            self.score_batch = self._score_batch

    def score(self, query, docs, doc_ids=None):
        self.calls += 1
        return self.inner.score(query, docs, doc_ids)

    def _score_batch(self, instance, Z):
        self.calls += len(Z)
        return self.inner.score_batch(instance, Z)


def parse_ranker(text: str, timeout: float = 30.0):
    """``bm25``, ``bm25:K1,B``, ``linear:weights.json``, ``subprocess:CMD``, ``http://URL``."""
    if text == "bm25":
        return BM25Ranker()
    if text.startswith("bm25:"):
        k1, b = (float(x) for x in text[5:].split(","))
        return BM25Ranker(BM25Params(k1, b))
    if text.startswith("linear:"):
        with open(text[7:], encoding="utf-8") as fh:
            return LinearRanker(json.load(fh))
    return external_ranker(text, timeout=timeout)
