"""Batch orchestration behind the command line: ingest, rank, attribute, evaluate, report.

Every JSON file written here carries ``"schema": "rankshap/1"``, uses sorted
keys and contains no timestamps, so identical inputs and seeds give
byte-identical output.
"""

from __future__ import annotations

import configparser
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import CorpusError, Document, Query, TokenizerConfig, make_instance, read_corpus, read_qrels, read_queries
from .evaluation import fidelity_from_rankings, truncate
from .grem import infer_relevance, parse_value_fn
from .methods import METHODS, AttributionProblem, attribute
from .rankers import CountingRanker, RankerError, Ranking, parse_ranker, rank_instance, rank_scores

log = logging.getLogger("rankshap")

SCHEMA = "rankshap/1"


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass(frozen=True)
class RunConfig:
    corpus: str = ""
    queries: str = ""
    qrels: str | None = None
    ranker: str = "bm25"
    method: str = "rankshap"
    value_fn: str = "ndcg"
    relevance: str = "model"
    top_n: int = 10
    n_samples: int = 5000
    top_t: int = 7
    seed: int = 0
    out: str = "rankshap-out"
    cap: int | None = None
    stemming: str = "porter"
    exs_k: int = 5
    jobs: int = 1
    timeout: float = 30.0
    label: str | None = None

    @property
    def method_label(self) -> str:
        return self.label or self.method

    def fingerprint(self) -> dict:
        """The settings that determine attribution output (no paths, no parallelism)."""
        keep = ("ranker", "method", "value_fn", "relevance", "top_n", "n_samples", "top_t",
                "seed", "cap", "stemming", "exs_k")
        return {k: getattr(self, k) for k in keep}

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.relevance not in ("model", "bm25", "qrels"):
            raise ConfigError(f"relevance must be model, bm25 or qrels, not {self.relevance!r}")
        if self.relevance == "qrels" and not self.qrels:
            raise ConfigError("relevance=qrels needs a qrels file")
        if self.stemming not in ("porter", "none"):
            raise ConfigError("stemming must be porter or none")
        for name in ("top_n", "n_samples", "top_t", "jobs", "exs_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.top_n < 2:
            raise ConfigError("top_n must be >= 2")
        try:
            parse_value_fn(self.value_fn)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    kind = _TYPES[key]
    if raw is None:
        return None
    if isinstance(raw, str) and raw.strip().lower() in ("", "none") and "None" in str(kind):
        return None
    try:
        if "int" in str(kind):
            return int(raw)
        if "float" in str(kind):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return str(raw)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """``key = value`` lines (``#`` comments); dashes in keys are accepted."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(file_values: Mapping[str, Any] | None = None, overrides: Mapping[str, Any] | None = None,
                 env: Mapping[str, str] | None = None) -> RunConfig:
    """Merge defaults, config file, ``RANKSHAP_SEED`` (seed only) and flags, later winning.

    The environment seed sits below the config file: it is a fallback.
    """
    env = os.environ if env is None else env
    merged: dict[str, Any] = {}
    if env.get("RANKSHAP_SEED"):
        merged["seed"] = _coerce("seed", env["RANKSHAP_SEED"])
    merged.update(file_values or {})
    merged.update({k: _coerce(k, v) for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**merged)


def write_json(path: Path, obj: Mapping) -> None:
    body = {"schema": SCHEMA, **obj}
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_json(path: Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if obj.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: expected schema {SCHEMA}, found {obj.get('schema')!r}")
    return obj


# --- inputs -------------------------------------------------------------------------


@dataclass
class Workload:
    docs: dict[str, Document]
    queries: dict[str, Query]
    qrels: dict[str, dict[str, float]]

    def candidates(self, query: Query) -> list[Document]:
        if query.candidates is None:
            return list(self.docs.values())
        missing = [c for c in query.candidates if c not in self.docs]
        if missing:
            raise CorpusError(f"query {query.id}: unknown candidate ids {missing[:3]}")
        return [self.docs[c] for c in query.candidates]


def load_workload(config: RunConfig) -> Workload:
    if not config.corpus:
        raise ConfigError("no corpus path given")
    if not config.queries:
        raise ConfigError("no queries path given")
    tok = TokenizerConfig(stemming=config.stemming)
    try:
        docs = read_corpus(config.corpus, tok)
        queries = read_queries(config.queries, tok)
        qrels = read_qrels(config.qrels) if config.qrels else {}
    except CorpusError as exc:
        raise ConfigError(str(exc)) from None
    if not docs:
        raise ConfigError(f"{config.corpus}: corpus is empty")
    if not queries:
        raise ConfigError(f"{config.queries}: no queries")
    work = Workload(docs, queries, qrels)
    for q in queries.values():
        try:
            n = len(work.candidates(q))
        except CorpusError as exc:
            raise ConfigError(str(exc)) from None
        if config.top_n > n:
            raise ConfigError(f"query {q.id}: top_n={config.top_n} exceeds its {n} candidates")
    return work


def _ranker(config: RunConfig):
    try:
        return parse_ranker(config.ranker, timeout=config.timeout)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"ranker {config.ranker!r}: {exc}") from None


def cmd_ingest(config: RunConfig) -> dict:
    work = load_workload(config)
    lengths = [len(d.tokens) for d in work.docs.values()]
    judged = sum(1 for q in work.queries if q in work.qrels)
    return {"documents": len(work.docs), "queries": len(work.queries), "queries_with_qrels": judged,
            "mean_doc_tokens": float(np.mean(lengths)), "empty_documents": sum(1 for n in lengths if n == 0)}


def _pool_ranking(ranker, query: Query, pool: list[Document]) -> Ranking:
    scores = ranker.score(list(query.tokens), [list(d.tokens) for d in pool], [d.id for d in pool])
    return rank_scores([d.id for d in pool], scores)


def cmd_rank(config: RunConfig) -> Path:
    work = load_workload(config)
    ranker = _ranker(config)
    out = Path(config.out)
    rankings = {}
    for qid, q in sorted(work.queries.items()):
        try:
            rankings[qid] = _pool_ranking(ranker, q, work.candidates(q)).to_json()[: config.top_n]
        except RankerError as exc:
            log.error("query %s: ranker failed: %s", qid, exc)
    if not rankings:
        raise RankerError("the ranker failed on every query")
    path = out / "rankings.json"
    write_json(path, {"kind": "rankings", "ranker": config.ranker, "top_n": config.top_n, "rankings": rankings})
    return path


# --- attribution --------------------------------------------------------------------


def _attribute_query(config: RunConfig, work: Workload, ranker, query: Query) -> dict:
    pool = work.candidates(query)
    ranking = _pool_ranking(ranker, query, pool)
    by_id = {d.id: d for d in pool}
    instance = make_instance(query, [by_id[d] for d in ranking.doc_ids[: config.top_n]], config.cap)
    qrels = work.qrels.get(query.id, {}) if config.relevance == "qrels" else None
    rels = infer_relevance(config.relevance, instance, ranker, qrels)

    counter = CountingRanker(ranker)
    problem = AttributionProblem(instance, counter, rels, parse_value_fn(config.value_fn),
                                 n_samples=config.n_samples, seed=config.seed, exs_k=config.exs_k)
    phi = attribute(config.method, problem)
    model = rank_instance(ranker, instance)
    presence = instance.presence
    return {
        "kind": "attribution",
        "query_id": query.id,
        "query": list(query.tokens),
        "method": config.method,
        "label": config.method_label,
        "value_fn": phi.value_fn,
        "config": config.fingerprint(),
        "relevance": {"source": rels.source, "labels": dict(sorted(rels.rels.items()))},
        "ranking": model.to_json(),
        "features": list(instance.feature_space.features),
        "phi": [float(x) for x in phi.phi],
        "intercept": phi.intercept,
        "doc_features": {d: [int(i) for i in np.flatnonzero(presence[j])]
                          for j, d in enumerate(instance.doc_ids)},
        "oracle_calls": counter.calls,
    }


def _query_path(out: Path, qid: str) -> Path:
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in qid)
    return out / "queries" / f"{safe}.json"


def _is_done(path: Path, config: RunConfig) -> bool:
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    return obj.get("schema") == SCHEMA and obj.get("config") == config.fingerprint()


def cmd_attribute(config: RunConfig, resume: bool = False) -> dict:
    """Attribute every query; returns the index written to ``<out>/index.json``.

    Configuration problems raise :class:`ConfigError` before anything is
    written.  A query whose ranker fails is logged and marked failed; if
    every query fails :class:`RankerError` is raised after the index is
    written.
    """
    config.validate()
    work = load_workload(config)
    ranker = _ranker(config)
    out = Path(config.out)

    def run(qid: str) -> tuple[str, dict]:
        path = _query_path(out, qid)
        if resume and _is_done(path, config):
            return qid, {"status": "done", "file": str(path.relative_to(out))}
        try:
            record = _attribute_query(config, work, ranker, work.queries[qid])
        except (RankerError, ValueError) as exc:
            log.error("query %s: skipped: %s", qid, exc)
            return qid, {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        write_json(path, record)
        return qid, {"status": "done", "file": str(path.relative_to(out))}

    qids = sorted(work.queries)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            status = dict(pool.map(run, qids))
    else:
        status = dict(map(run, qids))
    index = {"kind": "index", "method": config.method, "label": config.method_label,
             "config": config.fingerprint(), "queries": {q: status[q] for q in qids}}
    write_json(out / "index.json", index)
    if not any(s["status"] == "done" for s in status.values()):
        raise RankerError("attribution failed for every query")
    return index


# --- evaluation ---------------------------------------------------------------------


def _load_attributions(attr_dir: Path) -> tuple[dict, dict[str, dict], list[str]]:
    """(index, records by query id, problems)."""
    index_path = attr_dir / "index.json"
    if not index_path.is_file():
        raise ConfigError(f"{attr_dir}: no index.json (not an attribution directory?)")
    index = read_json(index_path)
    records, problems = {}, []
    for qid, entry in sorted(index["queries"].items()):
        if entry.get("status") != "done":
            problems.append(f"{qid}: {entry.get('status')} ({entry.get('error', 'no detail')})")
            continue
        path = attr_dir / entry["file"]
        if not path.is_file():
            problems.append(f"{qid}: missing attribution file {entry['file']}")
            continue
        records[qid] = read_json(path)
    return index, records, problems


def record_rankings(record: Mapping, top_t: int) -> tuple[Ranking, Ranking]:
    """(model ranking, reconstructed ranking) from a stored attribution record."""
    model = Ranking(tuple(r["doc_id"] for r in record["ranking"]), tuple(r["score"] for r in record["ranking"]))
    kept = truncate(np.asarray(record["phi"], dtype=float), top_t)
    ids = sorted(record["doc_features"])
    scores = [float(kept[record["doc_features"][d]].sum()) for d in ids]
    return model, rank_scores(ids, scores)


def cmd_evaluate(attr_dirs: list[str | Path], top_t: int = 7, base: str | Path = ".") -> dict:
    """Fidelity per attribution directory; ``source`` paths are stored relative to ``base``."""
    if not attr_dirs:
        raise ConfigError("no attribution directories given")
    methods: dict[str, dict] = {}
    for d in attr_dirs:
        index, records, problems = _load_attributions(Path(d))
        if not records and not problems:
            raise ConfigError(f"{d}: no attributions")
        per_query = {}
        for qid, rec in records.items():
            model, recon = record_rankings(rec, top_t)
            rep = fidelity_from_rankings(model, recon, top_t)
            per_query[qid] = {"fidelity": rep.fidelity, "wfidelity": rep.wfidelity}
        label = index.get("label") or index.get("method")
        if label in methods:
            raise ConfigError(f"two attribution directories share the label {label!r}")
        for p in problems:
            log.warning("%s: %s", d, p)
        methods[label] = {
            "source": Path(os.path.relpath(Path(d).resolve(), Path(base).resolve())).as_posix(),
            "queries": len(per_query),
            "excluded": problems,
            "fidelity": float(np.mean([v["fidelity"] for v in per_query.values()])) if per_query else None,
            "wfidelity": float(np.mean([v["wfidelity"] for v in per_query.values()])) if per_query else None,
            "per_query": per_query,
        }
    if not any(m["queries"] for m in methods.values()):
        raise ConfigError("no completed attributions to evaluate")
    return {"kind": "fidelity", "top_t": top_t, "methods": methods}


def fidelity_table(report: Mapping) -> str:
    rows = [(label, m["fidelity"], m["wfidelity"], m["queries"]) for label, m in report["methods"].items()]
    width = max(6, *(len(r[0]) for r in rows))

    def fmt(x):
        return "     n/a" if x is None else f"{x:8.3f}"

    lines = [f"{'method':<{width}}  fidelity  wfidelity  queries"]
    lines += [f"{label:<{width}}  {fmt(f)}  {fmt(w):>9}  {n:7d}" for label, f, w, n in rows]
    return "\n".join(lines)


# --- bar-chart report ---------------------------------------------------------------

_BAR_H, _GAP, _LABEL_W, _BAR_W, _PAD = 18, 6, 140, 300, 10


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def chart_rows(record: Mapping, top_t: int) -> list[tuple[str, float]]:
    """(token, phi) for the nonzero ``top_t`` attributions, largest magnitude first."""
    phi = np.asarray(record["phi"], dtype=float)
    kept = truncate(phi, top_t) if len(phi) else phi
    order = np.lexsort((np.arange(len(kept)), -np.abs(kept)))
    return [(record["features"][i], float(kept[i])) for i in order[:top_t] if kept[i] != 0.0]


def render_svg(query_id: str, rows: list[tuple[str, float]]) -> str:
    height = _PAD * 2 + 20 + max(1, len(rows)) * (_BAR_H + _GAP)
    width = _LABEL_W + _BAR_W + _PAD * 2
    mid = _LABEL_W + _PAD + _BAR_W / 2
    scale = max((abs(v) for _, v in rows), default=1.0)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<title>{_esc(query_id)}</title>',
        f'<text x="{_PAD}" y="{_PAD + 12}" font-weight="bold">query {_esc(query_id)}</text>',
    ]
    if not rows:
        out.append(f'<text x="{_PAD}" y="{_PAD + 36}" class="notice">all attributions are zero</text>')
    else:
        top = _PAD + 20
        out.append(f'<line x1="{mid:.1f}" y1="{top}" x2="{mid:.1f}" y2="{height - _PAD}" stroke="#444"/>')
        for k, (token, value) in enumerate(rows):
            y = top + k * (_BAR_H + _GAP)
            length = abs(value) / scale * (_BAR_W / 2)
            x = mid if value > 0 else mid - length
            kind, color = ("pos", "#2b6cb0") if value > 0 else ("neg", "#c53030")
            out.append(f'<text x="{_PAD}" y="{y + 13}">{_esc(token)}</text>')
            out.append(f'<rect class="{kind}" x="{x:.2f}" y="{y}" width="{length:.2f}" height="{_BAR_H}" '
                       f'fill="{color}" data-token="{_esc(token)}" data-phi="{value!r}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_tsv(rows: list[tuple[str, float]]) -> str:
    return "rank\ttoken\tphi\n" + "".join(f"{k}\t{t}\t{v!r}\n" for k, (t, v) in enumerate(rows, 1))


def cmd_report(source: str | Path, out: str | Path, top_t: int = 7) -> list[Path]:
    """Bar charts per query from an attribution directory or a fidelity report."""
    source, out = Path(source), Path(out)
    if source.is_file():
        report = read_json(source)
        dirs = [source.parent / m["source"] for m in report.get("methods", {}).values()]
        if not dirs:
            raise ConfigError(f"{source}: report lists no attribution directories")
    else:
        dirs = [source]
    written = []
    for d in dirs:
        index, records, _ = _load_attributions(d)
        sub = out / (index.get("label") or index.get("method")) if len(dirs) > 1 else out
        for qid, rec in records.items():
            rows = chart_rows(rec, top_t)
            stem = _query_path(sub, qid).stem
            sub.mkdir(parents=True, exist_ok=True)
            (sub / f"{stem}.svg").write_text(render_svg(qid, rows), encoding="utf-8")
            (sub / f"{stem}.tsv").write_text(render_tsv(rows), encoding="utf-8")
            written += [sub / f"{stem}.svg", sub / f"{stem}.tsv"]
    return written


__all__ = [
    "ConfigError", "RunConfig", "SCHEMA", "Workload", "build_config", "chart_rows", "cmd_attribute",
    "cmd_evaluate", "cmd_ingest", "cmd_rank", "cmd_report", "fidelity_table", "load_workload",
    "read_config_file", "read_json", "record_rankings", "render_svg", "render_tsv", "write_json",
]
