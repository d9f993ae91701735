import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import pytest

SCORERS = Path(__file__).parent / "scorers"


@pytest.fixture
def length_scorer_cmd():
    return f"{sys.executable} {SCORERS / 'length_scorer.py'}"


class _LengthHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.path == "/broken":
            self.send_response(500)
            self.end_headers()
            return
        out = json.dumps({"scores": [len(d["text"].split()) for d in body["docs"]]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_scorer():
    server = HTTPServer(("127.0.0.1", 0), _LengthHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()
    server.server_close()


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    return path


@pytest.fixture
def toy_corpus(tmp_path):
    """Three documents, two queries, graded qrels."""
    corpus = write_jsonl(tmp_path / "corpus.jsonl", [
        {"id": "d1", "text": "best car dealer in town sells cars"},
        {"id": "d2", "text": "car repair and car parts"},
        {"id": "d3", "text": "town news about the weather"},
    ])
    queries = write_jsonl(tmp_path / "queries.jsonl", [
        {"id": "q1", "text": "best car"},
        {"id": "q2", "text": "town weather"},
    ])
    qrels = write_jsonl(tmp_path / "qrels.jsonl", [
        {"query_id": "q1", "doc_id": "d1", "rel": 2},
        {"query_id": "q1", "doc_id": "d2", "rel": 1},
        {"query_id": "q2", "doc_id": "d3", "rel": 2},
    ])
    return {"corpus": str(corpus), "queries": str(queries), "qrels": str(qrels), "dir": tmp_path}
