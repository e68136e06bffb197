import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from iclselect.errors import BackendError
from iclselect.wire import HTTPEmbedder, HTTPScorer, resolve_scorer_url


def deterministic_scores(prompt: str, labels: list[str]) -> list[float]:
    out = []
    for label in labels:
        digest = hashlib.blake2b(f"{prompt}\x1f{label}".encode(), digest_size=4).digest()
        out.append(int.from_bytes(digest, "little") / 2**32 - 0.5)
    return out


class Handler(BaseHTTPRequestHandler):
    behaviour = "ok"

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if Handler.behaviour == "http500":
            self.send_response(500)
            self.end_headers()
            return
        if Handler.behaviour == "not_json":
            payload = b"this is not json"
        elif self.path == "/score":
            if Handler.behaviour == "short_reply":
                reply = {"scores": deterministic_scores(body["prompt"], body["labels"])[:-1]}
            elif Handler.behaviour == "missing_field":
                reply = {"values": [1.0]}
            else:
                reply = {"scores": deterministic_scores(body["prompt"], body["labels"])}
            payload = json.dumps(reply).encode()
        elif self.path == "/embed":
            if Handler.behaviour == "missing_field":
                reply = {"nope": 1}
            else:
                reply = {"vectors": [[float(len(t)), 1.0, -1.0] for t in body["texts"]]}
            payload = json.dumps(reply).encode()
        else:
            self.send_response(404)
            self.end_headers()
            return
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def server():
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    Handler.behaviour = "ok"
    yield f"http://127.0.0.1:{httpd.server_port}"
    httpd.shutdown()


def test_http_scorer_round_trip(server):
    scorer = HTTPScorer(server, timeout=5.0, retries=0)
    labels = ["A", "B", "C"]
    prompt = "D\n\nThus given the following input:\ninput: t\nanswer:"
    first = scorer.score(prompt, labels)
    assert len(first) == 3
    assert scorer.score(prompt, labels) == first  # server is deterministic
    assert scorer.score(prompt + "!", labels) != first


def test_http_scorer_wrong_count_surfaces_via_score_labels(server):
    from iclselect.corpus import LabelSpace
    from iclselect.scoring import score_labels

    Handler.behaviour = "short_reply"
    scorer = HTTPScorer(server, retries=0)
    space = LabelSpace.from_names(["A", "B", "C", "D", "E"])
    with pytest.raises(BackendError, match="returned 4 scores for 5 labels"):
        score_labels("prompt text", space, scorer)


def test_http_scorer_malformed_replies(server):
    scorer = HTTPScorer(server, retries=0)
    Handler.behaviour = "missing_field"
    with pytest.raises(BackendError, match="missing 'scores'"):
        scorer.score("p", ["A"])
    Handler.behaviour = "not_json"
    with pytest.raises(BackendError, match="non-JSON"):
        scorer.score("p", ["A"])
    Handler.behaviour = "http500"
    with pytest.raises(BackendError, match="HTTP 500"):
        scorer.score("p", ["A"])


def test_http_scorer_unreachable_after_retries():
    scorer = HTTPScorer("http://127.0.0.1:9", timeout=0.2, retries=1)
    with pytest.raises(BackendError, match="unreachable after 2 attempts"):
        scorer.score("p", ["A"])


def test_http_embedder_round_trip(server):
    embedder = HTTPEmbedder(server, retries=0)
    vectors = embedder.embed(["ab", "cdef"])
    assert vectors == [[2.0, 1.0, -1.0], [4.0, 1.0, -1.0]]
    Handler.behaviour = "missing_field"
    with pytest.raises(BackendError, match="missing 'vectors'"):
        embedder.embed(["x"])


def test_resolve_scorer_url_env_override(monkeypatch):
    monkeypatch.delenv("AMBIG_SCORER_URL", raising=False)
    assert resolve_scorer_url("http://configured:1/") == "http://configured:1"
    monkeypatch.setenv("AMBIG_SCORER_URL", "http://from-env:2")
    assert resolve_scorer_url("http://configured:1") == "http://from-env:2"
    monkeypatch.delenv("AMBIG_SCORER_URL")
    with pytest.raises(BackendError, match="AMBIG_SCORER_URL"):
        resolve_scorer_url(None)


def test_run_experiment_over_the_wire(server, tmp_path, monkeypatch):
    """Full experiment loop against a live HTTP scorer."""
    from iclselect.config import load_config
    from iclselect.runner import run_experiment

    from world import build_confusable_dataset, write_config, write_world

    monkeypatch.delenv("AMBIG_SCORER_URL", raising=False)
    dataset = build_confusable_dataset(n_train=40, n_test=6)
    dataset_dir, emb_path = write_world(tmp_path, dataset, 32)
    config_path = write_config(
        tmp_path,
        dataset=str(dataset_dir),
        embeddings=str(emb_path),
        out=str(tmp_path / "wire_run"),
        backend="http",
        scorer_url=server,
        timeout_s=5.0,
        retries=1,
        strategies=["zero", "retr", "ambig_gold_mis"],
        shots=[2],
        seeds=[0],
    )
    result = run_experiment(load_config(config_path))
    assert len(result.reports) == 3
    for report in result.reports:
        assert 0.0 <= report.mean["f1_macro"] <= 1.0
        assert report.mean["mean_entropy_bits"] is not None
    manifest = json.loads((tmp_path / "wire_run" / "run_manifest.json").read_text())
    assert manifest["errors"] == []
    assert manifest["cache_stats"]["entries"] > 0
