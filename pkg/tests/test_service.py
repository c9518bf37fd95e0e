import numpy as np
import pytest
from fastapi.testclient import TestClient

from campnet import ModelConfig, build_model
from campnet.corpus import read_features
from campnet.service import create_app

from conftest import TINY_MODEL


@pytest.fixture(scope="module")
def client(small_corpus):
    model = build_model(ModelConfig(vocab_size=8, **TINY_MODEL), seed=2)
    app = create_app(small_corpus, model)
    return TestClient(app)


def new_session(client, utt_id="utt0000"):
    r = client.post("/sessions", json={"utterance_id": utt_id})
    assert r.status_code == 200
    return r.json()["session_id"]


DELETE_W1 = {"script": {"op": "delete", "index": 1, "words": []}, "epsilon": 2}


class TestCorpusEndpoints:
    def test_list(self, client, small_corpus):
        r = client.get("/utterances")
        assert r.status_code == 200
        assert len(r.json()) == len(small_corpus)
        assert r.json()[0]["id"] == "utt0000"

    def test_detail(self, client, small_corpus):
        r = client.get("/utterances/utt0001")
        assert r.status_code == 200
        body = r.json()
        assert body["frames"] == len(small_corpus[1].features)
        assert body["words"][0]["frame_range"][0] == 0

    def test_unknown_id_404(self, client):
        assert client.get("/utterances/nope").status_code == 404

    def test_empty_corpus_lists_empty(self):
        model = build_model(ModelConfig(vocab_size=8, **TINY_MODEL), seed=2)
        empty = TestClient(create_app([], model))
        r = empty.get("/utterances")
        assert r.status_code == 200 and r.json() == []

    def test_binary_features(self, client, small_corpus, tmp_path):
        r = client.get("/utterances/utt0000/features")
        assert r.status_code == 200
        assert r.headers["content-type"] == "application/octet-stream"
        assert r.content[:4] == b"CAMP"
        blob = tmp_path / "x.campf"
        blob.write_bytes(r.content)
        assert np.array_equal(read_features(blob), small_corpus[0].features.values)


class TestEditing:
    def test_edit_and_view(self, client, small_corpus):
        sid = new_session(client)
        T = len(small_corpus[0].features)
        n, m = small_corpus[0].words[1].frame_range
        r = client.post(f"/sessions/{sid}/edit", json=DELETE_W1)
        assert r.status_code == 200
        body = r.json()
        assert body["length"] == T - (m - n)
        assert body["iterations"] == 1
        view = client.get(f"/sessions/{sid}/view").json()
        assert view["length"] == body["length"]
        assert len(view["f0"]) == body["length"]
        assert len(view["voicing"]) == body["length"]
        assert len(view["heatmap"]) == body["length"]
        attn = np.array(view["attention"])
        assert attn.shape[0] == body["length"]
        assert np.allclose(attn.sum(axis=1), 1.0, atol=1e-5)

    def test_fresh_session_has_no_attention(self, client):
        sid = new_session(client)
        view = client.get(f"/sessions/{sid}/view").json()
        assert "attention" not in view
        assert view["mask_spans"] == []

    def test_undo_replays_history(self, client):
        sid = new_session(client)
        before = client.get(f"/sessions/{sid}/view").json()
        r = client.post(f"/sessions/{sid}/edit", json=DELETE_W1)
        assert r.status_code == 200
        r = client.post(f"/sessions/{sid}/undo")
        assert r.status_code == 200
        after = client.get(f"/sessions/{sid}/view").json()
        assert after == before

    def test_undo_after_two_edits_replays_prefix(self, client):
        sid = new_session(client)
        r1 = client.post(f"/sessions/{sid}/edit", json=DELETE_W1)
        snapshot = client.get(f"/sessions/{sid}/view").json()
        r2 = client.post(
            f"/sessions/{sid}/edit",
            json={"script": {"op": "insert", "index": 0,
                             "words": [{"w": "x", "ph": [2]}]},
                  "epsilon": 2},
        )
        assert r2.status_code == 200
        client.post(f"/sessions/{sid}/undo")
        replayed = client.get(f"/sessions/{sid}/view").json()
        assert replayed == snapshot

    def test_undo_empty_history_conflict(self, client):
        sid = new_session(client)
        assert client.post(f"/sessions/{sid}/undo").status_code == 409

    def test_state_equals_history_replay(self, client):
        # applying the same history on a fresh session reproduces the
        # state bit-exactly (the replay invariant behind undo)
        edits = [
            DELETE_W1,
            {"script": {"op": "insert", "index": 0,
                        "words": [{"w": "x", "ph": [1, 2]}]}, "epsilon": 1},
        ]
        sid_a = new_session(client)
        for e in edits:
            assert client.post(f"/sessions/{sid_a}/edit", json=e).status_code == 200
        sid_b = new_session(client)
        for e in edits:
            assert client.post(f"/sessions/{sid_b}/edit", json=e).status_code == 200
        view_a = client.get(f"/sessions/{sid_a}/view").json()
        view_b = client.get(f"/sessions/{sid_b}/view").json()
        view_a.pop("session_id")
        view_b.pop("session_id")
        assert view_a == view_b

    def test_invalid_script_422(self, client):
        sid = new_session(client)
        r = client.post(
            f"/sessions/{sid}/edit",
            json={"script": {"op": "delete", "index": 99, "words": []}},
        )
        assert r.status_code == 422
        r = client.post(
            f"/sessions/{sid}/edit",
            json={"script": {"op": "bogus", "index": 0, "words": []}},
        )
        assert r.status_code == 422

    def test_concurrent_edit_conflict(self, client):
        sid = new_session(client)
        # hold the per-session writer lock, as an in-flight edit would
        lock = client.app.state.sessions[sid].lock
        assert lock.acquire(blocking=False)
        try:
            r = client.post(f"/sessions/{sid}/edit", json=DELETE_W1)
            assert r.status_code == 409
            r = client.post(f"/sessions/{sid}/undo")
            assert r.status_code == 409
        finally:
            lock.release()

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz/view").status_code == 404
        assert client.post("/sessions/zzz/undo").status_code == 404


class TestVocoderHook:
    def test_absent_hook_404(self, client):
        sid = new_session(client)
        assert client.get(f"/sessions/{sid}/audio").status_code == 404

    def test_hook_runs_command(self, small_corpus, tmp_path):
        model = build_model(ModelConfig(vocab_size=8, **TINY_MODEL), seed=2)
        app = create_app(small_corpus, model, vocoder_cmd="cp {input} {output}")
        c = TestClient(app)
        r = c.post("/sessions", json={"utterance_id": "utt0000"})
        sid = r.json()["session_id"]
        r = c.get(f"/sessions/{sid}/audio")
        assert r.status_code == 200
        assert r.content[:4] == b"CAMP"  # the cp hook echoes the features

    def test_meta_reports_hook(self, small_corpus, client):
        assert client.get("/meta").json()["vocoder"] is False
        model = build_model(ModelConfig(vocab_size=8, **TINY_MODEL), seed=2)
        app = create_app(small_corpus, model, vocoder_cmd="cp {input} {output}")
        assert TestClient(app).get("/meta").json()["vocoder"] is True
