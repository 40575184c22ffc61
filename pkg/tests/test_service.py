import pytest
from fastapi.testclient import TestClient

from cfar.datagen import GeneratorConfig, generate_synthetic, save_dataset
from cfar.engine import CfarConfig, run
from cfar.oracle import GroundTruthOracle, log_from_jsonl
from cfar.service import create_app
from cfar.treegen import EnsembleConfig, build_ensemble, linkage_to_text, LinkageTree


def _make_inputs(tmp_path, n_clusters=3, n_sessions=2, seed=80):
    cfg = GeneratorConfig(
        n_clusters=n_clusters, n_sessions=n_sessions, dropout=0.0, channels=2,
        samples_per_channel=4, drift_step=0.5, noise_sd=0.25,
        cluster_separation=8.0, seed=seed,
    )
    dataset = generate_synthetic(cfg)
    ensemble_cfg = EnsembleConfig(
        preprocess=("raw",), transform=("none",),
        metrics=("euclidean",), linkages=("single", "average"),
    )
    forest = build_ensemble(dataset, ensemble_cfg)
    return dataset, forest


def _tree_payload(forest):
    trees = []
    for tree in forest.trees:
        merges = []
        for nid in sorted(tree.nodes):
            nd = tree.nodes[nid]
            if nd.children:
                merges.append(
                    (nd.children[0], nd.children[1], float(len(merges) + 1),
                     nd.leafset.bit_count())
                )
        trees.append(
            {"name": tree.tag, "content": linkage_to_text(LinkageTree(tree.n, merges))}
        )
    return {"trees": trees}


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as c:
        c.data_dir = tmp_path / "data"
        yield c


def _upload(client, tmp_path, **kwargs):
    dataset, forest = _make_inputs(tmp_path, **kwargs)
    save_dataset(dataset, tmp_path / "d.csv")
    r = client.post("/api/v1/datasets", content=(tmp_path / "d.csv").read_bytes())
    assert r.status_code == 201, r.text
    dataset_id = r.json()["dataset_id"]
    r = client.post("/api/v1/ensembles", json=_tree_payload(forest))
    assert r.status_code == 201, r.text
    return dataset, forest, dataset_id, r.json()["ensemble_id"]


def _truth_answer(dataset, pair):
    a, b = pair
    return "same" if dataset.labels[a] == dataset.labels[b] else "different"


def _drive_to_completion(client, sid, dataset, max_steps=10_000):
    answered = 0
    while True:
        q = client.get(f"/api/v1/sessions/{sid}/query")
        if q.status_code == 204:
            return answered
        assert q.status_code == 200, q.text
        body = q.json()
        pair = (body["a"]["unit_id"], body["b"]["unit_id"])
        r = client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": body["query_id"], "answer": _truth_answer(dataset, pair)},
        )
        assert r.status_code == 200, r.text
        answered += 1
        assert answered < max_steps


class TestArtifacts:
    def test_dataset_upload_rejects_garbage(self, client):
        r = client.post("/api/v1/datasets", content=b"not,a,dataset\n1,2\n")
        assert r.status_code == 400

    def test_ensemble_upload_validates(self, client):
        r = client.post("/api/v1/ensembles", json={"trees": [{"name": "x", "content": "bogus"}]})
        assert r.status_code == 400
        r = client.post("/api/v1/ensembles", json={})
        assert r.status_code == 400


class TestSessionLifecycle:
    def test_create_and_first_query(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        r = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid,
                                      "config": {"channels": 2}},
        )
        assert r.status_code == 201
        body = r.json()
        assert body["status"] == "awaiting_answer"
        sid = body["session_id"]

        q1 = client.get(f"/api/v1/sessions/{sid}/query")
        q2 = client.get(f"/api/v1/sessions/{sid}/query")
        assert q1.status_code == q2.status_code == 200
        assert q1.json() == q2.json()  # idempotent
        payload = q1.json()
        assert payload["query_id"] == 1
        for side in ("a", "b"):
            wf = payload[side]["waveform"]
            assert len(wf) == 2 and len(wf[0]) == 4  # channels x samples
        assert payload["progress"]["answered"] == 0

    def test_single_unit_dataset_completes_immediately(self, client, tmp_path):
        dataset, forest, did, eid = _upload(
            client, tmp_path, n_clusters=1, n_sessions=1
        )
        r = client.post("/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid})
        assert r.status_code == 201
        assert r.json()["status"] == "complete"
        sid = r.json()["session_id"]
        assert client.get(f"/api/v1/sessions/{sid}/query").status_code == 204
        result = client.get(f"/api/v1/sessions/{sid}/result")
        assert result.status_code == 200
        assert result.json()["partition"] == [[0]]

    def test_mismatched_trees_rejected(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        other, other_forest = _make_inputs(tmp_path, n_clusters=4, seed=81)
        r = client.post("/api/v1/ensembles", json=_tree_payload(other_forest))
        bad_eid = r.json()["ensemble_id"]
        r = client.post("/api/v1/sessions", json={"dataset_id": did, "ensemble_id": bad_eid})
        assert r.status_code == 400
        assert "leaves" in r.json()["detail"]

    def test_unknown_artifacts_and_sessions(self, client):
        r = client.post("/api/v1/sessions", json={"dataset_id": "nope", "ensemble_id": "x"})
        assert r.status_code == 404
        assert client.get("/api/v1/sessions/missing/state").status_code == 404
        assert client.get("/api/v1/sessions/missing/query").status_code == 404

    def test_malformed_session_body(self, client):
        r = client.post("/api/v1/sessions", json={"dataset_id": "only-this"})
        assert r.status_code == 400


class TestAnswerFlow:
    def test_scripted_session_matches_cli_run(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        r = client.post("/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid})
        sid = r.json()["session_id"]
        answered = _drive_to_completion(client, sid, dataset)
        result = client.get(f"/api/v1/sessions/{sid}/result").json()

        direct = run(forest, GroundTruthOracle(dataset.labels), CfarConfig())
        assert result["partition"] == direct.partition
        assert answered == direct.oracle_consultations
        assert result["counters"]["inferred_answers"] == direct.inferred_answers
        # exported log matches the direct run's pair sequence
        exported = log_from_jsonl(client.get(f"/api/v1/sessions/{sid}/export").text)
        assert [(r1.a, r1.b, r1.answer) for r1 in exported] == [
            (r2.a, r2.b, r2.answer) for r2 in direct.log
        ]
        assert all(r1.ts is not None for r1 in exported if r1.source == "human")

    def test_progress_counts_answers(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        q = client.get(f"/api/v1/sessions/{sid}/query").json()
        pair = (q["a"]["unit_id"], q["b"]["unit_id"])
        r = client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": q["query_id"], "answer": _truth_answer(dataset, pair)},
        )
        assert r.status_code == 200
        assert r.json()["progress"]["answered"] == 1
        q2 = client.get(f"/api/v1/sessions/{sid}/query").json()
        assert q2["query_id"] == 2

    def test_stale_query_id_conflicts_with_resync(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        q = client.get(f"/api/v1/sessions/{sid}/query").json()
        pair = (q["a"]["unit_id"], q["b"]["unit_id"])
        ok = client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": q["query_id"], "answer": _truth_answer(dataset, pair)},
        )
        assert ok.status_code == 200
        # resubmit the same query_id: conflict, not double-apply
        dup = client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": q["query_id"], "answer": "same"},
        )
        assert dup.status_code == 409
        body = dup.json()
        assert body["pending"]["query_id"] == 2
        state = client.get(f"/api/v1/sessions/{sid}/state").json()
        assert state["progress"]["answered"] == 1

    def test_bad_answer_body(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        r = client.post(f"/api/v1/sessions/{sid}/answers",
                        json={"query_id": 1, "answer": "maybe"})
        assert r.status_code == 400


class TestDurability:
    def test_restart_reproduces_pending_query(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        for _ in range(3):
            q = client.get(f"/api/v1/sessions/{sid}/query").json()
            pair = (q["a"]["unit_id"], q["b"]["unit_id"])
            client.post(
                f"/api/v1/sessions/{sid}/answers",
                json={"query_id": q["query_id"], "answer": _truth_answer(dataset, pair)},
            )
        before = client.get(f"/api/v1/sessions/{sid}/query").json()

        # "kill" the process: a brand-new app over the same data dir
        with TestClient(create_app(client.data_dir)) as revived:
            after = revived.get(f"/api/v1/sessions/{sid}/query").json()
            assert after == before
            state = revived.get(f"/api/v1/sessions/{sid}/state").json()
            assert state["progress"]["answered"] == 3

    def test_export_then_fresh_session_replays_to_same_pending(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        make = lambda: client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        s1, s2 = make(), make()
        q1 = client.get(f"/api/v1/sessions/{s1}/query").json()
        q2 = client.get(f"/api/v1/sessions/{s2}/query").json()
        assert q1 == q2  # deterministic engine asks the same first question

    def test_undo_restores_previous_pending_query(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        q1 = client.get(f"/api/v1/sessions/{sid}/query").json()
        pair = (q1["a"]["unit_id"], q1["b"]["unit_id"])
        client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": q1["query_id"], "answer": _truth_answer(dataset, pair)},
        )
        r = client.post(f"/api/v1/sessions/{sid}/undo", json={"k": 1})
        assert r.status_code == 200
        assert r.json()["pending"] == q1
        again = client.get(f"/api/v1/sessions/{sid}/query").json()
        assert again == q1

    def test_undo_allowed_after_completion(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        _drive_to_completion(client, sid, dataset)
        exported = client.get(f"/api/v1/sessions/{sid}/export")
        assert exported.status_code == 200
        r = client.post(f"/api/v1/sessions/{sid}/undo", json={"k": 1})
        assert r.status_code == 200
        assert r.json()["status"] == "awaiting_answer"
        q = client.get(f"/api/v1/sessions/{sid}/query")
        assert q.status_code == 200  # the last question is pending again

    def test_undo_range_validated(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        r = client.post(f"/api/v1/sessions/{sid}/undo", json={"k": 1})
        assert r.status_code == 400

    def test_abort_retains_log_and_blocks_answers(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        q = client.get(f"/api/v1/sessions/{sid}/query").json()
        pair = (q["a"]["unit_id"], q["b"]["unit_id"])
        client.post(
            f"/api/v1/sessions/{sid}/answers",
            json={"query_id": q["query_id"], "answer": _truth_answer(dataset, pair)},
        )
        r = client.post(f"/api/v1/sessions/{sid}/abort")
        assert r.status_code == 200 and r.json()["status"] == "aborted"
        assert client.get(f"/api/v1/sessions/{sid}/query").status_code == 409
        log_file = client.data_dir / "sessions" / sid / "answers.jsonl"
        assert len(log_file.read_text().strip().splitlines()) == 1

    def test_result_before_completion_conflicts(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        assert client.get(f"/api/v1/sessions/{sid}/result").status_code == 409

    def test_state_includes_pending_query_id(self, client, tmp_path):
        dataset, forest, did, eid = _upload(client, tmp_path)
        sid = client.post(
            "/api/v1/sessions", json={"dataset_id": did, "ensemble_id": eid}
        ).json()["session_id"]
        state = client.get(f"/api/v1/sessions/{sid}/state").json()
        assert state["status"] == "awaiting_answer"
        assert state["pending_query_id"] == 1
        assert len(state["pending_pair"]) == 2
