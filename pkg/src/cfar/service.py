"""HTTP session service: exposes a running flattening engine to a human
answerer, one pending pairwise question at a time.

Durability is file-based. Each session directory holds an immutable
meta.json (artifact references + engine config) and an append-only
answers.jsonl of human answers; because the engine is deterministic, any
session state - including the pending query - can be rebuilt by replaying
that log, which is also how undo works.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from . import engine as engine_mod
from . import oracle as oracle_mod
from .datagen import DatasetFormatError, WaveformDataset, load_dataset
from .forest import Forest
from .treegen import linkage_from_text, load_ensemble

API = "/api/v1"
_SETTLE_TIMEOUT = 60.0


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class SessionConfig:
    mode: str = "exact"
    majority_k: int = 1
    seed: int = 0
    tree_subset: tuple[int, ...] | None = None
    channels: int | None = None

    def to_cfar(self) -> engine_mod.CfarConfig:
        return engine_mod.CfarConfig(
            mode=self.mode,
            majority_k=self.majority_k,
            seed=self.seed,
            tree_subset=self.tree_subset,
        )


@dataclass
class SessionRefs:
    dataset: str
    ensemble: str
    config: SessionConfig = field(default_factory=SessionConfig)


class LiveSession:
    """One engine run bound to an interactive source and a durable log."""

    def __init__(
        self,
        session_id: str,
        refs: SessionRefs,
        dataset: WaveformDataset,
        forest: Forest,
        session_dir: Path,
        replay: list[tuple[int, int, int]],
    ):
        self.session_id = session_id
        self.refs = refs
        self.dataset = dataset
        self.forest = forest
        self.dir = session_dir
        self.lock = threading.Lock()  # serializes mutating calls
        self.source = oracle_mod.InteractiveSource(replay=replay)
        self.engine = oracle_mod.InferenceEngine()
        self.answered = len(replay)
        self.blocks: list[list[int]] = []
        self.units_remaining = dataset.n_units
        self.result: engine_mod.RunResult | None = None
        self.error: str | None = None
        self.aborted = False
        self.done = False
        self._thread = threading.Thread(target=self._main, daemon=True)
        self._thread.start()

    def _main(self) -> None:
        try:
            self.result = engine_mod.run(
                self.forest,
                self.source,
                self.refs.config.to_cfar(),
                engine=self.engine,
                on_block=self._on_block,
            )
        except engine_mod.RunError as exc:
            if not isinstance(exc.__cause__, oracle_mod.SessionAbortedError):
                self.error = str(exc)
        except Exception as exc:  # pragma: no cover - defensive
            self.error = str(exc)
        finally:
            with self.source.condition:
                self.done = True
                self.source.condition.notify_all()

    def _on_block(self, block: list[int], remaining: int) -> None:
        self.blocks.append(block)
        self.units_remaining = remaining

    # ---- state inspection ----

    def wait_settled(self, timeout: float = _SETTLE_TIMEOUT) -> None:
        with self.source.condition:
            ok = self.source.condition.wait_for(
                lambda: self.done or self.source.pending is not None, timeout
            )
        if not ok:  # pragma: no cover - engine compute is fast at desk scale
            raise HTTPException(503, "engine did not settle in time")
        if self.error:
            raise HTTPException(500, f"session failed: {self.error}")

    @property
    def status(self) -> str:
        if self.aborted:
            return "aborted"
        if self.done:
            return "complete" if self.result is not None else "aborted"
        if self.source.pending is not None:
            return "awaiting_answer"
        return "running"

    @property
    def pending_query_id(self) -> int | None:
        if self.source.pending is None or self.done:
            return None
        return self.answered + 1  # deterministic: one id per human answer

    def progress(self) -> dict:
        return {
            "answered": self.answered,
            "inferred": self.engine.inferred_answers,
            "blocks_found": len(self.blocks),
            "units_remaining": self.units_remaining,
        }

    def _waveform(self, unit: int) -> dict:
        channels = self.refs.config.channels
        if channels is None:
            channels = self.dataset.channels
        row = self.dataset.features[unit]
        if channels and len(row) % channels == 0:
            wf = row.reshape(channels, -1).tolist()
        else:
            wf = [row.tolist()]
        return {
            "unit_id": unit,
            "session": int(self.dataset.sessions[unit]),
            "waveform": wf,
        }

    def query_payload(self) -> dict:
        a, b = self.source.pending
        return {
            "query_id": self.pending_query_id,
            "a": self._waveform(a),
            "b": self._waveform(b),
            "progress": self.progress(),
        }

    # ---- mutations ----

    def submit(self, query_id: int, answer: int) -> None:
        if query_id != self.pending_query_id:
            raise _StaleQuery(self)
        a, b = self.source.pending
        record = {
            "query_id": query_id,
            "a": a,
            "b": b,
            "answer": answer,
            "ts": _now(),
        }
        with open(self.dir / "answers.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self.answered += 1
        gen = self.source.generation
        self.source.submit(answer)
        with self.source.condition:
            ok = self.source.condition.wait_for(
                lambda: self.done or self.source.generation > gen, _SETTLE_TIMEOUT
            )
        if not ok:  # pragma: no cover
            raise HTTPException(503, "engine did not settle in time")
        if self.error:
            raise HTTPException(500, f"session failed: {self.error}")

    def abandon(self) -> None:
        self.source.abandon()
        self._thread.join(timeout=10)


class _StaleQuery(Exception):
    def __init__(self, session: LiveSession):
        self.session = session


class SessionStore:
    """Artifact and session registry over one data directory."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        for sub in ("datasets", "ensembles", "sessions"):
            (self.data_dir / sub).mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()

    # ---- artifacts ----

    def add_dataset(self, content: str) -> tuple[str, WaveformDataset]:
        dataset_id = uuid.uuid4().hex[:12]
        path = self.data_dir / "datasets" / f"{dataset_id}.csv"
        path.write_text(content, encoding="utf-8", newline="\n")
        try:
            dataset = load_dataset(path)
        except DatasetFormatError:
            path.unlink()
            raise
        return dataset_id, dataset

    def add_ensemble(self, trees: list[dict]) -> tuple[str, int]:
        ensemble_id = uuid.uuid4().hex[:12]
        root = self.data_dir / "ensembles" / ensemble_id
        root.mkdir(parents=True)
        entries = []
        n_leaves = None
        for i, item in enumerate(trees):
            name = str(item.get("name") or f"tree{i:03d}")
            ltree = linkage_from_text(str(item["content"]), name)
            if n_leaves is None:
                n_leaves = ltree.n
            elif ltree.n != n_leaves:
                raise ValueError(f"{name}: leaf count {ltree.n} != {n_leaves}")
            fname = f"{i:03d}_{name.replace('/', '_').replace(',', '_')}.tree"
            (root / fname).write_text(str(item["content"]), encoding="utf-8")
            entries.append({"file": fname, "tag": name})
        (root / "manifest.json").write_text(
            json.dumps({"trees": entries, "skipped": []}, indent=2) + "\n"
        )
        return ensemble_id, len(entries)

    def _resolve_dataset(self, ref: str) -> tuple[str, Path]:
        as_id = self.data_dir / "datasets" / f"{ref}.csv"
        if as_id.exists():
            return ref, as_id
        p = Path(ref)
        if p.exists():
            return str(p), p
        raise HTTPException(404, f"unknown dataset {ref!r}")

    def _resolve_ensemble(self, ref: str) -> tuple[str, Path]:
        as_id = self.data_dir / "ensembles" / ref
        if as_id.is_dir():
            return ref, as_id
        p = Path(ref)
        if p.exists():
            return str(p), p
        raise HTTPException(404, f"unknown ensemble {ref!r}")

    # ---- sessions ----

    def _build(self, session_id: str, refs: SessionRefs) -> LiveSession:
        _, dataset_path = self._resolve_dataset(refs.dataset)
        _, ensemble_path = self._resolve_ensemble(refs.ensemble)
        dataset = load_dataset(dataset_path)
        try:
            forest = load_ensemble([ensemble_path], n_expected=dataset.n_units)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        session_dir = self.data_dir / "sessions" / session_id
        session_dir.mkdir(parents=True, exist_ok=True)
        answers_path = session_dir / "answers.jsonl"
        replay = []
        if answers_path.exists():
            for line in answers_path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    replay.append((int(rec["a"]), int(rec["b"]), int(rec["answer"])))
        session = LiveSession(
            session_id, refs, dataset, forest, session_dir, replay
        )
        session.wait_settled()
        return session

    def create_session(self, refs: SessionRefs) -> LiveSession:
        session_id = uuid.uuid4().hex[:12]
        session_dir = self.data_dir / "sessions" / session_id
        session_dir.mkdir(parents=True)
        meta = {
            "session_id": session_id,
            "dataset": refs.dataset,
            "ensemble": refs.ensemble,
            "config": {
                "mode": refs.config.mode,
                "majority_k": refs.config.majority_k,
                "seed": refs.config.seed,
                "tree_subset": (
                    None
                    if refs.config.tree_subset is None
                    else list(refs.config.tree_subset)
                ),
                "channels": refs.config.channels,
            },
            "created": _now(),
        }
        (session_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        try:
            session = self._build(session_id, refs)
        except Exception:
            import shutil

            shutil.rmtree(session_dir, ignore_errors=True)
            raise
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is not None:
            return session
        # crash recovery: rebuild from the durable log
        session_dir = self.data_dir / "sessions" / session_id
        meta_path = session_dir / "meta.json"
        if not meta_path.exists():
            raise HTTPException(404, f"unknown session {session_id!r}")
        meta = json.loads(meta_path.read_text())
        cfg = meta.get("config", {})
        refs = SessionRefs(
            dataset=meta["dataset"],
            ensemble=meta["ensemble"],
            config=SessionConfig(
                mode=cfg.get("mode", "exact"),
                majority_k=cfg.get("majority_k", 1),
                seed=cfg.get("seed", 0),
                tree_subset=(
                    None
                    if cfg.get("tree_subset") is None
                    else tuple(cfg["tree_subset"])
                ),
                channels=cfg.get("channels"),
            ),
        )
        session = self._build(session_id, refs)
        if (session_dir / "aborted").exists():
            session.abandon()
            session.aborted = True
        with self._lock:
            existing = self._sessions.get(session_id)
            if existing is not None:
                session.abandon()
                return existing
            self._sessions[session_id] = session
        return session

    def rebuild(self, session: LiveSession) -> LiveSession:
        """Replace a live session with a fresh replay of its log."""
        session.abandon()
        fresh = self._build(session.session_id, session.refs)
        with self._lock:
            self._sessions[session.session_id] = fresh
        return fresh


def create_app(data_dir: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    store = SessionStore(Path(data_dir))
    app = FastAPI(title="cfar curation service")
    app.state.store = store

    def _session(session_id: str) -> LiveSession:
        session = store.get(session_id)
        session.wait_settled()
        return session

    @app.post(API + "/datasets", status_code=201)
    async def upload_dataset(request: Request):
        body = (await request.body()).decode("utf-8")
        try:
            dataset_id, dataset = store.add_dataset(body)
        except (DatasetFormatError, ValueError) as exc:
            raise HTTPException(400, str(exc))
        return {
            "dataset_id": dataset_id,
            "n_units": dataset.n_units,
            "dim": dataset.dim,
        }

    @app.post(API + "/ensembles", status_code=201)
    async def upload_ensemble(request: Request):
        try:
            body = await request.json()
            trees = body["trees"]
            if not isinstance(trees, list) or not trees:
                raise ValueError("trees must be a nonempty list")
            ensemble_id, count = store.add_ensemble(trees)
        except HTTPException:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise HTTPException(400, f"malformed ensemble upload: {exc}")
        return {"ensemble_id": ensemble_id, "n_trees": count}

    @app.post(API + "/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            body = await request.json()
        except Exception as exc:
            raise HTTPException(400, f"malformed body: {exc}")
        dataset_ref = body.get("dataset_id") or body.get("dataset")
        ensemble_ref = body.get("ensemble_id") or body.get("ensemble")
        if not dataset_ref or not ensemble_ref:
            raise HTTPException(400, "body must reference a dataset and an ensemble")
        cfg = body.get("config") or {}
        try:
            config = SessionConfig(
                mode=cfg.get("mode", "exact"),
                majority_k=int(cfg.get("majority_k", 1)),
                seed=int(cfg.get("seed", 0)),
                tree_subset=(
                    None
                    if cfg.get("tree_subset") is None
                    else tuple(int(i) for i in cfg["tree_subset"])
                ),
                channels=cfg.get("channels"),
            )
            config.to_cfar().validate()
        except (TypeError, ValueError) as exc:
            raise HTTPException(400, f"bad config: {exc}")
        session = store.create_session(
            SessionRefs(str(dataset_ref), str(ensemble_ref), config)
        )
        return {"session_id": session.session_id, "status": session.status}

    @app.get(API + "/sessions/{session_id}/query")
    def next_query(session_id: str):
        session = _session(session_id)
        if session.aborted:
            raise HTTPException(409, "session aborted")
        if session.done:
            return Response(status_code=204)
        return session.query_payload()

    @app.post(API + "/sessions/{session_id}/answers")
    def submit_answer(session_id: str, body: dict):
        session = _session(session_id)
        if session.aborted:
            raise HTTPException(409, "session aborted")
        try:
            query_id = int(body["query_id"])
            raw = body["answer"]
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(400, f"malformed answer: {exc}")
        if raw in ("same", 1, "+1"):
            answer = 1
        elif raw in ("different", -1, "-1"):
            answer = -1
        else:
            raise HTTPException(400, f"answer must be 'same' or 'different', got {raw!r}")
        with session.lock:
            if session.done:
                return JSONResponse(
                    status_code=409,
                    content={"error": "session complete", "status": session.status},
                )
            try:
                session.submit(query_id, answer)
            except _StaleQuery:
                payload = {
                    "error": "stale or repeated query_id",
                    "status": session.status,
                }
                if not session.done and not session.aborted:
                    payload["pending"] = session.query_payload()
                return JSONResponse(status_code=409, content=payload)
        out = {"status": session.status, "progress": session.progress()}
        if session.done and session.result is not None:
            out["result"] = f"{API}/sessions/{session_id}/result"
        return out

    @app.get(API + "/sessions/{session_id}/state")
    def session_state(session_id: str):
        session = _session(session_id)
        state = {
            "session_id": session_id,
            "status": session.status,
            "dataset": session.refs.dataset,
            "ensemble": session.refs.ensemble,
            "config": {
                "mode": session.refs.config.mode,
                "majority_k": session.refs.config.majority_k,
                "seed": session.refs.config.seed,
                "tree_subset": (
                    None
                    if session.refs.config.tree_subset is None
                    else list(session.refs.config.tree_subset)
                ),
                "channels": session.refs.config.channels,
            },
            "progress": session.progress(),
            "n_units": session.dataset.n_units,
        }
        if session.pending_query_id is not None:
            state["pending_query_id"] = session.pending_query_id
            state["pending_pair"] = list(session.source.pending)
        return state

    @app.get(API + "/sessions/{session_id}/export")
    def export_log(session_id: str):
        session = _session(session_id)
        return PlainTextResponse(
            oracle_mod.log_to_jsonl(session.engine.export_log()),
            media_type="application/x-ndjson",
        )

    @app.post(API + "/sessions/{session_id}/undo")
    def undo(session_id: str, body: dict | None = None):
        session = _session(session_id)
        k = int((body or {}).get("k", 1))
        with session.lock:
            if k < 1 or k > session.answered:
                raise HTTPException(
                    400, f"undo k must lie in [1, {session.answered}], got {k}"
                )
            answers_path = session.dir / "answers.jsonl"
            lines = [
                ln for ln in answers_path.read_text().splitlines() if ln.strip()
            ]
            keep = lines[: len(lines) - k]
            answers_path.write_text(
                "".join(ln + "\n" for ln in keep), encoding="utf-8"
            )
            (session.dir / "aborted").unlink(missing_ok=True)
            fresh = store.rebuild(session)
            fresh.aborted = False
        out = {"status": fresh.status, "progress": fresh.progress()}
        if fresh.pending_query_id is not None:
            out["pending"] = fresh.query_payload()
        return out

    @app.post(API + "/sessions/{session_id}/abort")
    def abort(session_id: str):
        session = _session(session_id)
        with session.lock:
            (session.dir / "aborted").write_text(_now() + "\n")
            session.abandon()
            session.aborted = True
        return {"status": session.status, "progress": session.progress()}

    @app.get(API + "/sessions/{session_id}/result")
    def result(session_id: str):
        session = _session(session_id)
        if session.result is None:
            raise HTTPException(409, f"session is {session.status}, not complete")
        return session.result.to_report(include_timing=False)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
