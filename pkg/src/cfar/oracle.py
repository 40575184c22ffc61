"""Pairwise feedback sources and the answer-caching inference engine.

Every same/different question goes through :class:`InferenceEngine.resolve`,
which answers from the transitive closure of past answers (must-link classes
in a union-find, cannot-link edges between class representatives) before ever
consulting the underlying source. A pair is consulted at the source at most
once per engine lifetime.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

SOURCE_ORACLE = "oracle"
SOURCE_INFERRED = "inferred"
SOURCE_HUMAN = "human"


class SessionAbortedError(RuntimeError):
    """An interactive source was abandoned while a consultation was pending."""

    def __init__(self, pair: tuple[int, int]):
        super().__init__(f"interactive session aborted with pending pair {pair}")
        self.pair = pair


@dataclass(frozen=True)
class QueryRecord:
    seq: int
    a: int  # canonical a < b
    b: int
    answer: int  # +1 or -1
    source: str  # oracle | inferred | human
    ts: str | None = None  # iso8601; recorded for human answers only

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "a": self.a,
                "b": self.b,
                "answer": self.answer,
                "source": self.source,
                "ts": self.ts,
            },
            separators=(",", ":"),
        )


def log_to_jsonl(records: list[QueryRecord]) -> str:
    return "".join(r.to_json() + "\n" for r in records)


def log_from_jsonl(text: str) -> list[QueryRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(
                QueryRecord(
                    seq=int(obj["seq"]),
                    a=int(obj["a"]),
                    b=int(obj["b"]),
                    answer=int(obj["answer"]),
                    source=str(obj["source"]),
                    ts=obj.get("ts"),
                )
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"query log line {lineno}: {exc}") from exc
    return records


class GroundTruthOracle:
    """Answers +1 iff the two units share a true cluster label."""

    record_source = SOURCE_ORACLE

    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=np.int64)

    def answer(self, a: int, b: int) -> int:
        return 1 if self.labels[a] == self.labels[b] else -1


class NoisyOracle:
    """Ground truth with sign flips.

    mode="consultation": each consultation flips independently with
    probability flip_rate (repeat sampling helps). mode="matrix": a fixed,
    seeded set of round(flip_rate * C(n,2)) pairs is always flipped (repeats
    are pointless).
    """

    record_source = SOURCE_ORACLE

    def __init__(self, labels, flip_rate: float, seed: int, mode: str = "consultation"):
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError(f"flip_rate must lie in [0, 1], got {flip_rate}")
        if mode not in ("consultation", "matrix"):
            raise ValueError(f"unknown noise mode {mode!r}")
        self.truth = GroundTruthOracle(labels)
        self.flip_rate = flip_rate
        self.mode = mode
        self._rng = np.random.default_rng([seed, 57005])
        self._flipped: set[tuple[int, int]] | None = None
        if mode == "matrix":
            n = len(self.truth.labels)
            pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
            n_flip = int(round(flip_rate * len(pairs)))
            idx = self._rng.choice(len(pairs), size=n_flip, replace=False)
            self._flipped = {pairs[i] for i in idx}

    def answer(self, a: int, b: int) -> int:
        truth = self.truth.answer(a, b)
        if self.mode == "matrix":
            key = (a, b) if a < b else (b, a)
            return -truth if key in self._flipped else truth
        return -truth if self._rng.random() < self.flip_rate else truth


class InteractiveSource:
    """Suspends the calling run until a reply is posted from another thread.

    A replay prefix (answers recovered from a durable log) is consumed
    without suspending; the pairs asked must match the recorded ones, which
    deterministic runs guarantee.
    """

    record_source = SOURCE_HUMAN

    def __init__(self, replay: list[tuple[int, int, int]] | None = None):
        self._cond = threading.Condition()
        self._replay = list(replay or [])
        self.pending: tuple[int, int] | None = None
        self.generation = 0  # bumps each time a new pair suspends the run
        self._reply: int | None = None
        self._abandoned = False

    def answer(self, a: int, b: int) -> int:
        with self._cond:
            if self._replay:
                ra, rb, ans = self._replay.pop(0)
                if (ra, rb) != (a, b):
                    raise ValueError(
                        f"replay log asked ({ra},{rb}) but engine asked ({a},{b})"
                    )
                return ans
            self.pending = (a, b)
            self.generation += 1
            self._cond.notify_all()
            while self._reply is None and not self._abandoned:
                self._cond.wait()
            if self._abandoned:
                raise SessionAbortedError((a, b))
            ans = self._reply
            self._reply = None
            self.pending = None
            return ans

    def submit(self, answer: int) -> None:
        with self._cond:
            if self.pending is None:
                raise RuntimeError("no pending consultation")
            self._reply = int(answer)
            self._cond.notify_all()

    def abandon(self) -> None:
        with self._cond:
            self._abandoned = True
            self._cond.notify_all()

    @property
    def condition(self) -> threading.Condition:
        return self._cond


class InferenceEngine:
    """Answer cache: union-find must-link classes + cannot-link edges.

    Maintains an append-only, strictly sequenced log of every resolution and
    the counters (oracle_consultations, inferred_answers) the run reports.
    """

    def __init__(self):
        self._parent: dict[int, int] = {}
        self._size: dict[int, int] = {}
        self._cannot: dict[int, set[int]] = {}
        self.log: list[QueryRecord] = []
        self.oracle_consultations = 0
        self.inferred_answers = 0
        self._consulted: set[tuple[int, int]] = set()

    # ---- union-find ----

    def find(self, x: int) -> int:
        parent = self._parent
        if x not in parent:
            parent[x] = x
            self._size[x] = 1
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def _union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        # re-key cannot-link edges of the absorbed class
        edges = self._cannot.pop(rb, set())
        if edges:
            mine = self._cannot.setdefault(ra, set())
            for other in edges:
                self._cannot[other].discard(rb)
                self._cannot[other].add(ra)
                mine.add(other)

    def infer(self, a: int, b: int) -> int | None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return 1
        if rb in self._cannot.get(ra, ()):
            return -1
        return None

    def _apply(self, a: int, b: int, answer: int) -> None:
        if answer == 1:
            self._union(a, b)
        else:
            ra, rb = self.find(a), self.find(b)
            self._cannot.setdefault(ra, set()).add(rb)
            self._cannot.setdefault(rb, set()).add(ra)

    def _append(self, a: int, b: int, answer: int, source: str) -> QueryRecord:
        ts = (
            datetime.now(timezone.utc).isoformat(timespec="milliseconds")
            if source == SOURCE_HUMAN
            else None
        )
        rec = QueryRecord(len(self.log), a, b, answer, source, ts)
        self.log.append(rec)
        return rec

    # ---- resolution ----

    def resolve(self, source, a: int, b: int) -> tuple[int, str]:
        """Answer for the unordered pair, consulting the source only if the
        cache cannot decide. Returns (answer, source tag)."""
        return self._resolve(source, a, b, 1)

    def majority_answer(self, source, a: int, b: int, k: int) -> int:
        """Consult the source k times (k odd) and cache the majority sign."""
        if k < 1 or k % 2 == 0:
            raise ValueError(f"majority k must be odd and positive, got {k}")
        return self._resolve(source, a, b, k)[0]

    def _resolve(self, source, a: int, b: int, k: int) -> tuple[int, str]:
        if a == b:
            raise ValueError(f"cannot compare unit {a} with itself")
        if a > b:
            a, b = b, a
        known = self.infer(a, b)
        if known is not None:
            self.inferred_answers += 1
            self._append(a, b, known, SOURCE_INFERRED)
            return known, SOURCE_INFERRED
        assert (a, b) not in self._consulted, f"pair ({a},{b}) consulted twice"
        self._consulted.add((a, b))
        votes = sum(source.answer(a, b) for _ in range(k))
        answer = 1 if votes > 0 else -1
        self.oracle_consultations += k
        tag = getattr(source, "record_source", SOURCE_ORACLE)
        self._apply(a, b, answer)
        self._append(a, b, answer, tag)
        return answer, tag

    def apply_external(self, a: int, b: int, answer: int, source: str) -> None:
        """Apply a recorded answer without consulting anything (log replay)."""
        if a > b:
            a, b = b, a
        self._consulted.add((a, b))
        self.oracle_consultations += 1
        self._apply(a, b, answer)
        self._append(a, b, answer, source)

    # ---- inspection ----

    def export_log(self) -> list[QueryRecord]:
        return list(self.log)

    def classes(self) -> set[frozenset[int]]:
        groups: dict[int, set[int]] = {}
        for x in self._parent:
            groups.setdefault(self.find(x), set()).add(x)
        return {frozenset(g) for g in groups.values()}

    def cannot_pairs(self) -> set[frozenset[tuple[int, ...]]]:
        """Cannot-link relation as canonical class-member pairs."""
        members: dict[int, list[int]] = {}
        for x in self._parent:
            members.setdefault(self.find(x), []).append(x)
        out = set()
        for ra, others in self._cannot.items():
            ra = self.find(ra)
            for rb in others:
                rb = self.find(rb)
                out.add(
                    frozenset(
                        (tuple(sorted(members[ra])), tuple(sorted(members[rb])))
                    )
                )
        return out


def replay_log(records: list[QueryRecord]) -> InferenceEngine:
    """Rebuild must-link/cannot-link state from the non-inferred records."""
    engine = InferenceEngine()
    for rec in records:
        if rec.source != SOURCE_INFERRED:
            engine.apply_external(rec.a, rec.b, rec.answer, rec.source)
    return engine
