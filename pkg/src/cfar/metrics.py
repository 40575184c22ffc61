"""Evaluation: adjusted mutual information, session recovery rates, and the
seeded benchmark sweep over ensemble sizes.

AMI uses natural-log entropies and the exact hypergeometric expected mutual
information, normalized by max(H(a), H(b)); the dataset sizes here make the
exact triple sum cheap.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datagen import GeneratorConfig, generate_synthetic
from .engine import CfarConfig, run
from .forest import Forest
from .oracle import GroundTruthOracle
from .treegen import EnsembleConfig, build_ensemble


def _as_label_array(labels) -> np.ndarray:
    if isinstance(labels, dict):
        keys = sorted(labels)
        if keys != list(range(len(keys))):
            raise ValueError("label map keys must be the unit ids 0..n-1")
        return np.array([labels[k] for k in keys], dtype=np.int64)
    return np.asarray(labels, dtype=np.int64)


def _blocks(labels: np.ndarray) -> set[frozenset[int]]:
    out: dict[int, set[int]] = {}
    for i, lab in enumerate(labels):
        out.setdefault(int(lab), set()).add(i)
    return {frozenset(v) for v in out.values()}


def expected_mutual_information(a_counts, b_counts, n: int) -> float:
    """Exact EMI of the hypergeometric model over fixed margins (nats)."""
    lgf = [math.lgamma(x + 1) for x in range(n + 1)]
    emi = 0.0
    for ai in a_counts:
        ai = int(ai)
        for bj in b_counts:
            bj = int(bj)
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (
                    lgf[ai]
                    + lgf[bj]
                    + lgf[n - ai]
                    + lgf[n - bj]
                    - lgf[n]
                    - lgf[nij]
                    - lgf[ai - nij]
                    - lgf[bj - nij]
                    - lgf[n - ai - bj + nij]
                )
                emi += (nij / n) * math.log(n * nij / (ai * bj)) * math.exp(log_p)
    return emi


def ami(a, b) -> float:
    """Adjusted mutual information between two labelings of one universe."""
    la = _as_label_array(a)
    lb = _as_label_array(b)
    if len(la) != len(lb):
        raise ValueError("partitions cover different universes")
    n = len(la)
    if n == 0:
        raise ValueError("empty universe")

    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    r, c = int(ia.max()) + 1, int(ib.max()) + 1
    cont = np.zeros((r, c), dtype=np.int64)
    np.add.at(cont, (ia, ib), 1)

    a_counts = cont.sum(axis=1)
    b_counts = cont.sum(axis=0)
    pa = a_counts / n
    pb = b_counts / n
    ha = float(-np.sum(pa * np.log(pa)))
    hb = float(-np.sum(pb * np.log(pb)))

    mi = 0.0
    for i in range(r):
        for j in range(c):
            nij = cont[i, j]
            if nij:
                mi += (nij / n) * math.log(n * nij / (a_counts[i] * b_counts[j]))

    emi = expected_mutual_information(a_counts, b_counts, n)
    denom = max(ha, hb) - emi
    if abs(denom) < 1e-12:
        return 1.0 if _blocks(la) == _blocks(lb) else 0.0
    return (mi - emi) / denom


@dataclass
class RecoveryReport:
    rates: list[float]  # aligned with the partition's blocks
    majority_cluster: list[int]
    perfect_fraction: float
    histogram: list[int]  # ten bins over [0, 1], last bin right-closed


def recovery_rates(partition, truth_labels, sessions) -> RecoveryReport:
    """Per-block session recovery against the majority true cluster.

    rate = |distinct sessions among block members| divided by |distinct
    sessions in which the block's majority true cluster has any unit|;
    majority ties go to the smaller cluster id.
    """
    labels = np.asarray(truth_labels, dtype=np.int64)
    sess = np.asarray(sessions, dtype=np.int64)
    cluster_sessions: dict[int, set[int]] = {}
    for u, lab in enumerate(labels):
        cluster_sessions.setdefault(int(lab), set()).add(int(sess[u]))
    rates, majorities = [], []
    for block in partition:
        counts: dict[int, int] = {}
        for u in block:
            counts[int(labels[u])] = counts.get(int(labels[u]), 0) + 1
        best = max(counts.values())
        majority = min(c for c, k in counts.items() if k == best)
        block_sessions = {int(sess[u]) for u in block}
        rates.append(len(block_sessions) / len(cluster_sessions[majority]))
        majorities.append(majority)
    hist, _ = np.histogram(rates, bins=np.linspace(0.0, 1.0, 11))
    perfect = sum(1 for r in rates if r >= 1.0) / len(rates) if rates else 0.0
    return RecoveryReport(rates, majorities, perfect, hist.tolist())


@dataclass
class BenchmarkRow:
    m: int
    trial: int
    seed: int
    n_clusters: int
    ami: float
    queries: int
    inferred: int
    runtime_ms: float


_WORKER: dict = {}


def _init_worker(forest: Forest, labels) -> None:
    _WORKER["forest"] = forest
    _WORKER["labels"] = np.asarray(labels)


def _trial_seed(master_seed: int, m: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, m, trial])


def _run_trial(args: tuple[int, int, int]) -> BenchmarkRow:
    m, trial, master_seed = args
    forest: Forest = _WORKER["forest"]
    labels = _WORKER["labels"]
    rng = _trial_seed(master_seed, m, trial)
    subset = tuple(sorted(int(i) for i in rng.choice(len(forest), size=m, replace=False)))
    seed = int(rng.integers(2**63))
    cfg = CfarConfig(seed=seed, tree_subset=subset)
    result = run(forest, GroundTruthOracle(labels), cfg)
    inferred_labels = np.empty(len(labels), dtype=np.int64)
    for idx, block in enumerate(result.partition):
        inferred_labels[block] = idx
    return BenchmarkRow(
        m=m,
        trial=trial,
        seed=seed,
        n_clusters=result.blocks_found,
        ami=ami(labels, inferred_labels),
        queries=result.oracle_consultations,
        inferred=result.inferred_answers,
        runtime_ms=result.duration_ms,
    )


def sweep(
    forest: Forest,
    labels,
    m_grid: list[int],
    trials: int,
    master_seed: int,
    jobs: int = 1,
) -> list[BenchmarkRow]:
    """One run per (m, trial) with a seeded draw of m distinct trees.

    Rows come back in (m, trial) order whatever the execution order; apart
    from the runtime column the table is a pure function of the inputs.
    """
    for m in m_grid:
        if not 1 <= m <= len(forest):
            raise ValueError(f"m={m} exceeds the ensemble size {len(forest)}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    tasks = [(m, t, master_seed) for m in m_grid for t in range(trials)]
    if jobs <= 1:
        _init_worker(forest, labels)
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(forest, labels)
    ) as pool:
        return list(pool.map(_run_trial, tasks))


def benchmark(
    dataset_cfg: GeneratorConfig,
    ensemble_cfg: EnsembleConfig,
    m_grid: list[int],
    trials: int,
    master_seed: int,
    jobs: int = 1,
) -> list[BenchmarkRow]:
    dataset = generate_synthetic(dataset_cfg)
    forest = build_ensemble(dataset, ensemble_cfg)
    return sweep(forest, dataset.labels, m_grid, trials, master_seed, jobs)


TABLE_HEADER = "m,trial,seed,n_clusters,ami,queries,inferred,runtime_ms"


def rows_to_csv(rows: list[BenchmarkRow]) -> str:
    lines = [TABLE_HEADER]
    for r in rows:
        lines.append(
            f"{r.m},{r.trial},{r.seed},{r.n_clusters},{r.ami!r},"
            f"{r.queries},{r.inferred},{r.runtime_ms!r}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class SummaryRow:
    m: int
    trials: int
    mean_clusters: float
    se_clusters: float
    mean_ami: float
    se_ami: float
    mean_queries: float
    se_queries: float
    median_queries: float
    mean_runtime_ms: float
    se_runtime_ms: float


def summarize(rows: list[BenchmarkRow]) -> list[SummaryRow]:
    def mean_se(vals: list[float]) -> tuple[float, float]:
        arr = np.asarray(vals, dtype=float)
        if len(arr) < 2:
            return float(arr.mean()), 0.0
        return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))

    out = []
    for m in sorted({r.m for r in rows}):
        grp = [r for r in rows if r.m == m]
        mc, sc = mean_se([r.n_clusters for r in grp])
        ma, sa = mean_se([r.ami for r in grp])
        mq, sq = mean_se([r.queries for r in grp])
        mr, sr = mean_se([r.runtime_ms for r in grp])
        out.append(
            SummaryRow(
                m,
                len(grp),
                mc,
                sc,
                ma,
                sa,
                mq,
                sq,
                float(np.median([r.queries for r in grp])),
                mr,
                sr,
            )
        )
    return out


SUMMARY_HEADER = (
    "m,trials,mean_clusters,se_clusters,mean_ami,se_ami,"
    "mean_queries,se_queries,median_queries,mean_runtime_ms,se_runtime_ms"
)


def summary_to_csv(rows: list[SummaryRow]) -> str:
    lines = [SUMMARY_HEADER]
    for s in rows:
        lines.append(
            f"{s.m},{s.trials},{s.mean_clusters!r},{s.se_clusters!r},"
            f"{s.mean_ami!r},{s.se_ami!r},{s.mean_queries!r},{s.se_queries!r},"
            f"{s.median_queries!r},{s.mean_runtime_ms!r},{s.se_runtime_ms!r}"
        )
    return "\n".join(lines) + "\n"
