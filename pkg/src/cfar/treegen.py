"""Hierarchical-clustering ensemble construction.

A grid of (preprocess x transform x metric x linkage) choices yields one
agglomerative tree per cell; the default grid is 2 x 2 x 5 x 4 = 80 trees.
Agglomeration is the naive O(n^3) scheme with Lance-Williams distance
updates and a total tie rule (smallest (left id, right id) lexicographically),
so merge lists are reproducible across machines.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial.distance import pdist, squareform

from . import forest as forest_mod
from .datagen import WaveformDataset

logger = logging.getLogger(__name__)

PREPROCESS_MODES = ("raw", "derivative")
TRANSFORMS = ("none", "pca")
METRICS = ("euclidean", "sqeuclidean", "manhattan", "chebyshev", "correlation")
LINKAGES = ("single", "average", "complete", "weighted")

_SCIPY_METRIC = {
    "euclidean": "euclidean",
    "sqeuclidean": "sqeuclidean",
    "manhattan": "cityblock",
    "chebyshev": "chebyshev",
    "correlation": "correlation",
}


@dataclass
class LinkageTree:
    """Merge list: leaves are ids 0..n-1, merge r creates node id n+r."""

    n: int
    merges: list[tuple[int, int, float, int]]  # (left, right, height, size)


@dataclass(frozen=True)
class EnsembleConfig:
    preprocess: tuple[str, ...] = PREPROCESS_MODES
    transform: tuple[str, ...] = TRANSFORMS
    pca_k: int = 10
    metrics: tuple[str, ...] = METRICS
    linkages: tuple[str, ...] = LINKAGES

    def validate(self) -> None:
        for name, chosen, known in (
            ("preprocess", self.preprocess, PREPROCESS_MODES),
            ("transform", self.transform, TRANSFORMS),
            ("metrics", self.metrics, METRICS),
            ("linkages", self.linkages, LINKAGES),
        ):
            if not chosen:
                raise ValueError(f"{name} must be nonempty")
            unknown = [c for c in chosen if c not in known]
            if unknown:
                raise ValueError(f"unknown {name} values: {unknown}")
        if self.pca_k < 1:
            raise ValueError(f"pca_k must be >= 1, got {self.pca_k}")

    @property
    def grid_size(self) -> int:
        return (
            len(self.preprocess)
            * len(self.transform)
            * len(self.metrics)
            * len(self.linkages)
        )

    def cells(self) -> list[tuple[str, str, str, str]]:
        return [
            (p, t, m, l)
            for p in self.preprocess
            for t in self.transform
            for m in self.metrics
            for l in self.linkages
        ]

    def cell_tag(self, cell: tuple[str, str, str, str]) -> str:
        p, t, m, l = cell
        t_label = f"pca{self.pca_k}" if t == "pca" else t
        return f"{p},{t_label},{m},{l}"


def preprocess(dataset: WaveformDataset, mode: str) -> np.ndarray:
    """Raw copy, or per-channel first difference in time (D' = C*(S-1))."""
    if mode == "raw":
        return dataset.features.copy()
    if mode != "derivative":
        raise ValueError(f"unknown preprocess mode {mode!r}")
    if dataset.channels is None or dataset.samples_per_channel is None:
        raise ValueError(
            "derivative mode requires channel/sample metadata on the dataset"
        )
    if dataset.samples_per_channel < 2:
        raise ValueError("derivative mode requires samples_per_channel >= 2")
    n = dataset.n_units
    shaped = dataset.features.reshape(n, dataset.channels, dataset.samples_per_channel)
    return np.diff(shaped, axis=2).reshape(n, -1)


def reduce(features: np.ndarray, transform: str, k: int = 10) -> np.ndarray:
    """Identity, or projection onto the top-min(k, rank) principal components.

    Sign convention: each component's largest-magnitude entry is positive.
    """
    if transform == "none":
        return features
    if transform != "pca":
        raise ValueError(f"unknown transform {transform!r}")
    if k < 1:
        raise ValueError(f"pca k must be >= 1, got {k}")
    n, d = features.shape
    if n < 2:
        raise ValueError("pca requires at least 2 units")
    xc = features - features.mean(axis=0)
    if d <= n:
        cov = (xc.T @ xc) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        eigvals, eigvecs = eigvals[::-1], eigvecs[:, ::-1]
        components = eigvecs
    else:
        # Gram trick: eigvecs of xc xc^T map to covariance eigvecs
        gram = xc @ xc.T
        mu, u = np.linalg.eigh(gram)
        mu, u = mu[::-1], u[:, ::-1]
        eigvals = mu / (n - 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            components = (xc.T @ u) / np.sqrt(np.maximum(mu, 1e-300))
    tol = max(n, d) * np.finfo(float).eps * max(eigvals.max(initial=0.0), 0.0)
    rank = int(np.sum(eigvals > tol))
    k_eff = min(k, rank)
    components = components[:, :k_eff]
    for j in range(k_eff):
        i = int(np.argmax(np.abs(components[:, j])))
        if components[i, j] < 0:
            components[:, j] = -components[:, j]
    return xc @ components


def pairwise_distance(features: np.ndarray, metric: str) -> np.ndarray:
    """Symmetric n x n distance matrix under one of the five metrics."""
    if metric not in _SCIPY_METRIC:
        raise ValueError(f"unknown metric {metric!r}")
    features = np.asarray(features, dtype=np.float64)
    if metric == "correlation":
        variances = features.var(axis=1)
        bad = np.flatnonzero(variances == 0)
        if bad.size:
            raise ValueError(
                f"correlation metric undefined: unit {int(bad[0])} has zero variance"
            )
    if features.shape[0] == 1:
        return np.zeros((1, 1))
    d = squareform(pdist(features, _SCIPY_METRIC[metric]))
    np.maximum(d, 0.0, out=d)  # correlation can round to -eps on identical rows
    return d


def linkage(dist: np.ndarray, method: str) -> LinkageTree:
    """Agglomerate by repeatedly merging the closest pair of clusters.

    Distance updates follow the Lance-Williams recurrences for single,
    complete, average and weighted linkage. Ties are broken by the smallest
    (left id, right id) pair, ids being merge-order node ids.
    """
    if method not in LINKAGES:
        raise ValueError(f"unknown linkage method {method!r}")
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if (dist < 0).any():
        raise ValueError("distance matrix has negative entries")
    if not np.array_equal(dist, dist.T):
        raise ValueError("distance matrix is not symmetric")
    if np.any(np.diagonal(dist) != 0):
        raise ValueError("distance matrix has nonzero diagonal")
    if n == 1:
        return LinkageTree(1, [])

    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    cluster_id = list(range(n))  # cluster id occupying each slot; -1 when dead
    sizes = np.ones(n, dtype=np.int64)
    merges: list[tuple[int, int, float, int]] = []

    for step in range(n - 1):
        dmin = d.min()
        cand = np.argwhere(d == dmin)
        best_slots, best_key = None, None
        for i, j in cand:
            if i >= j:
                continue
            a, b = cluster_id[i], cluster_id[j]
            key = (a, b) if a < b else (b, a)
            if best_key is None or key < best_key:
                best_key, best_slots = key, (int(i), int(j))
        i, j = best_slots
        si, sj = int(sizes[i]), int(sizes[j])
        di, dj = d[i], d[j]
        if method == "single":
            row = np.minimum(di, dj)
        elif method == "complete":
            row = np.maximum(di, dj)
        elif method == "average":
            row = (si * di + sj * dj) / (si + sj)
        else:  # weighted
            row = (di + dj) / 2.0
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        merges.append((best_key[0], best_key[1], float(dmin), si + sj))
        cluster_id[i] = n + step
        cluster_id[j] = -1
        sizes[i] = si + sj
    return LinkageTree(n, merges)


def build_ensemble(
    dataset: WaveformDataset,
    cfg: EnsembleConfig = EnsembleConfig(),
    on_skip: Callable[[str, Exception], None] | None = None,
) -> forest_mod.Forest:
    """One composition tree per grid cell, all over the dataset's unit ids.

    A failing cell (e.g. zero variance under the correlation metric) is
    skipped with a warning rather than failing the build.
    """
    cfg.validate()
    if dataset.n_units < 1:
        raise ValueError("dataset has no units")
    trees: list[forest_mod.CompositionTree] = []
    feat_cache: dict[tuple[str, str], np.ndarray] = {}
    dist_cache: dict[tuple[str, str, str], np.ndarray] = {}
    for cell in cfg.cells():
        p, t, m, l = cell
        tag = cfg.cell_tag(cell)
        try:
            if (p, t) not in feat_cache:
                feat_cache[p, t] = reduce(preprocess(dataset, p), t, cfg.pca_k)
            if (p, t, m) not in dist_cache:
                dist_cache[p, t, m] = pairwise_distance(feat_cache[p, t], m)
            ltree = linkage(dist_cache[p, t, m], l)
            trees.append(forest_mod.from_linkage(ltree, tag))
        except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
            logger.warning("skipping ensemble cell %s: %s", tag, exc)
            if on_skip is not None:
                on_skip(tag, exc)
    return forest_mod.Forest(trees, dataset.n_units)


def linkage_to_text(tree: LinkageTree) -> str:
    lines = [f"n={tree.n}"]
    for left, right, height, size in tree.merges:
        lines.append(f"{left} {right} {repr(float(height))} {size}")
    return "\n".join(lines) + "\n"


def linkage_from_text(text: str, name: str = "<linkage>") -> LinkageTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise ValueError(f"{name}: first line must be n=<leaf count>")
    try:
        n = int(lines[0][2:])
    except ValueError as exc:
        raise ValueError(f"{name}: bad leaf count: {exc}") from exc
    if n < 1:
        raise ValueError(f"{name}: leaf count must be >= 1")
    if len(lines) - 1 != n - 1:
        raise ValueError(
            f"{name}: expected {n - 1} merge lines, found {len(lines) - 1}"
        )
    merges = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{name}: line {lineno}: expected 4 fields")
        try:
            merges.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise ValueError(f"{name}: line {lineno}: {exc}") from exc
    return LinkageTree(n, merges)


def save_linkage(tree: LinkageTree, path: str | Path) -> None:
    Path(path).write_text(linkage_to_text(tree), encoding="utf-8", newline="\n")


def load_linkage(path: str | Path) -> LinkageTree:
    return linkage_from_text(Path(path).read_text(encoding="utf-8"), str(path))


def load_ensemble(
    tree_args: list[str | Path], n_expected: int | None = None
) -> forest_mod.Forest:
    """Load an ensemble from a manifest directory or explicit tree files."""
    import json

    paths: list[tuple[Path, str]] = []
    if len(tree_args) == 1 and Path(tree_args[0]).is_dir():
        root = Path(tree_args[0])
        manifest_path = root / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            paths = [(root / e["file"], e["tag"]) for e in manifest["trees"]]
        else:
            paths = [(p, p.stem) for p in sorted(root.glob("*.tree"))]
    else:
        for arg in tree_args:
            p = Path(arg)
            if not p.exists():
                raise FileNotFoundError(f"tree file not found: {p}")
            paths.append((p, p.stem))
    if not paths:
        raise FileNotFoundError(f"no trees found in {list(map(str, tree_args))}")
    trees = []
    for path, tag in paths:
        ltree = load_linkage(path)
        if n_expected is not None and ltree.n != n_expected:
            raise ValueError(
                f"{path}: tree has {ltree.n} leaves but the dataset has "
                f"{n_expected} units"
            )
        trees.append(forest_mod.from_linkage(ltree, tag))
    return forest_mod.Forest(trees, trees[0].n)
