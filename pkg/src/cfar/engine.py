"""Block discovery over a forest of composition trees.

One block at a time: grow a known-pure seed set through the trees' minimal
extensions, pooling purity facts across trees through the subset lattice,
with a binary-search shortcut up a branch when exactly one tree still offers
a pure extension. The outer loop removes each finished block from every tree
and repeats until the forest is empty.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .forest import (
    IMPURE,
    PURE,
    UNKNOWN,
    CompositionTree,
    Forest,
    PurityMap,
    contract,
    ids_of,
    iter_bits,
    mark_impure,
    mark_pure,
    minimal_extension,
)
from .oracle import InferenceEngine, QueryRecord

MODES = ("exact", "trusting")


@dataclass(frozen=True)
class CfarConfig:
    mode: str = "exact"
    majority_k: int = 1
    seed: int = 0
    tree_subset: tuple[int, ...] | None = None
    # Return straight after the first single-branch binary search instead of
    # re-entering the extension loop (legacy behaviour; can under-grow blocks
    # that only a different tree nominates in full).
    single_search_return: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.majority_k < 1 or self.majority_k % 2 == 0:
            raise ValueError(f"majority_k must be odd and >= 1, got {self.majority_k}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass
class TreeSummary:
    tag: str
    contributions: int  # final blocks whose leafset equals a node of this tree
    deviations: int  # nodes of this tree marked impure over the whole run


@dataclass
class RunResult:
    partition: list[list[int]]
    log: list[QueryRecord]
    oracle_consultations: int
    inferred_answers: int
    blocks_found: int
    per_tree: list[TreeSummary]
    duration_ms: float
    config: CfarConfig
    partition_masks: list[int] = field(default_factory=list, repr=False)

    def labels(self) -> dict[int, int]:
        return {u: i for i, block in enumerate(self.partition) for u in block}

    def to_report(self, include_timing: bool = True) -> dict:
        report = {
            "partition": self.partition,
            "counters": {
                "oracle_consultations": self.oracle_consultations,
                "inferred_answers": self.inferred_answers,
                "blocks_found": self.blocks_found,
            },
            "per_tree": [
                {
                    "tag": t.tag,
                    "contributions": t.contributions,
                    "deviations": t.deviations,
                }
                for t in self.per_tree
            ],
            "config": {
                "mode": self.config.mode,
                "majority_k": self.config.majority_k,
                "seed": self.config.seed,
                "tree_subset": (
                    None
                    if self.config.tree_subset is None
                    else list(self.config.tree_subset)
                ),
                "single_search_return": self.config.single_search_return,
            },
        }
        if include_timing:
            report["duration_ms"] = self.duration_ms
        return report


class RunError(RuntimeError):
    """A run aborted; carries whatever partition had been confirmed so far."""

    def __init__(self, message: str, partial_partition: list[list[int]]):
        super().__init__(message)
        self.partial_partition = partial_partition


def _ask(engine: InferenceEngine, source, a: int, b: int, k: int) -> int:
    if k == 1:
        return engine.resolve(source, a, b)[0]
    return engine.majority_answer(source, a, b, k)


def test_purity(
    forest: Forest,
    purity: PurityMap,
    engine: InferenceEngine,
    source,
    S: int,
    tree_idx: int,
    node_id: int,
    mode: str = "exact",
    majority_k: int = 1,
) -> int:
    """Decide purity of one node given a known-pure subset S of its leafset.

    Exact mode confirms every unit outside S against S's representative
    (units already in the representative's must-link class cost nothing);
    trusting mode extrapolates from the single lowest-id outsider. Verdicts
    propagate to the whole forest via the lattice marks. Returns PURE or
    IMPURE.
    """
    tree = forest.trees[tree_idx]
    node = tree.nodes[node_id]
    v_ls = node.leafset
    if v_ls & S != S or v_ls == S:
        raise ValueError("node leafset must strictly contain S")
    s = (S & -S).bit_length() - 1  # representative: smallest member
    rest = v_ls & ~S

    if mode == "trusting":
        # One comparison across the node's split: probe the smallest unit
        # outside the child subtree holding S (outside S itself when S
        # straddles the split, in which case realizability already forces
        # the node pure).
        pool = rest
        for child in node.children:
            if tree.nodes[child].leafset & S == S:
                pool = v_ls & ~tree.nodes[child].leafset
                break
        u0 = (pool & -pool).bit_length() - 1
        if _ask(engine, source, s, u0, majority_k) < 0:
            mark_impure(purity, forest, (1 << s) | (1 << u0))
            return IMPURE
        mark_pure(purity, forest, v_ls)
        return PURE

    rep = engine.find(s)
    for u in iter_bits(rest):
        if engine.find(u) == rep:
            continue  # already confirmed into the class
        if _ask(engine, source, s, u, majority_k) < 0:
            mark_impure(purity, forest, (1 << s) | (1 << u))
            return IMPURE
        rep = engine.find(s)
    mark_pure(purity, forest, v_ls)
    return PURE


def _binary_search_up(
    forest: Forest,
    purity: PurityMap,
    engine: InferenceEngine,
    source,
    tree_idx: int,
    node_id: int,
    S: int,
    mode: str,
    majority_k: int,
) -> int:
    """Leafset of the highest pure node on the root path above `node_id`.

    Purity is monotone along the path, so binary search between the lowest
    known-pure and lowest known-impure indices; cross-tree marks made along
    the way settle probes for free.
    """
    tree = forest.trees[tree_idx]
    path = tree.root_path(node_id)
    lo, hi = 0, len(path)  # path[lo] pure; path[hi] impure (len(path) = none)
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        state = purity.get(tree_idx, path[mid])
        if state == UNKNOWN:
            state = test_purity(
                forest, purity, engine, source, S, tree_idx, path[mid], mode, majority_k
            )
        if state == PURE:
            lo = mid
        else:
            hi = mid
    return tree.nodes[path[lo]].leafset


def find_one_block(
    forest: Forest,
    purity: PurityMap,
    engine: InferenceEngine,
    source,
    cfg: CfarConfig = CfarConfig(),
) -> int:
    """Grow the smallest live unit's block until no tree extends it purely.

    Returns the block as a leaf mask. The returned set is maximal: every
    tree's minimal extension of it is impure (or absent).
    """
    if forest.empty or not forest.trees:
        raise ValueError("forest is empty")
    S = forest.live & -forest.live  # seed: smallest live unit id
    while True:
        exts: list[tuple[int, int, int]] = []
        for ti, tree in enumerate(forest.trees):
            v = minimal_extension(tree, S)
            if v is not None:
                exts.append((tree.nodes[v].leafset.bit_count(), ti, v))
        # Small extensions first: their refuting pairs sit inside the larger
        # extensions more often, so impurity marks spread before those are
        # tested and the queries they would need never happen.
        exts.sort()
        pure_exts: list[tuple[int, int]] = []
        for _, ti, v in exts:
            state = purity.get(ti, v)
            if state == UNKNOWN:
                state = test_purity(
                    forest, purity, engine, source, S, ti, v, cfg.mode, cfg.majority_k
                )
            if state == PURE:
                pure_exts.append((ti, v))
        if not pure_exts:
            return S
        if len(pure_exts) == 1:
            ti, v = pure_exts[0]
            S = _binary_search_up(
                forest, purity, engine, source, ti, v, S, cfg.mode, cfg.majority_k
            )
            if cfg.single_search_return:
                return S
        else:
            for ti, v in pure_exts:
                S |= forest.trees[ti].nodes[v].leafset
            mark_pure(purity, forest, S)


def run(
    forest: Forest,
    source,
    cfg: CfarConfig = CfarConfig(),
    engine: InferenceEngine | None = None,
    on_block=None,
) -> RunResult:
    """Flatten the forest into a full partition, one block at a time.

    Purity states reset between blocks; the answer cache persists for the
    whole run, so nothing is ever asked twice. Deterministic given the
    forest, the source's behaviour and the config. Callers needing live
    progress may pass their own InferenceEngine and an `on_block(block_ids,
    units_remaining)` callback.
    """
    cfg.validate()
    started = time.perf_counter()
    original = forest.subset(cfg.tree_subset) if cfg.tree_subset is not None else forest
    if not original.trees:
        raise ValueError("forest has no trees")
    purity = PurityMap.for_forest(original)
    engine = engine if engine is not None else InferenceEngine()
    masks: list[int] = []
    work = original
    try:
        while not work.empty:
            block = find_one_block(work, purity, engine, source, cfg)
            masks.append(block)
            work = contract(work, block)
            purity.reset_states()
            if on_block is not None:
                on_block(ids_of(block), work.live.bit_count())
    except Exception as exc:
        raise RunError(
            f"run aborted after {len(masks)} blocks: {exc}",
            [ids_of(m) for m in masks],
        ) from exc
    duration_ms = (time.perf_counter() - started) * 1000.0
    per_tree = []
    for idx, tree in enumerate(original.trees):
        node_masks = tree.node_masks()
        per_tree.append(
            TreeSummary(
                tag=tree.tag,
                contributions=sum(1 for m in masks if m in node_masks),
                deviations=purity.impure_marks[idx],
            )
        )
    return RunResult(
        partition=[ids_of(m) for m in masks],
        log=engine.export_log(),
        oracle_consultations=engine.oracle_consultations,
        inferred_answers=engine.inferred_answers,
        blocks_found=len(masks),
        per_tree=per_tree,
        duration_ms=duration_ms,
        config=cfg,
        partition_masks=masks,
    )


def auto_flatten_baseline(
    tree: CompositionTree, features, threshold: float
) -> list[list[int]]:
    """Flatten one tree with no oracle: accept a node as a cluster when its
    members' mean pairwise Pearson correlation reaches the threshold.

    Depth-first from the root, so accepted nodes are maximal; members of no
    accepted node become singletons.
    """
    import numpy as np

    if not (-1.0 < threshold <= 1.0):
        raise ValueError(f"threshold must lie in (-1, 1], got {threshold}")
    blocks: list[int] = []
    stack = [tree.root_id]
    while stack:
        node = tree.nodes[stack.pop()]
        members = ids_of(node.leafset)
        if len(members) >= 2:
            with np.errstate(invalid="ignore", divide="ignore"):
                corr = np.corrcoef(np.asarray(features)[members])
            corr = np.nan_to_num(corr, nan=0.0)  # zero-variance rows
            iu = np.triu_indices(len(members), k=1)
            if float(corr[iu].mean()) >= threshold:
                blocks.append(node.leafset)
                continue
        if node.children:
            stack.extend(node.children)
        else:
            blocks.append(node.leafset)  # unaccepted leaf -> singleton
    blocks.sort(key=lambda m: (m & -m).bit_length())
    return [ids_of(m) for m in blocks]
