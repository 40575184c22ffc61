"""Composition-tree forest machinery: bit-vector leaf sets, minimal extensions,
purity propagation over the subset lattice, and leaf removal between blocks.

Leaf sets are Python ints used as bit vectors of fixed width n (the initial
universe size). Unit ids keep their bit positions for the lifetime of a run,
even after units are removed by :func:`contract`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .treegen import LinkageTree

UNKNOWN = 0
PURE = 1
IMPURE = 2

_STATE_NAMES = {UNKNOWN: "unknown", PURE: "pure", IMPURE: "impure"}


class LatticeViolationError(Exception):
    """A purity fact contradicts the subset lattice (possible only when the
    feedback source is inconsistent, e.g. a noisy oracle in trusting mode)."""


def mask_of(ids: Iterable[int]) -> int:
    """Bit mask with the given unit ids set."""
    m = 0
    for i in ids:
        m |= 1 << i
    return m


def ids_of(mask: int) -> list[int]:
    """Sorted unit ids present in a bit mask."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass
class TreeNode:
    id: int
    parent: int | None
    children: tuple[int, ...]
    leafset: int

    @property
    def is_leaf(self) -> bool:
        return not self.children


class CompositionTree:
    """Rooted tree whose nodes carry bit-vector leaf sets.

    Leaves keep their unit id as node id; internal node ids are assigned by
    the merge order that built the tree and are preserved by contraction.
    """

    def __init__(self, nodes: dict[int, TreeNode], root_id: int, n: int, tag: str = ""):
        self.nodes = nodes
        self.root_id = root_id
        self.n = n
        self.tag = tag

    @property
    def root(self) -> TreeNode:
        return self.nodes[self.root_id]

    @property
    def leafset(self) -> int:
        return self.nodes[self.root_id].leafset

    def leaves(self) -> list[int]:
        return ids_of(self.leafset)

    def node_count(self) -> int:
        return len(self.nodes)

    def parent_of(self, node_id: int) -> int | None:
        return self.nodes[node_id].parent

    def root_path(self, node_id: int) -> list[int]:
        """Node ids from `node_id` up to and including the root."""
        path = [node_id]
        p = self.nodes[node_id].parent
        while p is not None:
            path.append(p)
            p = self.nodes[p].parent
        return path

    def lowest_superset(self, mask: int) -> int:
        """Id of the lowest node whose leafset contains `mask`.

        Nodes containing a given set form a root-directed chain, so the walk
        starts at one member leaf and climbs until containment holds.
        """
        if mask == 0:
            raise ValueError("empty leaf set")
        if mask & ~self.leafset:
            dead = ids_of(mask & ~self.leafset)
            raise ValueError(f"units not live in this tree: {dead}")
        node_id = (mask & -mask).bit_length() - 1  # lowest member's leaf node
        node = self.nodes[node_id]
        while node.leafset & mask != mask:
            node = self.nodes[node.parent]
        return node.id

    def node_masks(self) -> set[int]:
        return {nd.leafset for nd in self.nodes.values()}

    def validate(self) -> None:
        """Check parent/child and leafset-union consistency (slow; tests)."""
        seen_child = set()
        for nd in self.nodes.values():
            if nd.is_leaf:
                assert nd.leafset.bit_count() == 1, f"leaf {nd.id} not singleton"
                assert nd.leafset == 1 << nd.id
            else:
                union = 0
                for c in nd.children:
                    assert self.nodes[c].parent == nd.id
                    assert c not in seen_child
                    seen_child.add(c)
                    union |= self.nodes[c].leafset
                assert union == nd.leafset, f"node {nd.id} leafset != child union"
        assert self.nodes[self.root_id].parent is None


def from_linkage(tree: "LinkageTree", tag: str = "") -> CompositionTree:
    """Materialize a merge list into a composition tree with leaf bit vectors."""
    n = tree.n
    nodes: dict[int, TreeNode] = {
        i: TreeNode(i, None, (), 1 << i) for i in range(n)
    }
    next_id = n
    for left, right, _height, size in tree.merges:
        for child in (left, right):
            if child not in nodes:
                raise ValueError(f"merge references unknown node {child}")
            if nodes[child].parent is not None:
                raise ValueError(f"node {child} merged twice")
        ls = nodes[left].leafset | nodes[right].leafset
        if ls.bit_count() != size:
            raise ValueError(
                f"merge {next_id}: recorded size {size} != leaf count {ls.bit_count()}"
            )
        nodes[next_id] = TreeNode(next_id, None, (left, right), ls)
        nodes[left].parent = next_id
        nodes[right].parent = next_id
        next_id += 1
    roots = [nd.id for nd in nodes.values() if nd.parent is None]
    if len(roots) != 1:
        raise ValueError(f"merge list leaves {len(roots)} roots, expected 1")
    return CompositionTree(nodes, roots[0], n, tag)


class Forest:
    """Ordered list of composition trees over a common live-leaf universe."""

    def __init__(self, trees: list[CompositionTree], n: int):
        self.trees = trees
        self.n = n
        if trees:
            live = trees[0].leafset
            for t in trees[1:]:
                if t.leafset != live:
                    raise ValueError(
                        f"trees disagree on the live leaf set "
                        f"({t.tag!r} vs {trees[0].tag!r})"
                    )
            self.live = live
        else:
            self.live = 0

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self) -> Iterator[CompositionTree]:
        return iter(self.trees)

    @property
    def empty(self) -> bool:
        return self.live == 0

    def subset(self, indices: Iterable[int]) -> "Forest":
        """Forest over the same universe keeping only the given trees."""
        return Forest([self.trees[i] for i in indices], self.n)


@dataclass
class PurityMap:
    """Three-state purity labels per (tree, node).

    States are dense int8 arrays indexed by node id; node ids never grow
    after construction, so arrays stay valid across contraction. Cumulative
    impure-transition counts survive :meth:`reset_states` so a run can report
    per-tree deviations.
    """

    state: list[np.ndarray]
    impure_marks: list[int] = field(default_factory=list)

    @classmethod
    def for_forest(cls, forest: Forest) -> "PurityMap":
        state = [
            np.zeros(max(t.nodes) + 1 if t.nodes else 1, dtype=np.int8)
            for t in forest.trees
        ]
        return cls(state=state, impure_marks=[0] * len(forest.trees))

    def get(self, tree_idx: int, node_id: int) -> int:
        return int(self.state[tree_idx][node_id])

    def reset_states(self) -> None:
        for arr in self.state:
            arr.fill(UNKNOWN)


def minimal_extension(tree: CompositionTree, S: int) -> int | None:
    """Id of the unique minimal node whose leafset strictly contains S.

    Returns None when S equals the whole live leaf set. Raises ValueError if
    S is empty or contains removed units.
    """
    lca = tree.lowest_superset(S)
    node = tree.nodes[lca]
    if node.leafset != S:
        return node.id
    return node.parent  # None when S is the root leafset


def mark_impure(purity: PurityMap, forest: Forest, X: int) -> int:
    """Mark every node whose leafset contains X as impure, in every tree.

    Nodes containing X form the ancestor chain above the lowest superset, so
    propagation walks each chain until it meets an already-impure node.
    Returns the number of state transitions.
    """
    if X.bit_count() < 2:
        raise ValueError("impure set must have at least 2 units")
    total = 0
    for idx, tree in enumerate(forest.trees):
        st = purity.state[idx]
        node_id: int | None = tree.lowest_superset(X)
        while node_id is not None:
            cur = st[node_id]
            if cur == IMPURE:
                break  # its ancestors are already impure
            if cur == PURE:
                raise LatticeViolationError(
                    f"node {node_id} in tree {idx} is pure but contains the "
                    f"impure set {ids_of(X)}"
                )
            st[node_id] = IMPURE
            total += 1
            purity.impure_marks[idx] += 1
            node_id = tree.nodes[node_id].parent
    return total


def mark_pure(purity: PurityMap, forest: Forest, X: int) -> int:
    """Mark every node whose leafset is a subset of X as pure, in every tree.

    Returns the number of state transitions; raises LatticeViolationError on
    conflict with an existing impure mark.
    """
    if X == 0:
        raise ValueError("pure set must be nonempty")
    if X & ~forest.live:
        raise ValueError(f"units not live: {ids_of(X & ~forest.live)}")
    total = 0
    for idx, tree in enumerate(forest.trees):
        st = purity.state[idx]
        stack = [tree.root_id]
        while stack:
            node_id = stack.pop()
            node = tree.nodes[node_id]
            if node.leafset & X == 0:
                continue
            if node.leafset & ~X == 0:  # whole subtree lies inside X
                sub = [node_id]
                while sub:
                    nid = sub.pop()
                    cur = st[nid]
                    if cur == PURE:
                        continue  # pure subtrees were marked wholesale
                    if cur == IMPURE:
                        raise LatticeViolationError(
                            f"node {nid} in tree {idx} is impure but lies "
                            f"inside the pure set {ids_of(X)}"
                        )
                    st[nid] = PURE
                    total += 1
                    sub.extend(tree.nodes[nid].children)
            else:
                stack.extend(node.children)
    return total


def contract(forest: Forest, block: int) -> Forest:
    """Forest with the block's leaves removed from every tree.

    Empty nodes are deleted and single-child internal nodes spliced out;
    surviving nodes keep their ids. Removing every live leaf yields an empty
    forest, which signals run completion.
    """
    if block == 0:
        raise ValueError("block must be nonempty")
    if block & ~forest.live:
        raise ValueError(f"block contains dead units: {ids_of(block & ~forest.live)}")
    keep = forest.live & ~block
    if keep == 0:
        return Forest([], forest.n)
    return Forest([_contract_tree(t, keep) for t in forest.trees], forest.n)


def _contract_tree(tree: CompositionTree, keep: int) -> CompositionTree:
    # Iterative post-order rebuild; rewritten[node] is the id of the node
    # that survives in its place (itself, a spliced-in descendant, or None).
    nodes: dict[int, TreeNode] = {}
    rewritten: dict[int, int | None] = {}
    stack: list[tuple[int, bool]] = [(tree.root_id, False)]
    while stack:
        node_id, expanded = stack.pop()
        node = tree.nodes[node_id]
        ls = node.leafset & keep
        if ls == 0:
            rewritten[node_id] = None
            continue
        if node.is_leaf:
            nodes[node_id] = TreeNode(node_id, None, (), ls)
            rewritten[node_id] = node_id
            continue
        if not expanded:
            stack.append((node_id, True))
            stack.extend((c, False) for c in node.children)
            continue
        kept = tuple(
            rewritten[c] for c in node.children if rewritten[c] is not None
        )
        if len(kept) == 1:
            rewritten[node_id] = kept[0]  # splice unary node out
            continue
        nodes[node_id] = TreeNode(node_id, None, kept, ls)
        for c in kept:
            nodes[c].parent = node_id
        rewritten[node_id] = node_id
    root_id = rewritten[tree.root_id]
    assert root_id is not None
    return CompositionTree(nodes, root_id, tree.n, tree.tag)


def dump_snapshot(forest: Forest, purity: PurityMap | None = None) -> str:
    """Debug dump: one line per node `tree,node,parent,popcount,state`."""
    lines = []
    for idx, tree in enumerate(forest.trees):
        for node_id in sorted(tree.nodes):
            node = tree.nodes[node_id]
            parent = node.parent if node.parent is not None else -1
            state = _STATE_NAMES[purity.get(idx, node_id)] if purity else "unknown"
            lines.append(
                f"{idx},{node_id},{parent},{node.leafset.bit_count()},{state}"
            )
    return "\n".join(lines) + ("\n" if lines else "")
