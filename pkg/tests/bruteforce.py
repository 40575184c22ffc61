"""Independent reference implementations used as test oracles.

Everything here recomputes results from first principles (definitions, exact
rational arithmetic, exhaustive scans) along code paths disjoint from the
package implementations they check.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import numpy as np

from cfar.forest import CompositionTree, Forest, from_linkage
from cfar.treegen import LinkageTree

# ---------------------------------------------------------------- linkage


def brute_linkage(dist: np.ndarray, method: str) -> list[tuple[int, int, float, int]]:
    """Agglomeration computed from cluster member lists, not matrix updates.

    single/complete/average distances are recomputed from the original
    matrix by definition at every step; weighted follows its defining
    recurrence on a dict keyed by cluster id.
    """
    n = dist.shape[0]
    clusters: dict[int, list[int]] = {i: [i] for i in range(n)}
    wdist: dict[tuple[int, int], float] = {
        (i, j): float(dist[i, j]) for i in range(n) for j in range(i + 1, n)
    }
    merges = []
    next_id = n
    while len(clusters) > 1:
        best_key, best_pair, best_d = None, None, None
        for a, b in combinations(sorted(clusters), 2):
            if method == "single":
                d = min(dist[i, j] for i in clusters[a] for j in clusters[b])
            elif method == "complete":
                d = max(dist[i, j] for i in clusters[a] for j in clusters[b])
            elif method == "average":
                d = sum(dist[i, j] for i in clusters[a] for j in clusters[b]) / (
                    len(clusters[a]) * len(clusters[b])
                )
            else:
                d = wdist[(a, b)]
            key = (d, a, b)
            if best_key is None or key < best_key:
                best_key, best_pair, best_d = key, (a, b), d
        a, b = best_pair
        merged = clusters.pop(a) + clusters.pop(b)
        if method == "weighted":
            new_w = {}
            for c in clusters:
                da = wdist[(min(a, c), max(a, c))]
                db = wdist[(min(b, c), max(b, c))]
                new_w[(min(c, next_id), max(c, next_id))] = (da + db) / 2.0
            wdist.update(new_w)
        clusters[next_id] = merged
        merges.append((a, b, float(best_d), len(merged)))
        next_id += 1
    return merges


def mst_single_linkage_heights(dist: np.ndarray) -> list[float]:
    """Kruskal MST edge weights in merge order (equals single-link heights)."""
    n = dist.shape[0]
    edges = sorted(
        (float(dist[i, j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    heights = []
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            heights.append(w)
    return heights


def mst_single_linkage_clusters(dist: np.ndarray) -> set[frozenset[int]]:
    """All clusters formed while growing the MST edge by edge."""
    n = dist.shape[0]
    edges = sorted(
        (float(dist[i, j]), i, j) for i in range(n) for j in range(i + 1, n)
    )
    members: dict[int, set[int]] = {i: {i} for i in range(n)}
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = {frozenset([i]) for i in range(n)}
    for _, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            members[rj] |= members.pop(ri)
            out.add(frozenset(members[rj]))
    return out


# ---------------------------------------------------------------- forest


def superset_nodes(tree: CompositionTree, x_mask: int) -> set[int]:
    return {nid for nid, nd in tree.nodes.items() if nd.leafset & x_mask == x_mask}


def subset_nodes(tree: CompositionTree, x_mask: int) -> set[int]:
    return {nid for nid, nd in tree.nodes.items() if nd.leafset & ~x_mask == 0}


def brute_minimal_extension(tree: CompositionTree, s_mask: int) -> int | None:
    """Scan every node for the inclusion-minimal strict superset of S."""
    cands = [
        nd for nd in tree.nodes.values()
        if nd.leafset & s_mask == s_mask and nd.leafset != s_mask
    ]
    if not cands:
        return None
    best = min(cands, key=lambda nd: nd.leafset.bit_count())
    for nd in cands:
        assert nd.leafset & best.leafset == best.leafset, "extension not unique"
    return best.id


# ---------------------------------------------------------------- pca


def pca_oracle(x: np.ndarray, k: int) -> np.ndarray:
    """PCA scores from a dense covariance eigendecomposition."""
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / (x.shape[0] - 1)
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    tol = max(x.shape) * np.finfo(float).eps * max(w.max(initial=0.0), 0.0)
    rank = int(np.sum(w > tol))
    v = v[:, : min(k, rank)]
    for j in range(v.shape[1]):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0:
            v[:, j] = -v[:, j]
    return xc @ v


# ---------------------------------------------------------------- ami


def emi_oracle(a_counts, b_counts, n: int) -> float:
    """Expected mutual information with exact rational hypergeometric mass."""
    emi = 0.0
    for ai in a_counts:
        ai = int(ai)
        for bj in b_counts:
            bj = int(bj)
            for nij in range(max(1, ai + bj - n), min(ai, bj) + 1):
                p = Fraction(math.comb(ai, nij) * math.comb(n - ai, bj - nij), math.comb(n, bj))
                emi += (nij / n) * math.log(n * nij / (ai * bj)) * float(p)
    return emi


def ami_oracle(la, lb) -> float:
    la = np.asarray(la)
    lb = np.asarray(lb)
    n = len(la)
    ua, ia = np.unique(la, return_inverse=True)
    ub, ib = np.unique(lb, return_inverse=True)
    cont = np.zeros((len(ua), len(ub)), dtype=int)
    for x, y in zip(ia, ib):
        cont[x, y] += 1
    a_counts = cont.sum(axis=1)
    b_counts = cont.sum(axis=0)
    ha = -sum(c / n * math.log(c / n) for c in a_counts)
    hb = -sum(c / n * math.log(c / n) for c in b_counts)
    mi = sum(
        cont[i, j] / n * math.log(n * cont[i, j] / (a_counts[i] * b_counts[j]))
        for i in range(len(ua))
        for j in range(len(ub))
        if cont[i, j]
    )
    emi = emi_oracle(a_counts, b_counts, n)
    denom = max(ha, hb) - emi
    blocks_a = {frozenset(np.flatnonzero(ia == i).tolist()) for i in range(len(ua))}
    blocks_b = {frozenset(np.flatnonzero(ib == j).tolist()) for j in range(len(ub))}
    if abs(denom) < 1e-12:
        return 1.0 if blocks_a == blocks_b else 0.0
    return (mi - emi) / denom


# ----------------------------------------------------- planted instances


def random_realizable_instance(
    rng: np.random.Generator, n: int, k: int, n_trees: int, full: bool = False
) -> tuple[np.ndarray, Forest]:
    """Random labels plus trees in which every block occurs as a node.

    Each block is planted as a contiguous subtree in at least one tree
    (chosen at random); trees may also realize extra blocks. Remaining units
    enter the tree as singleton atoms in shuffled order. With full=True,
    every tree realizes every block (the single-tree realizability premise).
    """
    labels = rng.integers(0, k, size=n)
    blocks: dict[int, list[int]] = {}
    for u, lab in enumerate(labels):
        blocks.setdefault(int(lab), []).append(u)
    block_list = list(blocks.values())
    home = rng.integers(0, n_trees, size=len(block_list))

    trees = []
    for t in range(n_trees):
        merges = []
        next_id = n
        atoms: list[tuple[int, int]] = []  # (root node id, size)

        def merge(a, asz, b, bsz):
            nonlocal next_id
            merges.append((a, b, float(len(merges) + 1), asz + bsz))
            node = next_id
            next_id += 1
            return node, asz + bsz

        for bi, members in enumerate(block_list):
            realize = full or home[bi] == t or rng.random() < 0.5
            if realize and len(members) > 1:
                order = list(rng.permutation(members))
                root, size = int(order[0]), 1
                for u in order[1:]:
                    root, size = merge(root, size, int(u), 1)
                atoms.append((root, size))
            else:
                atoms.extend((int(u), 1) for u in members)
        order = list(rng.permutation(len(atoms)))
        atoms = [atoms[i] for i in order]
        while len(atoms) > 1:
            (a, asz), (b, bsz) = atoms.pop(), atoms.pop()
            atoms.append(merge(a, asz, b, bsz))
        trees.append(from_linkage(LinkageTree(n, merges), tag=f"planted{t}"))
    return labels, Forest(trees, n)


def blocks_of(labels) -> set[frozenset[int]]:
    out: dict[int, set[int]] = {}
    for u, lab in enumerate(labels):
        out.setdefault(int(lab), set()).add(u)
    return {frozenset(v) for v in out.values()}


class CountingSource:
    """Wraps a feedback source, recording every consulted pair."""

    def __init__(self, inner):
        self.inner = inner
        self.record_source = getattr(inner, "record_source", "oracle")
        self.pairs: list[tuple[int, int]] = []

    def answer(self, a, b):
        self.pairs.append((min(a, b), max(a, b)))
        return self.inner.answer(a, b)
