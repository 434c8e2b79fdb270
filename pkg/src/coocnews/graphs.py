"""Sliding-window co-occurrence pairs over click histories and the weighted graphs built from them."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .ingest import Impression, normalize_keyword

ID_ID = "id_id"
ITEM_ITEM_KW = "item_item_kw"
INTRA_ITEM_KW = "intra_item_kw"
KINDS = (ID_ID, ITEM_ITEM_KW, INTRA_ITEM_KW)

ID_PREFIX = "id:"
KW_PREFIX = "kw:"


def canonical(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class PairMultiset:
    kind: str
    counts: Counter = field(default_factory=Counter)

    def add(self, a: str, b: str, n: int = 1) -> None:
        if a != b:
            self.counts[canonical(a, b)] += n

    def update(self, other: "PairMultiset") -> None:
        self.counts.update(other.counts)

    def total(self) -> int:
        return sum(self.counts.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, PairMultiset) and self.kind == other.kind and dict(self.counts) == dict(other.counts)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass
class CoverageReport:
    positions: int = 0
    positions_without_keywords: int = 0

    def update(self, other: "CoverageReport") -> None:
        self.positions += other.positions
        self.positions_without_keywords += other.positions_without_keywords


def _keywords(nid: str, keyword_map: Mapping[str, Sequence[str]]) -> list[str]:
    # dict.fromkeys keeps order and drops duplicates after normalization
    return list(dict.fromkeys(normalize_keyword(k) for k in keyword_map.get(nid, ())))


def extract_pairs(
    history: Sequence[str],
    window: int = 2,
    keyword_map: Mapping[str, Sequence[str]] | None = None,
    coverage: CoverageReport | None = None,
) -> tuple[PairMultiset, PairMultiset, PairMultiset]:
    """Count id, cross-item keyword and within-item keyword pairs for one history.

    Every length-``window`` slice (stride 1) contributes each unordered pair of
    positions once; a history shorter than the window is treated as a single
    slice. Positions holding the same news id contribute nothing to either
    cross-item multiset. Within-item keyword pairs are counted once per position.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    keyword_map = keyword_map or {}
    id_pairs, cross, intra = PairMultiset(ID_ID), PairMultiset(ITEM_ITEM_KW), PairMultiset(INTRA_ITEM_KW)
    kws = [_keywords(nid, keyword_map) for nid in history]
    if coverage is not None:
        coverage.positions += len(history)
        coverage.positions_without_keywords += sum(1 for k in kws if not k)

    n = len(history)
    # pair (i, j) with gap g = j - i lies in min(n, window) - g ... windows; count directly
    n_windows = max(n - window + 1, 1)
    for i in range(n):
        for j in range(i + 1, min(i + window, n)):
            # number of windows [s, s+window) with s <= i and j < s + window
            lo, hi = max(0, j - window + 1), min(i, n_windows - 1)
            mult = hi - lo + 1
            if mult <= 0:
                continue
            a, b = history[i], history[j]
            if a == b:
                continue
            id_pairs.add(a, b, mult)
            for ka in kws[i]:
                for kb in kws[j]:
                    cross.add(ka, kb, mult)
    for k in kws:
        for ka, kb in combinations(k, 2):
            intra.add(ka, kb)
    return id_pairs, cross, intra


def dedup_histories(impressions: Iterable[Impression]) -> list[tuple[str, ...]]:
    """One history per user: the longest, first seen on ties. Users ordered by id."""
    best: dict[str, tuple[str, ...]] = {}
    for imp in impressions:
        cur = best.get(imp.user_id)
        if cur is None or len(imp.history) > len(cur):
            best[imp.user_id] = imp.history
    return [best[u] for u in sorted(best)]


def accumulate(
    corpus: Iterable[Sequence[str]],
    window: int = 2,
    keyword_map: Mapping[str, Sequence[str]] | None = None,
    intra_per_distinct_item: bool = False,
    coverage: CoverageReport | None = None,
) -> tuple[PairMultiset, PairMultiset, PairMultiset]:
    """Sum of :func:`extract_pairs` over ``corpus``.

    With ``intra_per_distinct_item`` each distinct news id contributes its
    within-item keyword pairs once for the whole corpus instead of once per click.
    """
    total = (PairMultiset(ID_ID), PairMultiset(ITEM_ITEM_KW), PairMultiset(INTRA_ITEM_KW))
    seen_items: set[str] = set()
    for history in corpus:
        id_pairs, cross, intra = extract_pairs(history, window, keyword_map, coverage)
        total[0].update(id_pairs)
        total[1].update(cross)
        if intra_per_distinct_item:
            for nid in history:
                if nid not in seen_items:
                    seen_items.add(nid)
                    for ka, kb in combinations(_keywords(nid, keyword_map or {}), 2):
                        total[2].add(ka, kb)
        else:
            total[2].update(intra)
    return total


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with positive integer edge weights and no self-loops."""

    nodes: frozenset
    edges: Mapping[tuple[str, str], int]

    def adjacency(self) -> dict[str, dict[str, int]]:
        adj: dict[str, dict[str, int]] = {n: {} for n in sorted(self.nodes)}
        for (a, b), w in sorted(self.edges.items()):
            adj[a][b] = w
            adj[b][a] = w
        return adj

    def total_weight(self) -> int:
        return sum(self.edges.values())

    def __len__(self) -> int:
        return len(self.nodes)


def build_graph(pairs: PairMultiset, prefix: str = "") -> WeightedGraph:
    nodes: set[str] = set()
    edges: dict[tuple[str, str], int] = {}
    for (a, b), c in pairs.counts.items():
        if c <= 0:
            continue
        a, b = prefix + a, prefix + b
        nodes.update((a, b))
        edges[canonical(a, b)] = int(c)
    return WeightedGraph(frozenset(nodes), edges)


def graph_prefix(kind: str) -> str:
    return ID_PREFIX if kind == ID_ID else KW_PREFIX


def write_edge_list(path: str | os.PathLike, graph: WeightedGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for (a, b), w in sorted(graph.edges.items()):
            fh.write(f"{a}\t{b}\t{w}\n")


def read_edge_list(path: str | os.PathLike) -> WeightedGraph:
    nodes: set[str] = set()
    edges: dict[tuple[str, str], int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected node_a<TAB>node_b<TAB>weight")
            a, b, w = parts[0], parts[1], int(parts[2])
            if a == b or w < 1:
                raise ValueError(f"{path}:{lineno}: self-loop or non-positive weight")
            nodes.update((a, b))
            key = canonical(a, b)
            edges[key] = edges.get(key, 0) + w
    return WeightedGraph(frozenset(nodes), edges)
