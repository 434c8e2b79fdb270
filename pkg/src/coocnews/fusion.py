"""Final news vectors: concatenated co-occurrence embeddings plus the projected LLM embedding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingError, EmbeddingTable
from .graphs import ID_PREFIX, KW_PREFIX
from .ingest import NewsItem, normalize_keyword


def _empty(dim: int) -> EmbeddingTable:
    return EmbeddingTable([], np.zeros((0, dim), np.float32), dim)


@dataclass
class CoocEmbeddingSet:
    """Node vectors of the three graphs. A ``None`` table contributes zeros of its declared dim."""

    id_vecs: EmbeddingTable | None
    item_item_kw_vecs: EmbeddingTable | None
    intra_kw_vecs: EmbeddingTable | None
    dims: tuple[int, int, int] = (100, 100, 100)

    def __post_init__(self):
        for table, d in zip(self.tables(), self.dims):
            if table is not None and len(table) and table.dim != d:
                raise EmbeddingError(f"segment dim {table.dim} != declared {d}")

    def tables(self):
        return (self.id_vecs, self.item_item_kw_vecs, self.intra_kw_vecs)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def ablate(self, keep: Sequence[bool]) -> "CoocEmbeddingSet":
        """Copy with the segments whose ``keep`` flag is false replaced by zeros."""
        t = [tab if k else None for tab, k in zip(self.tables(), keep)]
        return CoocEmbeddingSet(*t, dims=self.dims)


@dataclass
class Coverage:
    """Per-segment counts of items that fell back to zeros."""

    fallbacks: Counter = field(default_factory=Counter)
    items: int = 0


def pool_keywords(
    news_id: str,
    keyword_map: Mapping[str, Sequence[str]],
    kw_vecs: EmbeddingTable | None,
    dim: int,
    coverage: Coverage | None = None,
    segment: str = "kw",
) -> np.ndarray:
    """Mean of the item's keyword node vectors present in ``kw_vecs``; zeros if none are."""
    found = []
    if kw_vecs is not None:
        for kw in dict.fromkeys(normalize_keyword(k) for k in keyword_map.get(news_id, ())):
            v = kw_vecs.get(KW_PREFIX + kw)
            if v is not None:
                found.append(v.astype(np.float64))
    if not found:
        if coverage is not None:
            coverage.fallbacks[segment] += 1
        return np.zeros(dim)
    return np.mean(found, axis=0)


def assemble_cooc(
    news_id: str,
    cooc: CoocEmbeddingSet,
    keyword_map: Mapping[str, Sequence[str]],
    coverage: Coverage | None = None,
) -> np.ndarray:
    d1, d2, d3 = cooc.dims
    id_vec = cooc.id_vecs.get(ID_PREFIX + news_id) if cooc.id_vecs is not None else None
    if id_vec is None:
        if coverage is not None:
            coverage.fallbacks["id"] += 1
        id_vec = np.zeros(d1)
    if coverage is not None:
        coverage.items += 1
    return np.concatenate(
        [
            np.asarray(id_vec, dtype=np.float64),
            pool_keywords(news_id, keyword_map, cooc.item_item_kw_vecs, d2, coverage, "item_item_kw"),
            pool_keywords(news_id, keyword_map, cooc.intra_kw_vecs, d3, coverage, "intra_kw"),
        ]
    )


def cooc_matrix(
    ids: Sequence[str], cooc: CoocEmbeddingSet, keyword_map: Mapping[str, Sequence[str]], coverage: Coverage | None = None
) -> np.ndarray:
    if not ids:
        return np.zeros((0, cooc.dim))
    return np.stack([assemble_cooc(nid, cooc, keyword_map, coverage) for nid in ids])


@dataclass
class ProjectionParams:
    weight: np.ndarray  # (d_out, d_llm)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"inconsistent projection shapes {self.weight.shape}, {self.bias.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite projection parameters")

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    @property
    def d_llm(self) -> int:
        return self.weight.shape[1]


def fuse(llm_vec, cooc_vec, proj: ProjectionParams) -> np.ndarray:
    llm_vec = np.asarray(llm_vec, dtype=np.float64)
    cooc_vec = np.asarray(cooc_vec, dtype=np.float64)
    if llm_vec.shape != (proj.d_llm,) or cooc_vec.shape != (proj.d_out,):
        raise ValueError(
            f"shape mismatch: llm {llm_vec.shape} vs ({proj.d_llm},), cooc {cooc_vec.shape} vs ({proj.d_out},)"
        )
    return proj.weight @ llm_vec + proj.bias + cooc_vec


def llm_matrix(ids: Sequence[str], llm_table: EmbeddingTable, d_llm: int, strict: bool = True) -> np.ndarray:
    missing = [nid for nid in ids if nid not in llm_table]
    if missing and strict:
        raise EmbeddingError(f"missing LLM embeddings for {len(missing)} ids: {missing[:20]}")
    out = np.zeros((len(ids), d_llm))
    for i, nid in enumerate(ids):
        v = llm_table.get(nid)
        if v is not None:
            out[i] = v
    return out


def build_table(
    catalog: Sequence[NewsItem],
    llm_table: EmbeddingTable,
    cooc: CoocEmbeddingSet,
    keyword_map: Mapping[str, Sequence[str]],
    proj: ProjectionParams,
    strict: bool = True,
    coverage: Coverage | None = None,
) -> EmbeddingTable:
    """Fused vector for every catalog item. Non-strict mode substitutes a zero LLM vector."""
    ids = [item.news_id for item in catalog]
    if not ids:
        return _empty(proj.d_out)
    llm = llm_matrix(ids, llm_table, proj.d_llm, strict)
    cooc_m = cooc_matrix(ids, cooc, keyword_map, coverage)
    fused = llm @ proj.weight.T + proj.bias + cooc_m
    return EmbeddingTable(ids, fused.astype(np.float32), proj.d_out)
