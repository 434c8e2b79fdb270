"""Embedding tables (binary/TSV files, HTTP fetch) and LLM keyword files."""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import requests

from .ingest import NewsItem, normalize_keyword

logger = logging.getLogger(__name__)

MAGIC = b"LEC1"


class EmbeddingError(ValueError):
    pass


class FetchError(RuntimeError):
    pass


class EmbeddingTable:
    """Immutable id -> float32 vector map with a single shared dimension."""

    def __init__(self, ids: Sequence[str], matrix, dim: int | None = None):
        matrix = np.array(matrix, dtype=np.float32)
        if matrix.size == 0:
            matrix = np.zeros((len(ids), dim or 0), np.float32)
        if dim is None:
            dim = matrix.shape[1] if matrix.ndim == 2 else -1
        if matrix.shape != (len(ids), dim):
            raise EmbeddingError(f"matrix shape {matrix.shape} does not match {len(ids)} ids x dim {dim}")
        if not np.all(np.isfinite(matrix)):
            bad = [ids[i] for i in np.flatnonzero(~np.isfinite(matrix).all(axis=1))]
            raise EmbeddingError(f"non-finite components for ids {bad[:10]}")
        index: dict[str, int] = {}
        for i, nid in enumerate(ids):
            if nid in index:
                raise EmbeddingError(f"duplicate id {nid}")
            index[nid] = i
        self.dim = int(dim)
        self.ids = list(ids)
        self._index = index
        self._matrix = matrix
        self._matrix.setflags(write=False)

    @classmethod
    def from_dict(cls, vectors: Mapping[str, Sequence[float]], dim: int | None = None) -> "EmbeddingTable":
        ids = list(vectors)
        if dim is None:
            dim = len(next(iter(vectors.values()))) if ids else 0
        for nid in ids:
            if len(vectors[nid]) != dim:
                raise EmbeddingError(f"dimension mismatch for id {nid}: {len(vectors[nid])} != {dim}")
        mat = np.array([vectors[nid] for nid in ids], dtype=np.float32).reshape(len(ids), dim)
        return cls(ids, mat, dim)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, nid) -> bool:
        return nid in self._index

    def __getitem__(self, nid: str) -> np.ndarray:
        return self._matrix[self._index[nid]]

    def get(self, nid: str, default=None):
        i = self._index.get(nid)
        return default if i is None else self._matrix[i]

    def items(self):
        for nid in self.ids:
            yield nid, self[nid]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EmbeddingTable)
            and self.dim == other.dim
            and self.ids == other.ids
            and np.array_equal(self._matrix, other._matrix)
        )

    def __repr__(self) -> str:
        return f"EmbeddingTable(n={len(self)}, dim={self.dim})"


def save_binary(path: str | os.PathLike, table: EmbeddingTable) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", table.dim, len(table)))
        rows = table.matrix.astype("<f4")
        for i, nid in enumerate(table.ids):
            raw = nid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise EmbeddingError(f"id too long for u16 length prefix: {nid[:40]}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(rows[i].tobytes())


def load_binary(path: str | os.PathLike) -> EmbeddingTable:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise EmbeddingError(f"{path}: bad magic {data[:4]!r}")
    dim, count = struct.unpack_from("<II", data, 4)
    off = 12
    ids: list[str] = []
    mat = np.empty((count, dim), dtype=np.float32)
    row_bytes = 4 * dim
    for i in range(count):
        if off + 2 > len(data):
            raise EmbeddingError(f"{path}: truncated at record {i}")
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        ids.append(data[off : off + n].decode("utf-8"))
        off += n
        if off + row_bytes > len(data):
            raise EmbeddingError(f"{path}: truncated vector for {ids[-1]}")
        mat[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
        off += row_bytes
    if off != len(data):
        raise EmbeddingError(f"{path}: {len(data) - off} trailing bytes")
    return EmbeddingTable(ids, mat, dim)


def save_text(path: str | os.PathLike, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for nid, vec in table.items():
            fh.write(nid + "\t" + "\t".join(repr(float(x)) for x in vec) + "\n")


def load_text(path: str | os.PathLike) -> EmbeddingTable:
    ids: list[str] = []
    rows: list[list[float]] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            nid, *vals = line.split("\t")
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise EmbeddingError(f"line {lineno}: dimension mismatch for id {nid}: {len(vals)} != {dim}")
            try:
                rows.append([float(v) for v in vals])
            except ValueError as exc:
                raise EmbeddingError(f"line {lineno}: {exc}") from None
            ids.append(nid)
    if dim is None:
        return EmbeddingTable([], np.zeros((0, 0), np.float32), 0)
    return EmbeddingTable(ids, np.array(rows, dtype=np.float32).reshape(len(ids), dim), dim)


def load_embeddings(path: str | os.PathLike) -> EmbeddingTable:
    """Load a binary (magic ``LEC1``) or TSV embedding file, sniffing the format."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return load_binary(path)
    return load_text(path)


def save_embeddings(path: str | os.PathLike, table: EmbeddingTable) -> None:
    save_binary(path, table)


@dataclass
class EmbeddingClient:
    """Client for a JSON embedding service.

    Request ``{"input": [...], "ids": [...]}``, response ``{"embeddings": [[...]]}``.
    5xx and connection errors are retried with exponential backoff; 4xx fails at once.
    """

    endpoint: str
    batch_size: int = 32
    attempts: int = 3
    backoff: float = 0.5
    timeout: float = 60.0
    token: str | None = None
    parallelism: int = 1
    session: requests.Session = field(default_factory=requests.Session)

    def _post(self, texts: list[str], ids: list[str]) -> list[list[float]]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = self.session.post(
                    self.endpoint, json={"input": texts, "ids": ids}, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = exc
            else:
                if resp.status_code == 200:
                    return resp.json()["embeddings"]
                if 400 <= resp.status_code < 500:
                    raise FetchError(f"HTTP {resp.status_code} from {self.endpoint}; ids {ids}")
                last = FetchError(f"HTTP {resp.status_code}")
            if attempt + 1 < self.attempts:
                time.sleep(self.backoff * 2**attempt)
        raise FetchError(f"giving up after {self.attempts} attempts ({last}); missing ids {ids}")

    def fetch(self, records: Sequence) -> EmbeddingTable:
        if not records:
            return EmbeddingTable([], np.zeros((0, 0), np.float32), 0)
        batches = [records[i : i + self.batch_size] for i in range(0, len(records), self.batch_size)]

        def run(batch):
            ids = [r.news_id for r in batch]
            vecs = self._post([r.prompt for r in batch], ids)
            if len(vecs) != len(batch):
                missing = ids[len(vecs) :] if len(vecs) < len(batch) else []
                raise FetchError(f"response count mismatch: {len(vecs)} vectors for {len(batch)} prompts; missing ids {missing}")
            return ids, vecs

        if self.parallelism > 1:
            with ThreadPoolExecutor(self.parallelism) as pool:
                results = list(pool.map(run, batches))
        else:
            results = [run(b) for b in batches]
        vectors: dict[str, list[float]] = {}
        for ids, vecs in results:
            for nid, v in zip(ids, vecs):
                if not all(math.isfinite(x) for x in v):
                    raise FetchError(f"non-finite components for id {nid}")
                vectors[nid] = v
        return EmbeddingTable.from_dict(vectors)


def fetch_embeddings(endpoint: str, prompts: Sequence, batch_size: int = 32, **kwargs) -> EmbeddingTable:
    return EmbeddingClient(endpoint, batch_size=batch_size, **kwargs).fetch(prompts)


class KeywordError(ValueError):
    pass


class KeywordMap(dict):
    """news_id -> tuple of 1..3 trimmed keywords. ``truncated`` lists ids cut down to 3."""

    def __init__(self, *args, truncated: Iterable[str] = (), **kwargs):
        super().__init__(*args, **kwargs)
        self.truncated = list(truncated)


def _split_keywords(raw) -> list[str]:
    if isinstance(raw, str):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            s = s[1:-1]
        raw = s.split(",")
    return [str(k).strip().strip("\"'").strip() for k in raw]


def parse_keyword_record(rec: Mapping, strict: bool = False) -> tuple[str, tuple[str, ...], bool]:
    nid = rec["news_id"]
    kws = [k for k in _split_keywords(rec["keywords"]) if k]
    if not kws:
        raise KeywordError(f"empty keyword list for {nid}")
    cut = len(kws) > 3
    if cut and strict:
        raise KeywordError(f"{nid}: {len(kws)} keywords, at most 3 allowed")
    return nid, tuple(kws[:3]), cut


def load_keywords(path: str | os.PathLike, strict: bool = False) -> KeywordMap:
    """Read keyword JSON-lines; bracketed ``"[a, b, c]"`` strings are split on commas."""
    entries: dict[str, tuple[str, ...]] = {}
    truncated = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                nid, kws, cut = parse_keyword_record(rec, strict)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise KeywordError(f"line {lineno}: unparseable keyword record ({exc})") from None
            except KeywordError as exc:
                raise KeywordError(f"line {lineno}: {exc}") from None
            if cut:
                truncated.append(nid)
            entries[nid] = kws
    if truncated:
        logger.warning("truncated %d keyword lists to 3 entries", len(truncated))
    return KeywordMap(entries, truncated=truncated)


def save_keywords(path: str | os.PathLike, kw_map: Mapping[str, Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for nid, kws in kw_map.items():
            fh.write(json.dumps({"news_id": nid, "keywords": list(kws)}, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class KeywordValidationReport:
    total: int
    violations_absent_from_text: int
    violations_count_range: int
    violating_ids: tuple[str, ...]
    uncovered_ids: tuple[str, ...] = ()


def validate_keywords(kw_map: Mapping[str, Sequence[str]], catalog: Sequence[NewsItem]) -> KeywordValidationReport:
    """Check each keyword occurs (case-insensitively) in title + abstract and each list has 1..3 entries.

    Part of speech is not checked.
    """
    texts = {item.news_id: f"{item.title} {item.abstract}".lower() for item in catalog}
    absent = count_bad = total = 0
    violating, uncovered = set(), set()
    for nid, kws in kw_map.items():
        total += 1
        if not 1 <= len(kws) <= 3:
            count_bad += 1
            violating.add(nid)
        text = texts.get(nid)
        if text is None:
            uncovered.add(nid)
            continue
        for kw in kws:
            if normalize_keyword(kw) not in text:
                absent += 1
                violating.add(nid)
    return KeywordValidationReport(total, absent, count_bad, tuple(sorted(violating)), tuple(sorted(uncovered)))
