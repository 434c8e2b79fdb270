"""MIND-format news/behaviors parsing, dataset counts and train/test overlap."""

from __future__ import annotations

import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

CLICK_COUNT_RULE = "click_count = positive candidate labels over behavior rows (histories excluded)"
OCCURRENCE_STREAM_RULE = "occurrence stream = history ids + candidate ids of each impression"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class NewsItem:
    news_id: str
    category: str
    subcategory: str
    title: str
    abstract: str = ""


@dataclass(frozen=True)
class Impression:
    impression_id: str
    user_id: str
    timestamp: str
    history: tuple[str, ...]
    candidates: tuple[tuple[str, int], ...]

    @property
    def labels(self) -> list[int]:
        return [label for _, label in self.candidates]

    @property
    def candidate_ids(self) -> list[str]:
        return [nid for nid, _ in self.candidates]


@dataclass(frozen=True)
class DatasetStats:
    user_count: int
    news_count: int
    click_count: int
    rule: str = CLICK_COUNT_RULE


@dataclass
class ParseResult:
    """Records plus the number of rows dropped under ``skip_bad_rows``."""

    records: list
    skipped: int = 0
    errors: list[str] = field(default_factory=list)


def _read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def parse_news_line(line: str, lineno: int = 0) -> NewsItem:
    fields = line.split("\t")
    if len(fields) < 4:
        raise DataError(f"line {lineno}: expected >=4 tab-separated fields, got {len(fields)}")
    news_id, category, subcategory, title = fields[:4]
    abstract = fields[4] if len(fields) > 4 else ""
    if not news_id:
        raise DataError(f"line {lineno}: empty news_id")
    if not title:
        raise DataError(f"line {lineno}: empty title for {news_id}")
    return NewsItem(news_id, category, subcategory, title, abstract)


def parse_news(path: str | os.PathLike, skip_bad_rows: bool = False) -> list[NewsItem]:
    """Parse a MIND ``news.tsv``. Columns past the abstract (URL, entities) are ignored.

    Duplicate ids always fail, even with ``skip_bad_rows``.
    """
    return parse_news_detailed(path, skip_bad_rows).records


def parse_news_detailed(path, skip_bad_rows: bool = False) -> ParseResult:
    items: list[NewsItem] = []
    seen: set[str] = set()
    result = ParseResult(items)
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            item = parse_news_line(line, lineno)
        except DataError as exc:
            if not skip_bad_rows:
                raise
            result.skipped += 1
            result.errors.append(str(exc))
            continue
        if item.news_id in seen:
            raise DataError(f"line {lineno}: duplicate news_id {item.news_id}")
        seen.add(item.news_id)
        items.append(item)
    if result.skipped:
        logger.warning("skipped %d malformed news rows in %s", result.skipped, path)
    return result


def _parse_candidate(token: str, lineno: int) -> tuple[str, int]:
    nid, sep, label = token.rpartition("-")
    if not sep or not nid or label not in ("0", "1"):
        raise DataError(f"line {lineno}: candidate token {token!r} lacks a -0/-1 label suffix")
    return nid, int(label)


def parse_behavior_line(line: str, lineno: int = 0) -> Impression:
    fields = line.split("\t")
    if len(fields) < 5:
        raise DataError(f"line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
    imp_id, user_id, ts, history, cands = fields[:5]
    candidates = tuple(_parse_candidate(tok, lineno) for tok in cands.split())
    if not candidates:
        raise DataError(f"line {lineno}: impression {imp_id} has no candidates")
    return Impression(imp_id, user_id, ts, tuple(history.split()), candidates)


def parse_behaviors(path: str | os.PathLike, skip_bad_rows: bool = False) -> list[Impression]:
    return parse_behaviors_detailed(path, skip_bad_rows).records


def parse_behaviors_detailed(path, skip_bad_rows: bool = False) -> ParseResult:
    result = ParseResult([])
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            result.records.append(parse_behavior_line(line, lineno))
        except DataError as exc:
            if not skip_bad_rows:
                raise
            result.skipped += 1
            result.errors.append(str(exc))
    if result.skipped:
        logger.warning("skipped %d malformed behavior rows in %s", result.skipped, path)
    return result


def format_news(item: NewsItem) -> str:
    return "\t".join([item.news_id, item.category, item.subcategory, item.title, item.abstract])


def format_behavior(imp: Impression) -> str:
    cands = " ".join(f"{nid}-{label}" for nid, label in imp.candidates)
    return "\t".join([imp.impression_id, imp.user_id, imp.timestamp, " ".join(imp.history), cands])


def write_news(path, news: Iterable[NewsItem]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item in news:
            fh.write(format_news(item) + "\n")


def write_behaviors(path, impressions: Iterable[Impression]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for imp in impressions:
            fh.write(format_behavior(imp) + "\n")


def compute_stats(news: Sequence[NewsItem], impressions: Sequence[Impression]) -> DatasetStats:
    users = {imp.user_id for imp in impressions}
    clicks = sum(label for imp in impressions for _, label in imp.candidates)
    return DatasetStats(len(users), len(news), clicks)


def normalize_keyword(kw: str) -> str:
    return kw.strip().lower()


def _id_stream(impressions: Iterable[Impression]) -> Iterable[str]:
    for imp in impressions:
        yield from imp.history
        for nid, _ in imp.candidates:
            yield nid


@dataclass(frozen=True)
class OverlapCell:
    fraction_unseen: float
    fraction_seen: float
    total: int


@dataclass(frozen=True)
class OverlapReport:
    news_id_dedup: OverlapCell
    news_id_nondedup: OverlapCell
    keyword_dedup: OverlapCell
    keyword_nondedup: OverlapCell
    uncovered_test_occurrences: int
    stream_rule: str = OCCURRENCE_STREAM_RULE

    def cells(self) -> dict[str, OverlapCell]:
        return {
            "news_id.dedup": self.news_id_dedup,
            "news_id.nondedup": self.news_id_nondedup,
            "keyword.dedup": self.keyword_dedup,
            "keyword.nondedup": self.keyword_nondedup,
        }

    def to_dict(self) -> dict:
        out: dict = {"stream_rule": self.stream_rule, "uncovered_test_occurrences": self.uncovered_test_occurrences}
        for name, cell in self.cells().items():
            out[name] = {"unseen": cell.fraction_unseen, "seen": cell.fraction_seen, "total": cell.total}
        return out

    def to_text(self) -> str:
        lines = [f"# {self.stream_rule}", f"uncovered_test_occurrences={self.uncovered_test_occurrences}"]
        for name, cell in self.cells().items():
            lines.append(f"{name}.unseen={cell.fraction_unseen:.6f}")
            lines.append(f"{name}.seen={cell.fraction_seen:.6f}")
            lines.append(f"{name}.total={cell.total}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _cell(test_counts: Counter, train_vocab: set[str], dedup: bool) -> OverlapCell:
    if dedup:
        total = len(test_counts)
        unseen = sum(1 for tok in test_counts if tok not in train_vocab)
    else:
        total = sum(test_counts.values())
        unseen = sum(c for tok, c in test_counts.items() if tok not in train_vocab)
    if total == 0:
        return OverlapCell(0.0, 1.0, 0)
    frac = unseen / total
    return OverlapCell(frac, 1.0 - frac, total)


def compute_overlap(
    train_impressions: Iterable[Impression],
    test_impressions: Iterable[Impression],
    keyword_map: Mapping[str, Sequence[str]] | None = None,
) -> OverlapReport:
    """How much of the test split's news ids / keywords already occur in train.

    Each impression contributes its history ids and candidate ids. An empty
    cell reports unseen=0, seen=1.
    """
    keyword_map = keyword_map or {}
    train_ids = Counter(_id_stream(train_impressions))
    test_ids = Counter(_id_stream(test_impressions))

    def kw_counts(id_counts: Counter) -> tuple[Counter, int]:
        out: Counter = Counter()
        uncovered = 0
        for nid, c in id_counts.items():
            kws = keyword_map.get(nid)
            if not kws:
                uncovered += c
                continue
            for kw in kws:
                out[normalize_keyword(kw)] += c
        return out, uncovered

    train_kw, _ = kw_counts(train_ids)
    test_kw, uncovered = kw_counts(test_ids)
    id_vocab, kw_vocab = set(train_ids), set(train_kw)
    return OverlapReport(
        news_id_dedup=_cell(test_ids, id_vocab, True),
        news_id_nondedup=_cell(test_ids, id_vocab, False),
        keyword_dedup=_cell(test_kw, kw_vocab, True),
        keyword_nondedup=_cell(test_kw, kw_vocab, False),
        uncovered_test_occurrences=uncovered,
    )
