"""Text artifacts for out-of-band LLM runs: contrastive triples, embedding and keyword prompts."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import NewsItem

TRIPLE_INSTRUCTION = "Given a news title, retrieve semantically similar abstract:"
EMBEDDING_INSTRUCTION = "Given the information of a news, compress it into a maximum of 5 words for recommendation:"
KEYWORD_INSTRUCTION = (
    "Given the information of a news, extract one to three keywords (The keywords must appear in the "
    "news information and must be nouns. Please provide the results in the following format: "
    "[keyword1, keyword2, keyword3]):"
)
# Echo mode repeats the content block once; the instruction stays single.
ECHO_TEMPLATE = "{instruction}\n{content}\n{content}"
PLAIN_TEMPLATE = "{instruction}\n{content}"


@dataclass(frozen=True)
class ContrastiveTriple:
    query: str
    positive: str
    negative: str


@dataclass(frozen=True)
class PromptRecord:
    news_id: str
    prompt: str


class PromptError(ValueError):
    pass


def build_contrastive_triples(news: Sequence[NewsItem], seed: int) -> tuple[list[ContrastiveTriple], int]:
    """One (title, own abstract, other abstract) triple per item with an abstract.

    The negative is uniform over the other eligible items. Each item draws
    from its own generator seeded by ``(seed, index)`` so results do not
    depend on processing order. Returns the triples and the number of items
    skipped for an empty abstract.
    """
    eligible = [item for item in news if item.abstract.strip()]
    skipped = len(news) - len(eligible)
    if len(eligible) < 2:
        raise PromptError(f"need at least 2 items with abstracts, got {len(eligible)}")
    n = len(eligible)
    triples = []
    for i, item in enumerate(eligible):
        rng = np.random.default_rng([seed, i])
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        triples.append(ContrastiveTriple(item.title, item.abstract, eligible[j].abstract))
    return triples, skipped


def _content_block(item: NewsItem) -> str:
    return "\n".join(
        [
            f"category : {item.category}",
            f"subcategory : {item.subcategory}",
            f"title : {item.title}",
            f"abstract : {item.abstract}",
        ]
    )


def build_embedding_prompt(item: NewsItem, echo: bool = False) -> PromptRecord:
    template = ECHO_TEMPLATE if echo else PLAIN_TEMPLATE
    text = template.format(instruction=f'"{EMBEDDING_INSTRUCTION}"', content=_content_block(item))
    return PromptRecord(item.news_id, text)


def build_keyword_prompt(item: NewsItem) -> PromptRecord:
    return PromptRecord(item.news_id, f'"{KEYWORD_INSTRUCTION}"\n{item.title} {item.abstract}')


def write_jsonl(path: str | os.PathLike, records: Iterable) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            row = asdict(rec) if not isinstance(rec, dict) else rec
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
