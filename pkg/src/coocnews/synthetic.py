"""Deterministic planted-preference corpus in MIND layout, for tests and demos.

Each news item belongs to one latent topic and draws 1-3 keywords from that
topic's vocabulary; each user prefers one topic. A block of "cold" items never
appears in training histories or training candidates, only in the cold dev
impressions, so they share keywords with trained items but have no id node.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, save_embeddings
from .ingest import Impression, NewsItem, write_behaviors, write_news
from .embeddings import save_keywords


@dataclass(frozen=True)
class SyntheticSpec:
    topics: int = 2
    users: int = 200
    news: int = 500
    cold_news: int = 60
    keywords_per_topic: int = 25
    history_len: int = 12
    train_impressions_per_user: int = 4
    dev_impressions_per_user: int = 2
    positives: int = 2
    negatives: int = 6
    topic_purity: float = 0.9
    llm_dim: int = 32
    llm_signal: float = 0.15
    seed: int = 7


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    news: list[NewsItem]
    topic_of: dict[str, int]
    keywords: dict[str, tuple[str, ...]]
    llm: EmbeddingTable
    train: list[Impression]
    dev: list[Impression]
    cold_ids: set[str] = field(default_factory=set)

    @property
    def cold_dev(self) -> list[Impression]:
        return [imp for imp in self.dev if imp.impression_id.startswith("C")]

    @property
    def warm_dev(self) -> list[Impression]:
        return [imp for imp in self.dev if imp.impression_id.startswith("W")]

    def write(self, root: str | os.PathLike) -> dict[str, str]:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        paths = {
            "train_news": root / "train_news.tsv",
            "dev_news": root / "dev_news.tsv",
            "train_behaviors": root / "train_behaviors.tsv",
            "dev_behaviors": root / "dev_behaviors.tsv",
            "keywords": root / "keywords.jsonl",
            "embeddings": root / "llm_embeddings.lec",
        }
        write_news(paths["train_news"], [n for n in self.news if n.news_id not in self.cold_ids])
        write_news(paths["dev_news"], self.news)
        write_behaviors(paths["train_behaviors"], self.train)
        write_behaviors(paths["dev_behaviors"], self.dev)
        save_keywords(paths["keywords"], self.keywords)
        save_embeddings(paths["embeddings"], self.llm)
        return {k: str(v) for k, v in paths.items()}


def generate(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    T = spec.topics
    vocab = [[f"topic{t}term{j}" for j in range(spec.keywords_per_topic)] for t in range(T)]

    news, topic_of, keywords = [], {}, {}
    for i in range(spec.news):
        nid = f"N{i + 1}"
        t = i % T
        k = int(rng.integers(1, 4))
        kws = tuple(vocab[t][j] for j in rng.choice(spec.keywords_per_topic, k, replace=False))
        title = "Report on " + " and ".join(kws)
        abstract = f"A story in section {t} mentioning {', '.join(kws)}."
        news.append(NewsItem(nid, f"cat{t}", f"sub{t}", title, abstract))
        topic_of[nid] = t
        keywords[nid] = kws

    ids = [n.news_id for n in news]
    cold = set(ids[-spec.cold_news :]) if spec.cold_news else set()
    warm_by_topic = [[nid for nid in ids if topic_of[nid] == t and nid not in cold] for t in range(T)]
    cold_by_topic = [[nid for nid in ids if topic_of[nid] == t and nid in cold] for t in range(T)]

    directions = rng.standard_normal((T, spec.llm_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    llm = np.array([spec.llm_signal * directions[topic_of[nid]] * np.sqrt(spec.llm_dim) for nid in ids])
    llm += rng.standard_normal(llm.shape)
    llm_table = EmbeddingTable(ids, llm.astype(np.float32))

    def pick(pool, n):
        return [pool[j] for j in rng.choice(len(pool), n, replace=len(pool) < n)]

    def other(t):
        return int((t + 1 + rng.integers(T - 1)) % T) if T > 1 else t

    train, dev = [], []
    for u in range(spec.users):
        uid = f"U{u + 1}"
        pref = u % T
        hist = []
        for _ in range(spec.history_len):
            t = pref if rng.random() < spec.topic_purity else other(pref)
            hist.append(pick(warm_by_topic[t], 1)[0])
        hist = tuple(hist)

        def impression(imp_id, pools_pos, pools_neg):
            pos = pick(pools_pos, spec.positives)
            neg = pick(pools_neg, spec.negatives)
            cands = [(p, 1) for p in pos] + [(n, 0) for n in neg]
            order = rng.permutation(len(cands))
            return Impression(imp_id, uid, f"t{len(train) + len(dev)}", hist, tuple(cands[j] for j in order))

        for j in range(spec.train_impressions_per_user):
            train.append(impression(f"T{u + 1}-{j}", warm_by_topic[pref], warm_by_topic[other(pref)]))
        for j in range(spec.dev_impressions_per_user):
            dev.append(impression(f"W{u + 1}-{j}", warm_by_topic[pref], warm_by_topic[other(pref)]))
        if cold:
            dev.append(impression(f"C{u + 1}", cold_by_topic[pref], cold_by_topic[other(pref)]))

    return SyntheticCorpus(spec, news, topic_of, keywords, llm_table, train, dev, cold)
