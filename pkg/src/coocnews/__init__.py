"""News recommendation from click co-occurrence graphs and LLM text embeddings."""

from .embeddings import EmbeddingTable, KeywordMap, load_embeddings, load_keywords, save_embeddings
from .fusion import CoocEmbeddingSet, ProjectionParams, fuse
from .graphs import WeightedGraph, accumulate, build_graph, extract_pairs
from .ingest import Impression, NewsItem, compute_overlap, compute_stats, parse_behaviors, parse_news
from .metrics import auc, mrr, ndcg_at

__version__ = "0.1.0"
