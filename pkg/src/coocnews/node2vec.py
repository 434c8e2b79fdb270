"""node2vec: second-order biased random walks and skip-gram with negative sampling."""

from __future__ import annotations

import bisect
import logging
import math
from collections import Counter
from dataclasses import dataclass
from itertools import accumulate as running_sum
from typing import Mapping, Sequence

import numba
import numpy as np

from .embeddings import EmbeddingTable
from .graphs import WeightedGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WalkConfig:
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 40
    walks_per_node: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_length < 2 or self.walks_per_node < 1:
            raise ValueError("walk_length >= 2 and walks_per_node >= 1 required")


@dataclass(frozen=True)
class SgnsConfig:
    dim: int = 100
    context_window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.context_window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("context_window, negatives and epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


def transition_weights(
    adj: Mapping[str, Mapping[str, float]], prev: str | None, curr: str, p: float, q: float
) -> dict[str, float]:
    """Unnormalized weights for stepping from ``curr`` having arrived from ``prev``.

    ``adj`` is an adjacency map (see :meth:`WeightedGraph.adjacency`).
    """
    nbrs = adj.get(curr, {})
    if prev is None:
        return {x: float(w) for x, w in nbrs.items()}
    prev_nbrs = adj.get(prev, {})
    out = {}
    for x, w in nbrs.items():
        if x == prev:
            out[x] = w / p
        elif x in prev_nbrs:
            out[x] = float(w)
        else:
            out[x] = w / q
    return out


class _Sampler:
    """Cumulative-weight tables for first-order and second-order steps, built lazily."""

    def __init__(self, adj: Mapping[str, Mapping[str, float]], p: float, q: float):
        self.adj = adj
        self.p, self.q = p, q
        self._cache: dict[tuple[str | None, str], tuple[list[str], list[float]]] = {}

    def table(self, prev: str | None, curr: str) -> tuple[list[str], list[float]]:
        key = (prev, curr)
        hit = self._cache.get(key)
        if hit is None:
            w = transition_weights(self.adj, prev, curr, self.p, self.q)
            nodes = list(w)
            hit = (nodes, list(running_sum(w[x] for x in nodes)))
            self._cache[key] = hit
        return hit

    def step(self, prev: str | None, curr: str, u: float) -> str | None:
        nodes, cum = self.table(prev, curr)
        if not nodes:
            return None
        i = bisect.bisect_right(cum, u * cum[-1])
        return nodes[min(i, len(nodes) - 1)]


def walk_seed(seed: int, start_index: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, round_index, start_index])


def generate_walks(graph: WeightedGraph, cfg: WalkConfig) -> list[list[str]]:
    """``walks_per_node`` walks from every node (sorted order), round-major.

    Each walk owns a generator derived from ``(seed, round, start)``, so the
    result does not depend on how walks are scheduled.
    """
    adj = graph.adjacency()
    nodes = sorted(adj)
    sampler = _Sampler(adj, cfg.p, cfg.q)
    walks = []
    for r in range(cfg.walks_per_node):
        for s, start in enumerate(nodes):
            rng = walk_seed(cfg.seed, s, r)
            draws = rng.random(cfg.walk_length - 1)
            walk = [start]
            prev = None
            for u in draws:
                nxt = sampler.step(prev, walk[-1], float(u))
                if nxt is None:
                    break
                prev = walk[-1]
                walk.append(nxt)
            walks.append(walk)
    return walks


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def pair_loss(center: np.ndarray, context: np.ndarray, negs: np.ndarray) -> float:
    """Negative SGNS objective for one (center, context) pair and ``negs`` (k x dim) noise vectors."""
    return float(-log_sigmoid(center @ context) - np.sum(log_sigmoid(-(negs @ center))))


def pair_grads(center: np.ndarray, context: np.ndarray, negs: np.ndarray):
    """Gradients of :func:`pair_loss` w.r.t. center, context and each noise vector."""
    g_pos = _sigmoid(center @ context) - 1.0
    g_neg = _sigmoid(negs @ center)
    d_center = g_pos * context + g_neg @ negs
    d_context = g_pos * center
    d_negs = g_neg[:, None] * center[None, :]
    return d_center, d_context, d_negs


def context_pairs(walks: Sequence[Sequence[int]], window: int) -> np.ndarray:
    """All (center, context) index pairs at most ``window`` positions apart within a walk.

    Grouped by offset (-window..-1, 1..window), then by position.
    """
    if not walks:
        return np.zeros((0, 2), dtype=np.int64)
    flat = np.concatenate([np.asarray(w, dtype=np.int64) for w in walks])
    owner = np.repeat(np.arange(len(walks)), [len(w) for w in walks])
    chunks = []
    for off in [*range(-window, 0), *range(1, window + 1)]:
        a = abs(off)
        if a >= len(flat):
            continue
        if off > 0:
            c, o, same = flat[:-a], flat[a:], owner[:-a] == owner[a:]
        else:
            c, o, same = flat[a:], flat[:-a], owner[a:] == owner[:-a]
        chunks.append(np.stack([c[same], o[same]], axis=1))
    return np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)


def sgd_step(w_in: np.ndarray, w_out: np.ndarray, c, o, negs, lr: float) -> float:
    """One in-place SGD update on a batch of pairs; returns the summed pre-update loss.

    ``c``/``o`` are center/context rows (b,), ``negs`` noise rows (b, k).
    Reference implementation of the update :func:`_sgd_epoch` applies pair by pair.
    """
    u = w_in[c]
    v_o = w_out[o]
    v_n = w_out[negs]
    s_pos = np.einsum("bd,bd->b", u, v_o)
    s_neg = np.einsum("bkd,bd->bk", v_n, u)
    loss = float(-log_sigmoid(s_pos).sum() - log_sigmoid(-s_neg).sum())
    g_pos = _sigmoid(s_pos) - 1.0
    g_neg = _sigmoid(s_neg)
    d_u = g_pos[:, None] * v_o + np.einsum("bk,bkd->bd", g_neg, v_n)
    d_o = g_pos[:, None] * u
    d_n = g_neg[:, :, None] * u[:, None, :]
    np.add.at(w_in, c, -lr * d_u)
    np.add.at(w_out, o, -lr * d_o)
    np.add.at(w_out, np.reshape(negs, -1), -lr * d_n.reshape(-1, w_in.shape[1]))
    return loss


@numba.njit(cache=True)
def _log1pexp(x):
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@numba.njit(cache=True)
def _sgd_epoch(w_in, w_out, pairs, order, negs, lrs):
    """Per-pair SGD over ``pairs[order]``; each update uses pre-update values of all rows it touches."""
    d = w_in.shape[1]
    k = negs.shape[1]
    loss = 0.0
    d_u = np.empty(d)
    u = np.empty(d)
    for t in range(order.shape[0]):
        lr = lrs[t]
        c = pairs[order[t], 0]
        o = pairs[order[t], 1]
        for j in range(d):
            u[j] = w_in[c, j]
        s = 0.0
        for j in range(d):
            s += u[j] * w_out[o, j]
        loss += _log1pexp(-s)
        g = 1.0 / (1.0 + math.exp(-s)) - 1.0
        for j in range(d):
            d_u[j] = g * w_out[o, j]
        g_negs = np.empty(k)
        for m in range(k):
            n = negs[t, m]
            sn = 0.0
            for j in range(d):
                sn += u[j] * w_out[n, j]
            loss += _log1pexp(sn)
            g_negs[m] = 1.0 / (1.0 + math.exp(-sn))
            for j in range(d):
                d_u[j] += g_negs[m] * w_out[n, j]
        for j in range(d):
            w_out[o, j] -= lr * g * u[j]
        for m in range(k):
            n = negs[t, m]
            for j in range(d):
                w_out[n, j] -= lr * g_negs[m] * u[j]
        for j in range(d):
            w_in[c, j] -= lr * d_u[j]
    return loss


@dataclass
class SgnsResult:
    embeddings: EmbeddingTable
    epoch_losses: list[float]
    context: np.ndarray


def train_sgns(walks: Sequence[Sequence[str]], cfg: SgnsConfig, vocab: Sequence[str] | None = None) -> SgnsResult:
    """Skip-gram with negative sampling over node sequences.

    Classic per-pair SGD: pairs are shuffled each epoch, the learning rate
    decays linearly to ``min_learning_rate``, noise nodes follow unigram
    counts to the 0.75 power. Returns the center ("input") vectors. ``vocab``
    adds nodes that never appear in a walk; they keep their initial vectors.
    """
    counts = Counter(tok for walk in walks for tok in walk)
    tokens = sorted(set(counts) | set(vocab or ()))
    if not tokens:
        raise ValueError("empty vocabulary")
    index = {t: i for i, t in enumerate(tokens)}
    rng = np.random.default_rng(cfg.seed)
    V, d = len(tokens), cfg.dim
    w_in = (rng.random((V, d)) - 0.5) / d
    w_out = np.zeros((V, d))

    freq = np.array([counts.get(t, 0) for t in tokens], dtype=np.float64) ** 0.75
    if freq.sum() == 0:
        freq[:] = 1.0
    noise_cum = np.cumsum(freq / freq.sum())
    noise_cum[-1] = 1.0

    pairs = context_pairs([[index[t] for t in walk] for walk in walks], cfg.context_window)
    n_pairs = len(pairs)
    losses: list[float] = []
    total_steps = cfg.epochs * n_pairs
    for epoch in range(cfg.epochs if n_pairs else 0):
        order = rng.permutation(n_pairs)
        negs = np.minimum(np.searchsorted(noise_cum, rng.random((n_pairs, cfg.negatives)), side="right"), V - 1)
        progress = (epoch * n_pairs + np.arange(n_pairs)) / total_steps
        lrs = np.maximum(cfg.min_learning_rate, cfg.learning_rate * (1.0 - progress))
        if cfg.learning_rate == 0:
            lrs[:] = 0.0
        losses.append(_sgd_epoch(w_in, w_out, pairs, order, negs, lrs) / n_pairs)
    return SgnsResult(EmbeddingTable(tokens, w_in.astype(np.float32), d), losses, w_out)


def embed_graph(graph: WeightedGraph, walk_cfg: WalkConfig, sgns_cfg: SgnsConfig) -> EmbeddingTable:
    """Walks + SGNS. Isolated or walk-less nodes still receive (initial) vectors."""
    if not graph.nodes:
        return EmbeddingTable([], np.zeros((0, sgns_cfg.dim), np.float32), sgns_cfg.dim)
    walks = generate_walks(graph, walk_cfg)
    return train_sgns(walks, sgns_cfg, vocab=sorted(graph.nodes)).embeddings
