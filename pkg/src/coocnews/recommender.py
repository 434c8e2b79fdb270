"""NRMS-style user model over fused news vectors, trained with sampled-softmax click prediction."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .embeddings import EmbeddingTable, load_binary, save_binary
from .fusion import CoocEmbeddingSet, ProjectionParams, cooc_matrix, llm_matrix
from .ingest import Impression

logger = logging.getLogger(__name__)


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_llm: int = 4096
    d_out: int = 300
    heads: int = 15
    head_dim: int = 20
    attn_dim: int = 200

    def __post_init__(self):
        if self.heads * self.head_dim != self.d_out:
            raise ValueError(f"heads * head_dim = {self.heads * self.head_dim} != d_out {self.d_out}")


@dataclass(frozen=True)
class TrainConfig:
    negatives: int = 4
    batch_size: int = 512
    learning_rate: float = 2e-4
    epochs: int = 5
    max_history: int = 50
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8


class UserEncoder(nn.Module):
    """Multi-head self-attention over clicked-news vectors followed by additive attention pooling.

    No positional encoding, so the output ignores history order.
    """

    def __init__(self, cfg: ModelConfig, generator: torch.Generator | None = None):
        super().__init__()
        h, e, d, a = cfg.heads, cfg.head_dim, cfg.d_out, cfg.attn_dim
        self.cfg = cfg
        self.w_q = nn.Parameter(torch.empty(h, e, d))
        self.w_k = nn.Parameter(torch.empty(h, e, d))
        self.w_v = nn.Parameter(torch.empty(h, e, d))
        self.att_proj = nn.Parameter(torch.empty(a, d))
        self.att_query = nn.Parameter(torch.empty(a))
        bound = math.sqrt(6.0 / (d + e))
        with torch.no_grad():
            for w in (self.w_q, self.w_k, self.w_v):
                w.uniform_(-bound, bound, generator=generator)
            self.att_proj.uniform_(-math.sqrt(6.0 / (d + a)), math.sqrt(6.0 / (d + a)), generator=generator)
            self.att_query.uniform_(-0.1, 0.1, generator=generator)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """``x`` (B, L, D) clicked vectors, ``mask`` (B, L) true for real positions -> (B, D)."""
        B, L, _ = x.shape
        q = torch.einsum("bld,hed->bhle", x, self.w_q)
        k = torch.einsum("bld,hed->bhle", x, self.w_k)
        v = torch.einsum("bld,hed->bhle", x, self.w_v)
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.cfg.head_dim)
        key_mask = mask[:, None, None, :]
        logits = logits.masked_fill(~key_mask, float("-inf"))
        # rows with no valid key (empty history) would be all -inf
        logits = torch.where(key_mask.any(-1, keepdim=True), logits, torch.zeros_like(logits))
        att = torch.softmax(logits, dim=-1)
        ctx = (att @ v).permute(0, 2, 1, 3).reshape(B, L, -1)
        pool_logits = torch.tanh(ctx @ self.att_proj.T) @ self.att_query
        pool_logits = pool_logits.masked_fill(~mask, float("-inf"))
        has_any = mask.any(-1, keepdim=True)
        pool_logits = torch.where(has_any, pool_logits, torch.zeros_like(pool_logits))
        w = torch.softmax(pool_logits, dim=-1) * mask
        return (w[:, :, None] * ctx).sum(1)


class NewsRecModel(nn.Module):
    """Fused news vectors (trainable projection of frozen LLM vectors + frozen co-occurrence vectors) and a user encoder.

    Row 0 of the feature buffers is a padding/unknown row that always maps to the zero vector.
    """

    def __init__(
        self,
        cfg: ModelConfig,
        news_ids: Sequence[str],
        llm: np.ndarray,
        cooc: np.ndarray,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.cfg = cfg
        self.news_ids = list(news_ids)
        self.index = {nid: i + 1 for i, nid in enumerate(self.news_ids)}
        gen = torch.Generator().manual_seed(seed)
        self.projection = nn.Linear(cfg.d_llm, cfg.d_out)
        bound = 1.0 / math.sqrt(cfg.d_llm)
        with torch.no_grad():
            self.projection.weight.uniform_(-bound, bound, generator=gen)
            self.projection.bias.uniform_(-bound, bound, generator=gen)
        self.user_encoder = UserEncoder(cfg, gen)
        n = len(self.news_ids)
        llm_buf = np.zeros((n + 1, cfg.d_llm))
        cooc_buf = np.zeros((n + 1, cfg.d_out))
        if n:
            llm_buf[1:] = llm
            cooc_buf[1:] = cooc
        self.register_buffer("llm", torch.tensor(llm_buf, dtype=dtype))
        self.register_buffer("cooc", torch.tensor(cooc_buf, dtype=dtype))
        self.to(dtype)

    def lookup(self, ids: Sequence[str], strict: bool = False) -> list[int]:
        if strict:
            missing = [nid for nid in ids if nid not in self.index]
            if missing:
                raise KeyError(f"unresolvable news ids: {missing[:20]}")
        return [self.index.get(nid, 0) for nid in ids]

    def news_vectors(self, idx: torch.Tensor) -> torch.Tensor:
        vec = self.projection(self.llm[idx]) + self.cooc[idx]
        return vec * (idx != 0).unsqueeze(-1).to(vec.dtype)

    def user_vectors(self, hist_idx: torch.Tensor) -> torch.Tensor:
        return self.user_encoder(self.news_vectors(hist_idx), hist_idx != 0)

    def forward(self, hist_idx: torch.Tensor, cand_idx: torch.Tensor) -> torch.Tensor:
        """(B, L) history and (B, C) candidate indices -> (B, C) click logits."""
        user = self.user_vectors(hist_idx)
        cand = self.news_vectors(cand_idx)
        return torch.einsum("bd,bcd->bc", user, cand)

    def projection_params(self) -> ProjectionParams:
        return ProjectionParams(
            self.projection.weight.detach().double().numpy().copy(), self.projection.bias.detach().double().numpy().copy()
        )


def score(user_vec, cand_vec) -> float:
    u = np.asarray(user_vec, dtype=np.float64)
    c = np.asarray(cand_vec, dtype=np.float64)
    if u.shape != c.shape:
        raise ValueError(f"length mismatch {u.shape} vs {c.shape}")
    return float(u @ c)


def encode_user(clicked_vecs, encoder: UserEncoder) -> np.ndarray:
    """Single-history convenience wrapper; an empty history maps to the zero vector."""
    d = encoder.cfg.d_out
    x = np.asarray(clicked_vecs, dtype=np.float64) if len(clicked_vecs) else np.zeros((0, d))
    if x.ndim != 2 or x.shape[1] != d:
        raise ValueError(f"clicked vectors must have length {d}")
    if len(x) == 0:
        return np.zeros(d)
    dtype = encoder.w_q.dtype
    with torch.no_grad():
        t = torch.tensor(x, dtype=dtype)[None]
        out = encoder(t, torch.ones(1, len(x), dtype=torch.bool))
    return out[0].double().numpy()


def build_model(
    cfg: ModelConfig,
    news_ids: Sequence[str],
    llm_table: EmbeddingTable,
    cooc: CoocEmbeddingSet,
    keyword_map: Mapping[str, Sequence[str]],
    seed: int = 0,
    strict: bool = True,
    dtype: torch.dtype = torch.float32,
) -> NewsRecModel:
    ids = list(dict.fromkeys(news_ids))
    llm = llm_matrix(ids, llm_table, cfg.d_llm, strict)
    cm = cooc_matrix(ids, cooc, keyword_map)
    if cm.shape[0] and cm.shape[1] != cfg.d_out:
        raise ValueError(f"co-occurrence dim {cm.shape[1]} != d_out {cfg.d_out}")
    return NewsRecModel(cfg, ids, llm, cm, seed=seed, dtype=dtype)


def _pad(rows: Sequence[Sequence[int]], width: int | None = None) -> torch.Tensor:
    width = max((len(r) for r in rows), default=0) if width is None else width
    out = torch.zeros(len(rows), max(width, 1), dtype=torch.long)
    for i, r in enumerate(rows):
        if r:
            out[i, : len(r)] = torch.tensor(r, dtype=torch.long)
    return out


@dataclass
class TrainingSamples:
    """Flattened (history, [positive, negatives...]) groups; target class is always 0."""

    histories: list[list[int]]
    groups: list[list[int]]


def make_samples(
    impressions: Sequence[Impression], model: NewsRecModel, cfg: TrainConfig, rng: np.random.Generator
) -> TrainingSamples:
    n_news = len(model.news_ids)
    hists, groups = [], []
    for imp in impressions:
        hist = model.lookup(imp.history[-cfg.max_history :] if cfg.max_history else imp.history)
        hist = [i for i in hist if i]
        pos = [nid for nid, y in imp.candidates if y == 1]
        neg = [model.index[nid] for nid, y in imp.candidates if y == 0 and nid in model.index]
        for p in pos:
            if p not in model.index:
                continue
            if len(neg) >= cfg.negatives:
                chosen = [neg[i] for i in rng.choice(len(neg), cfg.negatives, replace=False)]
            else:
                chosen = list(neg)
                while len(chosen) < cfg.negatives:
                    chosen.append(int(rng.integers(1, n_news + 1)))
            hists.append(hist)
            groups.append([model.index[p]] + chosen)
    return TrainingSamples(hists, groups)


def batch_loss(model: NewsRecModel, hists: Sequence[Sequence[int]], groups: Sequence[Sequence[int]]) -> torch.Tensor:
    logits = model(_pad(hists), torch.tensor(groups, dtype=torch.long))
    return F.cross_entropy(logits, torch.zeros(len(groups), dtype=torch.long))


@dataclass
class TrainResult:
    model: NewsRecModel
    epoch_losses: list[float] = field(default_factory=list)


def train(
    impressions: Sequence[Impression], model: NewsRecModel, cfg: TrainConfig, freeze_projection: bool = False
) -> TrainResult:
    """Adam on cross-entropy over (1 positive + K negatives) groups.

    Negatives come from the impression's unclicked candidates, topped up with
    uniform catalog draws. Deterministic for a fixed seed in a single thread.
    """
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    if freeze_projection:
        model.projection.requires_grad_(False)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.learning_rate, betas=cfg.betas, eps=cfg.eps)
    result = TrainResult(model)
    any_pos = any(y == 1 for imp in impressions for _, y in imp.candidates)
    if not any_pos:
        raise TrainingError("no positive examples in training impressions")
    model.train()
    for epoch in range(cfg.epochs):
        samples = make_samples(impressions, model, cfg, rng)
        if not samples.groups:
            raise TrainingError("no resolvable positive examples")
        order = rng.permutation(len(samples.groups))
        total, n = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = batch_loss(model, [samples.histories[i] for i in idx], [samples.groups[i] for i in idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            n += len(idx)
        result.epoch_losses.append(total / n)
        logger.info("epoch %d loss %.6f", epoch + 1, total / n)
    model.eval()
    return result


def predict(impression: Impression, model: NewsRecModel, max_history: int = 50, strict: bool = False) -> list[tuple[str, float]]:
    """Scores for every candidate, input order preserved. Unknown ids score against the zero vector."""
    return list(zip(impression.candidate_ids, predict_many([impression], model, max_history, strict)[0]))


def predict_many(
    impressions: Sequence[Impression], model: NewsRecModel, max_history: int = 50, strict: bool = False, batch_size: int = 256
) -> list[list[float]]:
    out: list[list[float]] = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(impressions), batch_size):
            chunk = impressions[start : start + batch_size]
            hists = [[i for i in model.lookup(imp.history[-max_history:] if max_history else imp.history, strict) if i] for imp in chunk]
            cands = [model.lookup(imp.candidate_ids, strict) for imp in chunk]
            width = max(len(c) for c in cands)
            logits = model(_pad(hists), _pad(cands, width))
            for c, row in zip(cands, logits.double().numpy()):
                out.append([float(x) for x in row[: len(c)]])
    return out


TRAINABLE = ("projection.weight", "projection.bias", "user_encoder.w_q", "user_encoder.w_k", "user_encoder.w_v",
             "user_encoder.att_proj", "user_encoder.att_query")


def save_checkpoint(path: str | os.PathLike, model: NewsRecModel, extra: Mapping | None = None) -> None:
    """Directory with ``header.json`` (shapes, config) and one binary table per tensor (rows = leading dims)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    state = model.state_dict()
    shapes = {}
    for name in TRAINABLE:
        t = state[name].detach().cpu().float().numpy()
        shapes[name] = list(t.shape)
        mat = t.reshape(-1, t.shape[-1]) if t.ndim > 1 else t.reshape(1, -1)
        save_binary(path / f"{name}.lec", EmbeddingTable([str(i) for i in range(len(mat))], mat))
    header = {"model_config": asdict(model.cfg), "shapes": shapes, **(dict(extra) if extra else {})}
    (path / "header.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_checkpoint_header(path: str | os.PathLike) -> dict:
    return json.loads((Path(path) / "header.json").read_text(encoding="utf-8"))


def load_checkpoint_into(path: str | os.PathLike, model: NewsRecModel) -> dict:
    path = Path(path)
    header = read_checkpoint_header(path)
    state = model.state_dict()
    with torch.no_grad():
        for name, shape in header["shapes"].items():
            mat = load_binary(path / f"{name}.lec").matrix.reshape(shape)
            if tuple(state[name].shape) != tuple(shape):
                raise ValueError(f"checkpoint tensor {name} shape {shape} != model {tuple(state[name].shape)}")
            state[name].copy_(torch.tensor(mat, dtype=state[name].dtype))
    return header
