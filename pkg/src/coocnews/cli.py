"""Command-line pipeline: stats, prompts, graphs, embed-graphs, train, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import embeddings as emb
from . import graphs as gr
from .config import ConfigError, PipelineConfig, load_config
from .fusion import CoocEmbeddingSet, Coverage, build_table
from .ingest import DataError, compute_overlap, compute_stats, parse_behaviors_detailed, parse_news_detailed
from .metrics import aggregate
from .node2vec import embed_graph
from .prompts import (
    ECHO_TEMPLATE,
    PLAIN_TEMPLATE,
    build_contrastive_triples,
    build_embedding_prompt,
    build_keyword_prompt,
    write_jsonl,
)

logger = logging.getLogger("coocnews")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
GRAPH_FILES = {gr.ID_ID: "id_id.tsv", gr.ITEM_ITEM_KW: "item_item_kw.tsv", gr.INTRA_ITEM_KW: "intra_item_kw.tsv"}
EMBED_FILES = {gr.ID_ID: "id_id.lec", gr.ITEM_ITEM_KW: "item_item_kw.lec", gr.INTRA_ITEM_KW: "intra_item_kw.lec"}


class UsageError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _news(cfg: PipelineConfig, *keys: str):
    """Union of the named catalogs, first occurrence wins."""
    seen = {}
    skip = cfg.getbool("run", "skip_bad_rows")
    for key in keys:
        p = cfg.path(key, required=False)
        if p is None:
            continue
        if not p.exists():
            raise FileNotFoundError(f"paths.{key}: {p} does not exist")
        for item in parse_news_detailed(p, skip).records:
            seen.setdefault(item.news_id, item)
    return list(seen.values())


def _behaviors(cfg: PipelineConfig, key: str):
    (p,) = cfg.require_existing(key)
    return parse_behaviors_detailed(p, cfg.getbool("run", "skip_bad_rows")).records


def _keywords(cfg: PipelineConfig) -> emb.KeywordMap:
    p = cfg.path("keywords", required=False)
    if p is None:
        return emb.KeywordMap()
    if not p.exists():
        raise FileNotFoundError(f"paths.keywords: {p} does not exist")
    return emb.load_keywords(p, strict=cfg.strict)


def cmd_stats(cfg: PipelineConfig) -> int:
    train_news = _news(cfg, "train_news")
    train = _behaviors(cfg, "train_behaviors")
    reports = cfg.workdir("reports")
    out = {"train": compute_stats(train_news, train).__dict__}
    dev = None
    if cfg.path("dev_behaviors", required=False) is not None:
        dev_news = _news(cfg, "dev_news")
        dev = _behaviors(cfg, "dev_behaviors")
        out["dev"] = compute_stats(dev_news, dev).__dict__
        out["combined"] = compute_stats(_news(cfg, "train_news", "dev_news"), train + dev).__dict__
    _write(reports / "stats.json", json.dumps(out, indent=2, sort_keys=True) + "\n")
    text = [f"# {out['train']['rule']}"]
    for split, s in out.items():
        text.append(f"{split}.user_count={s['user_count']}")
        text.append(f"{split}.news_count={s['news_count']}")
        text.append(f"{split}.click_count={s['click_count']}")
    _write(reports / "stats.txt", "\n".join(text) + "\n")
    if dev is not None:
        kw = _keywords(cfg)
        overlap = compute_overlap(train, dev, kw)
        _write(reports / "overlap.json", overlap.to_json())
        _write(reports / "overlap.txt", overlap.to_text())
        if kw:
            report = emb.validate_keywords(kw, _news(cfg, "train_news", "dev_news"))
            _write(reports / "keyword_validation.json", json.dumps(report.__dict__, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_prompts(cfg: PipelineConfig) -> int:
    news = _news(cfg, "train_news", "dev_news")
    out = cfg.workdir("prompts")
    eligible = [n for n in news if n.abstract.strip()]
    triples = build_contrastive_triples(news, cfg.stage_seed("triples"))[0] if eligible else []
    write_jsonl(out / "triples.jsonl", triples)
    echo = cfg.getbool("prompts", "echo")
    write_jsonl(out / "embedding_prompts.jsonl", (build_embedding_prompt(n, echo) for n in news))
    write_jsonl(out / "keyword_prompts.jsonl", (build_keyword_prompt(n) for n in news))
    _write(out / "embedding_prompt_template.txt", (ECHO_TEMPLATE if echo else PLAIN_TEMPLATE) + "\n")
    return EXIT_OK


def cmd_graphs(cfg: PipelineConfig) -> int:
    train = _behaviors(cfg, "train_behaviors")
    kw = _keywords(cfg)
    if cfg.getbool("graphs", "per_impression_histories"):
        corpus = [imp.history for imp in train]
    else:
        corpus = gr.dedup_histories(train)
    coverage = gr.CoverageReport()
    multisets = gr.accumulate(
        corpus,
        cfg.getint("graphs", "window"),
        kw,
        intra_per_distinct_item=cfg.getbool("graphs", "intra_per_distinct_item"),
        coverage=coverage,
    )
    out = cfg.workdir("graphs")
    summary = {"histories": len(corpus), **coverage.__dict__}
    for ms in multisets:
        g = gr.build_graph(ms, gr.graph_prefix(ms.kind))
        gr.write_edge_list(out / GRAPH_FILES[ms.kind], g)
        summary[ms.kind] = {"nodes": len(g.nodes), "edges": len(g.edges), "total_weight": g.total_weight()}
    _write(cfg.workdir("reports") / "graphs.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_embed_graphs(cfg: PipelineConfig) -> int:
    gdir = cfg.work_dir / "graphs"
    paths = {kind: gdir / name for kind, name in GRAPH_FILES.items()}
    for p in paths.values():
        if not p.exists():
            raise FileNotFoundError(f"graph file {p} does not exist (run `graphs` first)")
    out = cfg.workdir("embeddings")
    for (kind, p), dim in zip(paths.items(), cfg.dims):
        graph = gr.read_edge_list(p)
        table = embed_graph(graph, cfg.walk_config(kind), cfg.sgns_config(kind, dim))
        emb.save_embeddings(out / EMBED_FILES[kind], table)
        logger.info("%s: %d node vectors", kind, len(table))
    return EXIT_OK


def load_cooc(cfg: PipelineConfig) -> CoocEmbeddingSet:
    edir = cfg.work_dir / "embeddings"
    tables = []
    for kind, keep in zip(EMBED_FILES, cfg.segments):
        p = edir / EMBED_FILES[kind]
        if not keep:
            tables.append(None)
            continue
        if not p.exists():
            raise FileNotFoundError(f"node embeddings {p} do not exist (run `embed-graphs` first)")
        tables.append(emb.load_embeddings(p))
    return CoocEmbeddingSet(*tables, dims=cfg.dims)


def _model(cfg: PipelineConfig):
    from .recommender import build_model

    (p,) = cfg.require_existing("embeddings")
    llm = emb.load_embeddings(p)
    news = _news(cfg, "train_news", "dev_news")
    mcfg = cfg.model_config()
    if len(llm) and llm.dim != mcfg.d_llm:
        raise DataError(f"LLM embedding dim {llm.dim} != model.d_llm {mcfg.d_llm}")
    model = build_model(
        mcfg,
        [n.news_id for n in news],
        llm,
        load_cooc(cfg),
        _keywords(cfg),
        seed=cfg.stage_seed("init"),
        strict=cfg.getbool("fusion", "strict_llm"),
    )
    return model, news, llm


def cmd_train(cfg: PipelineConfig, checkpoint: Path | None = None) -> int:
    from .recommender import save_checkpoint, train

    model, news, llm = _model(cfg)
    tcfg = cfg.train_config()
    result = train(_behaviors(cfg, "train_behaviors"), model, tcfg, cfg.getbool("train", "freeze_projection"))
    ckpt = checkpoint or cfg.work_dir / "checkpoints" / "model"
    save_checkpoint(ckpt, model, {"seed": cfg.seed, "train_config": tcfg.__dict__ | {"betas": list(tcfg.betas)}})
    _write(
        cfg.workdir("reports") / "train_loss.tsv",
        "epoch\tloss\n" + "".join(f"{i + 1}\t{loss:.8f}\n" for i, loss in enumerate(result.epoch_losses)),
    )
    coverage = Coverage()
    table = build_table(news, llm, load_cooc(cfg), _keywords(cfg), model.projection_params(),
                        strict=cfg.getbool("fusion", "strict_llm"), coverage=coverage)
    emb.save_embeddings(cfg.workdir("embeddings") / "news_vectors.lec", table)
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig, checkpoint: Path | None = None) -> int:
    from .recommender import load_checkpoint_into, predict_many

    ckpt = checkpoint or cfg.work_dir / "checkpoints" / "model"
    if not (Path(ckpt) / "header.json").exists():
        raise FileNotFoundError(f"checkpoint {ckpt} does not exist")
    model, _, _ = _model(cfg)
    load_checkpoint_into(ckpt, model)
    dev = _behaviors(cfg, "dev_behaviors")
    scores = predict_many(dev, model, cfg.getint("train", "max_history"), strict=cfg.strict)
    report = aggregate(zip(scores, (imp.labels for imp in dev)))
    reports = cfg.workdir("reports")
    _write(reports / "metrics.json", report.to_json())
    _write(reports / "metrics.txt", report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_fetch_embeddings(cfg: PipelineConfig) -> int:
    from .prompts import PromptRecord, read_jsonl

    src = cfg.work_dir / "prompts" / "embedding_prompts.jsonl"
    if not src.exists():
        raise FileNotFoundError(f"{src} does not exist (run `prompts` first)")
    endpoint = cfg.get("embedding_service", "endpoint")
    if not endpoint:
        raise ConfigError("embedding_service.endpoint is not set")
    prompts = [PromptRecord(r["news_id"], r["prompt"]) for r in read_jsonl(src)]
    table = emb.fetch_embeddings(
        endpoint,
        prompts,
        batch_size=cfg.getint("embedding_service", "batch_size"),
        attempts=cfg.getint("embedding_service", "attempts"),
        token=cfg.get("embedding_service", "token") or None,
        parallelism=max(1, cfg.getint("run", "threads")),
    )
    emb.save_embeddings(cfg.path("embeddings"), table)
    return EXIT_OK


def cmd_synth(cfg: PipelineConfig, out_dir: Path) -> int:
    from .synthetic import SyntheticSpec, generate

    corpus = generate(SyntheticSpec(seed=cfg.seed))
    paths = corpus.write(out_dir)
    print(json.dumps(paths, indent=2))
    return EXIT_OK


COMMANDS = {
    "stats": cmd_stats,
    "prompts": cmd_prompts,
    "graphs": cmd_graphs,
    "embed-graphs": cmd_embed_graphs,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "fetch-embeddings": cmd_fetch_embeddings,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (INI)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
    common.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    common.add_argument("--threads", type=int, help="worker threads; 1 guarantees bit-reproducibility")
    common.add_argument("--strict", action="store_true", default=None, help="fail on unresolvable ids / keyword overflow")
    common.add_argument("--skip-bad-rows", action="store_true", default=None, help="skip and count malformed input rows")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="coocnews", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name in ("train", "evaluate"):
            p.add_argument("--checkpoint", type=Path, help="checkpoint directory")
    p = sub.add_parser("synth", parents=[common], help="write the synthetic planted-preference corpus")
    p.add_argument("out_dir", type=Path)
    return parser


def _configure_threads(n: int) -> None:
    import torch

    n = n if n > 0 else (os.cpu_count() or 1)
    torch.set_num_threads(n)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s %(message)s")
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.threads is not None:
        overrides.append(f"run.threads={args.threads}")
    if args.strict:
        overrides.append("run.strict=true")
    if args.skip_bad_rows:
        overrides.append("run.skip_bad_rows=true")
    try:
        cfg = load_config(args.config, overrides)
        _configure_threads(cfg.getint("run", "threads"))
        if args.command == "synth":
            return cmd_synth(cfg, args.out_dir)
        fn = COMMANDS[args.command]
        if args.command in ("train", "evaluate"):
            return fn(cfg, args.checkpoint)
        return fn(cfg)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            print(f"error[usage]: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error[data]: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, KeyError) as exc:
        print(f"error[data]: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"error[runtime]: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
