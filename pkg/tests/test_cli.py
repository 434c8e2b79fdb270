import json

import numpy as np
import pytest

from coocnews.cli import main
from coocnews.config import load_config, write_config
from coocnews.embeddings import EmbeddingTable, load_embeddings, save_embeddings
from coocnews.recommender import TRAINABLE
from coocnews.synthetic import SyntheticSpec, generate

from conftest import write_lines

FAST = {
    "node2vec": {"walk_length": 8, "walks_per_node": 2, "epochs": 1},
    "fusion": {"dims": "4,4,4"},
    "model": {"d_llm": 8, "heads": 2, "head_dim": 6, "attn_dim": 4},
    "train": {"epochs": 2, "batch_size": 32, "learning_rate": 0.001},
}


def config(tmp_path, paths, extra=None):
    values = {"paths": {"work_dir": str(tmp_path / "work"), **paths}}
    for section, items in (extra or {}).items():
        values.setdefault(section, {}).update(items)
    cfg = tmp_path / "run.ini"
    write_config(cfg, values)
    return str(cfg)


def run(cfg, *args):
    return main([args[0], "--config", cfg, "--threads", "1", *args[1:]])


@pytest.fixture
def small_corpus(tmp_path):
    spec = SyntheticSpec(users=16, news=60, cold_news=6, history_len=5, llm_dim=8)
    paths = generate(spec).write(tmp_path / "data")
    return config(tmp_path, paths, FAST)


def test_stats_fixture(tmp_path, news_rows, behavior_rows):
    news = write_lines(tmp_path / "news.tsv", news_rows)
    beh = write_lines(tmp_path / "beh.tsv", behavior_rows)
    cfg = config(tmp_path, {"train_news": str(news), "train_behaviors": str(beh)})
    assert run(cfg, "stats") == 0
    stats = json.loads((tmp_path / "work/reports/stats.json").read_text())["train"]
    assert (stats["user_count"], stats["news_count"], stats["click_count"]) == (6, 3, 12)
    first = (tmp_path / "work/reports/stats.txt").read_bytes()
    assert run(cfg, "stats") == 0
    assert (tmp_path / "work/reports/stats.txt").read_bytes() == first


def test_stats_missing_behaviors(tmp_path, news_rows, capsys):
    news = write_lines(tmp_path / "news.tsv", news_rows)
    cfg = config(tmp_path, {"train_news": str(news), "train_behaviors": str(tmp_path / "nope.tsv")})
    assert run(cfg, "stats") == 2
    err = capsys.readouterr().err
    assert err.startswith("error[data]:") and "nope.tsv" in err and err.count("\n") == 1


def test_stats_bad_row_strict_and_skip(tmp_path, news_rows, behavior_rows):
    news = write_lines(tmp_path / "news.tsv", news_rows)
    beh = write_lines(tmp_path / "beh.tsv", behavior_rows + ["11\tU7\tt\tN1\tN2-7"])
    cfg = config(tmp_path, {"train_news": str(news), "train_behaviors": str(beh)})
    assert run(cfg, "stats") == 2
    assert run(cfg, "stats", "--skip-bad-rows") == 0


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["stats", "--set", "nodot=1"]) == 1
    assert capsys.readouterr().err.startswith("error[usage]:")


def test_prompts(tmp_path, news_rows):
    news = write_lines(tmp_path / "news.tsv", news_rows)
    cfg = config(tmp_path, {"train_news": str(news)})
    assert run(cfg, "prompts") == 0
    out = tmp_path / "work/prompts"
    lines = {f: len((out / f).read_text().splitlines()) for f in ("triples.jsonl", "embedding_prompts.jsonl", "keyword_prompts.jsonl")}
    assert lines == {"triples.jsonl": 2, "embedding_prompts.jsonl": 3, "keyword_prompts.jsonl": 3}
    first = (out / "triples.jsonl").read_bytes()
    assert run(cfg, "prompts") == 0
    assert (out / "triples.jsonl").read_bytes() == first


def test_prompts_empty_catalog(tmp_path):
    news = write_lines(tmp_path / "news.tsv", [])
    cfg = config(tmp_path, {"train_news": str(news)})
    assert run(cfg, "prompts") == 0
    assert (tmp_path / "work/prompts/triples.jsonl").read_text() == ""


def test_graphs_two_item_example(tmp_path):
    beh = write_lines(tmp_path / "beh.tsv", ["1\tU1\tt\tNews2 News3\tNews4-1"])
    kw = tmp_path / "kw.jsonl"
    kw.write_text('{"news_id": "News2", "keywords": ["keyword1"]}\n{"news_id": "News3", "keywords": ["keyword4", "keyword5"]}\n')
    cfg = config(tmp_path, {"train_behaviors": str(beh), "keywords": str(kw)})
    assert run(cfg, "graphs") == 0
    g = tmp_path / "work/graphs"
    assert (g / "id_id.tsv").read_text() == "id:News2\tid:News3\t1\n"
    assert (g / "item_item_kw.tsv").read_text() == "kw:keyword1\tkw:keyword4\t1\nkw:keyword1\tkw:keyword5\t1\n"
    assert (g / "intra_item_kw.tsv").read_text() == "kw:keyword4\tkw:keyword5\t1\n"


def test_graphs_empty_corpus(tmp_path):
    beh = write_lines(tmp_path / "beh.tsv", [])
    cfg = config(tmp_path, {"train_behaviors": str(beh)})
    assert run(cfg, "graphs") == 0
    for name in ("id_id", "item_item_kw", "intra_item_kw"):
        assert (tmp_path / f"work/graphs/{name}.tsv").read_text() == ""


def test_embed_graphs_missing_graph(tmp_path):
    cfg = config(tmp_path, {})
    assert run(cfg, "embed-graphs") == 2


def test_embed_graphs_isolated_nodes(tmp_path):
    g = tmp_path / "work/graphs"
    g.mkdir(parents=True)
    (g / "id_id.tsv").write_text("id:A\tid:B\t2\n")
    (g / "item_item_kw.tsv").write_text("")
    (g / "intra_item_kw.tsv").write_text("kw:x\tkw:y\t1\nkw:z\tkw:w\t1\n")
    cfg = config(tmp_path, {}, FAST)
    assert run(cfg, "embed-graphs") == 0
    e = tmp_path / "work/embeddings"
    assert sorted(load_embeddings(e / "id_id.lec").ids) == ["id:A", "id:B"]
    assert len(load_embeddings(e / "item_item_kw.lec")) == 0
    assert len(load_embeddings(e / "intra_item_kw.lec")) == 4


def test_full_pipeline_small(small_corpus, tmp_path, capsys):
    for cmd in ("stats", "graphs", "embed-graphs", "train", "evaluate"):
        assert run(small_corpus, cmd) == 0, cmd
    work = tmp_path / "work"
    for f in ("reports/metrics.json", "reports/train_loss.tsv", "embeddings/news_vectors.lec",
              "checkpoints/model/header.json", "reports/overlap.txt"):
        assert (work / f).exists(), f
    assert "nDCG@10" in capsys.readouterr().out


def test_train_zero_lr_keeps_init(small_corpus, tmp_path):
    for cmd in ("graphs", "embed-graphs"):
        assert run(small_corpus, cmd) == 0
    ck = tmp_path / "work/checkpoints"
    assert run(small_corpus, "train", "--set", "train.learning_rate=0", "--checkpoint", str(ck / "a")) == 0
    assert run(small_corpus, "train", "--set", "train.epochs=0", "--checkpoint", str(ck / "b")) == 0
    for name in TRAINABLE:
        assert (ck / "a" / f"{name}.lec").read_bytes() == (ck / "b" / f"{name}.lec").read_bytes()


def test_evaluate_missing_checkpoint(small_corpus, tmp_path):
    assert run(small_corpus, "evaluate", "--checkpoint", str(tmp_path / "absent")) == 2


def test_train_missing_llm_vectors_names_ids(small_corpus, tmp_path, capsys):
    for cmd in ("graphs", "embed-graphs"):
        assert run(small_corpus, cmd) == 0
    cfg = load_config(small_corpus)
    full = load_embeddings(cfg.path("embeddings"))
    partial = EmbeddingTable(full.ids[:-2], np.asarray(full.matrix[:-2]))
    save_embeddings(tmp_path / "partial.lec", partial)
    capsys.readouterr()
    assert run(small_corpus, "train", "--set", f"paths.embeddings={tmp_path / 'partial.lec'}") == 2
    err = capsys.readouterr().err
    assert full.ids[-1] in err and full.ids[-2] in err
