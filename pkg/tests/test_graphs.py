import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coocnews.graphs import (
    INTRA_ITEM_KW,
    ITEM_ITEM_KW,
    ID_ID,
    PairMultiset,
    accumulate,
    build_graph,
    dedup_histories,
    extract_pairs,
    read_edge_list,
    write_edge_list,
)
from coocnews.ingest import Impression

from oracles import brute_force_pairs

TWO_ITEM_KW = {"News2": ["keyword1"], "News3": ["keyword4", "keyword5"]}


def test_two_item_window_example():
    ids, cross, intra = extract_pairs(["News2", "News3"], 2, TWO_ITEM_KW)
    assert dict(ids.counts) == {("News2", "News3"): 1}
    assert dict(cross.counts) == {("keyword1", "keyword4"): 1, ("keyword1", "keyword5"): 1}
    assert dict(intra.counts) == {("keyword4", "keyword5"): 1}


def test_single_item_history():
    ids, cross, intra = extract_pairs(["News3"], 2, TWO_ITEM_KW)
    assert not ids.counts and not cross.counts
    assert dict(intra.counts) == {("keyword4", "keyword5"): 1}


def test_window_below_two():
    with pytest.raises(ValueError):
        extract_pairs(["a", "b"], 1, {})


def test_equal_consecutive_ids_skip():
    ids, cross, _ = extract_pairs(["A", "A", "B"], 2, {"A": ["x", "y"], "B": ["z"]})
    assert dict(ids.counts) == {("A", "B"): 1}
    assert sum(cross.counts.values()) == 2


def _random_case(rng, max_len=12, windows=(2, 3, 4)):
    news = [f"N{i}" for i in range(8)]
    vocab = [f"k{i}" for i in range(10)]
    kw = {n: rng.sample(vocab, rng.randint(1, 3)) for n in news[:6]}
    hist = [rng.choice(news) for _ in range(rng.randint(0, max_len))]
    return hist, rng.choice(windows), kw


def test_random_history_window3_brute_force():
    rng = random.Random(3)
    hist = [rng.choice("ABCDEF") for _ in range(6)]
    kw = {c: [c.lower() + "1", c.lower() + "2"][: rng.randint(1, 2)] for c in "ABCDEF"}
    got = extract_pairs(hist, 3, kw)
    want = brute_force_pairs(hist, 3, kw)
    for g, w in zip(got, want):
        assert dict(g.counts) == dict(w)


def test_accumulate_doubles_and_empty():
    h = ["A", "B", "C"]
    kw = {"A": ["x"], "B": ["y", "z"], "C": ["x"]}
    one = accumulate([h], 2, kw)
    two = accumulate([h, h], 2, kw)
    for a, b in zip(one, two):
        assert {k: 2 * v for k, v in a.counts.items()} == dict(b.counts)
    assert all(len(ms) == 0 for ms in accumulate([], 2, kw))


def test_accumulate_twenty_histories_brute_force():
    rng = random.Random(11)
    cases = [_random_case(rng) for _ in range(20)]
    kw = cases[0][2]
    corpus = [c[0] for c in cases]
    got = accumulate(corpus, 3, kw)
    from collections import Counter

    want = [Counter(), Counter(), Counter()]
    for h in corpus:
        for acc, part in zip(want, brute_force_pairs(h, 3, kw)):
            acc.update(part)
    for g, w in zip(got, want):
        assert dict(g.counts) == dict(w)


def test_intra_per_distinct_item_flag():
    kw = {"A": ["x", "y"], "B": ["z"]}
    per_click = accumulate([["A", "B", "A"]], 2, kw)[2]
    per_item = accumulate([["A", "B", "A"]], 2, kw, intra_per_distinct_item=True)[2]
    assert per_click.counts[("x", "y")] == 2 and per_item.counts[("x", "y")] == 1


def test_dedup_histories_keeps_longest():
    imps = [
        Impression("1", "U2", "t", ("A",), (("X", 1),)),
        Impression("2", "U1", "t", ("A", "B"), (("X", 1),)),
        Impression("3", "U2", "t", ("A", "C"), (("X", 1),)),
        Impression("4", "U2", "t", ("D", "E"), (("X", 1),)),
    ]
    assert dedup_histories(imps) == [("A", "B"), ("A", "C")]


def test_build_graph_basic():
    ms = PairMultiset(ID_ID)
    ms.add("A", "B", 3)
    g = build_graph(ms)
    assert g.nodes == {"A", "B"} and g.edges == {("A", "B"): 3}


def test_build_graph_two_item_and_dump(tmp_path):
    multisets = extract_pairs(["News2", "News3"], 2, TWO_ITEM_KW)
    graphs = [build_graph(ms, "id:" if ms.kind == ID_ID else "kw:") for ms in multisets]
    assert graphs[0].edges == {("id:News2", "id:News3"): 1}
    assert set(graphs[1].edges) == {("kw:keyword1", "kw:keyword4"), ("kw:keyword1", "kw:keyword5")}
    assert graphs[2].edges == {("kw:keyword4", "kw:keyword5"): 1}
    write_edge_list(tmp_path / "g.tsv", graphs[1])
    assert (tmp_path / "g.tsv").read_text() == "kw:keyword1\tkw:keyword4\t1\nkw:keyword1\tkw:keyword5\t1\n"
    assert read_edge_list(tmp_path / "g.tsv") == graphs[1]


def test_build_graph_total_weight():
    rng = random.Random(5)
    ms = PairMultiset(ITEM_ITEM_KW)
    for _ in range(200):
        a, b = rng.sample("abcdefghij", 2)
        ms.add(a, b, rng.randint(1, 4))
    g = build_graph(ms)
    assert g.total_weight() == ms.total()
    assert all(a != b and w >= 1 for (a, b), w in g.edges.items())
    assert all(a in g.nodes and b in g.nodes for a, b in g.edges)


tokens = st.sampled_from(["A", "B", "C", "D", "E"])
histories = st.lists(tokens, max_size=10)
KW = {"A": ["p", "q"], "B": ["q"], "C": ["r", "s", "p"], "D": ["t"]}


@settings(max_examples=200, deadline=None)
@given(histories, st.integers(2, 5))
def test_matches_oracle_and_reversal_symmetric(h, w):
    got = extract_pairs(h, w, KW)
    for g, o in zip(got, brute_force_pairs(h, w, KW)):
        assert dict(g.counts) == dict(o)
    assert extract_pairs(list(reversed(h)), w, KW) == got
    for ms in got:
        assert all(a < b and c >= 1 for (a, b), c in ms.counts.items())


@settings(max_examples=100, deadline=None)
@given(st.lists(histories, max_size=5), st.lists(histories, max_size=5), st.integers(2, 4))
def test_additivity(h1, h2, w):
    a, b, ab = accumulate(h1, w, KW), accumulate(h2, w, KW), accumulate(h1 + h2, w, KW)
    for x, y, z in zip(a, b, ab):
        assert dict(x.counts + y.counts) == dict(z.counts)
    assert accumulate(list(reversed(h1)), w, KW) == accumulate(h1, w, KW)


@settings(max_examples=100, deadline=None)
@given(st.lists(histories, max_size=5))
def test_window2_counts_adjacency(corpus):
    ids = accumulate(corpus, 2, {})[0]
    from collections import Counter

    adj = Counter()
    for h in corpus:
        for a, b in zip(h, h[1:]):
            if a != b:
                adj[tuple(sorted((a, b)))] += 1
    assert dict(ids.counts) == dict(adj)


def test_kinds():
    assert [ms.kind for ms in extract_pairs([], 2, {})] == [ID_ID, ITEM_ITEM_KW, INTRA_ITEM_KW]
