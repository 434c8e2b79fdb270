import json
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coocnews.ingest import (
    DataError,
    Impression,
    NewsItem,
    compute_overlap,
    compute_stats,
    parse_behaviors,
    parse_behaviors_detailed,
    parse_news,
    write_behaviors,
    write_news,
)

from conftest import write_lines


def test_parse_news_sample_row(tmp_path, news_rows):
    items = parse_news(write_lines(tmp_path / "news.tsv", news_rows))
    assert items[0].category == "sports"
    assert items[0].subcategory == "football_nfl"
    assert items[0].title.startswith("Should NFL")


def test_parse_news_empty_file(tmp_path):
    assert parse_news(write_lines(tmp_path / "news.tsv", [])) == []


def test_parse_news_fixture_field_by_field(tmp_path, news_rows):
    items = parse_news(write_lines(tmp_path / "news.tsv", news_rows))
    assert items == [
        NewsItem("N1", "sports", "football_nfl", "Should NFL be able to fine players for criticizing officiating?",
                 "Several fines came down..."),
        NewsItem("N2", "foodanddrink", "recipes", "5 Classic Appetizers That Make Holiday Hosting a Breeze",
                 "Planning a celebration?"),
        NewsItem("N3", "news", "newsus", "No abstract here", ""),
    ]


def test_parse_news_duplicate_id(tmp_path, news_rows):
    with pytest.raises(DataError, match="duplicate"):
        parse_news(write_lines(tmp_path / "news.tsv", news_rows + [news_rows[0]]))


def test_parse_news_short_row_reports_line(tmp_path, news_rows):
    path = write_lines(tmp_path / "news.tsv", news_rows[:1] + ["N9\tsports\tonly three"])
    with pytest.raises(DataError, match="line 2"):
        parse_news(path)
    assert len(parse_news(path, skip_bad_rows=True)) == 1


def test_parse_behaviors_fields(tmp_path, behavior_rows):
    imps = parse_behaviors(write_lines(tmp_path / "b.tsv", behavior_rows))
    assert imps[0].history == ("N2", "N3", "N5")
    assert imps[0].candidates == (("N7", 1), ("N8", 0))
    assert imps[1].history == ()


def test_parse_behaviors_positive_hand_count(tmp_path, behavior_rows):
    imps = parse_behaviors(write_lines(tmp_path / "b.tsv", behavior_rows))
    assert len(imps) == 10
    assert sum(sum(i.labels) for i in imps) == 12


def test_parse_behaviors_bad_label(tmp_path, behavior_rows):
    path = write_lines(tmp_path / "b.tsv", behavior_rows[:2] + ["3\tU1\tt\tN1\tN7-1 N8"])
    with pytest.raises(DataError, match="line 3"):
        parse_behaviors(path)
    res = parse_behaviors_detailed(path, skip_bad_rows=True)
    assert len(res.records) == 2 and res.skipped == 1


def test_parse_behaviors_rejects_other_labels(tmp_path):
    with pytest.raises(DataError):
        parse_behaviors(write_lines(tmp_path / "b.tsv", ["1\tU1\tt\t\tN7-2"]))


def test_round_trip(tmp_path, news_rows, behavior_rows):
    news = parse_news(write_lines(tmp_path / "n.tsv", news_rows))
    imps = parse_behaviors(write_lines(tmp_path / "b.tsv", behavior_rows))
    write_news(tmp_path / "n2.tsv", news)
    write_behaviors(tmp_path / "b2.tsv", imps)
    assert parse_news(tmp_path / "n2.tsv") == news
    assert parse_behaviors(tmp_path / "b2.tsv") == imps


def test_stats_empty():
    s = compute_stats([], [])
    assert (s.user_count, s.news_count, s.click_count) == (0, 0, 0)


def test_stats_brute_force(tmp_path, news_rows, behavior_rows):
    news = parse_news(write_lines(tmp_path / "n.tsv", news_rows))
    imps = parse_behaviors(write_lines(tmp_path / "b.tsv", behavior_rows))
    users = set()
    clicks = 0
    for row in behavior_rows:
        f = row.split("\t")
        users.add(f[1])
        clicks += sum(1 for tok in f[4].split() if tok.endswith("-1"))
    s = compute_stats(news, imps)
    assert (s.user_count, s.news_count, s.click_count) == (len(users), 3, clicks) == (6, 3, 12)


def _imp(i, hist, cands, user="U"):
    return Impression(str(i), user, "t", tuple(hist), tuple((c, 0) for c in cands))


def test_overlap_identical_streams(tmp_path, behavior_rows):
    imps = parse_behaviors(write_lines(tmp_path / "b.tsv", behavior_rows))
    kw = {f"N{i}": [f"k{i}"] for i in range(1, 10)}
    rep = compute_overlap(imps, imps, kw)
    for cell in rep.cells().values():
        assert cell.fraction_unseen == 0.0 and cell.fraction_seen == 1.0


def test_overlap_six_news_split():
    train = [_imp(1, ["A", "B"], ["C"]), _imp(2, ["B"], ["D", "A"])]
    test = [_imp(3, ["A", "E"], ["F", "C"]), _imp(4, ["E", "E"], ["B"])]
    kw = {"A": ["sun"], "B": ["Rain "], "C": ["sun", "wind"], "D": ["snow"], "E": ["rain"], "F": ["fog"]}
    rep = compute_overlap(train, test, kw)
    # brute-force set arithmetic
    train_ids = {"A", "B", "C", "D"}
    test_stream = ["A", "E", "F", "C", "E", "E", "B"]
    assert rep.news_id_dedup.fraction_unseen == pytest.approx(len(set(test_stream) - train_ids) / len(set(test_stream)))
    assert rep.news_id_nondedup.fraction_unseen == pytest.approx(
        sum(1 for t in test_stream if t not in train_ids) / len(test_stream)
    )
    train_kw = {"sun", "rain", "wind", "snow"}
    test_kw_stream = [k.strip().lower() for t in test_stream for k in kw[t]]
    assert rep.keyword_dedup.fraction_unseen == pytest.approx(
        len(set(test_kw_stream) - train_kw) / len(set(test_kw_stream))
    )
    assert rep.keyword_nondedup.fraction_unseen == pytest.approx(
        sum(1 for k in test_kw_stream if k not in train_kw) / len(test_kw_stream)
    )
    assert rep.news_id_dedup.fraction_unseen == pytest.approx(2 / 5)


def test_overlap_uncovered_and_outputs():
    rep = compute_overlap([_imp(1, ["A"], ["B"])], [_imp(2, ["A"], ["Z"])], {"A": ["x"]})
    assert rep.uncovered_test_occurrences == 1
    assert "occurrence stream" in rep.to_text()
    d = json.loads(rep.to_json())
    assert d["news_id.dedup"]["unseen"] == pytest.approx(0.5)


ids = st.sampled_from([f"N{i}" for i in range(8)])
impressions = st.lists(
    st.tuples(st.lists(ids, max_size=5), st.lists(ids, min_size=1, max_size=4)), min_size=1, max_size=8
).map(lambda rows: [_imp(i, h, c) for i, (h, c) in enumerate(rows)])


@settings(max_examples=100, deadline=None)
@given(impressions, impressions, st.randoms(use_true_random=False))
def test_overlap_cells_sum_to_one_and_permutation_invariant(train, test, rnd):
    kw = {f"N{i}": [f"k{i % 3}", f"K{i % 5}"] for i in range(6)}
    rep = compute_overlap(train, test, kw)
    for cell in rep.cells().values():
        assert abs(cell.fraction_seen + cell.fraction_unseen - 1.0) <= 1e-12
    train2, test2 = list(train), list(test)
    rnd.shuffle(train2)
    rnd.shuffle(test2)
    assert compute_overlap(train2, test2, kw) == rep


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(ids, st.integers(0, 1)), min_size=1, max_size=6))
def test_parse_behaviors_labels_binary(tmp_path_factory, cands):
    path = tmp_path_factory.mktemp("b") / "b.tsv"
    write_lines(path, ["1\tU\tt\tN1\t" + " ".join(f"{n}-{y}" for n, y in cands)])
    (imp,) = parse_behaviors(path)
    assert set(Counter(imp.labels)) <= {0, 1}
