import pytest

from coocnews.ingest import NewsItem

SAMPLE_NEWS = NewsItem(
    "N1",
    "sports",
    "football_nfl",
    "Should NFL be able to fine players for criticizing officiating?",
    "Several fines came down against NFL players for criticizing officiating this week. "
    "It's a very bad look for the league.",
)


@pytest.fixture
def sample_news():
    return SAMPLE_NEWS


@pytest.fixture
def news_rows():
    return [
        "N1\tsports\tfootball_nfl\tShould NFL be able to fine players for criticizing officiating?\tSeveral fines came down...\thttps://x\t[]\t[]",
        "N2\tfoodanddrink\trecipes\t5 Classic Appetizers That Make Holiday Hosting a Breeze\tPlanning a celebration?",
        "N3\tnews\tnewsus\tNo abstract here",
    ]


@pytest.fixture
def behavior_rows():
    # positives per row: 1,1,0,2,1,1,1,3,1,1 -> 12
    return [
        "1\tU1\t11/11/2019 9:05:58 AM\tN2 N3 N5\tN7-1 N8-0",
        "2\tU2\t11/12/2019 1:00:00 PM\t\tN1-1 N2-0 N3-0",
        "3\tU1\t11/13/2019 2:00:00 PM\tN2 N3 N5\tN9-0",
        "4\tU3\t11/13/2019 3:00:00 PM\tN1\tN4-1 N5-1 N6-0",
        "5\tU4\t11/13/2019 3:10:00 PM\tN4 N1\tN2-1",
        "6\tU5\t11/13/2019 3:20:00 PM\tN7\tN3-0 N8-1",
        "7\tU2\t11/14/2019 3:30:00 PM\tN1\tN5-1 N6-0",
        "8\tU3\t11/14/2019 3:40:00 PM\tN1 N4\tN1-1 N2-1 N3-1 N9-0",
        "9\tU5\t11/15/2019 3:50:00 PM\tN7 N8\tN9-1",
        "10\tU6\t11/15/2019 4:00:00 PM\t\tN6-0 N2-1",
    ]


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path
