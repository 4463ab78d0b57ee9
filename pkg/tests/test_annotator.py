import re

import pytest
from conftest import GOLDEN_ROWS, GOLDEN_TEXT
from hypothesis import given, settings
from hypothesis import strategies as st

from wikigeo.annotator import (
    AnnotatedArticle,
    Source,
    annotate_article,
    annotate_hyperlinks,
    annotate_title_matches,
    normalize_text,
    title_variants,
)
from wikigeo.coords import Coordinate
from wikigeo.dump_ingest import RawArticle

MELBOURNE_ON = Coordinate(42.81667, -81.55194)
MELBOURNE_AU = Coordinate(-37.81417, 144.96306)


@pytest.mark.parametrize(
    "title, expected",
    [
        ("Melbourne, Ontario", ["Melbourne, Ontario", "Melbourne"]),
        ("Waterloo (Albertson, North Carolina)", ["Waterloo (Albertson, North Carolina)", "Waterloo"]),
        ("Canada", ["Canada"]),
        ("Victoria (state)", ["Victoria (state)", "Victoria"]),
        ("Springfield, Illinois (city)", ["Springfield, Illinois (city)", "Springfield, Illinois", "Springfield"]),
        ("  Two  Spaces ", ["Two Spaces"]),
    ],
)
def test_title_variants(title, expected):
    assert title_variants(title) == expected


def test_normalize_text_apostrophes():
    assert normalize_text("Hawaiʼi") == "Hawai'i"
    assert normalize_text("O’Hare") == "O'Hare"
    assert normalize_text("Canada") == "Canada"
    assert normalize_text("Café") == "Café"


@given(st.text())
def test_normalize_text_idempotent(s):
    once = normalize_text(s)
    assert normalize_text(once) == once


def test_hyperlink_annotation(golden_index):
    text = "Melbourne is small"
    [ann] = annotate_hyperlinks(text, [((0, 9), "Melbourne, Ontario")], golden_index)
    assert (ann.span, ann.notation, ann.coordinate, ann.source) == ((0, 9), "Melbourne", MELBOURNE_ON, Source.HYPERLINK)


def test_hyperlink_to_other_melbourne(golden_index):
    text = " " * 280 + "Melbourne"
    [ann] = annotate_hyperlinks(text, [((280, 289), "Melbourne")], golden_index)
    assert ann.coordinate == MELBOURNE_AU


def test_unindexed_link_dropped(golden_index):
    assert annotate_hyperlinks("Australia", [((0, 9), "Australia")], golden_index) == []


def test_redirect_map_is_used(golden_index):
    [ann] = annotate_hyperlinks("Vic", [((0, 3), "Victoria, Australia")], golden_index,
                                redirects={"Victoria, Australia": "Victoria (state)"})
    assert ann.coordinate == Coordinate(-37.0, 144.0)


def test_title_match_unlinked_occurrence():
    occupied = [(0, 9), (280, 289)]
    matches = annotate_title_matches(GOLDEN_TEXT, "Melbourne, Ontario", MELBOURNE_ON, occupied)
    assert [(m.span, m.notation, m.coordinate, m.source) for m in matches] == [
        ((205, 214), "Melbourne", MELBOURNE_ON, Source.TITLE_MATCH)
    ]


def test_title_match_fully_occluded():
    text = "Melbourne and Melbourne"
    assert annotate_title_matches(text, "Melbourne", MELBOURNE_ON, [(0, 9), (14, 23)]) == []


def test_title_match_word_boundaries():
    assert annotate_title_matches("Melbournes", "Melbourne", MELBOURNE_ON) == []
    assert annotate_title_matches("xMelbourne", "Melbourne", MELBOURNE_ON) == []
    assert [m.span for m in annotate_title_matches("(Melbourne)", "Melbourne", MELBOURNE_ON)] == [(1, 10)]


def test_title_match_prefers_longest_variant():
    text = "Melbourne, Ontario is near Melbourne."
    matches = annotate_title_matches(text, "Melbourne, Ontario", MELBOURNE_ON)
    assert [m.notation for m in matches] == ["Melbourne, Ontario", "Melbourne"]


def test_title_match_case_sensitive():
    assert annotate_title_matches("canada goose", "Canada", Coordinate(60, -110)) == []


def test_title_match_falls_back_to_shorter_variant_when_longest_blocked():
    text = "Melbourne, Ontario"
    matches = annotate_title_matches(text, "Melbourne, Ontario", MELBOURNE_ON, occupied=[(11, 18)])
    assert [m.span for m in matches] == [(0, 9)]


def _regex_oracle(text, title, occupied):
    """Independent re-based scan: longest alternative first, lookaround word boundaries."""
    variants = sorted(set(title_variants(title)), key=len, reverse=True)
    found = []
    pos = 0
    while pos <= len(text):
        hit = None
        for v in variants:
            m = re.compile(r"(?<![^\W_])" + re.escape(v) + r"(?![^\W_])").match(text, pos)
            if m and not any(s < m.end() and m.start() < e for s, e in occupied):
                hit = m
                break
        if hit:
            found.append(hit.span())
            pos = hit.end()
        else:
            pos += 1
    return found


@settings(max_examples=300)
@given(
    st.lists(st.sampled_from(["Melbourne", ", ", "Ontario", "s", " ", "x", "Melbourne, Ontario", "_"]), max_size=10),
    st.lists(st.tuples(st.integers(0, 40), st.integers(1, 6)), max_size=3),
)
def test_title_matching_agrees_with_regex_oracle(parts, raw_occupied):
    text = "".join(parts)
    occupied = sorted((s, s + n) for s, n in raw_occupied)
    got = [m.span for m in annotate_title_matches(text, "Melbourne, Ontario", MELBOURNE_ON, occupied)]
    assert got == _regex_oracle(text, "Melbourne, Ontario", occupied)


def test_golden_article_table(golden_article):
    assert golden_article.text == GOLDEN_TEXT
    got = [(a.start, a.end, a.notation, *a.coordinate.key(), a.source.value) for a in golden_article.annotations]
    assert got == GOLDEN_ROWS


def test_article_without_coordinate_is_skipped(golden_index):
    raw = RawArticle("Australia", 9, "<p>Australia</p>")
    assert annotate_article(raw, golden_index) is None


def test_article_without_matches_is_empty(golden_index):
    raw = RawArticle("Canada", 9, "<p>A large country.</p>")
    article = annotate_article(raw, golden_index)
    assert article is not None and article.annotations == ()


def test_bad_html_reports_and_skips(golden_index):
    from wikigeo.diagnostics import Diagnostics

    diag = Diagnostics()
    assert annotate_article(RawArticle("Canada", 9, "<p><a href='./X'>x</p>"), golden_index, diagnostics=diag) is None
    assert diag.counts["bad_html"] == 1


def test_apostrophe_in_text_matches_title():
    index = {"Hawai'i": Coordinate(20.0, -157.0)}
    raw = RawArticle("Hawai'i", 3, "<p>Hawaiʼi is an island state. The name Hawai’i is old.</p>")
    article = annotate_article(raw, index)
    assert [a.notation for a in article.annotations] == ["Hawai'i", "Hawai'i"]
    article.validate()


def test_annotation_is_deterministic(golden_raw, golden_index):
    assert annotate_article(golden_raw, golden_index) == annotate_article(golden_raw, golden_index)


TARGETS = {"Alpha": Coordinate(1, 1), "Beta": Coordinate(2, 2), "Gamma, Delta": Coordinate(3, 3)}


@settings(max_examples=200)
@given(
    st.lists(
        st.tuples(st.sampled_from(["Gamma", "Alpha", "Beta", "Gamma, Delta", "Nowhere", "lorem", "Gammas"]),
                  st.booleans()),
        max_size=15,
    )
)
def test_annotated_article_invariants(pieces):
    html = "<p>" + " ".join(
        f'<a href="./{w.replace(" ", "_")}">{w}</a>' if linked else w for w, linked in pieces
    ) + "</p>"
    article = annotate_article(RawArticle("Gamma, Delta", 1, html), TARGETS)
    assert isinstance(article, AnnotatedArticle)
    article.validate()
    starts = [a.start for a in article.annotations]
    assert starts == sorted(starts)
    links = [a for a in article.annotations if a.source is Source.HYPERLINK]
    for a in article.annotations:
        assert article.text[a.start:a.end] == a.notation
        if a.source is Source.TITLE_MATCH:
            assert a.coordinate == article.coordinate
            assert not any(h.start < a.end and a.start < h.end for h in links)
        else:
            assert a.coordinate == TARGETS[a.notation]
