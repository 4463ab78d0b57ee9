import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wikigeo.coords import Coordinate
from wikigeo.diagnostics import Diagnostics
from wikigeo.gazetteer import (
    Gazetteer,
    GazetteerEntry,
    GazetteerError,
    alternate_name_count,
    load_geonames,
    lookup,
)

MELBOURNE_AU = (
    "2158177\tMelbourne\tMelbourne\tMEL,Melbourne City,Melburn,Melbourne,Мельбурн\t-37.81417\t144.96306"
    "\tP\tPPLA\tAU\t\t07\t24600\t\t\t4529500\t\t25\tAustralia/Melbourne\t2019-11-13"
)


def tsv(*rows):
    return io.BytesIO(("\n".join(rows) + "\n").encode("utf-8"))


def row(gid, name, alternates, lat=0.0, lon=0.0):
    return f"{gid}\t{name}\t{name}\t{','.join(alternates)}\t{lat}\t{lon}"


def test_geonames_line():
    gaz = load_geonames(tsv(MELBOURNE_AU))
    [entry] = lookup(gaz, "Melbourne")
    assert entry.geoname_id == 2158177
    assert entry.coordinate == Coordinate(-37.81417, 144.96306)
    assert alternate_name_count(entry) == 5
    assert lookup(gaz, "Мельбурн") == [entry]
    assert lookup(gaz, "melbourne city") == [entry]


def test_empty_gazetteer():
    gaz = load_geonames(io.BytesIO(b""))
    assert len(gaz) == 0
    assert lookup(gaz, "Melbourne") == []


def test_three_alternates_counted():
    [entry] = load_geonames(tsv(row(1, "X", ["a", "b", "c"]))).lookup("X")
    assert alternate_name_count(entry) == 3


def test_empty_alternates_dropped():
    [entry] = load_geonames(tsv(row(1, "X", ["", "a", " ", ""]))).lookup("X")
    assert entry.alternate_names == ("a",)


@pytest.mark.parametrize("names", [[], ["A", "B"], ["B", "A"]])
def test_alternate_name_count(names):
    entry = GazetteerEntry(1, "X", tuple(names), Coordinate(0, 0))
    assert alternate_name_count(entry) == len(names) == entry.alternate_name_count


def test_order_by_alternate_count():
    gaz = load_geonames(tsv(row(1, "Paris", ["p"] * 2, 33.66, -95.55), row(2, "Paris", [f"p{i}" for i in range(10)], 48.85, 2.35)))
    assert [e.geoname_id for e in lookup(gaz, "Paris")] == [2, 1]


def test_ties_broken_by_id():
    gaz = load_geonames(tsv(row(7, "Tie", list("abcde")), row(3, "Tie", list("vwxyz"))))
    assert [e.geoname_id for e in lookup(gaz, "Tie")] == [3, 7]


def test_unknown_name():
    assert lookup(load_geonames(tsv(MELBOURNE_AU)), "zzzz-nonexistent") == []


def test_bad_coordinates_skipped():
    diag = Diagnostics()
    gaz = load_geonames(tsv(row(1, "A", []), "2\tB\tB\t\tnorth\t3.0", row(3, "C", [], 95.0, 0.0), "4\tshort"), diag)
    assert [e.geoname_id for e in gaz] == [1]
    assert diag.counts["bad_gazetteer_line"] == 3


def test_duplicate_id_is_fatal():
    with pytest.raises(GazetteerError):
        load_geonames(tsv(row(1, "A", []), row(1, "B", [])))


def test_reduced_six_column_fixture():
    gaz = load_geonames(tsv("10\tSpringfield\tSpringfield\tSpfld\t39.8\t-89.65"))
    assert lookup(gaz, "SPFLD")[0].geoname_id == 10


def test_apostrophe_and_case_normalization():
    gaz = load_geonames(tsv(row(5, "Hawaiʻi County", ["Hawaiʼi", "O’ahu"])))
    assert lookup(gaz, "hawai'i") and lookup(gaz, "O'ahu")


entry_st = st.tuples(
    st.sampled_from(["Paris", "Springfield", "London", "paris"]),
    st.lists(st.sampled_from(["Paname", "Lutetia", "Londres", "Spfld", "Londinium"]), max_size=4),
)


@settings(max_examples=100)
@given(st.lists(entry_st, max_size=15), st.randoms(use_true_random=False))
def test_every_name_finds_its_entry_and_order_is_stable(entries, rnd):
    lines = [row(i + 1, name, alts, i % 90, i % 180) for i, (name, alts) in enumerate(entries)]
    gaz = load_geonames(tsv(*lines) if lines else io.BytesIO(b""))
    shuffled = list(lines)
    rnd.shuffle(shuffled)
    gaz2 = load_geonames(tsv(*shuffled) if shuffled else io.BytesIO(b""))
    for entry in gaz:
        for name in (entry.name, *entry.alternate_names):
            assert entry in lookup(gaz, name)
            assert lookup(gaz, name) == lookup(gaz2, name)
            ranks = [(-alternate_name_count(e), e.geoname_id) for e in lookup(gaz, name)]
            assert ranks == sorted(ranks)
