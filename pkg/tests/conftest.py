from __future__ import annotations

import io
from pathlib import Path

import pytest

from wikigeo.annotator import annotate_article
from wikigeo.dump_ingest import build_coordinate_index, stream_articles

DATA = Path(__file__).parent / "data"

GOLDEN_TEXT = (
    "Melbourne is a small community located within Middlesex County, Ontario, Canada. "
    "It lies on the boundary between two municipalities, Strathroy-Caradoc and Southwest Middlesex. "
    "About half the population of Melbourne lives in each municipality. "
    "The community was probably named for Melbourne, Victoria, Australia."
)

# (start, end, notation, lat, lon, source) as printed in the sample-article table
GOLDEN_ROWS = [
    (0, 9, "Melbourne", "42.81667", "-81.55194", "hyperlink"),
    (46, 62, "Middlesex County", "43.00000", "-81.50000", "hyperlink"),
    (64, 71, "Ontario", "49.25000", "-84.50000", "hyperlink"),
    (73, 79, "Canada", "60.00000", "-110.00000", "hyperlink"),
    (133, 150, "Strathroy-Caradoc", "42.95750", "-81.61667", "hyperlink"),
    (155, 174, "Southwest Middlesex", "42.75000", "-81.70000", "hyperlink"),
    (205, 214, "Melbourne", "42.81667", "-81.55194", "title_match"),
    (280, 289, "Melbourne", "-37.81417", "144.96306", "hyperlink"),
    (291, 299, "Victoria", "-37.00000", "144.00000", "hyperlink"),
]


def jsonl_bytes(*records) -> io.BytesIO:
    import json

    return io.BytesIO("".join(json.dumps(r) + "\n" for r in records).encode("utf-8"))


@pytest.fixture(scope="session")
def golden_html_path() -> Path:
    return DATA / "golden_html.jsonl"


@pytest.fixture(scope="session")
def golden_coords_path() -> Path:
    return DATA / "golden_coords.jsonl"


@pytest.fixture(scope="session")
def golden_index(golden_coords_path):
    with open(golden_coords_path, "rb") as fh:
        return build_coordinate_index(fh, "cirrus")


@pytest.fixture(scope="session")
def golden_raw(golden_html_path):
    with open(golden_html_path, "rb") as fh:
        return next(stream_articles(fh, "fixture"))


@pytest.fixture(scope="session")
def golden_article(golden_raw, golden_index):
    return annotate_article(golden_raw, golden_index)


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory) -> dict[str, Path]:
    from synthetic import make_dataset

    return make_dataset(tmp_path_factory.mktemp("synthetic"), n_articles=1000, seed=7)


ACCEPTANCE_RESULTS: list[str] = []


def record_acceptance(criterion: str, ok: bool | None, detail: str) -> bool | None:
    """Log one result line; ``ok=None`` marks a criterion that was not run."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {criterion}: {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
