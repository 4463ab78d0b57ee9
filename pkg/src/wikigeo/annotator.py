"""Assign coordinates to linked expressions and to occurrences of the article title."""

from __future__ import annotations

import enum
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .coords import Coordinate
from .diagnostics import Diagnostics
from .dump_ingest import CoordinateIndex, HtmlStructureError, Link, RawArticle, Span, html_to_text_with_links
from .textnorm import normalize_text, normalize_title

__all__ = [
    "AnnotatedArticle",
    "LocationAnnotation",
    "Source",
    "annotate_article",
    "annotate_hyperlinks",
    "annotate_title_matches",
    "normalize_text",
    "title_variants",
]

_PAREN = re.compile(r"\s*\([^()]*\)")


class Source(str, enum.Enum):
    HYPERLINK = "hyperlink"
    TITLE_MATCH = "title_match"


@dataclass(frozen=True)
class LocationAnnotation:
    start: int
    end: int
    notation: str
    coordinate: Coordinate
    source: Source

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise ValueError(f"bad span ({self.start}, {self.end})")

    @property
    def span(self) -> Span:
        return (self.start, self.end)


@dataclass(frozen=True)
class AnnotatedArticle:
    title: str
    page_id: int
    text: str
    coordinate: Coordinate
    annotations: tuple[LocationAnnotation, ...] = field(default_factory=tuple)

    def validate(self) -> None:
        """Raise ValueError if any annotation disagrees with the text or overlaps another."""
        prev_end = 0
        for ann in self.annotations:
            if ann.start < prev_end:
                raise ValueError(f"annotation ({ann.start}, {ann.end}) overlaps or is out of order")
            if ann.end > len(self.text) or self.text[ann.start : ann.end] != ann.notation:
                raise ValueError(
                    f"text at ({ann.start}, {ann.end}) is {self.text[ann.start:ann.end]!r}, "
                    f"notation is {ann.notation!r}"
                )
            if ann.source is Source.TITLE_MATCH and ann.coordinate != self.coordinate:
                raise ValueError(f"title match at ({ann.start}, {ann.end}) has a foreign coordinate")
            prev_end = ann.end


def title_variants(title: str) -> list[str]:
    """Surface forms under which an article's own title is looked for in its text.

    >>> title_variants("Waterloo (Albertson, North Carolina)")
    ['Waterloo (Albertson, North Carolina)', 'Waterloo']
    """
    full = " ".join(title.split())
    no_paren = " ".join(_PAREN.sub("", full, count=1).split())
    no_comma = no_paren.split(",", 1)[0].strip()
    variants = []
    for v in (full, no_paren, no_comma):
        if v and v not in variants:
            variants.append(v)
    variants.sort(key=len, reverse=True)
    return variants


def annotate_hyperlinks(
    text: str,
    links: Sequence[Link],
    index: CoordinateIndex,
    redirects: Mapping[str, str] | None = None,
) -> list[LocationAnnotation]:
    """Annotate every link whose target article has a coordinate; other links are dropped."""
    out = []
    for (start, end), target in links:
        key = normalize_title(target)
        coordinate = index.get(key)
        if coordinate is None and redirects:
            redirected = redirects.get(key)
            coordinate = index.get(redirected) if redirected is not None else None
        if coordinate is None:
            continue
        out.append(LocationAnnotation(start, end, text[start:end], coordinate, Source.HYPERLINK))
    return out


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def annotate_title_matches(
    text: str, title: str, coordinate: Coordinate, occupied: Sequence[Span] = ()
) -> list[LocationAnnotation]:
    # Candidate occurrences ordered by start, longest first at equal start;
    # greedy acceptance then reproduces a left-to-right longest-match scan.
    candidates = []
    for variant in title_variants(normalize_text(title)):
        pos = text.find(variant)
        while pos != -1:
            end = pos + len(variant)
            if (pos == 0 or not _is_word_char(text[pos - 1])) and (
                end == len(text) or not _is_word_char(text[end])
            ):
                candidates.append((pos, -len(variant), end))
            pos = text.find(variant, pos + 1)
    candidates.sort()

    taken = sorted(occupied)
    out: list[LocationAnnotation] = []
    for start, _, end in candidates:
        if out and start < out[-1].end:
            continue
        if any(s < end and start < e for s, e in taken):
            continue
        out.append(LocationAnnotation(start, end, text[start:end], coordinate, Source.TITLE_MATCH))
    return out


def annotate_article(
    article: RawArticle,
    index: CoordinateIndex,
    redirects: Mapping[str, str] | None = None,
    diagnostics: Diagnostics | None = None,
    stats: dict | None = None,
) -> AnnotatedArticle | None:
    """Annotate one article, or return None when the article itself has no coordinate
    or its markup cannot be parsed (the latter is reported to ``diagnostics``).

    When ``stats`` is given, the numbers of links seen and dropped are added to it.
    """
    coordinate = index.get(normalize_title(article.title))
    if coordinate is None:
        return None
    try:
        text, links = html_to_text_with_links(article.html, transform=normalize_text)
    except HtmlStructureError as exc:
        if diagnostics is not None:
            diagnostics.report("bad_html", f"page {article.page_id} {article.title!r}: {exc}")
        return None
    linked = annotate_hyperlinks(text, links, index, redirects)
    titled = annotate_title_matches(text, article.title, coordinate, [a.span for a in linked])
    if stats is not None:
        stats["links"] = stats.get("links", 0) + len(links)
        stats["links_dropped"] = stats.get("links_dropped", 0) + len(links) - len(linked)
    annotations = tuple(sorted(linked + titled, key=lambda a: a.start))
    return AnnotatedArticle(
        title=normalize_text(article.title),
        page_id=article.page_id,
        text=text,
        coordinate=coordinate,
        annotations=annotations,
    )
