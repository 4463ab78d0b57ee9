"""Streaming readers for article dumps and coordinate dumps, and HTML text/link extraction.

Three line-delimited JSON layouts are understood:

``fixture``
    ``{"title", "page_id", "html"}`` article lines and ``{"title", "lat", "lon"}``
    coordinate lines.
``enterprise``
    Wikimedia Enterprise HTML dump: NDJSON, usually inside a ``.tar.gz``,
    with ``name``, ``identifier`` and ``article_body.html``.
``cirrus``
    CirrusSearch content dump: alternating bulk-action and document lines;
    documents carry ``title`` and a ``coordinates`` list.
"""

from __future__ import annotations

import gzip
import io
import json
import tarfile
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass
from html.parser import HTMLParser
from os import PathLike
from typing import BinaryIO
from urllib.parse import unquote

from .coords import Coordinate, CoordinateError
from .diagnostics import Diagnostics
from .textnorm import normalize_title

ARTICLE_FORMATS = ("fixture", "enterprise")
INDEX_FORMATS = ("fixture", "cirrus")

_GZIP_MAGIC = b"\x1f\x8b"

Span = tuple[int, int]
Link = tuple[Span, str]
CoordinateIndex = Mapping[str, Coordinate]


class HtmlStructureError(ValueError):
    pass


@dataclass(frozen=True)
class RawArticle:
    title: str
    page_id: int
    html: str


# -- byte streams ------------------------------------------------------------


def _peek(stream: BinaryIO, n: int) -> tuple[BinaryIO, bytes]:
    if not hasattr(stream, "peek"):
        stream = io.BufferedReader(stream, buffer_size=max(n, io.DEFAULT_BUFFER_SIZE))
    head = stream.peek(n)[:n]
    return stream, head


def open_input(path: str | PathLike) -> BinaryIO:
    """Open a plain or gzip-compressed file for binary reading."""
    raw = open(path, "rb")
    if raw.peek(2)[:2] == _GZIP_MAGIC:
        return gzip.GzipFile(fileobj=raw, mode="rb")
    return raw


def _is_tar(head: bytes) -> bool:
    return len(head) >= 262 and head[257:262] == b"ustar"


def iter_lines(source: BinaryIO) -> Iterator[tuple[str, bytes]]:
    """Yield ``(location, line)`` pairs from a JSON-lines stream.

    Gzip compression and tar wrapping (tar of JSON-lines members, as in the
    Enterprise HTML dumps) are detected from the leading bytes.
    """
    source, head = _peek(source, 2)
    if head == _GZIP_MAGIC:
        source = gzip.GzipFile(fileobj=source, mode="rb")
    source, head = _peek(source, 512)
    if _is_tar(head):
        with tarfile.open(fileobj=source, mode="r|") as archive:
            for member in archive:
                if not member.isfile():
                    continue
                fh = archive.extractfile(member)
                if fh is None:
                    continue
                inner, inner_head = _peek(fh, 2)
                if inner_head == _GZIP_MAGIC:
                    inner = gzip.GzipFile(fileobj=inner, mode="rb")
                for lineno, line in enumerate(inner, 1):
                    yield f"{member.name}:{lineno}", line
        return
    for lineno, line in enumerate(source, 1):
        yield f"line {lineno}", line


def _json_records(source: BinaryIO, diagnostics: Diagnostics) -> Iterator[tuple[str, dict]]:
    for where, line in iter_lines(source):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            diagnostics.report("malformed_line", f"{where}: {exc}")
            continue
        if not isinstance(record, dict):
            diagnostics.report("malformed_line", f"{where}: not a JSON object")
            continue
        yield where, record


# -- articles ----------------------------------------------------------------


def _article_fields(record: dict, fmt: str) -> tuple[object, object, object]:
    if fmt == "fixture":
        return record.get("title"), record.get("page_id"), record.get("html")
    body = record.get("article_body")
    html = body.get("html") if isinstance(body, dict) else None
    return record.get("name"), record.get("identifier"), html


def stream_articles(
    source: BinaryIO, fmt: str = "fixture", diagnostics: Diagnostics | None = None
) -> Iterator[RawArticle]:
    """Yield articles in file order, skipping (and reporting) malformed lines."""
    if fmt not in ARTICLE_FORMATS:
        raise ValueError(f"unknown article dump format {fmt!r}; expected one of {ARTICLE_FORMATS}")
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    for where, record in _json_records(source, diagnostics):
        title, page_id, html = _article_fields(record, fmt)
        if not isinstance(title, str) or not title.strip():
            diagnostics.report("missing_field", f"{where}: title")
            continue
        if isinstance(page_id, bool) or not isinstance(page_id, int) or page_id < 0:
            diagnostics.report("missing_field", f"{where}: page_id")
            continue
        if not isinstance(html, str):
            diagnostics.report("missing_field", f"{where}: html")
            continue
        yield RawArticle(title=title.strip(), page_id=page_id, html=html)


# -- coordinate index --------------------------------------------------------


def _primary_coordinate(coords: list) -> tuple[float, float] | None:
    usable = [
        c
        for c in coords
        if isinstance(c, dict)
        and isinstance(c.get("coord"), dict)
        and c.get("globe", "earth") == "earth"
    ]
    if not usable:
        return None
    chosen = next((c for c in usable if c.get("primary") is True), usable[0])
    return chosen["coord"].get("lat"), chosen["coord"].get("lon")


def iter_coordinate_records(
    source: BinaryIO, fmt: str = "cirrus", diagnostics: Diagnostics | None = None
) -> Iterator[tuple[str, Coordinate]]:
    """Yield ``(normalized title, coordinate)`` for every usable document, duplicates included.

    Both line shapes are accepted regardless of ``fmt`` so that fixtures can
    mix them; bulk-action lines (``{"index": ...}``) are skipped.
    """
    if fmt not in INDEX_FORMATS:
        raise ValueError(f"unknown coordinate dump format {fmt!r}; expected one of {INDEX_FORMATS}")
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    for where, record in _json_records(source, diagnostics):
        title = record.get("title")
        if not isinstance(title, str) or not title.strip():
            if "index" not in record:
                diagnostics.report("missing_field", f"{where}: title")
            continue
        if isinstance(record.get("coordinates"), list):
            latlon = _primary_coordinate(record["coordinates"])
        elif "lat" in record or "lon" in record:
            latlon = record.get("lat"), record.get("lon")
        else:
            latlon = None
        if latlon is None:
            continue
        try:
            coordinate = Coordinate(*latlon)
        except CoordinateError as exc:
            diagnostics.report("bad_coordinate", f"{where}: {title!r}: {exc}")
            continue
        yield normalize_title(title), coordinate


def build_coordinate_index(
    source: BinaryIO, fmt: str = "cirrus", diagnostics: Diagnostics | None = None
) -> dict[str, Coordinate]:
    """Map normalized title to coordinate; the first document with a given title wins."""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    index: dict[str, Coordinate] = {}
    for key, coordinate in iter_coordinate_records(source, fmt, diagnostics):
        if key in index:
            diagnostics.report("duplicate_title", key)
            continue
        index[key] = coordinate
    return index


def merge_indexes(*indexes: CoordinateIndex, diagnostics: Diagnostics | None = None) -> dict[str, Coordinate]:
    """Combine indexes built from consecutive parts of one dump, keeping first occurrences."""
    merged: dict[str, Coordinate] = {}
    for index in indexes:
        for key, coordinate in index.items():
            if key in merged:
                if diagnostics is not None:
                    diagnostics.report("duplicate_title", key)
                continue
            merged[key] = coordinate
    return merged


def load_redirects(source: BinaryIO) -> dict[str, str]:
    """Read a ``{"from": title, "to": title}`` JSON-lines redirect map (single hop)."""
    redirects = {}
    for _, record in _json_records(source, Diagnostics()):
        src, dst = record.get("from"), record.get("to")
        if isinstance(src, str) and isinstance(dst, str):
            redirects[normalize_title(src)] = normalize_title(dst)
    return redirects


# -- HTML --------------------------------------------------------------------

BLOCK_TAGS = frozenset(
    "address article aside blockquote body br caption dd div dl dt figcaption figure "
    "footer h1 h2 h3 h4 h5 h6 header hr li main nav ol p pre section table tbody td tfoot "
    "th thead tr ul".split()
)
SKIP_TAGS = frozenset({"head", "script", "style", "noscript", "template", "title"})


def link_target(href: str | None) -> str | None:
    """Article title addressed by ``href``, or None for anything outside the article namespace."""
    if not href:
        return None
    href = href.strip()
    if href.startswith(("#", "//", "../")):
        return None
    if href.startswith("./"):
        href = href[2:]
    elif href.startswith("/wiki/"):
        href = href[6:]
    href = href.split("#", 1)[0].split("?", 1)[0]
    target = unquote(href)
    if ":" in target:
        return None
    target = " ".join(target.replace("_", " ").split())
    return target or None


class _TextLinkExtractor(HTMLParser):
    def __init__(self, transform: Callable[[str], str] | None) -> None:
        super().__init__(convert_charrefs=True)
        self.transform = transform
        self.parts: list[str] = []
        self.length = 0
        self.pending_break = False
        self.last_space = True
        self.skip_depth = 0
        self.pre_depth = 0
        self.anchor: dict | None = None
        self.links: list[Link] = []

    def _append(self, s: str) -> None:
        self.parts.append(s)
        self.length += len(s)

    def _where(self) -> str:
        line, col = self.getpos()
        return f"text offset {self.length} (markup line {line}, column {col + 1})"

    def handle_starttag(self, tag, attrs):
        if tag in SKIP_TAGS:
            self.skip_depth += 1
            return
        if tag == "pre":
            self.pre_depth += 1
        if tag in BLOCK_TAGS:
            self.pending_break = True
        if tag == "a" and not self.skip_depth:
            if self.anchor is not None:
                raise HtmlStructureError(f"nested <a> at {self._where()}")
            self.anchor = {"href": dict(attrs).get("href"), "start": None, "text": []}

    def handle_startendtag(self, tag, attrs):
        if tag in BLOCK_TAGS:
            self.pending_break = True

    def handle_endtag(self, tag):
        if tag in SKIP_TAGS:
            self.skip_depth = max(0, self.skip_depth - 1)
            return
        if tag == "pre":
            self.pre_depth = max(0, self.pre_depth - 1)
        if tag in BLOCK_TAGS:
            self.pending_break = True
        if tag == "a" and not self.skip_depth:
            if self.anchor is None:
                raise HtmlStructureError(f"unmatched </a> at {self._where()}")
            self._close_anchor()

    def _close_anchor(self) -> None:
        anchor, self.anchor = self.anchor, None
        start = anchor["start"]
        target = link_target(anchor["href"])
        if start is None or target is None:
            return
        end = self.length
        visible = "".join(anchor["text"])
        start += len(visible) - len(visible.lstrip())
        end -= len(visible) - len(visible.rstrip())
        if end > start:
            self.links.append(((start, end), target))

    def handle_data(self, data):
        if self.skip_depth:
            return
        if self.transform is not None:
            data = self.transform(data)
        if not self.pre_depth:
            collapsed = " ".join(data.split())
            if data[:1].isspace():
                collapsed = " " + collapsed
            if data[-1:].isspace() and collapsed.strip():
                collapsed += " "
            data = collapsed
        if self.pending_break:
            data = data.lstrip()
            if not data:
                return
            if self.length:
                self._append("\n")
            self.pending_break = False
            self.last_space = True
        elif self.last_space and not self.pre_depth:
            data = data.lstrip()
        if not data:
            return
        if self.anchor is not None:
            if self.anchor["start"] is None:
                self.anchor["start"] = self.length
            self.anchor["text"].append(data)
        self._append(data)
        self.last_space = data[-1].isspace()

    def finish(self) -> tuple[str, list[Link]]:
        self.close()
        if self.anchor is not None:
            raise HtmlStructureError(f"unclosed <a> at end of document, {self._where()}")
        return "".join(self.parts), self.links


def html_to_text_with_links(
    html: str, transform: Callable[[str], str] | None = None
) -> tuple[str, list[Link]]:
    """Strip markup from ``html`` and report where each article link landed in the text.

    Returns the plain text and a list of ``((start, end), target_title)`` with
    end-exclusive code-point offsets. Block elements are separated by one
    newline; whitespace runs collapse to a single space outside ``<pre>``.
    ``transform`` is applied to every text chunk before offsets are taken.

    Raises HtmlStructureError on nested, unmatched or unclosed anchors.
    """
    parser = _TextLinkExtractor(transform)
    parser.feed(html)
    text, links = parser.finish()
    links.sort(key=lambda link: link[0])
    return text, links

