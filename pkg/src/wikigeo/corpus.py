"""Corpus JSON-lines persistence and corpus statistics."""

from __future__ import annotations

import json
import re
import unicodedata
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field
from typing import BinaryIO

from .annotator import AnnotatedArticle, LocationAnnotation, Source
from .coords import Coordinate, CoordinateError, format_degrees, parse_degrees


class CorpusFormatError(ValueError):
    def __init__(self, lineno: int, message: str) -> None:
        super().__init__(f"corpus line {lineno}: {message}")
        self.lineno = lineno


# -- serialization -------------------------------------------------------------


def article_to_json(article: AnnotatedArticle) -> str:
    record = {
        "title": article.title,
        "page_id": article.page_id,
        "lat": format_degrees(article.coordinate.lat),
        "lon": format_degrees(article.coordinate.lon),
        "text": article.text,
        "annotations": [
            {
                "start": a.start,
                "end": a.end,
                "notation": a.notation,
                "lat": format_degrees(a.coordinate.lat),
                "lon": format_degrees(a.coordinate.lon),
                "source": a.source.value,
            }
            for a in article.annotations
        ],
    }
    return json.dumps(record, ensure_ascii=False)


def write_corpus(articles: Iterable[AnnotatedArticle], sink: BinaryIO) -> int:
    n = 0
    for article in articles:
        sink.write(article_to_json(article).encode("utf-8"))
        sink.write(b"\n")
        n += 1
    return n


def _coordinate(record: dict) -> Coordinate:
    return Coordinate(parse_degrees(record["lat"]), parse_degrees(record["lon"]))


def _int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    return value


def article_from_json(line: str | bytes) -> AnnotatedArticle:
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("not a JSON object")
    if not isinstance(record["title"], str) or not isinstance(record["text"], str):
        raise ValueError("title and text must be strings")
    annotations = []
    for a in record["annotations"]:
        if not isinstance(a["notation"], str):
            raise ValueError("notation must be a string")
        annotations.append(
            LocationAnnotation(
                start=_int(a["start"], "start"),
                end=_int(a["end"], "end"),
                notation=a["notation"],
                coordinate=_coordinate(a),
                source=Source(a["source"]),
            )
        )
    article = AnnotatedArticle(
        title=record["title"],
        page_id=_int(record["page_id"], "page_id"),
        text=record["text"],
        coordinate=_coordinate(record),
        annotations=tuple(annotations),
    )
    article.validate()
    return article


def read_corpus(source: BinaryIO) -> Iterator[AnnotatedArticle]:
    """Yield validated articles; any malformed line raises CorpusFormatError."""
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            yield article_from_json(line)
        except (KeyError, TypeError) as exc:
            raise CorpusFormatError(lineno, f"missing or mistyped field {exc}") from exc
        except (ValueError, CoordinateError) as exc:
            raise CorpusFormatError(lineno, str(exc)) from exc


# -- sentence and token counts ------------------------------------------------

_SENTENCE_BREAK = re.compile(r"(?<=[.?!])\s+(?=[^\W\d_])")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Sentence spans: a break follows ``.``, ``?`` or ``!`` plus whitespace before an uppercase letter."""
    spans = []
    start = 0
    for m in _SENTENCE_BREAK.finditer(text):
        if not text[m.end()].isupper():
            continue
        spans.append((start, m.start()))
        start = m.end()
    spans.append((start, len(text)))
    return [(s, e) for s, e in spans if text[s:e].strip()]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.split():
        i, j = 0, len(raw)
        while i < j and _is_punct(raw[i]):
            i += 1
        while j > i and _is_punct(raw[j - 1]):
            j -= 1
        if i < j:
            tokens.append(raw[i:j])
    return tokens


# -- statistics -----------------------------------------------------------------


@dataclass
class CorpusStats:
    n_articles: int
    n_sentences: int
    n_tokens: int
    n_expressions: int
    n_unique_notations: int
    n_ambiguous_expressions: int
    n_recessive_expressions: int
    n_ambiguous_notations: int
    ambiguous_expression_fraction: float
    recessive_expression_fraction: float
    ambiguous_unique_fraction: float
    per_article_sentences: float
    per_article_tokens: float
    per_article_expressions: float
    per_article_unique_expressions: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        rows = self.to_dict()
        width = max(map(len, rows))
        lines = []
        for name, value in rows.items():
            shown = f"{value:.6f}" if isinstance(value, float) else str(value)
            lines.append(f"{name:<{width}}  {shown}")
        lines.append("(sentence and token counts use the built-in approximate segmenter)")
        return "\n".join(lines) + "\n"


@dataclass
class StatsAccumulator:
    """Partial statistics over a set of articles; merge() combines disjoint sets."""

    n_articles: int = 0
    n_sentences: int = 0
    n_tokens: int = 0
    n_expressions: int = 0
    sum_unique_per_article: int = 0
    profiles: dict[str, Counter] = field(default_factory=dict)

    def add(self, article: AnnotatedArticle) -> None:
        self.n_articles += 1
        self.n_sentences += len(split_sentences(article.text))
        self.n_tokens += len(tokenize(article.text))
        self.n_expressions += len(article.annotations)
        self.sum_unique_per_article += len({a.notation for a in article.annotations})
        for a in article.annotations:
            self.profiles.setdefault(a.notation, Counter())[a.coordinate.key()] += 1

    def merge(self, other: StatsAccumulator) -> StatsAccumulator:
        profiles = {k: Counter(v) for k, v in self.profiles.items()}
        for notation, counts in other.profiles.items():
            profiles.setdefault(notation, Counter()).update(counts)
        return StatsAccumulator(
            n_articles=self.n_articles + other.n_articles,
            n_sentences=self.n_sentences + other.n_sentences,
            n_tokens=self.n_tokens + other.n_tokens,
            n_expressions=self.n_expressions + other.n_expressions,
            sum_unique_per_article=self.sum_unique_per_article + other.sum_unique_per_article,
            profiles=profiles,
        )

    def finalize(self) -> CorpusStats:
        ambiguous = recessive = ambiguous_notations = 0
        for counts in self.profiles.values():
            if len(counts) < 2:
                continue
            ambiguous_notations += 1
            ambiguous += sum(counts.values())
            top = max(counts.values())
            # coordinates tied at the top count are all "most frequent"
            recessive += sum(c for c in counts.values() if c < top)

        def ratio(a: int, b: int) -> float:
            return a / b if b else 0.0

        n = self.n_articles
        return CorpusStats(
            n_articles=n,
            n_sentences=self.n_sentences,
            n_tokens=self.n_tokens,
            n_expressions=self.n_expressions,
            n_unique_notations=len(self.profiles),
            n_ambiguous_expressions=ambiguous,
            n_recessive_expressions=recessive,
            n_ambiguous_notations=ambiguous_notations,
            ambiguous_expression_fraction=ratio(ambiguous, self.n_expressions),
            recessive_expression_fraction=ratio(recessive, self.n_expressions),
            ambiguous_unique_fraction=ratio(ambiguous_notations, len(self.profiles)),
            per_article_sentences=ratio(self.n_sentences, n),
            per_article_tokens=ratio(self.n_tokens, n),
            per_article_expressions=ratio(self.n_expressions, n),
            per_article_unique_expressions=ratio(self.sum_unique_per_article, n),
        )


def accumulate(articles: Iterable[AnnotatedArticle]) -> StatsAccumulator:
    acc = StatsAccumulator()
    for article in articles:
        acc.add(article)
    return acc


def merge_stats(a: StatsAccumulator, b: StatsAccumulator) -> StatsAccumulator:
    return a.merge(b)


def compute_stats(corpus: Iterable[AnnotatedArticle]) -> CorpusStats:
    return accumulate(corpus).finalize()
