"""Gazetteer-based geocoding of gold location expressions.

Two strategies are provided. The familiarity strategy picks, for each
expression, the gazetteer entry with the most alternate names. The
dependency strategy first pairs expressions that are linked in a
dependency parse (a head expression and the expression modifying it),
resolves the modifier by familiarity, and then picks the head candidate
closest to the modifier.
"""

from __future__ import annotations

import bisect
import enum
import re
from collections.abc import Collection, Iterable, Iterator, Sequence
from dataclasses import dataclass

from .annotator import LocationAnnotation
from .coords import Coordinate
from .corpus import split_sentences
from .diagnostics import Diagnostics
from .evaluator import haversine_km
from .gazetteer import Gazetteer, GazetteerEntry
from .textnorm import normalize_text

_NEWDOC = re.compile(r"^#\s*newdoc\s+id\s*=\s*(.+?)\s*$")


class ConlluError(ValueError):
    pass


class Strategy(str, enum.Enum):
    FAMILIARITY = "familiarity"
    DEPENDENCY = "dependency"


class Provenance(str, enum.Enum):
    GAZETTEER = "gazetteer"
    COPIED_PREVIOUS = "copied_previous"
    COPIED_MODIFIER = "copied_modifier"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class UdToken:
    index: int
    form: str
    start: int  # offsets into DependencySentence.text
    end: int
    head: int
    deprel: str


@dataclass(frozen=True)
class DependencySentence:
    text: str
    tokens: tuple[UdToken, ...]
    char_offset: int

    def token(self, index: int) -> UdToken:
        return self.tokens[index - 1]

    @property
    def end_offset(self) -> int:
        return self.char_offset + len(self.text)


@dataclass(frozen=True)
class ExpressionMention:
    annotation: LocationAnnotation
    sentence_index: int | None
    token_ids: tuple[int, ...] = ()
    head_token: int | None = None

    @property
    def aligned(self) -> bool:
        return bool(self.token_ids)


@dataclass(frozen=True)
class Prediction:
    mention: ExpressionMention
    coordinate: Coordinate | None
    strategy: Strategy
    provenance: Provenance
    geoname_id: int | None = None

    @property
    def resolved(self) -> bool:
        return self.coordinate is not None


# -- CoNLL-U -------------------------------------------------------------------


def _text_lines(source) -> Iterator[str]:
    if isinstance(source, str):
        yield from source.splitlines()
        return
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\r\n")


def split_conllu_documents(source) -> Iterator[tuple[str | None, list[str]]]:
    """Split a stream at ``# newdoc id = ...`` comments into ``(doc_id, lines)`` pieces."""
    doc_id: str | None = None
    lines: list[str] = []
    for line in _text_lines(source):
        m = _NEWDOC.match(line)
        if m:
            if lines and any(l.strip() and not l.startswith("#") for l in lines):
                yield doc_id, lines
            doc_id, lines = m.group(1), []
            continue
        lines.append(line)
    if any(l.strip() and not l.startswith("#") for l in lines):
        yield doc_id, lines


def _raw_sentences(lines: Iterable[str]) -> Iterator[list[tuple[int, list[str]]]]:
    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            if rows:
                yield rows
            rows = []
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}")
        rows.append((lineno, cols))
    if rows:
        yield rows


def parse_conllu(source, article_text: str) -> list[DependencySentence]:
    """Read CoNLL-U sentences and locate every token in ``article_text``.

    Tokens are matched in order, skipping whitespace between them. Words
    inside a multiword token take the span of the surface token. Raises
    ConlluError for malformed lines, invalid trees, or tokens that cannot
    be found at the scan position.
    """
    cursor = 0
    sentences = []

    def locate(form: str, where: str) -> tuple[int, int]:
        nonlocal cursor
        while cursor < len(article_text) and article_text[cursor].isspace():
            cursor += 1
        form = normalize_text(form)
        if not form or not article_text.startswith(form, cursor):
            found = article_text[cursor : cursor + len(form) + 10]
            raise ConlluError(f"{where}: form {form!r} not found at offset {cursor} (text has {found!r})")
        span = (cursor, cursor + len(form))
        cursor += len(form)
        return span

    for sent_no, rows in enumerate(_raw_sentences(_text_lines(source)), 1):
        words = []
        multi_end, multi_span = 0, None
        for lineno, cols in rows:
            ident, form = cols[0], cols[1]
            where = f"sentence {sent_no}, line {lineno}"
            if "-" in ident:
                try:
                    first, last = map(int, ident.split("-"))
                except ValueError:
                    raise ConlluError(f"{where}: bad token range {ident!r}") from None
                multi_end, multi_span = last, locate(form, where)
                continue
            if "." in ident:
                continue
            try:
                index, head = int(ident), int(cols[6])
            except ValueError:
                raise ConlluError(f"{where}: bad id or head {ident!r}/{cols[6]!r}") from None
            if index != len(words) + 1:
                raise ConlluError(f"{where}: token id {index} out of sequence")
            span = multi_span if index <= multi_end else locate(form, where)
            words.append((index, form, span, head, cols[7]))
        if not words:
            continue
        n = len(words)
        roots = [w for w in words if w[3] == 0]
        if len(roots) != 1:
            raise ConlluError(f"sentence {sent_no}: expected exactly one root, found {len(roots)}")
        for index, _, _, head, _ in words:
            if not 0 <= head <= n or head == index:
                raise ConlluError(f"sentence {sent_no}: token {index} has invalid head {head}")
        offset = words[0][2][0]
        end = max(w[2][1] for w in words)
        tokens = tuple(
            UdToken(index, form, s - offset, e - offset, head, deprel)
            for index, form, (s, e), head, deprel in words
        )
        sentences.append(DependencySentence(article_text[offset:end], tokens, offset))
    return sentences


# -- mentions ------------------------------------------------------------------


def _depth(sentence: DependencySentence, index: int) -> int:
    depth = 0
    while index != 0 and depth <= len(sentence.tokens):
        index = sentence.token(index).head
        depth += 1
    return depth


def align_mentions(
    annotations: Sequence[LocationAnnotation],
    sentences: Sequence[DependencySentence],
    diagnostics: Diagnostics | None = None,
) -> list[ExpressionMention]:
    """Attach each annotation to the sentence and tokens it covers."""
    starts = [s.char_offset for s in sentences]
    mentions = []
    for ann in sorted(annotations, key=lambda a: a.start):
        hits: list[tuple[int, int]] = []
        i = max(bisect.bisect_right(starts, ann.start) - 1, 0)
        while i < len(sentences) and sentences[i].char_offset < ann.end:
            sent = sentences[i]
            for tok in sent.tokens:
                if tok.start + sent.char_offset < ann.end and ann.start < tok.end + sent.char_offset:
                    hits.append((i, tok.index))
            i += 1
        sentence_ids = sorted({s for s, _ in hits})
        if len(sentence_ids) > 1:
            if diagnostics is not None:
                diagnostics.report("mention_crosses_sentences", f"({ann.start}, {ann.end}) {ann.notation!r}")
            mentions.append(ExpressionMention(ann, None))
            continue
        if not hits:
            k = bisect.bisect_right(starts, ann.start) - 1
            inside = k >= 0 and ann.end <= sentences[k].end_offset
            mentions.append(ExpressionMention(ann, k if inside else None))
            continue
        sent_idx = sentence_ids[0]
        sent = sentences[sent_idx]
        ids = tuple(t for _, t in hits)
        outward = [t for t in ids if sent.token(t).head not in ids]
        head = min(outward or ids, key=lambda t: (_depth(sent, t), t))
        mentions.append(ExpressionMention(ann, sent_idx, ids, head))
    return mentions


def mentions_by_segmenter(annotations: Sequence[LocationAnnotation], text: str) -> list[ExpressionMention]:
    """Mentions without a parse: sentences come from the built-in segmenter."""
    bounds = split_sentences(text)
    starts = [s for s, _ in bounds]
    mentions = []
    for ann in sorted(annotations, key=lambda a: a.start):
        k = bisect.bisect_right(starts, ann.start) - 1
        inside = k >= 0 and ann.end <= bounds[k][1]
        mentions.append(ExpressionMention(ann, k if inside else None))
    return mentions


def find_dependent_pairs(
    mentions: Sequence[ExpressionMention],
    sentences: Sequence[DependencySentence],
    relations: Collection[str] | None = None,
) -> list[tuple[ExpressionMention, ExpressionMention]]:
    """Return ``(head, modifier)`` mention pairs.

    Starting from the modifier's syntactic head token, walk up the tree; the
    first token that belongs to another mention makes that mention the head.
    A mention is therefore the modifier in at most one pair. If
    ``relations`` is given, only modifiers attached by one of those labels
    (full label or its part before ``:``) are considered.
    """
    by_sentence: dict[int, list[ExpressionMention]] = {}
    for m in mentions:
        if m.aligned and m.sentence_index is not None:
            by_sentence.setdefault(m.sentence_index, []).append(m)

    pairs = []
    for sent_idx, group in by_sentence.items():
        sent = sentences[sent_idx]
        owner = {t: m for m in group for t in m.token_ids}
        for modifier in group:
            tok = sent.token(modifier.head_token)
            if relations is not None and not (tok.deprel in relations or tok.deprel.split(":")[0] in relations):
                continue
            node, steps = tok.head, 0
            while node != 0 and steps <= len(sent.tokens):
                other = owner.get(node)
                if other is not None and other is not modifier:
                    pairs.append((other, modifier))
                    break
                node = sent.token(node).head
                steps += 1
    pairs.sort(key=lambda p: p[1].annotation.start)
    return pairs


# -- resolution ----------------------------------------------------------------


def _previous_coordinate(
    mention: ExpressionMention, resolved: dict[int, list[tuple[int, Coordinate]]]
) -> Coordinate | None:
    if mention.sentence_index is None:
        return None
    best = None
    for start, coordinate in resolved.get(mention.sentence_index, ()):
        if start < mention.annotation.start and (best is None or start > best[0]):
            best = (start, coordinate)
    return best[1] if best else None


def _familiarity(
    mention: ExpressionMention,
    gazetteer: Gazetteer,
    previous: Coordinate | None,
    strategy: Strategy,
) -> Prediction:
    candidates = gazetteer.lookup(mention.annotation.notation)
    if candidates:
        top = candidates[0]
        return Prediction(mention, top.coordinate, strategy, Provenance.GAZETTEER, top.geoname_id)
    if previous is not None:
        return Prediction(mention, previous, strategy, Provenance.COPIED_PREVIOUS)
    return Prediction(mention, None, strategy, Provenance.UNRESOLVED)


def _remember(prediction: Prediction, resolved: dict[int, list[tuple[int, Coordinate]]]) -> None:
    m = prediction.mention
    if prediction.coordinate is not None and m.sentence_index is not None:
        resolved.setdefault(m.sentence_index, []).append((m.annotation.start, prediction.coordinate))


def _span(m: ExpressionMention) -> tuple[int, int]:
    return (m.annotation.start, m.annotation.end)


def resolve_familiarity(mentions: Sequence[ExpressionMention], gazetteer: Gazetteer) -> list[Prediction]:
    resolved: dict[int, list[tuple[int, Coordinate]]] = {}
    out = []
    for m in mentions:
        prediction = _familiarity(m, gazetteer, _previous_coordinate(m, resolved), Strategy.FAMILIARITY)
        _remember(prediction, resolved)
        out.append(prediction)
    return out


def closest_candidate(candidates: Sequence[GazetteerEntry], target: Coordinate) -> GazetteerEntry:
    return min(candidates, key=lambda e: (haversine_km(e.coordinate, target), e.geoname_id))


def resolve_dependency(
    mentions: Sequence[ExpressionMention],
    pairs: Sequence[tuple[ExpressionMention, ExpressionMention]],
    gazetteer: Gazetteer,
) -> list[Prediction]:
    """Resolve modifiers before their heads, heads toward their nearest resolved modifier.

    Mentions outside any pair are resolved exactly as resolve_familiarity
    would; with no pairs the two functions agree on every mention.
    """
    modifiers: dict[tuple[int, int], list[ExpressionMention]] = {}
    for head, modifier in pairs:
        modifiers.setdefault(_span(head), []).append(modifier)

    results: dict[tuple[int, int], Prediction] = {}
    active: set[tuple[int, int]] = set()
    resolved: dict[int, list[tuple[int, Coordinate]]] = {}

    def resolve(m: ExpressionMention) -> None:
        key = _span(m)
        if key in results or key in active:
            return
        active.add(key)
        for child in modifiers.get(key, ()):
            resolve(child)
        anchors = [
            (abs(c.annotation.start - m.annotation.start), c.annotation.start, results[_span(c)].coordinate)
            for c in modifiers.get(key, ())
            if _span(c) in results and results[_span(c)].coordinate is not None
        ]
        if anchors:
            target = min(anchors, key=lambda a: a[:2])[2]
            candidates = gazetteer.lookup(m.annotation.notation)
            if candidates:
                best = closest_candidate(candidates, target)
                prediction = Prediction(m, best.coordinate, Strategy.DEPENDENCY, Provenance.GAZETTEER, best.geoname_id)
            else:
                prediction = Prediction(m, target, Strategy.DEPENDENCY, Provenance.COPIED_MODIFIER)
        else:
            prediction = _familiarity(m, gazetteer, _previous_coordinate(m, resolved), Strategy.DEPENDENCY)
        results[key] = prediction
        _remember(prediction, resolved)
        active.discard(key)

    for m in mentions:
        resolve(m)
    return [results[_span(m)] for m in mentions]

