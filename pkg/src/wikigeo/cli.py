"""Command line entry point: ``wikigeo {build,stats,geocode,eval}``.

Exit status is 0 on success, 1 for data or I/O errors and 2 for usage errors.
Outputs are written to a temporary file and renamed into place, so a failed
run never leaves a partial artifact behind.
"""

from __future__ import annotations

import argparse
import contextlib
import heapq
import json
import logging
import os
import random
import sys
import tempfile
from collections import Counter
from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import Executor, Future, ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .annotator import Source, annotate_article
from .coords import Coordinate, CoordinateError, format_degrees, parse_degrees
from .corpus import (
    CorpusFormatError,
    CorpusStats,
    StatsAccumulator,
    article_from_json,
    article_to_json,
    read_corpus,
)
from .diagnostics import Diagnostics
from .dump_ingest import (
    HtmlStructureError,
    RawArticle,
    build_coordinate_index,
    load_redirects,
    open_input,
    stream_articles,
)
from .evaluator import (
    DEFAULT_TOLERANCE_KM,
    AlignmentError,
    accuracy_at,
    accuracy_curve,
    align,
    format_tolerance,
    write_curve_tsv,
)
from .gazetteer import Gazetteer, GazetteerError, load_geonames
from .geocoder import (
    ConlluError,
    Prediction,
    Strategy,
    align_mentions,
    find_dependent_pairs,
    mentions_by_segmenter,
    parse_conllu,
    resolve_dependency,
    resolve_familiarity,
    split_conllu_documents,
)
from .textnorm import normalize_title

logger = logging.getLogger("wikigeo")

DEFAULT_TOLERANCES = (1, 5, 10, 25, 50, 100, 161, 250, 500, 1000, 2500, 5000, 10000, 20040)
BATCH_SIZE = 256
SORT_RUN_SIZE = 100_000

# (html dump format, coordinate dump format) per --format value
FORMAT_FAMILIES = {
    "fixture": ("fixture", "fixture"),
    "enterprise": ("enterprise", "cirrus"),
    "cirrus": ("enterprise", "cirrus"),
}

DATA_ERRORS = (
    OSError,
    CorpusFormatError,
    CoordinateError,
    ConlluError,
    GazetteerError,
    AlignmentError,
    HtmlStructureError,
    json.JSONDecodeError,
    UnicodeDecodeError,
)


@dataclass
class RunConfig:
    html_dump: Path | None = None
    coord_dump: Path | None = None
    gazetteer: Path | None = None
    conllu: Path | None = None
    corpus: Path | None = None
    predictions: list[Path] = field(default_factory=list)
    redirects: Path | None = None
    out: Path | None = None
    report: Path | None = None
    format: str = "fixture"
    strategy: Strategy = Strategy.FAMILIARITY
    relations: frozenset[str] | None = None
    tolerances: tuple[float, ...] = DEFAULT_TOLERANCES
    workers: int = 1
    deterministic: bool = False
    sample_size: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("--workers must be at least 1")
        if self.sample_size is not None:
            if self.sample_size < 1:
                raise ValueError("--sample-size must be positive")
            if self.seed is None:
                raise ValueError("--seed is required with --sample-size")


# -- helpers -----------------------------------------------------------------


@contextlib.contextmanager
def atomic_output(path: Path, mode: str = "wb"):
    """Write to a sibling temporary file and rename it over ``path`` on success."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"encoding": "utf-8", "newline": "\n"})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def bounded_map(executor: Executor | None, fn: Callable, items: Iterable, window: int) -> Iterator:
    """Ordered map that keeps at most ``window`` tasks in flight (serial when executor is None)."""
    if executor is None:
        for item in items:
            yield fn(item)
        return
    pending: list[Future] = []
    for item in items:
        pending.append(executor.submit(fn, item))
        if len(pending) >= window:
            yield pending.pop(0).result()
    for fut in pending:
        yield fut.result()


def batched(items: Iterable, size: int) -> Iterator[list]:
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def _pool(workers: int, initializer=None, initargs=()) -> contextlib.AbstractContextManager:
    if workers <= 1:
        if initializer is not None:
            initializer(*initargs)
        return contextlib.nullcontext(None)
    return ProcessPoolExecutor(max_workers=workers, initializer=initializer, initargs=initargs)


def sorted_lines(keyed: Iterable[tuple[tuple, str]]) -> Iterator[str]:
    """Sort ``(key, line)`` pairs by key, spilling sorted runs to disk to bound memory."""
    runs: list = []
    buffer: list[tuple[tuple, str]] = []

    def spill() -> None:
        buffer.sort()
        fh = tempfile.TemporaryFile("w+", encoding="utf-8")
        for key, line in buffer:
            fh.write(json.dumps([list(key), line], ensure_ascii=False) + "\n")
        fh.seek(0)
        runs.append(fh)
        buffer.clear()

    for item in keyed:
        buffer.append(item)
        if len(buffer) >= SORT_RUN_SIZE:
            spill()
    if not runs:
        buffer.sort()
        for _, line in buffer:
            yield line
        return
    if buffer:
        spill()

    def read_run(fh):
        for raw in fh:
            key, line = json.loads(raw)
            yield tuple(key), line

    try:
        for _, line in heapq.merge(*(read_run(fh) for fh in runs)):
            yield line
    finally:
        for fh in runs:
            fh.close()


def _log_diagnostics(diagnostics: Diagnostics) -> None:
    if not diagnostics:
        return
    summary = ", ".join(f"{k}={v}" for k, v in sorted(diagnostics.counts.items()))
    logger.warning("%d records skipped or adjusted (%s); rerun with -v for details", len(diagnostics), summary)
    for message in diagnostics.messages:
        logger.info("%s", message)


def _jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open_input(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            if raw.strip():
                yield lineno, json.loads(raw)


# -- build -------------------------------------------------------------------

_INDEX = None
_REDIRECTS = None


def _init_build(index, redirects) -> None:
    global _INDEX, _REDIRECTS
    _INDEX, _REDIRECTS = index, redirects


def _annotate_batch(batch: list[RawArticle]) -> tuple[list[tuple[int, str]], Counter, Diagnostics]:
    counts: Counter = Counter()
    diagnostics = Diagnostics()
    lines = []
    for raw in batch:
        counts["articles_read"] += 1
        if normalize_title(raw.title) not in _INDEX:
            counts["articles_skipped_no_coordinates"] += 1
            continue
        stats: dict = {}
        article = annotate_article(raw, _INDEX, _REDIRECTS, diagnostics, stats)
        if article is None:
            counts["articles_failed"] += 1
            continue
        counts["articles_written"] += 1
        counts["links_total"] += stats.get("links", 0)
        counts["links_dropped"] += stats.get("links_dropped", 0)
        for ann in article.annotations:
            counts[f"annotations_{ann.source.value}"] += 1
        lines.append((article.page_id, article_to_json(article)))
    return lines, counts, diagnostics


def cmd_build(config: RunConfig) -> dict:
    html_fmt, coord_fmt = FORMAT_FAMILIES[config.format]
    diagnostics = Diagnostics()
    with open_input(config.coord_dump) as fh:
        index = build_coordinate_index(fh, coord_fmt, diagnostics)
    redirects = None
    if config.redirects is not None:
        with open_input(config.redirects) as fh:
            redirects = load_redirects(fh)
    logger.info("coordinate index: %d titles", len(index))

    counts: Counter = Counter()
    with open_input(config.html_dump) as src, _pool(config.workers, _init_build, (index, redirects)) as pool:
        articles = stream_articles(src, html_fmt, diagnostics)
        results = bounded_map(pool, _annotate_batch, batched(articles, BATCH_SIZE), 2 * config.workers)

        def keyed() -> Iterator[tuple[tuple, str]]:
            for lines, batch_counts, batch_diagnostics in results:
                counts.update(batch_counts)
                diagnostics.merge(batch_diagnostics)
                for page_id, line in lines:
                    yield (page_id,), line

        lines = sorted_lines(keyed()) if config.deterministic else (line for _, line in keyed())
        with atomic_output(config.out) as sink:
            for line in lines:
                sink.write(line.encode("utf-8"))
                sink.write(b"\n")

    report = {
        "articles_read": counts["articles_read"],
        "articles_written": counts["articles_written"],
        "articles_skipped_no_coordinates": counts["articles_skipped_no_coordinates"],
        "articles_failed": counts["articles_failed"],
        "annotations": {s.value: counts[f"annotations_{s.value}"] for s in Source},
        "links_total": counts["links_total"],
        "links_dropped": counts["links_dropped"],
        "index_titles": len(index),
        "diagnostics": dict(sorted(diagnostics.counts.items())),
    }
    _log_diagnostics(diagnostics)
    return report


# -- stats -------------------------------------------------------------------


def _accumulate_chunk(chunk: tuple[int, list[bytes]]) -> StatsAccumulator:
    first_lineno, lines = chunk
    acc = StatsAccumulator()
    for offset, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            acc.add(article_from_json(line))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(first_lineno + offset, str(exc)) from exc
    return acc


def _numbered_chunks(path: Path, size: int) -> Iterator[tuple[int, list[bytes]]]:
    with open_input(path) as fh:
        lineno = 1
        for chunk in batched(fh, size):
            yield lineno, chunk
            lineno += len(chunk)


def cmd_stats(config: RunConfig) -> dict:
    total = StatsAccumulator()
    with _pool(config.workers) as pool:
        for acc in bounded_map(pool, _accumulate_chunk, _numbered_chunks(config.corpus, 2000), 2 * config.workers):
            total = total.merge(acc)
    return total.finalize().to_dict()


# -- geocode -----------------------------------------------------------------

_GAZETTEER: Gazetteer | None = None
_RELATIONS = None


def _init_geocode(gazetteer, relations) -> None:
    global _GAZETTEER, _RELATIONS
    _GAZETTEER, _RELATIONS = gazetteer, relations


def geocode_article(article, parse_lines, strategy: Strategy, gazetteer: Gazetteer, relations=None, diagnostics=None) -> list[Prediction]:
    """Predict a coordinate for every annotation of ``article``.

    With ``parse_lines`` (CoNLL-U for the article text), sentences come from
    the parse; without it, from the built-in segmenter and no pairs exist.
    """
    if parse_lines is None:
        mentions = mentions_by_segmenter(article.annotations, article.text)
        sentences = []
    else:
        sentences = parse_conllu(parse_lines, article.text)
        mentions = align_mentions(article.annotations, sentences, diagnostics)
    if strategy is Strategy.FAMILIARITY:
        return resolve_familiarity(mentions, gazetteer)
    pairs = find_dependent_pairs(mentions, sentences, relations)
    return resolve_dependency(mentions, pairs, gazetteer)


def prediction_record(page_id: int, p: Prediction) -> dict:
    record = {
        "page_id": page_id,
        "start": p.mention.annotation.start,
        "end": p.mention.annotation.end,
        "strategy": p.strategy.value,
        "provenance": p.provenance.value,
    }
    if p.coordinate is not None:
        record["lat"] = format_degrees(p.coordinate.lat)
        record["lon"] = format_degrees(p.coordinate.lon)
    return record


def _geocode_batch(batch) -> tuple[list[tuple[tuple, str]], Counter]:
    counts: Counter = Counter()
    out = []
    for lineno, line, parse_lines, strategy in batch:
        try:
            article = article_from_json(line)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusFormatError(lineno, str(exc)) from exc
        if strategy is Strategy.DEPENDENCY and parse_lines is None:
            counts["articles_without_parse"] += 1
        try:
            predictions = geocode_article(article, parse_lines, strategy, _GAZETTEER, _RELATIONS)
        except ConlluError as exc:
            raise ConlluError(f"page {article.page_id}: {exc}") from exc
        for p in predictions:
            counts[p.provenance.value] += 1
            out.append(((article.page_id, p.mention.annotation.start), json.dumps(prediction_record(article.page_id, p))))
    return out, counts


class ConlluSource:
    """CoNLL-U parses looked up by page id, from one stream or a directory of ``<page_id>.conllu``."""

    def __init__(self, path: Path, wanted: set[int] | None = None) -> None:
        self.path = path
        self.docs: dict[int, list[str]] = {}
        if path.is_dir():
            return
        with open_input(path) as fh:
            for doc_id, lines in split_conllu_documents(fh):
                try:
                    page_id = int(doc_id)
                except (TypeError, ValueError):
                    raise ConlluError(f"{path}: document id {doc_id!r} is not a page id") from None
                if wanted is None or page_id in wanted:
                    self.docs[page_id] = lines

    def get(self, page_id: int) -> list[str] | None:
        if not self.path.is_dir():
            return self.docs.get(page_id)
        for name in (f"{page_id}.conllu", f"{page_id}.conllu.gz"):
            candidate = self.path / name
            if candidate.exists():
                with open_input(candidate) as fh:
                    return [l.decode("utf-8").rstrip("\r\n") for l in fh]
        return None


def select_pages(corpus: Path, sample_size: int | None, seed: int | None) -> set[int] | None:
    if sample_size is None:
        return None
    with open_input(corpus) as fh:
        page_ids = sorted({a.page_id for a in read_corpus(fh)})
    if sample_size >= len(page_ids):
        return set(page_ids)
    return set(random.Random(seed).sample(page_ids, sample_size))


def cmd_geocode(config: RunConfig) -> dict:
    wanted = select_pages(config.corpus, config.sample_size, config.seed)
    with open_input(config.gazetteer) as fh:
        gazetteer = load_geonames(fh)
    parses = ConlluSource(config.conllu, wanted) if config.conllu is not None else None

    def work() -> Iterator:
        with open_input(config.corpus) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    page_id = json.loads(line)["page_id"]
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorpusFormatError(lineno, str(exc)) from exc
                if wanted is not None and page_id not in wanted:
                    continue
                yield lineno, line, (parses.get(page_id) if parses else None), config.strategy

    counts: Counter = Counter()
    with _pool(config.workers, _init_geocode, (gazetteer, config.relations)) as pool:
        results = bounded_map(pool, _geocode_batch, batched(work(), BATCH_SIZE), 2 * config.workers)

        def keyed():
            for rows, batch_counts in results:
                counts.update(batch_counts)
                yield from rows

        lines = sorted_lines(keyed()) if config.deterministic else (line for _, line in keyed())
        with atomic_output(config.out) as sink:
            for line in lines:
                sink.write(line.encode("utf-8") + b"\n")
    return {"strategy": config.strategy.value, "predictions": dict(sorted(counts.items()))}


# -- eval --------------------------------------------------------------------


def load_predictions(paths: Iterable[Path]) -> dict[str, dict]:
    by_strategy: dict[str, dict] = {}
    for path in paths:
        for lineno, rec in _jsonl(path):
            try:
                key = (int(rec["page_id"]), int(rec["start"]), int(rec["end"]))
                coordinate = None
                if "lat" in rec:
                    coordinate = Coordinate(parse_degrees(rec["lat"]), parse_degrees(rec["lon"]))
                strategy = rec["strategy"]
            except (KeyError, TypeError, ValueError) as exc:
                raise AlignmentError(f"{path} line {lineno}: bad prediction record ({exc})") from exc
            table = by_strategy.setdefault(strategy, {})
            if key in table:
                raise AlignmentError(f"{path} line {lineno}: duplicate prediction for {key}")
            table[key] = coordinate
    return by_strategy


def cmd_eval(config: RunConfig) -> dict:
    by_strategy = load_predictions(config.predictions)
    pages = {k[0] for table in by_strategy.values() for k in table}
    gold_by_page: dict[int, dict] = {}
    with open_input(config.corpus) as fh:
        for article in read_corpus(fh):
            if article.page_id in pages:
                gold_by_page[article.page_id] = {
                    (article.page_id, a.start, a.end): a.coordinate for a in article.annotations
                }

    summary = {}
    curves = {}
    for strategy in sorted(by_strategy):
        table = by_strategy[strategy]
        gold = {}
        for page_id in sorted({k[0] for k in table}):
            if page_id not in gold_by_page:
                raise AlignmentError(f"{strategy}: page {page_id} has predictions but is not in the corpus")
            gold.update(gold_by_page[page_id])
        predicted, truth = align(table, gold)
        curves[strategy] = accuracy_curve(predicted, truth, config.tolerances)
        point = accuracy_at(predicted, truth, DEFAULT_TOLERANCE_KM)
        summary[strategy] = {"accuracy_at_161km": point.accuracy, "n_scored": point.n_scored}

    config.out.mkdir(parents=True, exist_ok=True)
    for strategy, points in curves.items():
        with atomic_output(config.out / f"accuracy_{strategy}.tsv", "w") as fh:
            write_curve_tsv(points, fh)
    with atomic_output(config.out / "summary.tsv", "w") as fh:
        fh.write("strategy\taccuracy_at_161km\tn_scored\n")
        for strategy, row in summary.items():
            fh.write(f"{strategy}\t{row['accuracy_at_161km']:.6f}\t{row['n_scored']}\n")
    return summary


# -- argument parsing ----------------------------------------------------------


def _tolerances(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(b <= a for a, b in zip(values, values[1:])) or values[0] < 0:
        raise argparse.ArgumentTypeError("tolerances must be non-negative and strictly ascending")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wikigeo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, workers=True):
        if workers:
            p.add_argument("--workers", type=int, default=1)
        p.add_argument("--deterministic", action="store_true", help="order outputs by page id")

    p = sub.add_parser("build", help="annotate an HTML dump into a corpus")
    p.add_argument("--html-dump", type=Path, required=True)
    p.add_argument("--coord-dump", type=Path, required=True)
    p.add_argument("--format", choices=sorted(FORMAT_FAMILIES), default="fixture")
    p.add_argument("--redirects", type=Path, help="JSON lines of {from, to} titles")
    p.add_argument("--out", type=Path, required=True, help="corpus JSONL to write")
    p.add_argument("--report", type=Path, help="also write the build report JSON here")
    common(p)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, help="write statistics JSON here")
    common(p)

    p = sub.add_parser("geocode", help="predict coordinates for corpus expressions")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--gazetteer", type=Path, required=True)
    p.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.FAMILIARITY.value)
    p.add_argument("--conllu", type=Path, help="CoNLL-U stream with '# newdoc id = <page_id>' or a directory")
    p.add_argument("--relations", help="comma-separated dependency labels allowed for pairing (default: all)")
    p.add_argument("--out", type=Path, required=True, help="predictions JSONL to write")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--seed", type=int)
    common(p)

    p = sub.add_parser("eval", help="accuracy@d of predictions against corpus coordinates")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--predictions", type=Path, action="append", required=True)
    p.add_argument("--tolerances", type=_tolerances, default=DEFAULT_TOLERANCES, help="comma list, km")
    p.add_argument("--out", type=Path, required=True, help="directory for the accuracy TSV files")
    common(p, workers=False)
    return parser


def _config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> RunConfig:
    for name in ("html_dump", "coord_dump", "gazetteer", "conllu", "corpus", "redirects"):
        path = getattr(args, name, None)
        if path is not None and not path.exists():
            parser.error(f"--{name.replace('_', '-')}: {path} does not exist")
    for path in getattr(args, "predictions", None) or ():
        if not path.exists():
            parser.error(f"--predictions: {path} does not exist")
    if args.command == "geocode" and args.strategy == Strategy.DEPENDENCY.value and args.conllu is None:
        parser.error("--strategy dependency requires --conllu")
    relations = getattr(args, "relations", None)
    try:
        return RunConfig(
            html_dump=getattr(args, "html_dump", None),
            coord_dump=getattr(args, "coord_dump", None),
            gazetteer=getattr(args, "gazetteer", None),
            conllu=getattr(args, "conllu", None),
            corpus=getattr(args, "corpus", None),
            predictions=getattr(args, "predictions", None) or [],
            redirects=getattr(args, "redirects", None),
            out=getattr(args, "out", None),
            report=getattr(args, "report", None),
            format=getattr(args, "format", "fixture"),
            strategy=Strategy(getattr(args, "strategy", Strategy.FAMILIARITY.value)),
            relations=frozenset(r.strip() for r in relations.split(",") if r.strip()) if relations else None,
            tolerances=getattr(args, "tolerances", DEFAULT_TOLERANCES),
            workers=getattr(args, "workers", 1),
            deterministic=args.deterministic,
            sample_size=getattr(args, "sample_size", None),
            seed=getattr(args, "seed", None),
        )
    except ValueError as exc:
        parser.error(str(exc))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = _config(args, parser)
    try:
        if args.command == "build":
            report = cmd_build(config)
            text = json.dumps(report, indent=2, sort_keys=True) + "\n"
            if config.report is not None:
                with atomic_output(config.report, "w") as fh:
                    fh.write(text)
            sys.stdout.write(text)
        elif args.command == "stats":
            stats = cmd_stats(config)
            sys.stdout.write(CorpusStats(**stats).to_text())
            text = json.dumps(stats, indent=2) + "\n"
            if config.out is not None:
                with atomic_output(config.out, "w") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
        elif args.command == "geocode":
            sys.stdout.write(json.dumps(cmd_geocode(config), sort_keys=True) + "\n")
        elif args.command == "eval":
            summary = cmd_eval(config)
            for strategy, row in summary.items():
                sys.stdout.write(
                    f"{strategy}\taccuracy@{format_tolerance(DEFAULT_TOLERANCE_KM)}km\t"
                    f"{row['accuracy_at_161km']:.4f}\t(n={row['n_scored']})\n"
                )
    except DATA_ERRORS as exc:
        print(f"wikigeo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
