"""GeoNames gazetteer loading and name lookup."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from types import MappingProxyType
from typing import BinaryIO

from .coords import Coordinate, CoordinateError
from .diagnostics import Diagnostics
from .textnorm import normalize_name

logger = logging.getLogger(__name__)


class GazetteerError(ValueError):
    pass


@dataclass(frozen=True)
class GazetteerEntry:
    geoname_id: int
    name: str
    alternate_names: tuple[str, ...]
    coordinate: Coordinate

    @property
    def alternate_name_count(self) -> int:
        return len(self.alternate_names)


def alternate_name_count(entry: GazetteerEntry) -> int:
    return len(entry.alternate_names)


def _rank(entry: GazetteerEntry) -> tuple[int, int]:
    return (-len(entry.alternate_names), entry.geoname_id)


class Gazetteer:
    """Read-only collection of entries indexed by every normalized name they carry."""

    def __init__(self, entries: Iterable[GazetteerEntry] = ()) -> None:
        by_id: dict[int, GazetteerEntry] = {}
        buckets: dict[str, list[GazetteerEntry]] = {}
        for entry in entries:
            if entry.geoname_id in by_id:
                raise GazetteerError(f"duplicate geonameid {entry.geoname_id}")
            by_id[entry.geoname_id] = entry
            keys = {normalize_name(entry.name)}
            keys.update(normalize_name(n) for n in entry.alternate_names)
            keys.discard("")
            for key in keys:
                buckets.setdefault(key, []).append(entry)
        self._by_id = MappingProxyType(by_id)
        self._index = MappingProxyType({k: tuple(sorted(v, key=_rank)) for k, v in buckets.items()})

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())

    def get(self, geoname_id: int) -> GazetteerEntry | None:
        return self._by_id.get(geoname_id)

    def lookup(self, name: str) -> tuple[GazetteerEntry, ...]:
        """Entries named ``name``, most alternate names first, then ascending id."""
        return self._index.get(normalize_name(name), ())


def lookup(gazetteer: Gazetteer, name: str) -> list[GazetteerEntry]:
    return list(gazetteer.lookup(name))


def parse_geonames_line(line: str) -> GazetteerEntry:
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) < 6:
        raise ValueError(f"expected at least 6 columns, got {len(cols)}")
    try:
        geoname_id = int(cols[0])
    except ValueError:
        raise ValueError(f"bad geonameid {cols[0]!r}") from None
    try:
        lat, lon = float(cols[4]), float(cols[5])
    except ValueError:
        raise ValueError(f"bad latitude/longitude {cols[4]!r}, {cols[5]!r}") from None
    alternates = tuple(n.strip() for n in cols[3].split(",") if n.strip())
    return GazetteerEntry(geoname_id, cols[1].strip(), alternates, Coordinate(lat, lon))


def iter_geonames(source: BinaryIO, diagnostics: Diagnostics | None = None):
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    for lineno, raw in enumerate(source, 1):
        line = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        if not line.strip() or line.startswith("#"):
            continue
        try:
            yield parse_geonames_line(line)
        except (ValueError, CoordinateError) as exc:
            diagnostics.report("bad_gazetteer_line", f"line {lineno}: {exc}")


def load_geonames(source: BinaryIO, diagnostics: Diagnostics | None = None) -> Gazetteer:
    """Load an ``allCountries.txt``-style table (or any file with the same leading columns).

    Lines with unparsable coordinates are skipped and reported; a repeated
    geonameid raises GazetteerError.
    """
    gazetteer = Gazetteer(iter_geonames(source, diagnostics))
    logger.info("loaded %d gazetteer entries", len(gazetteer))
    return gazetteer
