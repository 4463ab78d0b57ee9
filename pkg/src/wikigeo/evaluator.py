"""Great-circle distance and accuracy@d scoring."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import TextIO

from .coords import Coordinate

EARTH_RADIUS_KM = 6371.0  # mean Earth radius, spherical model
DEFAULT_TOLERANCE_KM = 161.0

Key = tuple[int, int, int]


class AlignmentError(ValueError):
    pass


def haversine_km(a: Coordinate, b: Coordinate) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


@dataclass(frozen=True)
class AccuracyPoint:
    tolerance_km: float
    accuracy: float
    n_scored: int
    n_correct: int


def _distances(predicted: Sequence[Coordinate | None], gold: Sequence[Coordinate]) -> list[float]:
    if len(predicted) != len(gold):
        raise AlignmentError(f"{len(predicted)} predictions for {len(gold)} gold coordinates")
    return [math.inf if p is None else haversine_km(p, g) for p, g in zip(predicted, gold)]


def _point(distances: Sequence[float], tolerance_km: float) -> AccuracyPoint:
    correct = sum(1 for d in distances if d <= tolerance_km)
    n = len(distances)
    return AccuracyPoint(tolerance_km, correct / n if n else 0.0, n, correct)


def accuracy_at(
    predicted: Sequence[Coordinate | None], gold: Sequence[Coordinate], tolerance_km: float = DEFAULT_TOLERANCE_KM
) -> AccuracyPoint:
    """Share of predictions within ``tolerance_km`` (inclusive) of gold.

    ``None`` marks an unresolved expression; it counts as a miss.
    """
    return _point(_distances(predicted, gold), tolerance_km)


def accuracy_curve(
    predicted: Sequence[Coordinate | None], gold: Sequence[Coordinate], tolerances_km: Sequence[float]
) -> list[AccuracyPoint]:
    if any(b <= a for a, b in zip(tolerances_km, tolerances_km[1:])):
        raise ValueError(f"tolerances must be strictly ascending: {list(tolerances_km)}")
    distances = _distances(predicted, gold)
    return [_point(distances, t) for t in tolerances_km]


def align(
    predictions: Mapping[Key, Coordinate | None], gold: Mapping[Key, Coordinate]
) -> tuple[list[Coordinate | None], list[Coordinate]]:
    """Pair predictions with gold by ``(page_id, start, end)``; both sides must cover the same keys."""
    missing = gold.keys() - predictions.keys()
    extra = predictions.keys() - gold.keys()
    if missing or extra:
        sample = sorted(missing or extra)[:3]
        raise AlignmentError(
            f"{len(missing)} gold expressions without prediction, {len(extra)} predictions "
            f"without gold expression (e.g. {sample})"
        )
    keys = sorted(gold)
    return [predictions[k] for k in keys], [gold[k] for k in keys]


def format_tolerance(t: float) -> str:
    return f"{t:g}"


def write_curve_tsv(points: Iterable[AccuracyPoint], out: TextIO) -> None:
    out.write("tolerance_km\taccuracy\tn_scored\n")
    for p in points:
        out.write(f"{format_tolerance(p.tolerance_km)}\t{p.accuracy:.6f}\t{p.n_scored}\n")
