"""Coordinates and the fixed-precision string form used on disk."""

from __future__ import annotations

import math
from dataclasses import dataclass

# 5 fraction digits, roughly 1.1 m at the equator.
PRECISION = 5


class CoordinateError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Coordinate:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        for name, value, bound in (("lat", self.lat, 90.0), ("lon", self.lon, 180.0)):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise CoordinateError(f"{name} must be a number, got {value!r}")
            if math.isnan(value) or not -bound <= value <= bound:
                raise CoordinateError(f"{name}={value!r} outside [-{bound:g}, {bound:g}]")
            object.__setattr__(self, name, float(value))

    def key(self) -> tuple[str, str]:
        """Quantized identity used whenever two coordinates are compared for equality."""
        return (format_degrees(self.lat), format_degrees(self.lon))

    def quantized(self) -> Coordinate:
        lat, lon = self.key()
        return Coordinate(float(lat), float(lon))


def format_degrees(value: float) -> str:
    text = f"{value:.{PRECISION}f}"
    # "-0.00000" and "0.00000" must compare equal
    if text.startswith("-") and not text.strip("-0."):
        text = text[1:]
    return text


def parse_degrees(text: str) -> float:
    if not isinstance(text, str):
        raise CoordinateError(f"expected a decimal string, got {text!r}")
    try:
        return float(text)
    except ValueError:
        raise CoordinateError(f"not a decimal number: {text!r}") from None
