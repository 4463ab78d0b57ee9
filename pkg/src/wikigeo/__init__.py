"""Build coordinate-annotated geoparsing corpora from Wikipedia dumps and
evaluate gazetteer-based geocoding over them."""

from .coords import Coordinate, CoordinateError

__version__ = "0.1.0"

__all__ = ["Coordinate", "CoordinateError", "__version__"]
