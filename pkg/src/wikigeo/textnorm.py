"""String normalization shared by the annotator, the index and the gazetteer."""

from __future__ import annotations

import re
import unicodedata

# U+02BC MODIFIER LETTER APOSTROPHE (UTF-8 CA BC) and U+2019 RIGHT SINGLE
# QUOTATION MARK both stand in for U+0027 in article text.
_APOSTROPHES = str.maketrans({"ʼ": "'", "’": "'"})
_TITLE_SPACE = re.compile(r"[\s_]+")


def normalize_text(s: str) -> str:
    """NFC-compose ``s`` and fold apostrophe look-alikes to ASCII ``'``.

    The result can be shorter than the input, so character offsets must be
    computed over normalized text only.
    """
    return unicodedata.normalize("NFC", s).translate(_APOSTROPHES)


def normalize_title(title: str) -> str:
    """Key form of an article title: underscores and whitespace runs become one space."""
    return _TITLE_SPACE.sub(" ", normalize_text(title)).strip()


def normalize_name(name: str) -> str:
    """Case-insensitive key form of a gazetteer name."""
    return " ".join(normalize_text(name).casefold().split())
