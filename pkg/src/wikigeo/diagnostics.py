from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)


@dataclass
class Diagnostics:
    """Collects non-fatal per-record problems.

    Counts are kept for every kind; only the first ``max_messages`` messages
    are retained so that a badly broken dump cannot exhaust memory.
    """

    max_messages: int = 1000
    counts: Counter = field(default_factory=Counter)
    messages: list[str] = field(default_factory=list)

    def report(self, kind: str, message: str) -> None:
        self.counts[kind] += 1
        if len(self.messages) < self.max_messages:
            self.messages.append(f"{kind}: {message}")
        logger.debug("%s: %s", kind, message)

    def __len__(self) -> int:
        return sum(self.counts.values())

    def merge(self, other: Diagnostics) -> None:
        self.counts.update(other.counts)
        room = self.max_messages - len(self.messages)
        self.messages.extend(other.messages[: max(room, 0)])
