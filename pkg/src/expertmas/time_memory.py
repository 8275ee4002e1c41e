"""Time-Interval Memory: a count-based sliding window over dispatched queries."""
from __future__ import annotations

from collections import Counter, deque
from typing import Iterable, Optional

from .feature_model import FeatureId

DEFAULT_WINDOW = 50


class TimeIntervalMemory:
    """Keeps the tag sets of the last ``window_size`` queries an agent saw.

    A tag's count is the number of retained queries that contained it;
    repeats inside one query collapse to presence.
    """

    def __init__(self, window_size: int = DEFAULT_WINDOW):
        if window_size < 1:
            raise ValueError(f"window_size must be positive, got {window_size}")
        self.window_size = window_size
        self.slots: deque[frozenset] = deque()
        self.counts: Counter = Counter()

    def record(self, tags: Iterable[FeatureId]) -> None:
        slot = frozenset(tags)
        self.slots.append(slot)
        counts = self.counts
        get = counts.get
        for t in slot:
            counts[t] = get(t, 0) + 1
        if len(self.slots) > self.window_size:
            old = self.slots.popleft()
            for t in old:
                n = counts[t] - 1
                if n:
                    counts[t] = n
                else:
                    del counts[t]

    def count(self, f: FeatureId) -> int:
        return self.counts.get(f, 0)

    def seen_within_window(self, f: FeatureId) -> bool:
        return self.counts.get(f, 0) >= 1

    def frequent_unknown_tags(
        self,
        known,
        theta: int,
        among: Optional[Iterable[FeatureId]] = None,
    ) -> set[FeatureId]:
        """Tags counted at least ``theta`` times that are not in ``known``.

        ``among`` restricts the scan to a subset of tags (the caller's latest
        query) when it is known that no other tag can have newly qualified.
        """
        counts = self.counts
        pool = counts if among is None else among
        return {t for t in pool if counts.get(t, 0) >= theta and t not in known}

    def __len__(self) -> int:
        return len(self.slots)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeIntervalMemory):
            return NotImplemented
        return self.window_size == other.window_size and list(self.slots) == list(other.slots)

    def to_records(self) -> dict:
        return {"window_size": self.window_size, "slots": [sorted(s) for s in self.slots]}

    @classmethod
    def from_records(cls, data: dict) -> "TimeIntervalMemory":
        tim = cls(data["window_size"])
        for slot in data["slots"]:
            tim.record(slot)
        return tim
