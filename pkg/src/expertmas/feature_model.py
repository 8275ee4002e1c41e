"""K/M/D-region feature-probability tables.

Every expert agent owns one :class:`FeatureCollection`. A feature's region is
never stored; it is read off its probability against two thresholds:

    K   p >= tau_k
    M   tau_m <= p < tau_k
    D   p < tau_m
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .errors import (
    ConfigError,
    DuplicateFeatureError,
    IllegalPromotionError,
    UnknownFeatureError,
)

FeatureId = str

# Probabilities are kept on a 1e-12 grid so that repeated +/- alpha steps land
# exactly on threshold values instead of drifting by an ulp.
PRECISION = 12


def quantize(p: float) -> float:
    return round(p, PRECISION)


def clamp(p: float) -> float:
    return 0.0 if p < 0.0 else 1.0 if p > 1.0 else p


class Region(enum.IntEnum):
    """Ordered so that ``D < M < K``."""

    D = 0
    M = 1
    K = 2


@dataclass(frozen=True)
class Thresholds:
    tau_k: float = 0.7
    tau_m: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.tau_m < self.tau_k <= 1.0):
            raise ConfigError(
                f"thresholds need 0 < tau_m < tau_k <= 1, got tau_m={self.tau_m}, tau_k={self.tau_k}"
            )

    def region(self, p: float) -> Region:
        if p >= self.tau_k:
            return Region.K
        if p >= self.tau_m:
            return Region.M
        return Region.D


class FeatureCollection:
    """Mapping of feature -> probability with derived K/M/D views.

    ``capacity`` bounds the number of retained entries; when an insertion
    would exceed it the lowest-probability D-region entry is evicted. ``None``
    (the default) keeps D-region entries forever.
    """

    def __init__(
        self,
        thresholds: Thresholds = Thresholds(),
        entries: Optional[dict] = None,
        capacity: Optional[int] = None,
    ):
        self.thresholds = thresholds
        self.capacity = capacity
        self._p: dict[FeatureId, float] = {}
        # cache of the K view, rebuilt from probability on every write
        self._k: set[FeatureId] = set()
        for f, p in (entries or {}).items():
            self._set(f, p)

    def _set(self, f: FeatureId, p: float) -> None:
        # inlined clamp + quantize: this is the hottest write path
        p = round(0.0 if p < 0.0 else 1.0 if p > 1.0 else p, PRECISION)
        self._p[f] = p
        if p >= self.thresholds.tau_k:
            self._k.add(f)
        else:
            self._k.discard(f)

    def __contains__(self, f) -> bool:
        return f in self._p

    def __len__(self) -> int:
        return len(self._p)

    def __iter__(self) -> Iterator[FeatureId]:
        return iter(self._p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureCollection):
            return NotImplemented
        return self.thresholds == other.thresholds and self._p == other._p

    def items(self):
        return self._p.items()

    @property
    def table(self) -> dict:
        """The live feature -> probability dict. Read only; mutate via the methods."""
        return self._p

    def probability(self, f: FeatureId) -> float:
        try:
            return self._p[f]
        except KeyError:
            raise UnknownFeatureError(f) from None

    def get(self, f: FeatureId, default=None):
        return self._p.get(f, default)

    def region_of(self, f: FeatureId) -> Optional[Region]:
        p = self._p.get(f)
        if p is None:
            return None
        return self.thresholds.region(p)

    def region(self, which: Region) -> set[FeatureId]:
        if which is Region.K:
            return set(self._k)
        region = self.thresholds.region
        return {f for f, p in self._p.items() if region(p) is which}

    @property
    def k_view(self) -> frozenset:
        """Read-only K-region membership (cheap; used by invariant checks)."""
        return frozenset(self._k)

    @property
    def k_size(self) -> int:
        return len(self._k)

    def iter_k(self):
        """Iterate K-region features without copying."""
        return iter(self._k)

    def is_k(self, f: FeatureId) -> bool:
        return f in self._k

    def insert_at_m_floor(self, f: FeatureId) -> Optional[FeatureId]:
        """Add an unseen feature at exactly tau_m.

        Returns the feature evicted to respect ``capacity``, if any.
        """
        if f in self._p:
            raise DuplicateFeatureError(f"feature {f!r} already in collection")
        evicted = self._make_room()
        self._set(f, self.thresholds.tau_m)
        return evicted

    def insert_at_k_floor(self, f: FeatureId) -> Optional[FeatureId]:
        region = self.region_of(f)
        if region is Region.D:
            raise IllegalPromotionError(
                f"feature {f!r} is in the D region (p={self._p[f]}); it must climb back through M"
            )
        evicted = self._make_room() if region is None else None
        self._set(f, self.thresholds.tau_k)
        return evicted

    def adjust(self, f: FeatureId, delta: float) -> float:
        """Shift ``p(f)`` by ``delta`` and clamp to [0, 1]. Returns the new probability."""
        try:
            p = self._p[f]
        except KeyError:
            raise UnknownFeatureError(f) from None
        self._set(f, p + delta)
        return self._p[f]

    def _make_room(self) -> Optional[FeatureId]:
        if self.capacity is None or len(self._p) < self.capacity:
            return None
        tau_m = self.thresholds.tau_m
        dormant = [(p, f) for f, p in self._p.items() if p < tau_m]
        if not dormant:
            return None
        _, victim = min(dormant)
        del self._p[victim]
        return victim

    # -- serialization ------------------------------------------------------

    def to_records(self) -> dict:
        return {
            "thresholds": {"tau_k": self.thresholds.tau_k, "tau_m": self.thresholds.tau_m},
            "capacity": self.capacity,
            "entries": [[f, f"{p:.{PRECISION}f}"] for f, p in sorted(self._p.items())],
        }

    @classmethod
    def from_records(cls, data: dict) -> "FeatureCollection":
        th = Thresholds(**data["thresholds"])
        entries = {f: float(p) for f, p in data["entries"]}
        return cls(th, entries, capacity=data.get("capacity"))

    def copy(self) -> "FeatureCollection":
        return FeatureCollection(self.thresholds, dict(self._p), self.capacity)


def iter_regions(collection: FeatureCollection) -> Iterable[tuple[FeatureId, float, Region]]:
    region = collection.thresholds.region
    for f, p in sorted(collection.items()):
        yield f, p, region(p)
