"""The CenterAgent: base-feature registry, dispatch and aggregation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ConfigError, DuplicateClassError, EmptyQueryError, OverlapError
from .expert_agent import AgentParams, ExpertAgent, ResultPackage, SubConcept
from .feature_model import FeatureCollection, FeatureId, Thresholds
from .protocol import (
    CENTER,
    CommitAck,
    Dispatch,
    Message,
    OwnerQuery,
    OwnerReply,
    RegistryCommit,
    RegistryRemove,
    Result,
)

MIXINGS = ("product", "mean", "max")


class BaseFeatureRegistry:
    """feature -> owning class. A dict, so a feature has at most one owner."""

    def __init__(self, owner: Optional[Mapping[FeatureId, str]] = None):
        self.owner: dict[FeatureId, str] = dict(owner or {})

    def __len__(self):
        return len(self.owner)

    def __contains__(self, f):
        return f in self.owner

    def __eq__(self, other):
        if not isinstance(other, BaseFeatureRegistry):
            return NotImplemented
        return self.owner == other.owner

    def owner_of(self, f: FeatureId) -> Optional[str]:
        return self.owner.get(f)

    def commit(self, f: FeatureId, class_id: str) -> bool:
        """First-wins ownership. False (a conflict) leaves the registry untouched."""
        current = self.owner.get(f)
        if current is None:
            self.owner[f] = class_id
            return True
        return current == class_id

    def remove(self, f: FeatureId, class_id: str) -> None:
        if self.owner.get(f) == class_id:
            del self.owner[f]

    def features_of(self, class_id: str) -> set[FeatureId]:
        return {f for f, c in self.owner.items() if c == class_id}

    def to_records(self) -> list:
        return [[f, c] for f, c in sorted(self.owner.items())]

    @classmethod
    def from_records(cls, rows) -> "BaseFeatureRegistry":
        return cls({f: c for f, c in rows})


@dataclass(frozen=True)
class DegreeOfConfidence:
    class_id: str
    value: float
    fallback: bool = False


@dataclass(frozen=True)
class ClassificationVector:
    entries: tuple  # ((class_id, likelihood), ...) best first

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def top(self) -> Optional[str]:
        return self.entries[0][0] if self.entries else None

    def as_dict(self) -> dict:
        return dict(self.entries)


@dataclass(frozen=True)
class DispatchPolicy:
    """Exactly one of ``top_k``, ``min_conf`` or ``broadcast``."""

    top_k: Optional[int] = None
    min_conf: Optional[float] = None
    broadcast: bool = False

    def __post_init__(self):
        chosen = (self.top_k is not None) + (self.min_conf is not None) + bool(self.broadcast)
        if chosen != 1:
            raise ConfigError("dispatch policy needs exactly one of top_k, min_conf, broadcast")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.min_conf is not None and not (0 < self.min_conf <= 1):
            raise ConfigError(f"min_conf must lie in (0, 1], got {self.min_conf}")


def bootstrap(
    base_feature_sets: Mapping[str, Iterable[FeatureId]],
    params: AgentParams = AgentParams(),
    thresholds: Thresholds = Thresholds(),
    subconcepts: Optional[Mapping[str, Mapping[str, Iterable[FeatureId]]]] = None,
) -> tuple[BaseFeatureRegistry, list[ExpertAgent]]:
    """Build the registry and one agent per class, base features at the K floor."""
    registry = BaseFeatureRegistry()
    class_ids = sorted(base_feature_sets)
    for cid in class_ids:
        if cid == CENTER:
            raise ConfigError(f"class id {CENTER!r} is reserved")
        for f in sorted(set(base_feature_sets[cid])):
            other = registry.owner_of(f)
            if other is not None:
                raise OverlapError(f, other, cid)
            registry.owner[f] = cid
    agents = []
    for cid in class_ids:
        coll = FeatureCollection(
            thresholds,
            {f: thresholds.tau_k for f in sorted(set(base_feature_sets[cid]))},
            capacity=params.capacity,
        )
        subs = [
            SubConcept(name, set(members))
            for name, members in sorted((subconcepts or {}).get(cid, {}).items())
        ]
        for sc in subs:
            if not sc.members <= set(coll):
                raise ConfigError(f"subconcept {sc.name!r} of {cid} names unknown features")
        agents.append(ExpertAgent(cid, coll, params, subconcepts=subs, peers=class_ids))
    return registry, agents


def _distinct(tags) -> list:
    tags = sorted(set(tags))
    if not tags:
        raise EmptyQueryError("query has no tags")
    return tags


def confidence(registry: BaseFeatureRegistry, tags: Iterable[FeatureId], class_id: str) -> DegreeOfConfidence:
    tags = _distinct(tags)
    owned = sum(1 for t in tags if registry.owner.get(t) == class_id)
    return DegreeOfConfidence(class_id, owned / len(tags))


def confidences(registry: BaseFeatureRegistry, tags: Iterable[FeatureId]) -> dict[str, float]:
    """Nonzero confidence of every class owning at least one query tag."""
    tags = _distinct(tags)
    owner = registry.owner
    counts: dict = {}
    for t in tags:
        c = owner.get(t)
        if c is not None:
            counts[c] = counts.get(c, 0) + 1
    n = len(tags)
    return {c: k / n for c, k in counts.items()}


def dispatch(
    registry: BaseFeatureRegistry,
    tags: Iterable[FeatureId],
    policy: DispatchPolicy,
    class_ids: Sequence[str],
) -> list[DegreeOfConfidence]:
    """Pick the agents a query goes to, best confidence first.

    When no class owns any tag the query is broadcast to every agent with
    confidence 0 and ``fallback`` set.
    """
    conf = confidences(registry, tags)
    if policy.broadcast:
        ranked = sorted(class_ids, key=lambda c: (-conf.get(c, 0.0), c))
        return [DegreeOfConfidence(c, conf.get(c, 0.0), not conf) for c in ranked]
    ranked = sorted(conf.items(), key=lambda kv: (-kv[1], kv[0]))
    if policy.top_k is not None:
        chosen = ranked[: policy.top_k]
    else:
        chosen = [kv for kv in ranked if kv[1] >= policy.min_conf]
    if not chosen:
        return [DegreeOfConfidence(c, 0.0, True) for c in sorted(class_ids)]
    return [DegreeOfConfidence(c, v) for c, v in chosen]


def mix(conf: float, score: float, mixing: str = "product") -> float:
    if mixing == "product":
        return conf * score
    if mixing == "mean":
        return (conf + score) / 2
    if mixing == "max":
        return max(conf, score)
    raise ConfigError(f"unknown mixing {mixing!r}")


def aggregate(
    results: Iterable[tuple[ResultPackage, DegreeOfConfidence]],
    mixing: str = "product",
    eps_fb: float = 0.01,
) -> ClassificationVector:
    entries = []
    seen = set()
    for package, doc in results:
        if package.class_id in seen:
            raise DuplicateClassError(f"two results for class {package.class_id!r}")
        seen.add(package.class_id)
        if doc.fallback:
            likelihood = eps_fb * package.class_score
        else:
            likelihood = mix(doc.value, package.class_score, mixing)
        entries.append((package.class_id, likelihood))
    entries.sort(key=lambda e: (-e[1], e[0]))
    return ClassificationVector(tuple(entries))


@dataclass
class PendingQuery:
    query_id: str
    tags: tuple
    targets: dict  # class_id -> DegreeOfConfidence
    results: dict
    info: object = None


@dataclass
class CompletedQuery:
    query_id: str
    tags: tuple
    vector: ClassificationVector
    packages: dict
    fallback: bool
    info: object = None


class CenterAgent:
    """Serializes registry mutations and drives query dispatch/aggregation."""

    def __init__(
        self,
        registry: BaseFeatureRegistry,
        class_ids: Sequence[str],
        policy: Optional[DispatchPolicy] = None,
        mixing: str = "product",
        eps_fb: float = 0.01,
    ):
        if mixing not in MIXINGS:
            raise ConfigError(f"unknown mixing {mixing!r}")
        self.registry = registry
        self.class_ids = tuple(sorted(class_ids))
        self.policy = policy or DispatchPolicy(top_k=min(3, len(self.class_ids)))
        self.mixing = mixing
        self.eps_fb = eps_fb
        self.pending: dict[str, PendingQuery] = {}
        self.completed: list[CompletedQuery] = []
        self.stats: Counter = Counter()

    def submit(self, query_id: str, tags: Iterable[FeatureId], info=None) -> list[Message]:
        tags = tuple(_distinct(tags))
        targets = dispatch(self.registry, tags, self.policy, self.class_ids)
        self.pending[query_id] = PendingQuery(
            query_id, tags, {d.class_id: d for d in targets}, {}, info
        )
        return [Dispatch(CENTER, d.class_id, query_id, tags, d.value, d.fallback) for d in targets]

    def receive(self, msg: Message) -> list[Message]:
        if isinstance(msg, Result):
            self._on_result(msg)
            return []
        if isinstance(msg, OwnerQuery):
            return [OwnerReply(CENTER, msg.sender, msg.feature, self.registry.owner_of(msg.feature), msg.session)]
        if isinstance(msg, RegistryCommit):
            ok = self.registry.commit(msg.feature, msg.class_id)
            self.stats["commit_ok" if ok else "commit_conflict"] += 1
            return [CommitAck(CENTER, msg.sender, msg.feature, ok, msg.session)]
        if isinstance(msg, RegistryRemove):
            self.registry.remove(msg.feature, msg.class_id)
            return []
        raise TypeError(f"center cannot handle {msg.variant}")

    def _on_result(self, msg: Result) -> None:
        pq = self.pending[msg.query_id]
        pq.results[msg.sender] = msg.package
        if len(pq.results) < len(pq.targets):
            return
        del self.pending[msg.query_id]
        vector = aggregate(
            ((pq.results[c], d) for c, d in pq.targets.items()), self.mixing, self.eps_fb
        )
        fallback = any(d.fallback for d in pq.targets.values())
        self.completed.append(
            CompletedQuery(pq.query_id, pq.tags, vector, dict(pq.results), fallback, pq.info)
        )

    def classify(self, tags: Iterable[FeatureId], agents: Mapping[str, ExpertAgent]) -> ClassificationVector:
        """Read-only classification: no messages, no learning."""
        targets = dispatch(self.registry, tags, self.policy, self.class_ids)
        tags = _distinct(tags)
        return aggregate(
            ((agents[d.class_id].score_query(tags), d) for d in targets), self.mixing, self.eps_fb
        )

