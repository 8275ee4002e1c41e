"""Expert agent for one main class.

An agent scores the queries the CenterAgent dispatches to it, learns from
them (reinforcing features it recognises, remembering the rest in its
Time-Interval Memory), decays features that stop showing up, and runs the
K-promotion consultation for features that have climbed to the K border.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import protocol
from .errors import ConfigError, EmptyQueryError, RegionError
from .feature_model import FeatureCollection, FeatureId, Region, Thresholds, quantize
from .protocol import (
    CENTER,
    CommitAck,
    Dispatch,
    FallAck,
    FallNotice,
    KRegionQuery,
    KRegionReply,
    Message,
    OwnerReply,
    PromotionSession,
    RegistryRemove,
    Result,
)
from .time_memory import TimeIntervalMemory

log = logging.getLogger(__name__)

LEARNED = "learned"


@dataclass(frozen=True)
class AgentParams:
    """Learning parameters shared by every agent of a run.

    ``alpha_r`` is also the fall step applied when a peer contests one of
    this agent's K-region features. ``epoch`` defaults to ``window``.
    """

    alpha_r: float = 0.05
    alpha_d: float = 0.05
    theta: int = 5
    window: int = 50
    epoch: Optional[int] = None
    mode: str = protocol.LOOKUP_MODE
    round_cap: int = 20
    capacity: Optional[int] = None

    def __post_init__(self):
        if not (0 < self.alpha_r <= 1 and 0 < self.alpha_d <= 1):
            raise ConfigError("alpha_r and alpha_d must lie in (0, 1]")
        if self.theta < 1 or self.window < 1:
            raise ConfigError("theta and window must be positive")
        if self.epoch is not None and self.epoch < 1:
            raise ConfigError("epoch must be positive")
        if self.mode not in protocol.MODES:
            raise ConfigError(f"unknown consultation mode {self.mode!r}")
        if self.round_cap < 1:
            raise ConfigError("round_cap must be positive")

    @property
    def epoch_length(self) -> int:
        return self.epoch if self.epoch is not None else self.window


@dataclass
class SubConcept:
    name: str
    members: set = field(default_factory=set)


@dataclass(frozen=True)
class ResultPackage:
    class_id: str
    class_score: float
    per_subconcept: tuple = ()
    matched: tuple = ()

    def to_records(self) -> dict:
        return {
            "class_id": self.class_id,
            "class_score": self.class_score,
            "per_subconcept": [list(x) for x in self.per_subconcept],
            "matched": [list(x) for x in self.matched],
        }


def _score(matched, n: int) -> float:
    return math.fsum(p for _, p in matched) / n


class ExpertAgent:
    def __init__(
        self,
        class_id: str,
        collection: FeatureCollection,
        params: AgentParams = AgentParams(),
        tim: Optional[TimeIntervalMemory] = None,
        subconcepts: Optional[Iterable[SubConcept]] = None,
        peers: Iterable[str] = (),
    ):
        th = collection.thresholds
        if params.alpha_r > quantize(th.tau_k - th.tau_m):
            # a D-region feature could otherwise jump straight into K
            raise ConfigError("alpha_r must not exceed tau_k - tau_m")
        self.class_id = class_id
        self.collection = collection
        self.params = params
        self.tim = tim if tim is not None else TimeIntervalMemory(params.window)
        self.subconcepts: list[SubConcept] = list(subconcepts or [])
        self.peers = tuple(sorted(p for p in peers if p != class_id))
        self.sessions: dict[FeatureId, PromotionSession] = {}
        self.session_seq = 0
        self.dispatches = 0
        self.stats: Counter = Counter()
        self.outbox: list[Message] = []

    def __repr__(self):
        return f"ExpertAgent({self.class_id!r}, {len(self.collection)} features)"

    @property
    def thresholds(self) -> Thresholds:
        return self.collection.thresholds

    # -- scoring --------------------------------------------------------------

    def score_query(self, tags: Iterable[FeatureId]) -> ResultPackage:
        return self._score_distinct(sorted(set(tags)))

    def _score_distinct(self, tags: list) -> ResultPackage:
        if not tags:
            raise EmptyQueryError("cannot score an empty tag collection")
        n = len(tags)
        tau_m = self.thresholds.tau_m
        get = self.collection.table.get
        matched = []
        for t in tags:
            p = get(t)
            if p is not None and p >= tau_m:
                matched.append((t, p))
        if self.subconcepts:
            per_sub = tuple(
                (sc.name, _score([m for m in matched if m[0] in sc.members], n))
                for sc in self.subconcepts
            )
            class_score = max(s for _, s in per_sub)
        else:
            per_sub = ()
            class_score = _score(matched, n)
        return ResultPackage(self.class_id, class_score, per_sub, tuple(matched))

    # -- learning -------------------------------------------------------------

    def process_dispatch(self, tags: Iterable[FeatureId]) -> ResultPackage:
        """Score, then learn from, one dispatched query.

        Protocol messages produced while learning (promotion consultations,
        registry removals) are appended to :attr:`outbox`.
        """
        return self._process(sorted(set(tags)))

    def _process(self, tags) -> ResultPackage:
        # tags: sorted and distinct
        package = self._score_distinct(tags)
        self.tim.record(tags)
        coll = self.collection
        table = coll.table
        alpha = self.params.alpha_r
        tau_k, tau_m = self.thresholds.tau_k, self.thresholds.tau_m
        sessions = self.sessions
        for t in tags:
            p = table.get(t)
            if p is None:
                continue
            if sessions:
                session = sessions.get(t)
                if session is not None:
                    self.outbox.extend(protocol.on_interest(session))
                    self._settle(t)
                    continue
            # M region and one step from the border: same test as k_promotion_trigger
            if tau_m <= p < tau_k and quantize(p + alpha) >= tau_k:
                self.open_session(t)
                continue
            coll.adjust(t, alpha)
        for f in sorted(self.promotion_candidates(among=tags)):
            self._insert_learned(f)
        self.dispatches += 1
        if self.dispatches % self.params.epoch_length == 0:
            self.epoch_decay()
        return package

    def promotion_candidates(self, among: Optional[Iterable[FeatureId]] = None) -> set[FeatureId]:
        return self.tim.frequent_unknown_tags(self.collection.table, self.params.theta, among=among)

    def _insert_learned(self, f: FeatureId) -> None:
        evicted = self.collection.insert_at_m_floor(f)
        self.stats["inserted"] += 1
        if evicted is not None:
            for sc in self.subconcepts:
                sc.members.discard(evicted)
        if self.subconcepts:
            learned = next((sc for sc in self.subconcepts if sc.name == LEARNED), None)
            if learned is None:
                learned = SubConcept(LEARNED)
                self.subconcepts.append(learned)
            learned.members.add(f)

    def epoch_decay(self) -> None:
        coll = self.collection
        seen = self.tim.seen_within_window
        for f in sorted(coll):
            if seen(f):
                continue
            session = self.sessions.get(f)
            if session is not None:
                if session.in_flight:
                    continue
                # interest lapsed while waiting on the owner
                protocol.abort(session)
                self._settle(f)
            was_k = coll.is_k(f)
            coll.adjust(f, -self.params.alpha_d)
            if was_k and not coll.is_k(f):
                self.outbox.append(RegistryRemove(self.class_id, CENTER, f, self.class_id))

    def k_promotion_trigger(self, f: FeatureId) -> bool:
        region = self.collection.region_of(f)
        if region is not Region.M:
            raise RegionError(f"feature {f!r} is not in the M region ({region})")
        p = self.collection.probability(f)
        return quantize(p + self.params.alpha_r) >= self.thresholds.tau_k

    # -- consultation ---------------------------------------------------------

    def open_session(self, f: FeatureId) -> PromotionSession:
        if f in self.sessions:
            raise protocol.DuplicateSessionError(f"{self.class_id} already promoting {f!r}")
        self.session_seq += 1
        session = PromotionSession(
            requester=self.class_id,
            feature=f,
            sid=f"{self.class_id}:{f}:{self.session_seq}",
            peers=self.peers,
            mode=self.params.mode,
            round_cap=self.params.round_cap,
        )
        self.sessions[f] = session
        self.stats["opened"] += 1
        self.outbox.extend(protocol.start_promotion(session))
        self._settle(f)
        return session

    def _settle(self, f: FeatureId) -> None:
        session = self.sessions.get(f)
        if session is None or session.active:
            return
        del self.sessions[f]
        if session.state is protocol.SessionState.DONE:
            self.collection.insert_at_k_floor(f)
            self.stats["committed"] += 1
        else:
            self.stats["aborted"] += 1

    def handle_k_query(self, f: FeatureId) -> bool:
        return self.collection.is_k(f)

    def handle_fall_notice(self, f: FeatureId, session: Optional[str] = None) -> bool:
        """Apply one fall step to a contested K-region feature; True if it left K."""
        coll = self.collection
        if not coll.is_k(f):
            raise RegionError(f"{self.class_id} does not hold {f!r} in its K region")
        coll.adjust(f, -self.params.alpha_r)
        left = not coll.is_k(f)
        if left:
            self.outbox.append(RegistryRemove(self.class_id, CENTER, f, self.class_id, session))
        return left

    def receive(self, msg: Message) -> list[Message]:
        """Handle one inbound message; return everything to send."""
        handler = _HANDLERS.get(type(msg), ExpertAgent._on_session_reply)
        out = handler(self, msg)
        if self.outbox:
            out.extend(self.outbox)
            self.outbox = []
        return out

    def _on_dispatch(self, msg: Dispatch) -> list[Message]:
        # the CenterAgent already sends sorted, distinct tags
        package = self._process(msg.tags)
        return [Result(self.class_id, msg.sender, msg.query_id, package)]

    def _on_k_query(self, msg: KRegionQuery) -> list[Message]:
        in_k = self.handle_k_query(msg.feature)
        return [KRegionReply(self.class_id, msg.sender, msg.feature, in_k, msg.session)]

    def _on_fall_notice(self, msg: FallNotice) -> list[Message]:
        try:
            left = self.handle_fall_notice(msg.feature, msg.session)
        except RegionError:
            left = True
            self.stats["stale_fall"] += 1
        return [FallAck(self.class_id, msg.sender, msg.feature, left, msg.session)]

    def _on_session_reply(self, msg: Message) -> list[Message]:
        step = _SESSION_STEPS.get(type(msg))
        if step is None:
            raise TypeError(f"{self.class_id} cannot handle {msg.variant}")
        f = msg.feature
        session = self.sessions.get(f)
        if session is None or session.sid != msg.session:
            log.debug("%s dropping stale %s for %s", self.class_id, msg.variant, f)
            self.stats["stale_reply"] += 1
            return []
        out = step(session, msg)
        self._settle(f)
        return out

    @property
    def in_flight_sessions(self) -> int:
        return sum(1 for s in self.sessions.values() if s.in_flight)

    # -- snapshots ------------------------------------------------------------

    def to_records(self) -> dict:
        return {
            "class_id": self.class_id,
            "collection": self.collection.to_records(),
            "tim": self.tim.to_records(),
            "subconcepts": [
                {"name": sc.name, "members": sorted(sc.members)} for sc in self.subconcepts
            ],
            "peers": list(self.peers),
            "sessions": [self.sessions[f].to_records() for f in sorted(self.sessions)],
            "session_seq": self.session_seq,
            "dispatches": self.dispatches,
            "stats": dict(sorted(self.stats.items())),
        }

    @classmethod
    def from_records(cls, data: dict, params: AgentParams) -> "ExpertAgent":
        agent = cls(
            data["class_id"],
            FeatureCollection.from_records(data["collection"]),
            params,
            tim=TimeIntervalMemory.from_records(data["tim"]),
            subconcepts=[SubConcept(s["name"], set(s["members"])) for s in data["subconcepts"]],
            peers=data["peers"],
        )
        for rec in data.get("sessions", []):
            session = PromotionSession.from_records(rec)
            agent.sessions[session.feature] = session
        agent.session_seq = data["session_seq"]
        agent.dispatches = data["dispatches"]
        agent.stats = Counter(data.get("stats", {}))
        return agent


_HANDLERS = {
    Dispatch: ExpertAgent._on_dispatch,
    KRegionQuery: ExpertAgent._on_k_query,
    FallNotice: ExpertAgent._on_fall_notice,
}

_SESSION_STEPS = {
    OwnerReply: protocol.on_owner_reply,
    KRegionReply: protocol.on_k_reply,
    FallAck: protocol.on_fall_ack,
    CommitAck: protocol.on_commit_ack,
}
