"""Message vocabulary and the K-promotion consultation state machine.

A promotion session is opened by an agent whose M-region feature is one
reinforcement step away from the K border. The session finds whoever holds
the feature in K (via the CenterAgent registry, or by asking every peer in
the broadcast baseline), pushes that holder down with fall notices until it
leaves K, then commits ownership through the CenterAgent.

The transition functions below mutate the session and return the messages
to send; they never touch agent state directly.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import DuplicateSessionError, StaleStateError

CENTER = "center"

LOOKUP_MODE = "lookup"
BROADCAST_MODE = "broadcast"
MODES = (LOOKUP_MODE, BROADCAST_MODE)


@dataclass(slots=True)
class Message:
    sender: str
    recipient: str

    @property
    def variant(self) -> str:
        return type(self).__name__

    @property
    def key(self):
        return getattr(self, "feature", None)


@dataclass(slots=True)
class Dispatch(Message):
    query_id: str
    tags: tuple
    confidence: float
    fallback: bool = False

    @property
    def key(self):
        return self.query_id


@dataclass(slots=True)
class Result(Message):
    query_id: str
    package: object

    @property
    def key(self):
        return self.query_id


@dataclass(slots=True)
class OwnerQuery(Message):
    feature: str
    session: str


@dataclass(slots=True)
class OwnerReply(Message):
    feature: str
    owner: Optional[str]
    session: str


@dataclass(slots=True)
class KRegionQuery(Message):
    feature: str
    session: str


@dataclass(slots=True)
class KRegionReply(Message):
    feature: str
    in_k: bool
    session: str


@dataclass(slots=True)
class FallNotice(Message):
    feature: str
    session: str


@dataclass(slots=True)
class FallAck(Message):
    feature: str
    left_k: bool
    session: str


@dataclass(slots=True)
class RegistryCommit(Message):
    feature: str
    class_id: str
    session: str


@dataclass(slots=True)
class CommitAck(Message):
    feature: str
    ok: bool
    session: str


@dataclass(slots=True)
class RegistryRemove(Message):
    feature: str
    class_id: str
    session: Optional[str] = None


QUERY_VARIANTS = frozenset({"Dispatch", "Result"})


class SessionState(enum.Enum):
    NEW = "new"
    LOOKUP = "lookup"
    FALLING = "falling"
    COMMITTING = "committing"
    DONE = "done"
    ABORTED = "aborted"


TERMINAL = (SessionState.DONE, SessionState.ABORTED)


@dataclass
class PromotionSession:
    requester: str
    feature: str
    sid: str
    peers: tuple = ()
    mode: str = LOOKUP_MODE
    round_cap: int = 20
    state: SessionState = SessionState.NEW
    owner: Optional[str] = None
    rounds: int = 0
    # FALLING and the last ack said the owner is still in K: wait for interest
    waiting: bool = False
    pending_replies: int = 0
    holders: list = field(default_factory=list)

    @property
    def active(self) -> bool:
        return self.state not in TERMINAL

    @property
    def in_flight(self) -> bool:
        """True while the session expects a reply."""
        return self.active and not (self.state is SessionState.FALLING and self.waiting)

    def _lookup(self) -> list[Message]:
        self.state = SessionState.LOOKUP
        self.owner = None
        self.waiting = False
        if not self.peers:
            # nobody else could hold the feature
            return self._commit()
        if self.mode == LOOKUP_MODE:
            return [OwnerQuery(self.requester, CENTER, self.feature, self.sid)]
        self.holders = []
        self.pending_replies = len(self.peers)
        return [KRegionQuery(self.requester, p, self.feature, self.sid) for p in self.peers]

    def _commit(self) -> list[Message]:
        self.state = SessionState.COMMITTING
        return [RegistryCommit(self.requester, CENTER, self.feature, self.requester, self.sid)]

    def _fall(self, owner: str) -> list[Message]:
        if self.rounds >= self.round_cap:
            self.state = SessionState.ABORTED
            return []
        self.state = SessionState.FALLING
        self.owner = owner
        self.waiting = False
        self.rounds += 1
        return [FallNotice(self.requester, owner, self.feature, self.sid)]

    def to_records(self) -> dict:
        return {
            "requester": self.requester,
            "feature": self.feature,
            "sid": self.sid,
            "peers": list(self.peers),
            "mode": self.mode,
            "round_cap": self.round_cap,
            "state": self.state.value,
            "owner": self.owner,
            "rounds": self.rounds,
            "waiting": self.waiting,
            "pending_replies": self.pending_replies,
            "holders": list(self.holders),
        }

    @classmethod
    def from_records(cls, data: dict) -> "PromotionSession":
        data = dict(data)
        data["peers"] = tuple(data["peers"])
        data["state"] = SessionState(data["state"])
        return cls(**data)


def _expect(session: PromotionSession, state: SessionState, what: str) -> None:
    if session.state is not state:
        raise StaleStateError(
            f"{what} for session {session.sid} in state {session.state.value}"
        )


def start_promotion(session: PromotionSession) -> list[Message]:
    if session.state is not SessionState.NEW:
        raise DuplicateSessionError(f"session {session.sid} already started")
    return session._lookup()


def on_owner_reply(session: PromotionSession, reply: OwnerReply) -> list[Message]:
    _expect(session, SessionState.LOOKUP, "OwnerReply")
    if reply.owner is None or reply.owner == session.requester:
        return session._commit()
    return session._fall(reply.owner)


def on_k_reply(session: PromotionSession, reply: KRegionReply) -> list[Message]:
    """Broadcast-mode counterpart of :func:`on_owner_reply`."""
    _expect(session, SessionState.LOOKUP, "KRegionReply")
    if session.pending_replies <= 0:
        raise StaleStateError(f"unexpected KRegionReply for session {session.sid}")
    session.pending_replies -= 1
    if reply.in_k:
        session.holders.append(reply.sender)
    if session.pending_replies:
        return []
    if not session.holders:
        return session._commit()
    return session._fall(min(session.holders))


def on_fall_ack(session: PromotionSession, ack: FallAck) -> list[Message]:
    if session.state is not SessionState.FALLING or session.waiting:
        raise StaleStateError(f"FallAck for session {session.sid} in state {session.state.value}")
    if ack.left_k:
        return session._lookup()
    if session.rounds >= session.round_cap:
        session.state = SessionState.ABORTED
        return []
    session.waiting = True
    return []


def on_interest(session: PromotionSession) -> list[Message]:
    """The requester saw the feature again; a waiting session fires another round."""
    if session.state is SessionState.FALLING and session.waiting:
        return session._fall(session.owner)
    return []


def on_commit_ack(session: PromotionSession, ack: CommitAck) -> list[Message]:
    """On ``ok`` the session is DONE and the caller inserts at the K floor."""
    _expect(session, SessionState.COMMITTING, "CommitAck")
    if ack.ok:
        session.state = SessionState.DONE
        return []
    return session._lookup()


def abort(session: PromotionSession) -> None:
    session.state = SessionState.ABORTED


# -- counting ---------------------------------------------------------------


@dataclass
class MessageTally:
    mode: str
    by_variant: Counter
    by_query: Counter
    by_session: Counter
    maintenance: int

    @property
    def total(self) -> int:
        return sum(self.by_variant.values())

    @property
    def query_total(self) -> int:
        return sum(self.by_query.values())

    @property
    def consultation_total(self) -> int:
        return sum(self.by_session.values())


def message_count(trace: Iterable, mode: str = LOOKUP_MODE) -> MessageTally:
    """Tally a delivered-message trace by variant, by query and by session.

    Records are dicts or named tuples with ``variant``, ``key`` and
    ``session`` fields.

    Query traffic is Dispatch/Result; consultation traffic is anything tagged
    with a promotion session; untagged registry removals (decay) are
    maintenance.
    """
    by_variant: Counter = Counter()
    by_query: Counter = Counter()
    by_session: Counter = Counter()
    maintenance = 0
    for rec in trace:
        if not isinstance(rec, dict):
            rec = rec._asdict()
        variant = rec["variant"]
        by_variant[variant] += 1
        if variant in QUERY_VARIANTS:
            by_query[rec["key"]] += 1
        elif rec.get("session") is not None:
            by_session[rec["session"]] += 1
        else:
            maintenance += 1
    return MessageTally(mode, by_variant, by_query, by_session, maintenance)
