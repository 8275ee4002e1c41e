"""Deterministic discrete-event runtime for the CenterAgent and its experts.

Every ordered pair of endpoints has its own FIFO channel. Each scheduler
step delivers the head of one non-empty channel chosen by a seeded RNG, so
delivery across different pairs interleaves arbitrarily while staying
reproducible.
"""
from __future__ import annotations

import json
import random
from collections import Counter, deque
from typing import Callable, Iterable, Mapping, NamedTuple, Optional

from .center_agent import CenterAgent, CompletedQuery
from .config import ScenarioConfig
from .corpus import CorpusObject
from .expert_agent import ExpertAgent
from .feature_model import Region
from . import protocol
from .protocol import CENTER, QUERY_VARIANTS, Message


class TraceRecord(NamedTuple):
    step: int
    variant: str
    sender: str
    recipient: str
    key: object
    session: Optional[str]

    def to_json(self) -> str:
        return json.dumps(self._asdict(), separators=(",", ":"))


class Network:
    """Per-pair FIFO channels with seeded random choice among non-empty ones."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.channels: dict[tuple, deque] = {}
        self._ready: list[tuple] = []
        self.in_flight = 0

    def __len__(self):
        return self.in_flight

    def send(self, msgs: Iterable[Message]) -> None:
        for m in msgs:
            pair = (m.sender, m.recipient)
            ch = self.channels.get(pair)
            if ch is None:
                ch = self.channels[pair] = deque()
            if not ch:
                self._ready.append(pair)
            ch.append(m)
            self.in_flight += 1

    def pop(self) -> Message:
        ready = self._ready
        n = len(ready)
        i = int(self.rng.random() * n) if n > 1 else 0
        pair = ready[i]
        ch = self.channels[pair]
        msg = ch.popleft()
        if not ch:
            last = ready.pop()
            if last != pair:
                ready[i] = last
        self.in_flight -= 1
        return msg


class Simulation:
    """One CenterAgent, M expert agents and the network between them."""

    def __init__(
        self,
        center: CenterAgent,
        agents: Iterable[ExpertAgent],
        config: ScenarioConfig,
        keep_trace: bool = True,
    ):
        self.center = center
        self.agents: dict[str, ExpertAgent] = {a.class_id: a for a in agents}
        self.config = config
        self.rng = random.Random(config.seed)
        self.network = Network(self.rng)
        self.keep_trace = keep_trace
        self.trace: list[TraceRecord] = []
        self.records: list[dict] = []
        self.step = 0
        self.submitted = 0
        self.completed = 0
        self.epochs = 0
        self.variant_counts: Counter = Counter()
        self.consultation_messages = 0
        self.maintenance_messages = 0
        self._query_msgs: Counter = Counter()

    # -- state predicates ----------------------------------------------------

    @property
    def idle(self) -> bool:
        return self.network.in_flight == 0

    def active_sessions(self) -> int:
        return sum(len(a.sessions) for a in self.agents.values())

    def is_quiescent(self) -> bool:
        return self.idle and not self.center.pending and self.active_sessions() == 0

    # -- driving -------------------------------------------------------------

    def submit(self, obj: CorpusObject) -> None:
        self.submitted += 1
        self.network.send(self.center.submit(obj.object_id, obj.tags, info=obj))

    def deliver(self) -> Message:
        msg = self.network.pop()
        self.step += 1
        variant = type(msg).__name__
        self.variant_counts[variant] += 1
        if variant in QUERY_VARIANTS:
            key = msg.query_id
            self._query_msgs[key] += 1
            session = None
        else:
            key = msg.feature
            session = msg.session
            if session is None:
                self.maintenance_messages += 1
            else:
                self.consultation_messages += 1
        if self.keep_trace:
            self.trace.append(TraceRecord(self.step, variant, msg.sender, msg.recipient, key, session))
        recipient = msg.recipient
        if recipient == CENTER:
            center = self.center
            out = center.receive(msg)
            if center.completed:
                self._drain_completed()
        else:
            out = self.agents[recipient].receive(msg)
        if out:
            self.network.send(out)
        return msg

    def run(
        self,
        objects: Iterable[CorpusObject],
        on_idle: Optional[Callable[["Simulation"], None]] = None,
    ) -> None:
        """Stream objects through the system until every message is delivered.

        ``on_idle`` is called at every point where no message is in flight.
        """
        it = iter(objects)
        nxt = next(it, None)
        interleave = self.config.interleave
        rng = self.rng
        while True:
            if self.network.in_flight == 0:
                if on_idle is not None:
                    on_idle(self)
                if nxt is None:
                    return
                self.submit(nxt)
                nxt = next(it, None)
            elif nxt is not None and interleave and rng.random() < interleave:
                self.submit(nxt)
                nxt = next(it, None)
            else:
                self.deliver()

    def close_sessions(self) -> int:
        """Abort sessions parked waiting for interest (end of stream).

        Only valid when no message is in flight; returns the number aborted.
        """
        if not self.idle:
            raise RuntimeError("cannot close sessions while messages are in flight")
        n = 0
        for agent in self.agents.values():
            for f in sorted(agent.sessions):
                protocol.abort(agent.sessions[f])
                agent._settle(f)
                n += 1
        return n

    # -- metrics -------------------------------------------------------------

    def _drain_completed(self) -> None:
        done: list[CompletedQuery] = self.center.completed
        self.center.completed = []
        for cq in done:
            self.completed += 1
            obj = cq.info
            predicted = cq.vector.top
            true_class = obj.true_class if obj is not None else None
            self.records.append(
                {
                    "type": "query",
                    "query_id": cq.query_id,
                    "true_class": true_class,
                    "predicted": predicted,
                    "correct": predicted == true_class,
                    "dispatched": len(cq.packages),
                    "fallback": cq.fallback,
                    "messages": self._query_msgs.pop(cq.query_id),
                    "vector": [list(e) for e in cq.vector],
                }
            )
            if self.completed % self.config.epoch_length == 0:
                self.epochs += 1
                self.records.append(self.epoch_record())

    def session_totals(self) -> dict:
        totals = Counter()
        for a in self.agents.values():
            for k in ("opened", "committed", "aborted", "inserted"):
                totals[k] += a.stats[k]
        totals["active"] = self.active_sessions()
        return dict(sorted(totals.items()))

    def region_sizes(self) -> dict:
        out = {}
        for cid, a in sorted(self.agents.items()):
            counts = Counter(a.thresholds.region(p) for _, p in a.collection.items())
            out[cid] = [counts[Region.K], counts[Region.M], counts[Region.D]]
        return out

    def epoch_record(self) -> dict:
        return {
            "type": "epoch",
            "epoch": self.epochs,
            "queries": self.completed,
            "registry_size": len(self.center.registry),
            "regions": self.region_sizes(),
            "sessions": self.session_totals(),
        }

    def totals(self) -> dict:
        queries = [r for r in self.records if r["type"] == "query"]
        correct = sum(r["correct"] for r in queries)
        return {
            "type": "totals",
            "queries": len(queries),
            "correct": correct,
            "accuracy": correct / len(queries) if queries else 0.0,
            "random_baseline": 1 / len(self.agents) if self.agents else 0.0,
            "query_messages": sum(r["messages"] for r in queries),
            "consultation_messages": self.consultation_messages,
            "maintenance_messages": self.maintenance_messages,
            "messages": sum(self.variant_counts.values()),
            "messages_by_variant": dict(sorted(self.variant_counts.items())),
            "sessions": self.session_totals(),
            "commit_conflicts": self.center.stats["commit_conflict"],
            "fallback_queries": sum(r["fallback"] for r in queries),
        }


def k_region_violations(center: CenterAgent, agents: Mapping[str, ExpertAgent]) -> list[str]:
    """Disjointness and registry agreement, read from each agent's K view.

    Meaningful only when no message is in flight.
    """
    owner = center.registry.owner
    # sizes agree and the K regions read as a map equal the registry, so no
    # feature is held twice and nothing is missing on either side
    if sum(a.collection.k_size for a in agents.values()) == len(owner):
        if owner == {f: cid for cid, a in agents.items() for f in a.collection.iter_k()}:
            return []
    problems = []
    holders: dict[str, str] = {}
    for cid in sorted(agents):
        for f in agents[cid].collection.k_view:
            other = holders.get(f)
            if other is not None:
                problems.append(f"{f!r} is in the K region of both {other} and {cid}")
            else:
                holders[f] = cid
    if holders != center.registry.owner:
        extra = sorted(set(center.registry.owner.items()) - set(holders.items()))
        missing = sorted(set(holders.items()) - set(center.registry.owner.items()))
        problems.append(f"registry disagrees with K regions: extra={extra} missing={missing}")
    return problems
