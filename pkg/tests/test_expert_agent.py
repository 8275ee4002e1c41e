import copy
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from expertmas.errors import EmptyQueryError, RegionError
from expertmas.expert_agent import AgentParams, ExpertAgent, SubConcept
from expertmas.feature_model import FeatureCollection, Region, Thresholds
from expertmas.protocol import FallAck, FallNotice, KRegionQuery, OwnerQuery, RegistryRemove

TH = Thresholds(0.7, 0.3)


def make_agent(entries=None, subconcepts=None, **params):
    return ExpertAgent(
        "c1",
        FeatureCollection(TH, entries or {}),
        AgentParams(**params),
        subconcepts=subconcepts,
        peers=["c1", "c2", "c3"],
    )


class TestScoreQuery:
    def test_one_match_of_two(self):
        assert make_agent({"a": 0.8}).score_query({"a", "b"}).class_score == 0.4

    def test_no_match(self):
        assert make_agent({"a": 0.8}).score_query({"x", "y"}).class_score == 0

    def test_d_region_excluded(self):
        pkg = make_agent({"a": 0.2}).score_query({"a"})
        assert pkg.class_score == 0
        assert pkg.matched == ()

    def test_empty_query(self):
        with pytest.raises(EmptyQueryError):
            make_agent().score_query(set())

    def test_subconcepts_take_the_max(self):
        agent = make_agent(
            {"a": 0.8, "b": 0.6, "c": 0.9},
            subconcepts=[SubConcept("s1", {"a", "b"}), SubConcept("s2", {"c"})],
        )
        pkg = agent.score_query({"a", "b", "c", "z"})
        assert dict(pkg.per_subconcept) == {"s1": (0.8 + 0.6) / 4, "s2": 0.9 / 4}
        assert pkg.class_score == (0.8 + 0.6) / 4

    def test_pure(self):
        agent = make_agent({"a": 0.8, "b": 0.4})
        assert agent.score_query({"a", "b", "q"}) == agent.score_query({"a", "b", "q"})


@given(
    st.dictionaries(st.sampled_from("abcdef"), st.floats(0, 1), max_size=6),
    st.frozensets(st.sampled_from("abcdefgh"), min_size=1, max_size=6),
)
def test_class_score_bounded(entries, tags):
    pkg = make_agent(entries).score_query(tags)
    assert 0.0 <= pkg.class_score <= 1.0
    for f, _ in pkg.matched:
        assert f in tags
        assert entries[f] >= TH.tau_m


class TestProcessDispatch:
    def test_reinforces(self):
        agent = make_agent({"a": 0.40})
        agent.process_dispatch({"a"})
        assert agent.collection.probability("a") == 0.45

    def test_d_feature_comes_back_to_m(self):
        agent = make_agent({"a": 0.29})
        agent.process_dispatch({"a"})
        assert agent.collection.probability("a") == 0.34
        assert agent.collection.region_of("a") is Region.M

    def test_unknown_tags_only_enter_memory(self):
        agent = make_agent({"a": 0.5})
        agent.process_dispatch({"z"})
        assert agent.collection == FeatureCollection(TH, {"a": 0.5})
        assert agent.tim.count("z") == 1

    def test_reply_is_scored_before_learning(self):
        agent = make_agent({"a": 0.40, "b": 0.69, "c": 0.1})
        before = copy.deepcopy(agent)
        pkg = agent.process_dispatch({"a", "b", "c", "d"})
        assert pkg == before.score_query({"a", "b", "c", "d"})
        assert agent.collection != before.collection

    def test_empty_query(self):
        with pytest.raises(EmptyQueryError):
            make_agent().process_dispatch(())


class TestEpochDecay:
    def test_unseen_m_feature_drops_to_d(self):
        agent = make_agent({"f": 0.32})
        agent.epoch_decay()
        assert agent.collection.probability("f") == 0.27
        assert agent.collection.region_of("f") is Region.D

    def test_seen_feature_untouched(self):
        agent = make_agent({"f": 0.9})
        agent.tim.record({"f"})
        agent.epoch_decay()
        assert agent.collection.probability("f") == 0.9

    def test_leaving_k_emits_registry_removal(self):
        agent = make_agent({"f": 0.72})
        agent.epoch_decay()
        assert agent.collection.probability("f") == 0.67
        assert agent.outbox == [RegistryRemove("c1", "center", "f", "c1")]

    def test_runs_every_epoch_length_dispatches(self):
        agent = make_agent({"f": 0.5, "a": 0.8}, window=4, epoch=3)
        for _ in range(2):
            agent.process_dispatch({"a"})
        assert agent.collection.probability("f") == 0.5
        agent.process_dispatch({"a"})
        assert agent.collection.probability("f") == 0.45


class TestPromotionCandidates:
    def test_frequent_unknown_inserted_at_m_floor(self):
        agent = make_agent(theta=5)
        for _ in range(6):
            agent.tim.record({"x"})
        assert agent.promotion_candidates() == {"x"}
        agent = make_agent(theta=5)
        for i in range(5):
            agent.process_dispatch({"x"})
            assert ("x" in agent.collection) == (i == 4)
        assert agent.collection.probability("x") == TH.tau_m

    def test_known_excluded(self):
        agent = make_agent({"x": 0.5}, theta=5)
        for _ in range(6):
            agent.tim.record({"x"})
        assert agent.promotion_candidates() == set()

    def test_nothing_frequent(self):
        agent = make_agent(theta=5)
        agent.tim.record({"x", "y"})
        assert agent.promotion_candidates() == set()

    def test_learned_subconcept(self):
        agent = make_agent({"a": 0.8}, subconcepts=[SubConcept("base", {"a"})], theta=1)
        agent.process_dispatch({"a", "x"})
        learned = {sc.name: sc.members for sc in agent.subconcepts}["learned"]
        assert learned == {"x"}


@given(
    st.lists(st.sets(st.sampled_from("abcdefg"), min_size=1), max_size=60),
    st.integers(1, 6),
    st.integers(1, 12),
)
def test_scanning_latest_query_misses_nothing(queries, theta, window):
    # only tags of the latest query can newly reach theta, so a full scan
    # after each dispatch never finds a candidate the restricted scan skipped
    agent = make_agent({"a": 0.8}, theta=theta, window=window)
    for q in queries:
        agent.process_dispatch(q)
        assert agent.promotion_candidates() == set()


class TestKPromotionTrigger:
    def test_fires_one_step_below_border(self):
        assert make_agent({"f": 0.66}).k_promotion_trigger("f")

    def test_quiet_well_below(self):
        assert not make_agent({"f": 0.50}).k_promotion_trigger("f")

    @pytest.mark.parametrize("p", [0.8, 0.1])
    def test_needs_m_region(self, p):
        with pytest.raises(RegionError):
            make_agent({"f": p}).k_promotion_trigger("f")

    def test_trigger_opens_session_instead_of_reinforcing(self):
        agent = make_agent({"f": 0.66})
        agent.process_dispatch({"f"})
        assert agent.collection.probability("f") == 0.66
        assert "f" in agent.sessions
        assert [type(m) for m in agent.outbox] == [OwnerQuery]

    def test_broadcast_mode_asks_every_peer(self):
        agent = make_agent({"f": 0.66}, mode="broadcast")
        agent.process_dispatch({"f"})
        assert [(type(m), m.recipient) for m in agent.outbox] == [
            (KRegionQuery, "c2"),
            (KRegionQuery, "c3"),
        ]


def test_raise_path_matches_closed_form():
    alpha_r = Fraction(5, 100)
    tau_k, tau_m = Fraction(7, 10), Fraction(3, 10)
    expected = math.ceil((tau_k - alpha_r - tau_m) / alpha_r) + 1
    agent = make_agent({"a": 0.8}, theta=1, alpha_r=float(alpha_r))
    agent.process_dispatch({"a", "x"})
    assert agent.collection.probability("x") == float(tau_m)
    n = 0
    while "x" not in agent.sessions:
        agent.process_dispatch({"a", "x"})
        n += 1
        assert n < 100
    assert n == expected == 8


class TestPeerHandlers:
    def test_k_query(self):
        agent = make_agent({"f": 0.8, "g": 0.5})
        assert agent.handle_k_query("f")
        assert not agent.handle_k_query("g")
        assert not agent.handle_k_query("absent")

    def test_fall_crossing_the_border(self):
        agent = make_agent({"f": 0.71})
        assert agent.handle_fall_notice("f") is True
        assert agent.collection.probability("f") == 0.66
        assert isinstance(agent.outbox[-1], RegistryRemove)

    def test_fall_staying_in_k(self):
        agent = make_agent({"f": 0.90})
        assert agent.handle_fall_notice("f") is False
        assert agent.collection.probability("f") == 0.85
        assert agent.outbox == []

    def test_fall_on_absent_feature(self):
        agent = make_agent()
        with pytest.raises(RegionError):
            agent.handle_fall_notice("f")
        out = agent.receive(FallNotice("c2", "c1", "f", "c2:f:1"))
        assert out == [FallAck("c1", "c2", "f", True, "c2:f:1")]


def test_snapshot_round_trip():
    agent = make_agent({"a": 0.8, "b": 0.35}, subconcepts=[SubConcept("s", {"a"})])
    for tags in ({"a", "x"}, {"b"}, {"x", "y"}):
        agent.process_dispatch(tags)
    back = ExpertAgent.from_records(agent.to_records(), agent.params)
    assert back.to_records() == agent.to_records()
    assert back.collection == agent.collection
    assert back.tim == agent.tim
