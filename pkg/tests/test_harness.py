import json
from collections import Counter

import pytest

from expertmas import snapshot as snap
from expertmas.config import ScenarioConfig
from expertmas.corpus import CorpusSpec, generate_corpus
from expertmas.errors import ConfigError, SnapshotError, SnapshotVersionError
from expertmas.harness import build_system, compare_baseline, run_scenario, summary_table
from expertmas.simulation import k_region_violations


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(CorpusSpec(num_classes=4, length=400, seed=5, shared=1))


def test_same_inputs_same_metrics_and_trace(corpus):
    objs, man = corpus
    cfg = ScenarioConfig(seed=3, interleave=0.2)
    a = run_scenario(objs, man, cfg)
    b = run_scenario(objs, man, cfg)
    assert a.metrics_lines() == b.metrics_lines()
    assert a.trace_lines() == b.trace_lines()


def test_scheduler_seed_changes_interleaving(corpus):
    objs, man = corpus
    a = run_scenario(objs, man, ScenarioConfig(seed=1, interleave=0.3))
    b = run_scenario(objs, man, ScenarioConfig(seed=2, interleave=0.3))
    assert a.trace_lines() != b.trace_lines()


def test_empty_corpus():
    _, man = generate_corpus(CorpusSpec(num_classes=3, length=0))
    res = run_scenario([], man, ScenarioConfig())
    assert res.totals["queries"] == 0
    assert res.totals["messages"] == 0
    assert res.trace == []
    data = snap.snapshot(res.sim)
    for rec in data["agents"]:
        assert [float(p) for _, p in rec["collection"]["entries"]] == [0.7] * 5


def test_separable_corpus_beats_random_baseline():
    objs, man = generate_corpus(CorpusSpec(num_classes=5, mix=(1, 0, 0), length=300, seed=2))
    totals = run_scenario(objs, man, ScenarioConfig()).totals
    assert totals["random_baseline"] == pytest.approx(1 / 5)
    assert totals["accuracy"] >= totals["random_baseline"]


def test_class_count_mismatch(corpus):
    objs, man = corpus
    with pytest.raises(ConfigError):
        run_scenario(objs, man, ScenarioConfig(num_classes=7))


def test_unknown_class_in_corpus(corpus):
    objs, man = corpus
    bad = [objs[0]._replace(true_class="zz")]
    with pytest.raises(ConfigError):
        run_scenario(bad, man, ScenarioConfig())


def test_totals_reconcile_with_query_records(corpus):
    objs, man = corpus
    res = run_scenario(objs, man, ScenarioConfig(seed=4, interleave=0.1))
    queries = [r for r in res.records if r["type"] == "query"]
    t = res.totals
    assert t["queries"] == len(queries) == len(objs)
    assert t["correct"] == sum(r["correct"] for r in queries)
    assert t["accuracy"] == t["correct"] / t["queries"]
    assert t["query_messages"] == sum(r["messages"] for r in queries)
    assert t["fallback_queries"] == sum(r["fallback"] for r in queries)
    assert t["messages"] == t["query_messages"] + t["consultation_messages"] + t["maintenance_messages"]
    assert t["messages_by_variant"] == dict(Counter(r.variant for r in res.trace))
    assert all(r["messages"] == 2 * r["dispatched"] for r in queries)


def test_metrics_lines_are_json(corpus):
    objs, man = corpus
    res = run_scenario(objs[:60], man, ScenarioConfig(window=20))
    lines = [json.loads(x) for x in res.metrics_lines()]
    assert lines[-1]["type"] == "totals"
    assert [r["epoch"] for r in lines if r["type"] == "epoch"] == [1, 2, 3]
    assert "totals" not in summary_table(res.totals)


def test_no_violation_at_end(corpus):
    objs, man = corpus
    res = run_scenario(objs, man, ScenarioConfig(seed=9, interleave=0.2))
    assert k_region_violations(res.sim.center, res.sim.agents) == []


class TestCompareBaseline:
    def test_single_class_modes_agree_on_messages(self):
        objs, man = generate_corpus(CorpusSpec(num_classes=1, length=200, seed=1))
        rep = compare_baseline(objs, man, ScenarioConfig())
        for k in ("total_messages", "query_messages", "consultation_messages"):
            assert rep["selective"][k] == rep["broadcast"][k]

    def test_top_k_all_matches_dispatch_counts(self):
        # every object carries base tags of all four classes; nothing is
        # learned (theta above the window) and no epoch ends inside the run,
        # so no class is ever dropped for zero confidence
        objs, man = generate_corpus(
            CorpusSpec(num_classes=4, cross=3, mix=(1, 0, 0), length=300, seed=8)
        )
        rep = compare_baseline(objs, man, ScenarioConfig(top_k=4, theta=401, window=400))
        sel, bro = rep["selective"], rep["broadcast"]
        assert sel["query_messages"] == bro["query_messages"] == 8 * len(objs)
        assert rep["ratios"]["query_messages_per_query"] == 1
        for r in (sel, bro):
            assert r["total_messages"] - r["query_messages"] == r["consultation_messages"] + r["maintenance_messages"]

    def test_report_counts_match_recount(self, corpus):
        objs, man = corpus
        cfg = ScenarioConfig(seed=2)
        rep = compare_baseline(objs, man, cfg)
        sel = run_scenario(objs, man, cfg.replace(dispatch="selective", mode="lookup"))
        assert rep["selective"]["total_messages"] == len(sel.trace)
        bro = run_scenario(objs, man, cfg.replace(dispatch="broadcast", mode="broadcast"))
        assert rep["broadcast"]["total_messages"] == len(bro.trace)
        assert rep["broadcast"]["query_messages"] == 2 * 4 * len(objs)


class TestSnapshot:
    def quiescent_split(self, objs, man, cfg):
        """First point after some promotion activity where the system is quiescent."""
        splits = []

        def watch(sim):
            if sim.submitted and sim.is_quiescent() and sim.session_totals()["opened"]:
                splits.append(sim.submitted)

        full = run_scenario(objs, man, cfg, on_idle=watch)
        return full, splits[len(splits) // 2]

    def test_restore_then_run_matches_uninterrupted(self, corpus, tmp_path):
        objs, man = corpus
        cfg = ScenarioConfig(seed=6)
        full, k = self.quiescent_split(objs, man, cfg)
        head = build_system(man, cfg)
        head.run(objs[:k])
        path = tmp_path / "s.json"
        snap.save(head, path)
        resumed = snap.load(path)
        resumed.run(objs[k:])
        tail = full.trace[len(head.trace):]
        assert resumed.trace == tail
        assert resumed.totals()["messages"] == full.totals["messages"]
        for cid, agent in full.sim.agents.items():
            assert resumed.agents[cid].to_records() == agent.to_records()
        assert resumed.center.registry == full.sim.center.registry

    def test_refuses_with_active_session(self, corpus):
        objs, man = corpus
        sim = build_system(man, ScenarioConfig())
        seen = []

        def grab(s):
            if s.active_sessions() and not seen:
                seen.append(True)
                with pytest.raises(SnapshotError):
                    snap.snapshot(s)

        sim.run(objs, on_idle=grab)
        assert seen

    def test_refuses_with_messages_in_flight(self, corpus):
        objs, man = corpus
        sim = build_system(man, ScenarioConfig())
        sim.submit(objs[0])
        with pytest.raises(SnapshotError):
            snap.snapshot(sim)

    def test_corrupt_header(self, tmp_path):
        _, man = generate_corpus(CorpusSpec(num_classes=2, length=0))
        data = snap.snapshot(build_system(man, ScenarioConfig()))
        data["header"]["version"] = 99
        with pytest.raises(SnapshotVersionError):
            snap.restore(data)
        data["header"] = "garbage"
        with pytest.raises(SnapshotVersionError):
            snap.restore(data)
        p = tmp_path / "bad.json"
        p.write_text("not json")
        with pytest.raises(SnapshotVersionError):
            snap.load(p)
