"""Scenario runner, baseline comparison and metric/trace file output."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .center_agent import CenterAgent, bootstrap
from .config import ScenarioConfig
from .corpus import CorpusObject, Manifest
from .errors import ConfigError
from .protocol import message_count
from .simulation import Simulation


def build_system(manifest: Manifest, config: ScenarioConfig, keep_trace: bool = True) -> Simulation:
    m = len(manifest.classes)
    if config.num_classes is not None and config.num_classes != m:
        raise ConfigError(
            f"config expects {config.num_classes} classes but the manifest plants {m}"
        )
    registry, agents = bootstrap(
        {c: manifest.base[c] for c in manifest.classes},
        config.agent_params,
        config.thresholds,
    )
    center = CenterAgent(
        registry,
        manifest.classes,
        config.policy(m),
        mixing=config.mixing,
        eps_fb=config.eps_fb,
    )
    return Simulation(center, agents, config, keep_trace=keep_trace)


@dataclass
class RunResult:
    sim: Simulation
    records: list
    totals: dict

    @property
    def trace(self):
        return self.sim.trace

    def metrics_lines(self) -> list[str]:
        return [_dump(r) for r in self.records] + [_dump(self.totals)]

    def trace_lines(self) -> list[str]:
        return [rec.to_json() for rec in self.sim.trace]


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def run_scenario(
    objects: Sequence[CorpusObject],
    manifest: Manifest,
    config: ScenarioConfig,
    keep_trace: bool = True,
    on_idle=None,
) -> RunResult:
    unknown = {o.true_class for o in objects} - set(manifest.classes)
    if unknown:
        raise ConfigError(f"corpus names classes missing from the manifest: {sorted(unknown)}")
    sim = build_system(manifest, config, keep_trace=keep_trace)
    sim.run(objects, on_idle=on_idle)
    return RunResult(sim, sim.records, sim.totals())


def write_outputs(result: RunResult, metrics_path=None, trace_path=None) -> None:
    if metrics_path is not None:
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
            for line in result.metrics_lines():
                fh.write(line + "\n")
    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
            for line in result.trace_lines():
                fh.write(line + "\n")


@dataclass
class ModeReport:
    label: str
    dispatch: str
    consultation: str
    queries: int
    accuracy: float
    total_messages: int
    query_messages: int
    consultation_messages: int
    maintenance_messages: int
    messages_per_query: float
    sessions: dict = field(default_factory=dict)


def _report(label: str, result: RunResult) -> ModeReport:
    cfg = result.sim.config
    tally = message_count(result.trace, cfg.mode)
    totals = result.totals
    # the run's live counters must agree with a recount of the raw trace
    if (
        tally.total != totals["messages"]
        or tally.query_total != totals["query_messages"]
        or tally.consultation_total != totals["consultation_messages"]
        or tally.maintenance != totals["maintenance_messages"]
    ):
        raise AssertionError(f"{label}: message counters disagree with the trace recount")
    q = totals["queries"]
    return ModeReport(
        label=label,
        dispatch=cfg.dispatch,
        consultation=cfg.mode,
        queries=q,
        accuracy=totals["accuracy"],
        total_messages=tally.total,
        query_messages=tally.query_total,
        consultation_messages=tally.consultation_total,
        maintenance_messages=tally.maintenance,
        messages_per_query=tally.query_total / q if q else 0.0,
        sessions=totals["sessions"],
    )


def _ratio(a: float, b: float) -> Optional[float]:
    return a / b if b else None


def compare_baseline(objects: Sequence[CorpusObject], manifest: Manifest, config: ScenarioConfig) -> dict:
    """Selective dispatch with registry lookup vs. broadcast-everything."""
    selective_cfg = config.replace(dispatch="selective", mode="lookup")
    broadcast_cfg = config.replace(dispatch="broadcast", mode="broadcast", top_k=None, min_conf=None)
    if selective_cfg.seed != broadcast_cfg.seed:
        raise AssertionError("both modes must share one seed")
    sel = _report("selective", run_scenario(objects, manifest, selective_cfg))
    bro = _report("broadcast", run_scenario(objects, manifest, broadcast_cfg))
    return {
        "seed": config.seed,
        "num_classes": len(manifest.classes),
        "selective": sel.__dict__,
        "broadcast": bro.__dict__,
        "ratios": {
            "query_messages_per_query": _ratio(sel.messages_per_query, bro.messages_per_query),
            "consultation_messages": _ratio(sel.consultation_messages, bro.consultation_messages),
            "total_messages": _ratio(sel.total_messages, bro.total_messages),
        },
    }


def summary_table(totals: dict) -> str:
    rows = [
        ("queries", totals["queries"]),
        ("accuracy", f"{totals['accuracy']:.4f}"),
        ("random baseline", f"{totals['random_baseline']:.4f}"),
        ("messages", totals["messages"]),
        ("  query", totals["query_messages"]),
        ("  consultation", totals["consultation_messages"]),
        ("  maintenance", totals["maintenance_messages"]),
        ("fallback queries", totals["fallback_queries"]),
    ]
    rows += [(f"sessions {k}", v) for k, v in totals["sessions"].items()]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
