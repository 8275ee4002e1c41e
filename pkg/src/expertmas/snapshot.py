"""Versioned snapshots of a quiescent system."""
from __future__ import annotations

import json
from pathlib import Path

from .center_agent import BaseFeatureRegistry, CenterAgent
from .config import ScenarioConfig
from .errors import SnapshotError, SnapshotVersionError
from .expert_agent import ExpertAgent
from .simulation import Simulation

FORMAT = "expertmas-snapshot"
VERSION = 1


def snapshot(sim: Simulation) -> dict:
    if not sim.idle or sim.center.pending:
        raise SnapshotError("messages are in flight; snapshot needs a quiescent system")
    if sim.active_sessions():
        raise SnapshotError(
            f"{sim.active_sessions()} promotion session(s) active; snapshot needs a quiescent system"
        )
    version, state, gauss = sim.rng.getstate()
    return {
        "header": {"format": FORMAT, "version": VERSION},
        "config": sim.config.to_dict(),
        "center": {
            "class_ids": list(sim.center.class_ids),
            "registry": sim.center.registry.to_records(),
            "stats": dict(sorted(sim.center.stats.items())),
        },
        "agents": [sim.agents[c].to_records() for c in sorted(sim.agents)],
        "runtime": {
            "rng": [version, list(state), gauss],
            "step": sim.step,
            "submitted": sim.submitted,
            "completed": sim.completed,
            "epochs": sim.epochs,
            "variant_counts": dict(sorted(sim.variant_counts.items())),
            "consultation_messages": sim.consultation_messages,
            "maintenance_messages": sim.maintenance_messages,
        },
    }


def restore(data: dict, keep_trace: bool = True) -> Simulation:
    header = data.get("header") if isinstance(data, dict) else None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise SnapshotVersionError("not a snapshot: missing or corrupt header")
    if header.get("version") != VERSION:
        raise SnapshotVersionError(
            f"snapshot version {header.get('version')!r} is not supported (expected {VERSION})"
        )
    try:
        config = ScenarioConfig.from_dict(data["config"])
        params = config.agent_params
        agents = [ExpertAgent.from_records(rec, params) for rec in data["agents"]]
        c = data["center"]
        center = CenterAgent(
            BaseFeatureRegistry.from_records(c["registry"]),
            c["class_ids"],
            config.policy(len(c["class_ids"])),
            mixing=config.mixing,
            eps_fb=config.eps_fb,
        )
        center.stats.update(c.get("stats", {}))
        sim = Simulation(center, agents, config, keep_trace=keep_trace)
        rt = data["runtime"]
        version, state, gauss = rt["rng"]
        sim.rng.setstate((version, tuple(state), gauss))
        sim.step = rt["step"]
        sim.submitted = rt["submitted"]
        sim.completed = rt["completed"]
        sim.epochs = rt["epochs"]
        sim.variant_counts.update(rt["variant_counts"])
        sim.consultation_messages = rt["consultation_messages"]
        sim.maintenance_messages = rt["maintenance_messages"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SnapshotError(f"malformed snapshot: {exc!r}") from None
    return sim


def save(sim: Simulation, path) -> None:
    Path(path).write_text(json.dumps(snapshot(sim), indent=1, sort_keys=True) + "\n")


def load(path, keep_trace: bool = True) -> Simulation:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SnapshotVersionError(f"{path}: unreadable snapshot header ({exc})") from None
    return restore(data, keep_trace=keep_trace)
