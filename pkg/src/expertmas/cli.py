"""Command-line entry point: ``expertmas <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import snapshot as snap
from .config import ScenarioConfig
from .corpus import CorpusSpec, generate_corpus, preprocess, read_corpus, read_manifest, write_corpus
from .errors import KernelError
from .feature_model import iter_regions
from .harness import compare_baseline, run_scenario, summary_table, write_outputs

log = logging.getLogger("expertmas")

# (flag, dest, type) mirroring ScenarioConfig
CONFIG_FLAGS = [
    ("--tau-k", "tau_k", float),
    ("--tau-m", "tau_m", float),
    ("--alpha-r", "alpha_r", float),
    ("--alpha-d", "alpha_d", float),
    ("--theta", "theta", int),
    ("--window", "window", int),
    ("--epoch", "epoch", int),
    ("--dispatch", "dispatch", str),
    ("--top-k", "top_k", int),
    ("--min-conf", "min_conf", float),
    ("--mode", "mode", str),
    ("--round-cap", "round_cap", int),
    ("--eps-fb", "eps_fb", float),
    ("--mixing", "mixing", str),
    ("--seed", "seed", int),
    ("--interleave", "interleave", float),
    ("--capacity", "capacity", int),
    ("--num-classes", "num_classes", int),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    for flag, dest, typ in CONFIG_FLAGS:
        p.add_argument(flag, dest=dest, type=typ, default=None)


def _config(args) -> ScenarioConfig:
    return ScenarioConfig.load(args.config, **{dest: getattr(args, dest) for _, dest, _ in CONFIG_FLAGS})


def _mix(text: str) -> tuple:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix is three comma-separated numbers: base,learnable,noise")
    return tuple(parts)


def cmd_gen_corpus(args) -> int:
    spec = CorpusSpec(
        num_classes=args.classes,
        base_per_class=args.base,
        learnable_per_class=args.learnable,
        noise_pool=args.noise,
        tags_per_object=args.tags,
        mix=args.mix,
        length=args.length,
        seed=args.seed,
        cross=args.cross,
        shared=args.shared,
    )
    objects, manifest = generate_corpus(spec)
    write_corpus(objects, manifest, args.out, args.manifest)
    log.info("wrote %d objects to %s", len(objects), args.out)
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    objects = read_corpus(args.corpus)
    manifest = read_manifest(args.manifest)
    result = run_scenario(objects, manifest, config, keep_trace=args.trace is not None)
    write_outputs(result, args.metrics, args.trace)
    if args.snapshot:
        closed = result.sim.close_sessions()
        if closed:
            log.info("aborted %d waiting promotion session(s) at end of stream", closed)
        snap.save(result.sim, args.snapshot)
    print(summary_table(result.totals), file=sys.stderr)
    return 0


def cmd_classify(args) -> int:
    sim = snap.load(args.snapshot, keep_trace=False)
    raw = args.text if args.text is not None else [t for t in args.tags.split(",") if t]
    tags = preprocess(raw)
    vector = sim.center.classify(tags, sim.agents)
    print(json.dumps({"tags": list(tags), "vector": [list(e) for e in vector]}, sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    sim = snap.load(args.snapshot, keep_trace=False)
    agents = [args.agent] if args.agent else sorted(sim.agents)
    for cid in agents:
        if cid not in sim.agents:
            raise KernelError(f"no agent {cid!r} in snapshot")
        agent = sim.agents[cid]
        th = agent.thresholds
        print(f"{cid}  tau_k={th.tau_k} tau_m={th.tau_m}  dispatches={agent.dispatches}")
        for f, p, region in iter_regions(agent.collection):
            print(f"  {region.name}  {p:.6f}  {f}")
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    report = compare_baseline(read_corpus(args.corpus), read_manifest(args.manifest), config)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expertmas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a seeded synthetic tag corpus")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--base", type=int, default=5)
    p.add_argument("--learnable", type=int, default=5)
    p.add_argument("--noise", type=int, default=20)
    p.add_argument("--tags", type=int, default=5)
    p.add_argument("--mix", type=_mix, default=(0.5, 0.3, 0.2))
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross", type=int, default=0)
    p.add_argument("--shared", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("run", help="stream a corpus through the system")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--metrics", help="metrics stream (JSON lines)")
    p.add_argument("--trace", help="message trace (JSON lines)")
    p.add_argument("--snapshot", help="write the final system state here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("classify", help="classify one object against a snapshot")
    p.add_argument("--snapshot", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--text")
    g.add_argument("--tags", help="comma-separated tags")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("inspect", help="print agents' K/M/D regions from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--agent")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("compare-baseline", help="selective vs broadcast message counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except (KernelError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
