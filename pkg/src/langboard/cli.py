"""Command-line entry point covering the full pipeline.

Subcommands compose end-to-end with defaults:

    langboard collect --episodes 120 --out data/
    langboard relabel-export --data data/ --out train.npz
    langboard stats --data data/
    langboard train --data train.npz --steps 6000 --seed 1 --out policy.npz
    langboard eval --policy policy.npz --families block2block,block2rel
    langboard sweep --data train.npz --seeds 0,1,2
    langboard compare-modes --policy policy.npz --trials 20
    langboard serve --data data/ --checkpoints ckpts/
    langboard replay --log session.jsonl [--policy policy.npz]

Exit codes: 0 success, 2 usage (argparse), 3 missing input file, 4 corrupt
or mismatched file content, 5 replay divergence, 6 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, benchmark, datastore, expert, guidance, sim, tasks
from .policy import (ModelConfig, PolicyCheckpoint, TrainConfig, TrainedPolicy,
                     TrainingDivergedError, train)

EXIT_OK = 0
EXIT_MISSING = 3
EXIT_CORRUPT = 4
EXIT_DIVERGED = 5
EXIT_TRAINING = 6

log = logging.getLogger("langboard")


def _artifact_header(config: sim.SimConfig) -> dict:
    return {"tool_version": __version__, "config_hash": config.hash(),
            "vocab_hash": tasks.VOCAB_HASH}


def _parse_families(text: str):
    if text in ("all", ""):
        return tasks.FAMILIES
    families = tuple(part.strip() for part in text.split(","))
    for fam in families:
        if fam not in tasks.FAMILIES:
            raise argparse.ArgumentTypeError(
                f"unknown family {fam!r} (choose from {', '.join(tasks.FAMILIES)})")
    return families


def _parse_seeds(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip() != ""]


def _load_policy(name: str, config: sim.SimConfig):
    if name == "expert":
        return expert.ExpertPolicy(config)
    if name == "random":
        return benchmark.RandomPolicy(config=config)
    if name == "zero":
        return benchmark.ZeroPolicy()
    path = Path(name)
    if not path.exists():
        raise FileNotFoundError(f"no policy checkpoint at {path}")
    return TrainedPolicy(PolicyCheckpoint.load(path), config)


def cmd_collect(args) -> int:
    config = sim.SimConfig.load(args.config) if args.config else sim.DEFAULT_CONFIG
    store = datastore.EpisodeStore(args.out)
    episodes, demos = expert.generate_corpus(
        args.episodes, families=args.families, seed=args.seed, config=config,
        store=store)
    print(f"wrote {len(episodes)} episodes / {len(demos)} demos to {args.out}")
    return EXIT_OK


def cmd_relabel_export(args) -> int:
    store = datastore.EpisodeStore(args.data)
    demos = store.all_relabels()
    if not demos:
        print(f"no relabeled demos under {args.data}", file=sys.stderr)
        return EXIT_MISSING
    training_set = datastore.export_training_set(store, demos, seqlen=args.seqlen)
    training_set.save(args.out)
    print(f"wrote {len(training_set)} examples from {len(demos)} demos to {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    store = datastore.EpisodeStore(args.data)
    stats = datastore.dataset_stats(store)
    payload = {**_artifact_header(sim.DEFAULT_CONFIG), **stats.as_dict()}
    if args.compare_strategies:
        comparison = datastore.relabel_strategy_comparison(store, seed=args.seed)
        payload["event_selected"] = comparison.event_selected.__dict__
        payload["random_window"] = comparison.random_window.__dict__
        payload["window_len"] = comparison.window_len
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for key, value in payload.items():
            print(f"{key:32} {value}")
    return EXIT_OK


def cmd_train(args) -> int:
    path = Path(args.data)
    if not path.exists():
        print(f"no training set at {path}", file=sys.stderr)
        return EXIT_MISSING
    dataset = datastore.TrainingSet.load(path)
    model_config = ModelConfig(kind=args.arch)
    train_config = TrainConfig(steps=args.steps, batch_size=args.batch)
    try:
        checkpoint, curve = train(dataset, model_config, train_config, seed=args.seed)
    except TrainingDivergedError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_TRAINING
    checkpoint.meta.update(_artifact_header(sim.DEFAULT_CONFIG))
    checkpoint.save(args.out)
    curve_path = Path(args.out).with_suffix(".loss.jsonl")
    curve_path.write_text("".join(json.dumps({"step": s, "loss": l}) + "\n"
                                  for s, l in curve))
    print(f"checkpoint {checkpoint.hash()} -> {args.out} (loss curve {curve_path})")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = sim.SimConfig.load(args.config) if args.config else sim.DEFAULT_CONFIG
    try:
        policy = _load_policy(args.policy, config)
    except FileNotFoundError as e:
        print(e, file=sys.stderr)
        return EXIT_MISSING
    report = benchmark.run_benchmark(
        policy, families=args.families, trials_per_condition=args.trials,
        seeds=_parse_seeds(args.seeds) if args.seeds else None,
        max_steps=args.max_steps, config=config)
    if args.out:
        Path(args.out).write_text(report.to_jsonl())
    if args.format == "jsonl":
        print(report.to_jsonl(include_results=False), end="")
    else:
        print(report.table())
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = Path(args.data)
    if not path.exists():
        print(f"no training set at {path}", file=sys.stderr)
        return EXIT_MISSING
    dataset = datastore.TrainingSet.load(path)

    def train_fn(subset, seed):
        checkpoint, _ = train(subset, ModelConfig(kind=args.arch),
                              TrainConfig(steps=args.steps), seed=seed)
        return TrainedPolicy(checkpoint)

    report = benchmark.data_scaling_sweep(
        train_fn, dataset, fractions=[float(f) for f in args.fractions.split(",")],
        seeds=_parse_seeds(args.seeds), eval_families=args.families,
        trials_per_condition=args.trials)
    if args.out:
        Path(args.out).write_text(report.to_jsonl())
    print(report.to_jsonl(), end="")
    return EXIT_OK


def cmd_compare_modes(args) -> int:
    config = sim.DEFAULT_CONFIG
    goal = guidance._goal_from_key(args.goal)
    if args.policy == "expert":
        comparison = guidance.compare_modes(
            None, goal, trials=args.trials,
            seeds=_parse_seeds(args.seeds) if args.seeds else None,
            policy_factory=lambda: expert.ExpertPolicy(config), config=config)
    else:
        path = Path(args.policy)
        if not path.exists():
            print(f"no policy checkpoint at {path}", file=sys.stderr)
            return EXIT_MISSING
        checkpoint = PolicyCheckpoint.load(path)
        comparison = guidance.compare_modes(
            checkpoint, goal, trials=args.trials,
            seeds=_parse_seeds(args.seeds) if args.seeds else None, config=config)
    if args.out:
        Path(args.out).write_text(comparison.to_jsonl())
    print(comparison.to_jsonl(), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    from . import server

    server.serve(host_addr=args.host, port=args.port, data_dir=args.data,
                 checkpoint_dir=args.checkpoints, ui_dir=args.ui)
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"no session log at {path}", file=sys.stderr)
        return EXIT_MISSING
    checkpoint = None
    policy = None
    if args.policy == "expert":
        policy = expert.ExpertPolicy()
    elif args.policy:
        checkpoint = PolicyCheckpoint.load(args.policy)
    try:
        result = guidance.replay_log(path, checkpoint=checkpoint, policy=policy)
    except guidance.ReplayError as e:
        print(f"integrity failure: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    if not result.ok:
        print(f"replay diverged at tick {result.first_divergence}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"replay ok: {result.ticks} ticks bit-identical")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langboard",
        description="Deterministic block-pushing board with language-conditioned "
                    "policies and real-time guidance.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="generate an expert demonstration corpus")
    p.add_argument("--episodes", type=int, default=30)
    p.add_argument("--families", type=_parse_families, default=tasks.FAMILIES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="SimConfig key-value file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_collect)

    p = sub.add_parser("relabel-export", help="export demos to a training set")
    p.add_argument("--data", required=True)
    p.add_argument("--seqlen", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_relabel_export)

    p = sub.add_parser("stats", help="dataset statistics (and strategy comparison)")
    p.add_argument("--data", required=True)
    p.add_argument("--compare-strategies", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("train", help="behavioral cloning on an exported set")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=("lava", "mlp"), default="lava")
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="run the benchmark")
    p.add_argument("--policy", required=True,
                   help="checkpoint path, or expert|random|zero")
    p.add_argument("--families", type=_parse_families, default=tasks.FAMILIES)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--seeds", default=None, help="comma-separated trial seeds")
    p.add_argument("--max-steps", type=int, default=benchmark.MAX_STEPS)
    p.add_argument("--config", default=None)
    p.add_argument("--format", choices=("table", "jsonl"), default="table")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="data-scaling sweep (train per fraction x seed)")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=("lava", "mlp"), default="lava")
    p.add_argument("--fractions", default="0.125,0.25,0.5,1.0")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--families", type=_parse_families, default=("block2block", "block2rel"))
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("compare-modes", help="real-time vs open-loop guidance")
    p.add_argument("--policy", required=True)
    p.add_argument("--goal", default="corner_gather:bottom_right")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seeds", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_compare_modes)

    p = sub.add_parser("serve", help="run the guidance service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--data", default=None, help="episode datastore directory")
    p.add_argument("--checkpoints", default=None, help="checkpoint directory")
    p.add_argument("--ui", default=None, help="built frontend directory")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="verify a session log reproduces bit-exactly")
    p.add_argument("--log", required=True)
    p.add_argument("--policy", default="expert",
                   help="checkpoint path or 'expert' (must match the log)")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.fn(args)
    except datastore.IntegrityError as e:
        print(f"corrupt data: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
