"""Command line entry point: ``objvote <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .core import SeededRng
from .harness import (
    DEFAULT_INSTANCES,
    PRESETS,
    CountNoise,
    ExperimentSpec,
    RegretSummary,
    default_threads,
    evaluate_rule,
    load_preset,
    run_experiment,
)
from .learned import TrainConfig, load_model, run_search, save_model, train
from .registry import RULE_NAMES, RuleOptions
from .simulation import SimConfig, read_instances, sample_instance, write_instances

log = logging.getLogger("objvote")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _noise(text: str) -> CountNoise:
    try:
        return CountNoise.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from exc


def _add_common(p: argparse.ArgumentParser, instances_default: int) -> None:
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--instances", type=int, default=instances_default)
    p.add_argument("--alternatives", type=int, default=10)
    p.add_argument("--obs-variance", type=float, default=1000.0)
    p.add_argument("--count-noise", type=_noise, default=CountNoise(),
                   help="none | percentage[:0.5] | replacement[:1/3]")
    p.add_argument("--mc-samples", type=int, default=100)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $OBJVOTE_THREADS or 1)")
    p.add_argument("--out", type=Path, default=None, help="output file (.csv or .json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objvote", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write simulated elections as JSON lines")
    _add_common(p, 100)
    p.add_argument("--voters", type=int, default=10)

    p = sub.add_parser("evaluate", help="mean regret of one rule")
    _add_common(p, DEFAULT_INSTANCES)
    p.add_argument("--rule", required=True, choices=RULE_NAMES)
    p.add_argument("--voters", type=int, default=10)
    p.add_argument("--model", type=Path, help="model file for learned rules")
    p.add_argument("--input", type=Path, help="evaluate on instances from a JSON-lines file")

    p = sub.add_parser("reproduce-table", help="regenerate one regret table")
    p.add_argument("table", choices=PRESETS)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--instances", type=int, default=DEFAULT_INSTANCES)
    p.add_argument("--voters", type=_int_list, default=None, help="override voter counts, e.g. 3,300")
    p.add_argument("--mc-samples", type=int, default=None)
    p.add_argument("--tuning-instances", type=int, default=None,
                   help="tuning set size for Plurality+/Borda+ (default 5000)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--model", type=Path, help="model for the Learned row")
    p.add_argument("--noisy-model", type=Path, help="model for the Learned (noisy) row")
    p.add_argument("--raw-out", type=Path, help="save per-instance regrets (.npz)")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("train", help="train the Deep Sets rule")
    p.add_argument("--config", type=Path, help="JSON file of TrainConfig overrides")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--batches", type=int, default=None, help="override max_batches")
    p.add_argument("--count-noise", type=float, default=None,
                   help="train with percentage count noise of this size (e.g. 0.5)")
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("search", help="random hyperparameter search")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--trial-batches", type=int, default=500)
    p.add_argument("--config", type=Path, help="JSON file of base TrainConfig overrides")
    p.add_argument("--out", type=Path, default=None, help="write the chosen config as JSON")
    return parser


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out.write_text(text if text.endswith("\n") else text + "\n")


def _summary_output(summary: RegretSummary, seed: int, out: Path | None) -> str:
    if out is not None and out.suffix == ".csv":
        keys = list(asdict(summary))
        vals = [str(v) for v in asdict(summary).values()]
        return ",".join(keys + ["seed"]) + "\n" + ",".join(vals + [str(seed)]) + "\n"
    return json.dumps({**asdict(summary), "seed": seed}, indent=2)


def _sim(args, voters: int) -> SimConfig:
    return SimConfig(n_alternatives=args.alternatives, n_voters=voters, obs_variance=args.obs_variance)


def _cmd_simulate(args) -> int:
    cfg = _sim(args, args.voters)
    insts = (sample_instance(cfg, SeededRng(args.seed, i).child(0)) for i in range(args.instances))
    if args.out is None:
        write_instances(insts, sys.stdout)
    else:
        with args.out.open("w") as fh:
            write_instances(insts, fh)
    return 0


def _cmd_evaluate(args) -> int:
    instances = None
    if args.input is not None:
        with args.input.open() as fh:
            instances = list(read_instances(fh))
        if not instances:
            raise ValueError(f"{args.input}: no instances")
        voters, n = instances[0].counts.shape
        args.alternatives = n
    else:
        voters = args.voters
    spec = ExperimentSpec(sim=_sim(args, voters), voter_counts=(voters,),
                          n_instances=args.instances, rules=(args.rule,),
                          count_noise=args.count_noise, master_seed=args.seed,
                          mc_samples=args.mc_samples)
    options = RuleOptions(mc_samples=args.mc_samples)
    if args.model is not None:
        options.models = {"learned": load_model(args.model), "learned-noisy": load_model(args.model)}
    summary = evaluate_rule(args.rule, spec, voters, options, threads=args.threads,
                            instances=instances)
    _write(_summary_output(summary, args.seed, args.out), args.out)
    return 0


def _cmd_reproduce(args) -> int:
    spec = load_preset(args.table, n_instances=args.instances, seed=args.seed,
                       mc_samples=args.mc_samples, voter_counts=args.voters)
    if args.tuning_instances is not None:
        spec = replace(spec, tuning_instances=args.tuning_instances)
    options = RuleOptions(mc_samples=spec.mc_samples)
    if args.model is not None:
        options.models["learned"] = load_model(args.model)
    if args.noisy_model is not None:
        options.models["learned-noisy"] = load_model(args.noisy_model)
    as_json = args.out is not None and args.out.suffix == ".json"

    def flush(result):
        if args.out is not None:
            _write(result.to_json() if as_json else result.to_csv(), args.out)

    raw: dict | None = {} if args.raw_out is not None else None
    try:
        result = run_experiment(spec, options, threads=args.threads, on_column=flush, raw=raw)
    finally:
        if raw:
            np.savez_compressed(args.raw_out, **raw)
    if args.out is None:
        print(result.format())
    else:
        flush(result)
    return 0


def _train_config(path: Path | None) -> TrainConfig:
    if path is None:
        return TrainConfig()
    return TrainConfig.from_dict(json.loads(path.read_text()))


def _cmd_train(args) -> int:
    cfg = _train_config(args.config)
    if args.batches is not None:
        cfg = replace(cfg, max_batches=args.batches)
    if args.count_noise is not None:
        cfg = replace(cfg, count_noise_pct=args.count_noise)

    def progress(b, loss, model):
        if args.log_every and b % args.log_every == 0:
            log.info("batch %d/%d loss %.4f", b, cfg.max_batches, loss)

    model = train(cfg, SeededRng(args.seed), on_batch=progress)
    save_model(model, args.out, meta={"train_config": cfg.to_dict(), "seed": args.seed})
    log.info("saved model to %s", args.out)
    return 0


def _cmd_search(args) -> int:
    base = _train_config(args.config)
    trials = run_search(None, args.trials, SeededRng(args.seed), base, args.trial_batches)
    best = min(trials, key=lambda t: t.loss)
    doc = {
        "chosen": replace(base, **best.overrides).to_dict(),
        "trials": [{"overrides": t.overrides, "frozen_loss": t.loss} for t in trials],
        "seed": args.seed,
    }
    _write(json.dumps(doc, indent=2), args.out)
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "reproduce-table": _cmd_reproduce,
    "train": _cmd_train,
    "search": _cmd_search,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        log.error("interrupted; partial results (if any) were flushed")
        return 130
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
