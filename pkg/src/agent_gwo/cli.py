"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 configuration or input error,
3 refused because test items leak into the optimization pool.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .benchmarks import FUNCTIONS
from .config import load_config
from .data import load_dataset, read_champion, write_json
from .exceptions import (
    AgentGWOError,
    ConfigurationError,
    DatasetError,
    LeakageError,
    RunAborted,
)
from .gwo import SearchSpace, gwo_minimize
from .orchestrator import (
    SPLIT_FILE,
    STATE_FILE,
    RunDirectory,
    build_context,
    evaluate_champion,
    load_items,
    run,
)

logger = logging.getLogger("agent_gwo")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_LEAKAGE = 0, 1, 2, 3


def _overrides(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"gwo.seed={args.seed}")
    if getattr(args, "trace_llm", False):
        overrides.append("provider.trace_llm=true")
    return overrides


def _run_loop(config, out_dir):
    pool, test = load_items(config)
    directory = RunDirectory(out_dir)
    recorded = directory.load_split_ids()
    if recorded is not None and recorded["pool_ids"] != [it.id for it in pool]:
        raise ConfigurationError(f"{out_dir}: data split no longer matches {SPLIT_FILE}")
    result = run(config, pool, run_dir=out_dir, test_items=test)
    champion_path = Path(out_dir) / "champion.json"
    print(f"champion: {champion_path}")
    print(f"best composite: {result.state.best_composite:.4f}")
    return EXIT_OK


def cmd_run(args):
    config = load_config(args.config, _overrides(args))
    out_dir = Path(args.out_dir)
    if (out_dir / STATE_FILE).exists():
        raise ConfigurationError(f"{out_dir} already holds a run; use 'resume' to continue it")
    return _run_loop(config, out_dir)


def cmd_resume(args):
    directory = RunDirectory(args.out_dir)
    if not directory.has_state():
        raise ConfigurationError(f"no checkpoint in {args.out_dir}")
    config = directory.load_config()
    if directory.load_state().is_complete(config):
        print(f"run in {args.out_dir} is already complete")
        return EXIT_OK
    return _run_loop(config, args.out_dir)


def cmd_eval(args):
    config = load_config(args.config, _overrides(args))
    champion = read_champion(args.champion)
    test = load_dataset(args.test, task_kind=config.data.task_kind)
    split_path = Path(args.split) if args.split else Path(args.champion).parent / SPLIT_FILE
    pool_ids = None
    if split_path.exists():
        with open(split_path, encoding="utf-8") as fh:
            pool_ids = json.load(fh)["pool_ids"]
    elif args.split:
        raise ConfigurationError(f"split file not found: {split_path}")
    else:
        logger.warning("no %s next to the champion; leakage check skipped", SPLIT_FILE)
    context = build_context(config, test)
    accuracy = evaluate_champion(champion, test, context.agent_client, pool_ids=pool_ids,
                                 seed=config.gwo.seed)
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.champion).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "eval.json", {"accuracy": accuracy, "n_items": len(test),
                                       "test_path": str(args.test)})
    print(f"accuracy={accuracy:.4f}")
    return EXIT_OK


def cmd_bench(args):
    fn, (lo, hi) = FUNCTIONS[args.function]
    if args.dims < 1:
        raise ConfigurationError(f"--dims must be >= 1, got {args.dims}")
    space = SearchSpace([lo] * args.dims, [hi] * args.dims)
    _, value, trace = gwo_minimize(fn, space, population_size=args.wolves,
                                   max_iter=args.t_max, seed=args.seed,
                                   elitism=not args.no_elitism)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "best_value"])
        for t, v in enumerate(trace):
            writer.writerow([t, repr(float(v))])
    print(f"{args.function}: best={value:.6e} ({out})")
    return EXIT_OK


def cmd_report(args):
    directory = RunDirectory(args.out_dir)
    if not directory.has_state():
        raise ConfigurationError(f"no checkpoint in {args.out_dir}")
    state = directory.load_state()
    if state.ranking is None:
        raise ConfigurationError(f"{args.out_dir}: no iteration has been ranked yet")
    for path in directory.save_report(state):
        print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="agent-gwo",
                                     description="Grey-wolf search over LLM agent configurations.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def config_flags(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted override applied after the file, e.g. gwo.seed=7")
        p.add_argument("--seed", type=int, help="shorthand for --set gwo.seed=N")

    p = sub.add_parser("run", help="start a new optimization run")
    config_flags(p)
    p.add_argument("--out-dir", default="run", help="run directory (default: ./run)")
    p.add_argument("--trace-llm", action="store_true", help="log raw provider exchanges")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="continue an interrupted run")
    p.add_argument("--out-dir", default="run")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval", help="score a champion on a held-out split")
    config_flags(p)
    p.add_argument("--champion", required=True, help="champion.json")
    p.add_argument("--test", required=True, help="JSONL test split")
    p.add_argument("--split", help="split.json with the optimization pool ids "
                                   "(default: next to the champion)")
    p.add_argument("--out-dir", help="where eval.json goes (default: champion's directory)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="standard GWO on a benchmark function")
    p.add_argument("--function", choices=sorted(FUNCTIONS), default="sphere")
    p.add_argument("--dims", type=int, default=5)
    p.add_argument("--wolves", "-N", type=int, default=30)
    p.add_argument("--t-max", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="bench.csv")
    p.add_argument("--no-elitism", action="store_true",
                   help="move the leaders too (best-so-far is still tracked)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="rewrite history.csv/champion.json/usage.json")
    p.add_argument("--out-dir", default="run")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LeakageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE
    except (ConfigurationError, DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.checkpoint:
            print(f"checkpoint: {exc.checkpoint}", file=sys.stderr)
        return EXIT_RUNTIME
    except AgentGWOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
