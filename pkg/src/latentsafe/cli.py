"""``latentsafe`` command line: train, eval, sweep, oracle-check, report.

Exit codes: 0 success, 1 usage error, 2 oracle-suite failure, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .agent import Agent, TrainingDivergence
from .config import RunConfig, config_digest, default_config_text, load_config
from .harness import evaluate, sweep, train_run, write_curve_csv, write_sweep_csv
from .metrics import build_report, read_logs_jsonl, write_logs_jsonl, write_metrics_csv, write_routes_csv
from .oracles import SUITES, run_suites

EXIT_OK, EXIT_USAGE, EXIT_ORACLE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="latentsafe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train an agent and write train.jsonl plus checkpoints")
    t.add_argument("--config", type=Path, help="INI file; omitted keys keep their defaults")
    t.add_argument("--seed", type=int, help="overrides [run] seed")
    t.add_argument("--out", type=Path, required=True, help="output directory")
    t.add_argument("--epochs", type=_positive, help="overrides [agent] epochs")
    t.add_argument("--variant", choices=("safe", "sac"), help="sac = unconstrained ablation")
    t.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    e = sub.add_parser("eval", help="roll out a checkpoint and write episode logs and metrics")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--scenario", default=None, help="'hazard' or a nav preset such as dynamic-2")
    e.add_argument("--episodes", type=_positive, required=True)
    e.add_argument("--speed", type=float, help="obstacle speed override, m/s")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--config", type=Path, help="defaults to config.ini beside the checkpoint")
    e.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("sweep", help="failure rate per (variant, obstacle speed)")
    s.add_argument("--checkpoint", action="append", required=True, metavar="NAME=DIR",
                   help="repeat once per variant")
    s.add_argument("--family", default="dynamic")
    s.add_argument("--speeds", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    s.add_argument("--episodes", type=_positive, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path, required=True, help="CSV path")

    o = sub.add_parser("oracle-check", help="run the self-check suites")
    o.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only these")

    r = sub.add_parser("report", help="episode logs -> metrics CSVs; train log -> curve CSV")
    r.add_argument("--logs", type=Path, help="episode logs JSONL")
    r.add_argument("--train-log", type=Path, help="train.jsonl for the reward/cost curve")
    r.add_argument("--off-route-penalty", type=float, default=None)
    r.add_argument("--out", type=Path, required=True)
    return p


def _find_config(explicit: Path | None, checkpoint: Path) -> RunConfig:
    if explicit is not None:
        return load_config(explicit)
    for candidate in (checkpoint / "config.ini", checkpoint.parent / "config.ini",
                      checkpoint.parent.parent / "config.ini"):
        if candidate.exists():
            return load_config(candidate)
    return RunConfig()


def _scenario(cfg: RunConfig, scenario: str | None) -> tuple[RunConfig, str | None]:
    if scenario == "hazard":
        return replace(cfg, env="hazard"), None
    return cfg, scenario


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    t = cfg.train
    if args.variant == "sac":
        t = t.unconstrained()
    if args.seed is not None:
        t = replace(t, seed=args.seed)
    if args.epochs is not None:
        t = replace(t, epochs=args.epochs)
    cfg = replace(cfg, train=t)
    if args.print_config:
        print(default_config_text(cfg), end="")
        return EXIT_OK

    def progress(rec):
        logging.getLogger("latentsafe.train").info(
            "epoch %d return %.3f cost %.3f kappa %.3f", rec["epoch"], rec["return"], rec["cost"], rec["kappa"])

    try:
        result = train_run(cfg, args.out, progress=progress)
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_curve_csv(result.stats, args.out / "curve.csv")
    last = result.stats[-1]
    print(f"trained {len(result.stats)} epochs -> {args.out}  (final return {last['return']:.3f}, "
          f"cost {last['cost']:.3f})")
    return EXIT_OK


def cmd_eval(args) -> int:
    agent = Agent.load(args.checkpoint)
    cfg, scenario = _scenario(_find_config(args.config, args.checkpoint), args.scenario)
    logs = evaluate(agent, cfg, args.episodes, args.seed, scenario=scenario, speed=args.speed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_logs_jsonl(logs, args.out / "logs.jsonl")
    report = build_report(logs, cfg.off_route_penalty, config_digest(cfg))
    write_metrics_csv(report, args.out / "metrics.csv")
    write_routes_csv(report, args.out / "routes.csv")
    for name, value, _ in report.rows():
        print(f"{name:4s} {value if value is not None else 'n/a'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    agents = {}
    first = None
    for item in args.checkpoint:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--checkpoint expects NAME=DIR, got {item!r}")
        agents[name] = Agent.load(Path(path))
        first = first or Path(path)
    cfg = _find_config(args.config, first)
    rows = sweep(agents, cfg, args.family, args.speeds, args.episodes, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, args.out)
    for r in rows:
        print(f"{r.variant:10s} speed {r.speed:g}  fail {r.fail_rate:5.1f}%  time {r.avg_time:6.2f}s  "
              f"score {r.safety_score:6.2f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    results = run_suites(args.suite)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:24s} {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ORACLE


def cmd_report(args) -> int:
    if args.logs is None and args.train_log is None:
        raise UsageError("report needs --logs and/or --train-log")
    args.out.mkdir(parents=True, exist_ok=True)
    if args.logs is not None:
        penalty = args.off_route_penalty if args.off_route_penalty is not None else RunConfig().off_route_penalty
        report = build_report(read_logs_jsonl(args.logs), penalty)
        write_metrics_csv(report, args.out / "metrics.csv")
        write_routes_csv(report, args.out / "routes.csv")
    if args.train_log is not None:
        with open(args.train_log) as fh:
            stats = [json.loads(line) for line in fh if line.strip()]
        write_curve_csv(stats, args.out / "curve.csv")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "oracle-check": cmd_oracle,
            "report": cmd_report}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
