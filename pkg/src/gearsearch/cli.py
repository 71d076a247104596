"""Command-line surface.

Exit codes: 0 success or verification PASS, 1 verification failure,
2 usage or config error, 3 I/O or log integrity error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .configio import ConfigError, RunOverrides, load_config
from .engine import PolicyKind, RunConfig, run_search
from .landscape import load_landscape
from .logio import LogError, LogWriter, load_log, make_header
from .policy import PolicyConfig
from .replay import DigestMismatchError, frontier_at_step, replay_verify
from .report import report_running_best, series_to_csv

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_USAGE = 2
EXIT_IO = 3


class _CliParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits with 2 already
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_policy(config_path: Optional[str]) -> Tuple[PolicyConfig, RunOverrides]:
    if config_path is None:
        return PolicyConfig(), RunOverrides()
    return load_config(config_path)


def _build_run_config(args: argparse.Namespace) -> RunConfig:
    policy, overrides = _load_policy(args.config)
    kind_text = args.policy or (overrides.policy_kind.value if overrides.policy_kind else None)
    if kind_text is None:
        raise ConfigError("no policy given: use --policy or run.policy in the config file")
    steps = args.steps if args.steps is not None else overrides.steps
    if steps is None:
        raise ConfigError("no step count given: use --steps or run.steps in the config file")
    seed = args.seed if args.seed is not None else overrides.seed
    if seed is None:
        raise ConfigError("no seed given: use --seed or run.seed in the config file")
    return RunConfig(
        policy_kind=PolicyKind(kind_text),
        steps=steps,
        seed=seed,
        landscape=load_landscape(args.landscape),
        policy=policy,
    )


def _write_run(config: RunConfig, out_path: Path) -> None:
    result = run_search(config)
    with LogWriter(out_path, make_header(result)) as writer:
        for record in result.records:
            writer.append(record)


def cmd_run(args: argparse.Namespace) -> int:
    config = _build_run_config(args)
    _write_run(config, Path(args.out))
    print(f"wrote {config.steps}-step {config.policy_kind.value} log to {args.out}")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    log = load_log(args.log)
    policy, _ = _load_policy(args.config)
    report = replay_verify(log, policy)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


def cmd_report(args: argparse.Namespace) -> int:
    log = load_log(args.log)
    series = report_running_best(log)
    csv_text = series_to_csv(series, include_quarters=args.quarters)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote report to {args.out}")
    else:
        sys.stdout.write(csv_text)
    if args.quarters:
        for quarter in series.quarters:
            print(
                f"quarter {quarter.index} (steps {quarter.start_step}-{quarter.end_step}):"
                f" {quarter.improvement_mbpb:.3f} mbpb"
            )
        print(f"total: {series.total_improvement_mbpb:.3f} mbpb")
    return EXIT_OK


def cmd_frontier(args: argparse.Namespace) -> int:
    log = load_log(args.log)
    frontier = frontier_at_step(log, args.at_step)
    print(f"frontier after step {args.at_step} ({len(frontier)}/{frontier.capacity} members)")
    header = f"{'id':>4} {'role':<8} {'bpb':>10} {'vram':>7} {'params':>7} {'used':>5} {'gain':>10} {'last':>5}"
    print(header)
    for member in frontier.members:
        last = "-" if member.last_used_step is None else str(member.last_used_step)
        print(
            f"{member.id:>4} {member.role.value:<8} {member.metrics.bpb:>10.5f}"
            f" {member.metrics.vram:>7.1f} {member.metrics.params:>7.1f}"
            f" {member.n_used:>5} {member.mean_child_gain:>+10.6f} {last:>5}"
            f"  {member.description}"
        )
    return EXIT_OK


def _parse_seed_range(text: str) -> List[int]:
    if ".." in text:
        lo_text, hi_text = text.split("..", 1)
        lo, hi = int(lo_text), int(hi_text)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def _sweep_one(payload: Tuple[str, str, Optional[str], int, int, str]) -> str:
    policy_kind, landscape_path, config_path, steps, seed, out_path = payload
    policy, _ = _load_policy(config_path)
    config = RunConfig(
        policy_kind=PolicyKind(policy_kind),
        steps=steps,
        seed=seed,
        landscape=load_landscape(landscape_path),
        policy=policy,
    )
    _write_run(config, Path(out_path))
    return out_path


def cmd_sweep(args: argparse.Namespace) -> int:
    seeds = _parse_seed_range(args.seeds)
    policy, overrides = _load_policy(args.config)
    kind_text = args.policy or (overrides.policy_kind.value if overrides.policy_kind else None)
    if kind_text is None:
        raise ConfigError("no policy given: use --policy or run.policy in the config file")
    steps = args.steps if args.steps is not None else overrides.steps
    if steps is None:
        raise ConfigError("no step count given: use --steps or run.steps in the config file")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (kind_text, args.landscape, args.config, steps, seed, str(out_dir / f"{kind_text}-{seed}.jsonl"))
        for seed in seeds
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            for path in pool.map(_sweep_one, jobs):
                print(f"wrote {path}")
    else:
        for job in jobs:
            print(f"wrote {_sweep_one(job)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="gearsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one seeded run and write its log")
    run.add_argument("--policy", choices=[k.value for k in PolicyKind])
    run.add_argument("--landscape", required=True, help="landscape JSON file or bundled name")
    run.add_argument("--steps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--config", help="flat key-value policy config file")
    run.add_argument("--out", required=True)
    run.set_defaults(func=cmd_run)

    replay = sub.add_parser("replay", help="verify a log against its config, step by step")
    replay.add_argument("--log", required=True)
    replay.add_argument("--config")
    replay.set_defaults(func=cmd_replay)

    report = sub.add_parser("report", help="emit the running-best series as CSV")
    report.add_argument("--log", required=True)
    report.add_argument("--quarters", action="store_true", help="include per-quarter improvements")
    report.add_argument("--out")
    report.set_defaults(func=cmd_report)

    frontier = sub.add_parser("frontier", help="print the frontier snapshot at a step")
    frontier.add_argument("--log", required=True)
    frontier.add_argument("--at-step", type=int, required=True)
    frontier.set_defaults(func=cmd_frontier)

    sweep = sub.add_parser("sweep", help="batch runs over a seed range, one log per seed")
    sweep.add_argument("--policy", choices=[k.value for k in PolicyKind])
    sweep.add_argument("--landscape", required=True)
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--seeds", required=True, help="single seed or inclusive range A..B")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--config")
    sweep.add_argument("--out-dir", required=True)
    sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DigestMismatchError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (LogError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
