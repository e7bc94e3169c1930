"""Command-line benchmark harness.

Subcommands:

- ``run --config <file> --out <dir> [--format csv|json]``: execute one run
  config and write the record.
- ``compare --inputs <json files...> [--out <file>]``: align records for one
  problem into a comparison table.
- ``selftest``: drive every kernel against the scalar oracle and check the
  reduction equivalences.

Exit codes: 0 success, 1 configuration or verification error, 2 numerical
abort.  ``ADAPLUS_BENCH_PARALLEL`` overrides how many seed replicas run
concurrently.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import ConfigError
from .kernels import (
    KERNEL_IDS,
    HyperParams,
    OptimizerState,
    ParamVector,
    adaplus_step,
    drive_stream,
)
from .oracle import replay
from .transcript import scaled_deviation


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 is reserved for
    # numerical aborts here, so usage problems report as config errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="adaplus-bench",
        description="Deterministic optimizer benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config")
    p_run.add_argument("--config", required=True, help="flat key=value run config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")

    p_cmp = sub.add_parser("compare", help="tabulate emitted JSON records")
    p_cmp.add_argument("--inputs", required=True, nargs="+", help="record JSON files")
    p_cmp.add_argument("--out", help="write the table here as well")

    sub.add_parser("selftest", help="run the oracle differential suite")
    return parser


def _cmd_run(args) -> int:
    try:
        config = bench.load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    record = bench.run(config)
    out_dir = Path(args.out)
    stem = Path(args.config).stem
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if record.summary.aborted:
            path = out_dir / f"{stem}.aborted.json"
            bench.emit(record, "json", path)
            print(f"error: run aborted ({record.summary.abort_reason})", file=sys.stderr)
            print(f"partial record flagged in {path}", file=sys.stderr)
            return 2
        path = out_dir / f"{stem}.{args.format}"
        bench.emit(record, args.format, path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    print(f"wrote {path}")
    print(f"config {record.config_hash[:12]}  problem {record.problem_id}  optimizer {record.optimizer_id}")
    for seed, loss in sorted(record.per_seed_final().items()):
        print(f"  seed {seed}: final loss {loss:.6e}")
    return 0


def _cmd_compare(args) -> int:
    try:
        records = [bench.load_record(p) for p in args.inputs]
        table = bench.compare(records)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = table.render()
    print(text, end="")
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    return 0


def _selftest_streams(rng):
    for _ in range(8):
        dim = int(rng.integers(1, 13))
        steps = int(rng.integers(40, 120))
        stream = [rng.standard_normal(dim) * rng.uniform(0.1, 3.0) for _ in range(steps)]
        theta0 = rng.standard_normal(dim)
        lrs = [1e-3] * steps
        yield stream, theta0, lrs


def _cmd_selftest(args) -> int:
    failures = 0
    rng = np.random.default_rng(20240901)
    hp = HyperParams()
    for kernel in KERNEL_IDS:
        worst = 0.0
        for stream, theta0, lrs in _selftest_streams(rng):
            got = drive_stream(kernel, stream, theta0, hp, lrs)
            want = replay(kernel, stream, theta0, hp, lrs)
            worst = max(worst, scaled_deviation(got, want))
        ok = worst <= 1e-12
        failures += 0 if ok else 1
        print(f"selftest differential[{kernel}]: {'PASS' if ok else 'FAIL'} (worst deviation {worst:.2e})")

    reductions = (
        ("adaplus(no nesterov, wd=0) == adabelief", _reduction_adaplus_adabelief),
        ("adaplus(variance, no nesterov, eps-suppressed) == adamw", _reduction_adaplus_adamw),
        ("adamw(wd=0) == adam", _reduction_adamw_adam),
        ("nadam(no nesterov) == adam", _reduction_nadam_adam),
    )
    for label, check in reductions:
        ok = check(np.random.default_rng(7))
        print(f"selftest reduction[{label}]: {'PASS' if ok else 'FAIL'}")
        failures += 0 if ok else 1

    print("selftest:", "OK" if failures == 0 else f"{failures} FAILURES")
    return 0 if failures == 0 else 1


def _random_stream(rng, dim=4, steps=60):
    stream = [rng.standard_normal(dim) for _ in range(steps)]
    theta0 = rng.standard_normal(dim)
    lrs = [1e-3] * steps
    return stream, theta0, lrs


def _equal_trajectories(a, b) -> bool:
    return len(a) == len(b) and all(
        np.array_equal(x.theta_after, y.theta_after) for x, y in zip(a, b)
    )


def _reduction_adaplus_adabelief(rng) -> bool:
    stream, theta0, lrs = _random_stream(rng)
    left = drive_stream("adaplus", stream, theta0, HyperParams(weight_decay=0.0, use_nesterov=False), lrs)
    right = drive_stream("adabelief", stream, theta0, HyperParams(), lrs)
    return _equal_trajectories(left, right)


def _reduction_adaplus_adamw(rng) -> bool:
    stream, theta0, lrs = _random_stream(rng)
    hp = HyperParams(use_nesterov=False, use_belief=False)
    params = ParamVector(theta0)
    state = OptimizerState(params.dim)
    left = [
        adaplus_step(state, params, g, hp, lr, suppress_recursion_eps=True)
        for g, lr in zip(stream, lrs)
    ]
    right = drive_stream("adamw", stream, theta0, HyperParams(), lrs)
    return _equal_trajectories(left, right)


def _reduction_adamw_adam(rng) -> bool:
    stream, theta0, lrs = _random_stream(rng)
    left = drive_stream("adamw", stream, theta0, HyperParams(weight_decay=0.0), lrs)
    right = drive_stream("adam", stream, theta0, HyperParams(), lrs)
    return _equal_trajectories(left, right)


def _reduction_nadam_adam(rng) -> bool:
    stream, theta0, lrs = _random_stream(rng)
    left = drive_stream("nadam", stream, theta0, HyperParams(use_nesterov=False), lrs)
    right = drive_stream("adam", stream, theta0, HyperParams(), lrs)
    return _equal_trajectories(left, right)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "compare":
        return _cmd_compare(args)
    return _cmd_selftest(args)


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
