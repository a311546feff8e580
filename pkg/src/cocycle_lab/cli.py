"""Command line entry point: ``cocycle-lab <suite> --config PATH``.

Exit status: 0 when every criterion passes, 1 when some criterion fails,
2 for usage or configuration errors, 3 when the step budget ran out.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import report
from .config import ConfigError, load_config
from .parallel import Budget, Pool
from .sensitivity import MalformedCurveError
from .green import AmenableSupportError, AsymmetricMeasureError
from .suites import SUITES, Context, describe, get_suite, run_suite
from .walk import LengthCocycle, generate

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INCOMPLETE = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cocycle-lab", description="Monte Carlo and exact checks for cocycles of random walks.")
    p.add_argument("command", help="a suite name, or 'list' / 'describe'")
    p.add_argument("target", nargs="?", help="suite to describe")
    p.add_argument("--config", help="YAML experiment configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--dump-trajectories", type=int, default=None, metavar="K", help="write the first K walks as 'j X_j Z_j Q_j' lines")
    p.add_argument("--dump-length", type=int, default=100, metavar="N", help="steps per dumped walk")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return p


def _dump(path: str, measure, k: int, n: int, seed: int) -> None:
    L = LengthCocycle()
    with open(path, "w") as fh:
        for i in range(k):
            fh.write(f"# walk {i}\n")
            for line in generate(measure, n, i, seed).dump_lines(L):
                fh.write(line + "\n")
            fh.write("\n")


def run(argv: list[str] | None = None, stdout=None) -> int:
    out = stdout or sys.stdout
    args = _parser().parse_args(argv)
    if args.command == "list":
        for name, s in SUITES.items():
            print(f"{name:16s} {s.summary}", file=out)
        return EXIT_PASS
    if args.command == "describe":
        if not args.target:
            print("describe needs a suite name", file=sys.stderr)
            return EXIT_USAGE
        try:
            print(describe(args.target), file=out, end="")
        except KeyError as exc:
            print(exc.args[0], file=sys.stderr)
            return EXIT_USAGE
        return EXIT_PASS
    try:
        suite = get_suite(args.command)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return EXIT_USAGE
    if not args.config:
        print("--config is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg, params = load_config(args.config, suite.name)
        seed = args.seed if args.seed is not None else cfg.seed
        if seed is None:
            raise ConfigError("no seed given: set 'seed' in the config or pass --seed")
        cfg = cfg.model_copy(update={"seed": seed})
        workers = args.workers if args.workers is not None else cfg.workers
        ctx = Context(cfg, seed, Pool(workers), Budget(cfg.budget.max_steps))
        res = run_suite(suite.name, ctx, params)
    except (ConfigError, AsymmetricMeasureError, AmenableSupportError, MalformedCurveError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    fp = cfg.fingerprint()
    outdir = args.out or cfg.output.dir
    os.makedirs(outdir, exist_ok=True)
    stem = os.path.join(outdir, cfg.experiment)
    report.write_csv(stem + ".csv", cfg.experiment, fp, seed, res)
    payload = report.verdict(cfg.experiment, fp, suite.name, res)
    report.write_json(stem + ".json", payload)
    report.write_dat(os.path.join(outdir, "plot_data"), res.series)
    if cfg.output.figures and not args.no_figures:
        report.write_figures(os.path.join(outdir, "figures"), res.series)
    k = args.dump_trajectories if args.dump_trajectories is not None else cfg.output.trajectory_dump
    if k > 0:
        _dump(stem + ".trajectories.txt", cfg.measure(suite.primary(params)), k, args.dump_length, seed)

    for c in res.criteria:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} (threshold {c.threshold:.6g})", file=out)
    for note in res.notes:
        print(f"note: {note}", file=out)
    if res.incomplete:
        print("INCOMPLETE: step budget exhausted", file=out)
        return EXIT_INCOMPLETE
    return EXIT_PASS if res.passed else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
