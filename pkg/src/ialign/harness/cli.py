"""Command line entry point: ``ialign <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 more than 1% of trials
failed numerically (or an invariant check failed in ``validate``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..channel import save_batch, to_manifest
from ..metrics import MetricError, SnrGrid
from . import scenario as scn
from .runner import generate_batch, run_correlation_sweep, run_crossover, run_scenario, write_outputs
from .validate import run_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("ialign")


def _common(p: argparse.ArgumentParser, default_scenario: str = "fig7"):
    p.add_argument("--scenario", default=default_scenario,
                   help="scenario JSON file or built-in name (fig7, fig10, fig11, fig13)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--strategies", help="comma separated strategy list")
    p.add_argument("--snr", help="SNR grid, lo:step:hi in dB or a comma separated list")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ialign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run a scenario and write rates and a summary"))
    _common(sub.add_parser("crossover", help="iterations for Max-SINR to overtake IA"), "fig13")
    p = sub.add_parser("corr-sweep", help="IA rate against cross-link collinearity")
    _common(p, "fig11")
    p.add_argument("--targets", help="comma separated collinearity targets")
    _common(sub.add_parser("generate", help="write the scenario's normalized channels to files"))
    p = sub.add_parser("validate", help="run the invariant suite on a scenario")
    _common(p)
    p.add_argument("--check-trials", type=int, default=20)
    return parser


def _apply_overrides(s: scn.Scenario, args) -> scn.Scenario:
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise scn.ScenarioError("--seed", "must be non-negative")
        changes["seed"] = args.seed
    if args.trials is not None:
        if args.trials < 1:
            raise scn.ScenarioError("--trials", "must be >= 1")
        changes["trials"] = args.trials
    if args.strategies:
        names = tuple(x.strip() for x in args.strategies.split(",") if x.strip())
        bad = [n for n in names if n not in scn.STRATEGIES]
        if bad or not names:
            raise scn.ScenarioError("--strategies", f"unknown strategies {bad}")
        changes["strategies"] = names
    if args.snr:
        try:
            changes["snr"] = SnrGrid.parse(args.snr)
        except (MetricError, ValueError) as exc:
            raise scn.ScenarioError("--snr", str(exc)) from exc
    if args.workers < 1:
        raise scn.ScenarioError("--workers", "must be >= 1")
    return s.replace(**changes) if changes else s


def _finish(report) -> int:
    print(f"{report.successful_trials}/{report.requested_trials} trials succeeded")
    if report.budget_exceeded:
        print(f"error: {report.failed_trials} failed trials exceed the 1% budget", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        s = _apply_overrides(scn.load(args.scenario), args)
        out = Path(args.out)
        if args.command == "run":
            report = run_scenario(s, workers=args.workers)
        elif args.command == "crossover":
            report = run_crossover(s, workers=args.workers)
        elif args.command == "corr-sweep":
            targets = None
            if args.targets:
                try:
                    targets = [float(x) for x in args.targets.split(",")]
                except ValueError as exc:
                    raise scn.ScenarioError("--targets", str(exc)) from exc
                if any(not 0 <= t < 1 for t in targets):
                    raise scn.ScenarioError("--targets", "targets must lie in [0, 1)")
            report = run_correlation_sweep(s, targets, workers=args.workers)
        elif args.command == "generate":
            batch = generate_batch(s)
            # binary channel files by default, JSON manifests with --format json
            if args.format == "csv":
                paths = save_batch(batch, out, stem=s.name)
            else:
                out.mkdir(parents=True, exist_ok=True)
                paths = []
                for i, x in enumerate(batch):
                    p = out / f"{s.name}_{i:05d}.json"
                    p.write_text(to_manifest(x))
                    paths.append(p)
            print(f"wrote {len(paths)} channel files to {out}")
            return EXIT_OK
        else:
            checks = run_checks(s, args.check_trials)
            for c in checks:
                print(c.line())
            return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC
    except scn.ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in write_outputs(report, out, args.format):
        print(f"wrote {p}")
    return _finish(report)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
