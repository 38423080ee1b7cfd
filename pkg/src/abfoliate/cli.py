"""Command line entry point.

Exit status is 0 when every gated quantity is within tolerance, 2 when at least
one is not, and 1 on any error (bad config, violated admissibility condition).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError, FinslerError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TOLERANCE = 2


def _resolutions(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if len(values) < 2:
        raise argparse.ArgumentTypeError("need at least two resolutions")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abfoliate",
        description="Verify leaf operators and integral formulae of foliated (alpha,beta)-spaces.")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for compiled kernels (default: $FINSLER_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run every applicable check at one resolution")
    v.add_argument("--config", required=True, type=Path)
    v.add_argument("--resolution", type=int, default=None)
    v.add_argument("--out", type=Path, default=None, help="JSON report path")

    c = sub.add_parser("converge", help="convergence study over several resolutions")
    c.add_argument("--config", required=True, type=Path)
    c.add_argument("--resolutions", type=_resolutions, default=None)
    c.add_argument("--out", type=Path, default=None, help="JSON table path")
    c.add_argument("--csv", type=Path, default=None, help="CSV table path")

    ls = sub.add_parser("list-scenarios", help="print the scenario catalog")
    ls.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def _apply_threads(n: int | None) -> None:
    from . import _kernels
    if n is None:
        env = os.environ.get("FINSLER_THREADS")
        n = int(env) if env else None
    if n is not None:
        if n < 1:
            raise ConfigError("--threads must be positive")
        _kernels.set_threads(n)


def _summary(checks) -> str:
    lines = []
    for c in checks:
        mark = "ok  " if c.passed else "FAIL"
        lines.append(f"  {mark} {c.name:<36s} {c.value:.6e}  (tol {c.tolerance:.1e})")
    return "\n".join(lines)


def _verify(args) -> int:
    from .config import ScenarioConfig, prescan
    from .harness import run_scenario

    config = ScenarioConfig.load(args.config)
    if args.resolution is not None:
        config = config.with_resolution(args.resolution)
    prescan(config)
    report = run_scenario(config)
    out = args.out or (Path(config.output) if config.output else None)
    text = report.to_json()
    if out is not None:
        out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"{config.scenario} {config.family} @ {report.resolution}", file=sys.stderr)
    print(_summary(report.checks), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def _converge(args) -> int:
    from .config import ScenarioConfig, prescan
    from .harness import converge

    config = ScenarioConfig.load(args.config)
    prescan(config)
    table = converge(config, args.resolutions)
    out = args.out or (Path(config.output) if config.output else None)
    if out is not None:
        out.write_text(table.to_json(), encoding="utf-8")
        csv_path = args.csv or out.with_suffix(".csv")
        csv_path.write_text(table.to_csv(), encoding="utf-8")
    else:
        if args.csv is not None:
            args.csv.write_text(table.to_csv(), encoding="utf-8")
        sys.stdout.write(table.to_csv())
    print(_summary(table.checks), file=sys.stderr)
    return EXIT_OK if table.passed else EXIT_TOLERANCE


def _list(args) -> int:
    from .harness import format_scenarios, list_scenarios

    entries = list_scenarios()
    if args.json:
        print(json.dumps(entries, indent=2))
    else:
        print(format_scenarios(entries))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
        if args.command == "verify":
            return _verify(args)
        if args.command == "converge":
            return _converge(args)
        return _list(args)
    except (FinslerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
