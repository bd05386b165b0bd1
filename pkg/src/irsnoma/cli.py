"""Command-line front end: figure sweeps to CSV, plus the acceptance runner.

`simulate` executes a single run or a named sweep and writes one CSV row per
(scheme, value, seed) leg; `verify` runs the full acceptance property suite
and reports one pass/fail line per criterion.
"""

import argparse
import sys
from dataclasses import replace

from .config import SCHEMES, ScenarioConfig, load_config
from .sim import (
    DEFAULT_SWEEP_VALUES,
    decoding_order_study,
    emit_csv,
    run_one,
    sweep,
)


def _parse_schemes(raw: str) -> list[str]:
    names = [part.strip() for part in raw.split(",") if part.strip()]
    if not names:
        raise SystemExit("error: --schemes got an empty list")
    for name in names:
        if name not in SCHEMES:
            raise SystemExit(
                f"error: unknown scheme {name!r}; choose from {', '.join(SCHEMES)}"
            )
    return names


def _parse_values(raw: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise SystemExit(f"error: --values expects comma-separated numbers, got {raw!r}")


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: {exc}")
    if args.seeds is not None:
        cfg = replace(cfg, n_seeds=args.seeds)
    schemes = _parse_schemes(args.schemes) if args.schemes else [cfg.scheme]

    if args.sweep == "order":
        records, _ = decoding_order_study(cfg)
    elif args.sweep is not None:
        values = (
            _parse_values(args.values)
            if args.values
            else DEFAULT_SWEEP_VALUES[args.sweep]
        )
        records = sweep(cfg, args.sweep, values, schemes)
    else:
        cache: dict = {}
        records = [
            run_one(cfg, seed, scheme, cache=cache)
            for scheme in schemes
            for seed in cfg.seeds
        ]
    emit_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_all

    wanted = None
    if args.criteria:
        try:
            wanted = sorted({int(p) for p in args.criteria.split(",") if p.strip()})
        except ValueError:
            raise SystemExit(f"error: --criteria expects numbers, got {args.criteria!r}")
    results = run_all(wanted)
    failures = 0
    for idx, name, ok, detail in results:
        verdict = "PASS" if ok else "FAIL"
        print(f"criterion {idx:2d} {name}: {verdict} ({detail})")
        failures += not ok
    if failures:
        print(f"{failures} criterion(s) failed")
        return 1
    print(f"all {len(results)} criteria passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsnoma",
        description="Link-level simulator for a surface-aided NOMA downlink.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="run a scenario or sweep, emit CSV")
    sim_p.add_argument("--config", help="key = value scenario file")
    sim_p.add_argument(
        "--sweep",
        choices=["power", "elements", "clusters", "antennas", "order"],
        help="sweep variable; 'order' runs the decoding-order study",
    )
    sim_p.add_argument(
        "--schemes",
        help=f"comma-separated subset of: {', '.join(SCHEMES)}",
    )
    sim_p.add_argument("--seeds", type=int, help="number of seeds (0..n-1)")
    sim_p.add_argument("--values", help="comma-separated sweep values")
    sim_p.add_argument("--out", default="results.csv", help="output CSV path")
    sim_p.set_defaults(func=cmd_simulate)

    ver_p = sub.add_parser("verify", help="run the acceptance property suite")
    ver_p.add_argument("--criteria", help="comma-separated criterion numbers to run")
    ver_p.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
