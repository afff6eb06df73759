"""Command line entry point: ``meshroute run|compare|sweep|alpha``.

Exit codes: 0 success, 1 invalid scenario or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiments, metrics
from .network import protocol_id, simulate
from .scenario import ScenarioError, builtin_names, builtin_scenario, load_scenario

log = logging.getLogger("meshroute")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _Invalid(Exception):
    pass


def _scenario(args):
    if os.path.exists(args.scenario):
        sc = load_scenario(args.scenario)
    elif args.scenario in builtin_names():
        sc = builtin_scenario(args.scenario)
    else:
        raise _Invalid(f"no scenario file or built-in scenario named {args.scenario!r}")
    changes = {}
    if args.duration is not None:
        if args.duration <= 0:
            raise _Invalid("--duration must be positive")
        changes["duration_s"] = args.duration
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "background", None) is not None:
        changes["background_rate"] = args.background
    return sc.with_params(**changes) if changes else sc


def _protocols(args, sc):
    names = args.protocol or list(sc.protocols)
    out = []
    for name in names:
        for part in name.split(","):
            try:
                out.append(protocol_id(part, sc, args.alpha))
            except ValueError as exc:
                raise _Invalid(str(exc)) from None
    return out


def _print_summary(run) -> None:
    print(f"{run.protocol}  seed={run.seed}  events={run.events_processed}")
    for fid, f in run.summary().flows.items():
        delay = "n/a" if f.mean_delay_ms is None else f"{f.mean_delay_ms:.2f} ms"
        loss = f.loss or {}
        print(
            f"  {fid:>6} {f.src}->{f.dst}  injected={f.injected} delivered={f.delivered} "
            f"delay={delay} overflow={loss.get('overflow', 0):.1f}% retry={loss.get('retry', 0):.1f}% "
            f"loop={loss.get('loop', 0):.1f}%"
        )


def cmd_run(args) -> int:
    sc = _scenario(args)
    protos = _protocols(args, sc)
    if len(protos) != 1:
        raise _Invalid("run takes exactly one --protocol")
    run = simulate(sc, protos[0], trace=args.trace)
    _print_summary(run)
    if args.out:
        for path in experiments.emit({run.protocol: run}, args.out, args.trace):
            log.info("wrote %s", path)
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _scenario(args)
    protos = _protocols(args, sc)
    comp = experiments.run_compare(sc, protos, trace=args.trace)
    for run in comp.runs.values():
        _print_summary(run)
    rows = comp.rows()
    for row in rows:
        d = row["delay_differential_ms"]
        r = row["throughput_ratio"]
        print(
            f"{row['protocol']} vs {row['baseline']}: delay differential "
            f"{'n/a' if d is None else f'{d:+.2f} ms'}, throughput ratio {'n/a' if r is None else f'{r:.3f}'}"
        )
    if args.out:
        experiments.emit(comp.runs, args.out, args.trace, {"comparison": rows})
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    protos = [p.label for p in _protocols(args, sc)]
    res = experiments.sweep(sc, args.configs, protos, sc.params.seed, jobs=args.jobs)
    print(f"{len(res.comparisons)} configurations kept, {len(res.excluded)} excluded")
    baseline = protos[0]
    tables = {}
    for label in protos[1:]:
        for load in ("low", "high"):
            diffs = res.differentials(label, load)
            ratios = res.ratios(label, load)
            if diffs:
                tables[f"delay_diff_{label}_{load}"] = diffs
                print(f"  {label} {load} load: median delay differential {metrics.quantile(metrics.cdf(diffs), 0.5):+.2f} ms over {len(diffs)}")
            if ratios:
                tables[f"throughput_ratio_{label}_{load}"] = ratios
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, values in tables.items():
            experiments.write_cdf(values, os.path.join(args.out, f"{name}.csv"))
        rows = [row for c in res.comparisons for row in c.rows()]
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump({"baseline": baseline, "rows": rows, "excluded": res.excluded}, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def cmd_alpha(args) -> int:
    sc = _scenario(args)
    if sc.alpha is None:
        raise _Invalid(f"scenario {sc.name} defines no alpha paths")
    alphas = args.alphas or [0.0, 0.25, 0.5, 0.75, 1.0]
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise _Invalid(f"alpha {a} outside [0, 1]")
    try:
        rows = experiments.alpha_sweep(sc, alphas)
    except ValueError as exc:
        raise _Invalid(str(exc)) from None
    for row in rows:
        d = "n/a" if row.mean_delay_ms is None else f"{row.mean_delay_ms:.2f} ms"
        print(f"  {row.label:>10}  delay={d}  delivered={row.delivered}/{row.injected}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "alpha_sweep.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("label,alpha,mean_delay_ms,delivered,injected\n")
            for row in rows:
                fh.write(
                    f"{row.label},{'' if row.alpha is None else row.alpha},"
                    f"{'' if row.mean_delay_ms is None else row.mean_delay_ms},{row.delivered},{row.injected}\n"
                )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshroute", description="Wireless mesh routing simulator.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file or built-in name")
        p.add_argument("--protocol", action="append", help="SRCR, BP, EBP, CDP, CDP-nosh or ALPHA (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float, help="simulated seconds")
        p.add_argument("--out", help="output directory")
        p.add_argument("--trace", action="store_true", help="write per-packet traces")
        p.add_argument("--alpha", type=float, help="path-1 probability for ALPHA")
        p.add_argument("--background", type=float, help="background packets/s per node")

    p = sub.add_parser("run", help="one protocol, one seed")
    common(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="several protocols on a shared seed")
    common(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("sweep", help="random flow configurations on the scenario topology")
    common(p)
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("alpha", help="delay versus alpha for the scenario's two paths")
    common(p)
    p.add_argument("--alphas", type=float, nargs="+")
    p.set_defaults(func=cmd_alpha)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ScenarioError, _Invalid) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
