"""Command line front end.

Exit status: 0 on success, 1 on a configuration or usage error, 2 when a
simulation diverges or a mission fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .allocation import Allocator
from .core import ConfigError, ControlInput, load_gains, load_params
from .scenario_files import BUILTINS, _builtin, load_scenario
from .scenarios import (
    compare_allocators,
    run_scenario,
    summary_rows,
    sweep_case,
    write_dict_rows,
)

log = logging.getLogger("aircrab")

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2

ALLOCATE_COLUMNS = ("v1", "v2", "v3", "v4", "alpha", "beta", "T_applied",
                    "saturated_tilt", "saturated_yaw", "thrust_floored")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str, n: Optional[int] = None) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def parse_range(spec: str) -> tuple[str, list[float]]:
    """``key=start:stop:step`` (inclusive stop) or ``key=a,b,c``."""
    if "=" not in spec:
        raise ConfigError(f"--vary needs key=values, got {spec!r}")
    key, rng = spec.split("=", 1)
    key = key.strip()
    if ":" in rng:
        parts = _floats(rng.replace(":", ","), 3)
        start, stop, stp = parts
        if stp <= 0 or stop < start:
            raise ConfigError(f"bad range {rng!r}")
        n = int(round((stop - start) / stp)) + 1
        values = [round(start + i * stp, 12) for i in range(n)]
    else:
        values = _floats(rng)
    if not values:
        raise ConfigError("empty value list")
    return key, values


def _scenario(arg: str, params):
    """A scenario file path, or the name of a canned scenario."""
    if not Path(arg).exists() and arg in BUILTINS:
        return _builtin(arg, {}, params)
    return load_scenario(arg, params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_allocate(args) -> int:
    params = load_params(args.params)
    u = ControlInput.from_vector(_floats(args.input, 4))
    alloc = Allocator(params)
    if args.mode == "ground":
        res = alloc.prioritized(u)
    elif args.mode == "aerial":
        res = alloc.tracking(u)
    else:
        res = alloc.baseline(u, args.hover_throttle)
    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.header:
        w.writerow(ALLOCATE_COLUMNS)
    w.writerow([*(repr(float(v)) for v in res.speeds.v), repr(res.alpha), repr(res.beta),
                repr(res.T_applied), int(res.saturated_tilt), int(res.saturated_yaw),
                int(res.thrust_floored)])
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = load_params(args.params)
    gains = load_gains(args.gains)
    sc = _scenario(args.scenario, params)
    res = run_scenario(sc, params, gains)
    text = res.to_csv(args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.figures:
        from .report import run_figure
        run_figure(res, Path(args.figures) / f"{sc.name}.png")
    if res.failure:
        log.error("%s: %s", sc.name, res.failure)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_sweep(args) -> int:
    params = load_params(args.params)
    gains = load_gains(args.gains)
    sc = _scenario(args.scenario, params)
    key, values = parse_range(args.vary)
    cases = [sweep_case(sc, key, v, params) for v in values]   # validates before any run
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(i):
        case_sc, case_params = cases[i]
        return values[i], run_scenario(case_sc, case_params, gains)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, range(len(values))))   # map keeps input order
    else:
        results = [one(i) for i in range(len(values))]
    for val, res in results:
        res.to_csv(out / f"{sc.name}_{key}_{val:g}.csv")
    rows = summary_rows(key, results)
    write_dict_rows(rows, out / "summary.csv")
    if args.figures:
        from .report import sweep_figure
        sweep_figure(rows, key, Path(args.figures) / f"sweep_{key}.png")
    failed = [r for _, r in results if r.failure]
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_compare(args) -> int:
    params = load_params(args.params)
    gains = load_gains(args.gains)
    sc = _scenario(args.scenario, params)
    hover = _floats(args.hover)
    for h in hover:
        if not 0.0 < h < 1.0:
            raise ConfigError(f"hover throttle {h} outside (0, 1)")
    rows = compare_allocators(sc, hover, params, gains)
    text = write_dict_rows(rows, args.out)
    if args.out is None:
        sys.stdout.write(text)
    if args.figures:
        from .report import compare_figure
        compare_figure(rows, Path(args.figures) / "compare.png")
    return EXIT_FAILURE if any(r["failure"] for r in rows) else EXIT_OK


def cmd_mission(args) -> int:
    from .mission import MissionConfig, load_mission_config, mission_pick_place
    params = load_params(args.params)
    gains = load_gains(args.gains)
    cfg = load_mission_config(args.config) if args.config else MissionConfig()
    result = mission_pick_place(cfg, params, gains)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.run.to_csv(out / "telemetry.csv")
    with open(out / "events.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "event", "value"))
        for t, kind, val in result.events:
            w.writerow((repr(float(t)), kind, val))
    write_dict_rows([result.summary()], out / "summary.csv")
    if args.figures:
        from .report import mission_figure
        mission_figure(result, Path(args.figures) / "mission.png")
    if not result.success:
        log.error("mission failed: %s", result.failed_phase or result.constraint_violations
                  or f"placement error {result.placement_error:.4f} m")
        return EXIT_FAILURE
    print(f"mission complete: placement error {100 * result.placement_error:.2f} cm")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aircrab", description="Hybrid aerial-ground manipulator simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, gains=True):
        sp.add_argument("--params", help="robot parameter file ([params] section)")
        if gains:
            sp.add_argument("--gains", help="controller gain file ([gains] section)")

    a = sub.add_parser("allocate", help="allocate one control input to motor speeds")
    a.add_argument("--input", required=True, metavar="T,tx,ty,tz")
    a.add_argument("--mode", choices=("ground", "aerial", "baseline"), default="ground")
    a.add_argument("--hover-throttle", type=float, default=0.2)
    a.add_argument("--header", action="store_true", help="print a header row first")
    common(a, gains=False)
    a.set_defaults(func=cmd_allocate)

    s = sub.add_parser("simulate", help="run one scenario and write telemetry CSV")
    s.add_argument("--scenario", required=True, help=f"scenario file or one of {', '.join(BUILTINS)}")
    s.add_argument("--out", help="telemetry CSV path (default: stdout)")
    s.add_argument("--figures", metavar="DIR", help="also render figures into DIR")
    common(s)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run a scenario over a range of one parameter")
    w.add_argument("--scenario", required=True)
    w.add_argument("--vary", required=True, metavar="KEY=START:STOP:STEP")
    w.add_argument("--out", required=True, metavar="DIR")
    w.add_argument("--jobs", type=int, default=1, help="worker threads")
    w.add_argument("--figures", metavar="DIR")
    common(w)
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="prioritized vs thrust-priority baseline allocation")
    c.add_argument("--scenario", required=True)
    c.add_argument("--hover", required=True, metavar="H1,H2,...")
    c.add_argument("--out", help="CSV path (default: stdout)")
    c.add_argument("--figures", metavar="DIR")
    common(c)
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("mission", help="scripted pick, fly and place mission")
    m.add_argument("--config", help="mission file ([mission] section); defaults built in")
    m.add_argument("--out", required=True, metavar="DIR")
    m.add_argument("--figures", metavar="DIR")
    common(m)
    m.set_defaults(func=cmd_mission)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
