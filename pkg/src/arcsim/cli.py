"""Command-line entry point.

Subcommands: run, compare, sweep, schema, trace. Exit codes: 0 success,
1 usage or configuration error, 2 simulation invariant violation. Every
output file embeds the config fingerprint and tool version; all modules
remain usable as a library without this process boundary.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import wirecodec as wc
from .accel import IllegalTransition
from .config import ConfigError, RunConfig
from .metrics import (TOOL_VERSION, ConservationViolation, MismatchedRuns,
                      compare)
from .simkern import SimulationError
from .sweeps import parse_sweep_spec, run_comparison_profile, run_sweep
from .system import run_pair, run_simulation, trace_to_text
from .workload import PRESETS

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVARIANT = 2

SPEEDUP_PRESETS = ("memc_low", "memc_mid", "memc_high", "post_low",
                   "post_mid", "post_high", "unique_id")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="arcsim",
                description="Near-cache RPC accelerator simulator")
    p.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--preset", default="memc_mid",
                        help=f"workload preset ({', '.join(sorted(PRESETS))})")
        sp.add_argument("--requests", type=int, default=10000)
        sp.add_argument("--seed", type=int, default=1)
        sp.add_argument("--config", help="run configuration file")
        sp.add_argument("--calibration", help="calibration profile file")
        sp.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override any config key")

    sp = sub.add_parser("run", help="single simulation run")
    common(sp)
    sp.add_argument("--mode", choices=("baseline", "arcalis"),
                    default="arcalis")
    sp.add_argument("--out", help="report file (default: stdout)")
    sp.add_argument("--trace-out", help="write the event trace here")

    sp = sub.add_parser("compare", help="baseline vs arcalis on one trace")
    common(sp)
    sp.add_argument("--all-presets", action="store_true",
                    help="run the full speedup preset table")
    sp.add_argument("--out-dir", help="directory for reports and chart data")

    sp = sub.add_parser("sweep", help="run a sweep spec file")
    sp.add_argument("spec", help="sweep spec file")
    sp.add_argument("--out", help="CSV output (default: stdout)")
    sp.add_argument("--calibration")
    sp.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE")

    sp = sub.add_parser("schema", help="print service schemas")
    sp.add_argument("service", nargs="?",
                    help="one of the shipped services (default: all)")

    sp = sub.add_parser("trace", help="run and dump the event trace")
    common(sp)
    sp.add_argument("--mode", choices=("baseline", "arcalis"),
                    default="arcalis")
    sp.add_argument("--out", required=True, help="trace file")

    sp = sub.add_parser("profile", help="throughput comparison profile")
    sp.add_argument("--requests", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--calibration")
    sp.add_argument("--out", help="CSV output (default: stdout)")
    return p


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _build_config(args, mode: str | None = None) -> RunConfig:
    overrides = _parse_overrides(args.overrides)
    overrides.setdefault("run.preset", args.preset)
    overrides.setdefault("run.requests", args.requests)
    overrides.setdefault("run.seed", args.seed)
    if mode is not None:
        overrides["run.mode"] = mode
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}")
    return RunConfig.build(calibration_path=args.calibration,
                           config_path=args.config, overrides=overrides)


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    cfg = _build_config(args, mode=args.mode)
    report, trace = run_simulation(cfg, record_trace=bool(args.trace_out))
    _write(args.out, report.to_text())
    if args.trace_out:
        _write(args.trace_out, trace_to_text(trace))
    return EXIT_OK


def cmd_compare(args) -> int:
    presets = SPEEDUP_PRESETS if args.all_presets else (args.preset,)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    speedup_rows = ["preset,seed,speedup,throughput_ratio,"
                    "instruction_reduction,cycle_reduction"]
    for preset in presets:
        args.preset = preset
        cfg = _build_config(args)
        base, accel = run_pair(cfg)
        cr = compare(base, accel)
        line = (f"{preset},{cr.seed},{cr.speedup:.6f},"
                f"{cr.throughput_ratio:.6f},{cr.instruction_reduction:.6f},"
                f"{cr.cycle_reduction:.6f}")
        speedup_rows.append(line)
        print(f"{preset:10s} speedup {cr.speedup:5.2f}  "
              f"throughput x{cr.throughput_ratio:4.2f}  "
              f"instr -{cr.instruction_reduction:6.1%}  "
              f"cycles -{cr.cycle_reduction:6.1%}")
        if out_dir:
            stem = out_dir / f"{preset}_seed{cr.seed}"
            stem.with_name(stem.name + "_baseline.txt").write_text(
                base.to_text(), encoding="utf-8")
            stem.with_name(stem.name + "_arcalis.txt").write_text(
                accel.to_text(), encoding="utf-8")
            stem.with_name(stem.name + "_compare.txt").write_text(
                cr.to_text(), encoding="utf-8")
    if out_dir:
        (out_dir / "speedup_chart.csv").write_text(
            "\n".join(speedup_rows) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = parse_sweep_spec(Path(args.spec).read_text(encoding="utf-8"))
    base = RunConfig.build(calibration_path=args.calibration,
                           overrides=_parse_overrides(args.overrides))
    _write(args.out, run_sweep(spec, base))
    return EXIT_OK


def cmd_schema(args) -> int:
    services = ([args.service] if args.service
                else list(wc.BUILTIN_SERVICES))
    for service in services:
        try:
            schema = wc.builtin_schema(service)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        print(f"service {schema.service_name}")
        for m in schema.methods:
            print(f"  method {m.method_id} {m.name}")
            for side, fields in (("request", m.request),
                                 ("response", m.response)):
                for f in fields:
                    elem = f" {f.elem_type.name}" if f.elem_type else ""
                    print(f"    {side} {f.field_id} {f.name} "
                          f"{f.wire_type.name}{elem}")
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _build_config(args, mode=args.mode)
    _, trace = run_simulation(cfg, record_trace=True)
    _write(args.out, trace_to_text(trace))
    return EXIT_OK


def cmd_profile(args) -> int:
    base = RunConfig.build(calibration_path=args.calibration)
    rows = run_comparison_profile("dagger_table", base,
                                  requests=args.requests, seed=args.seed)
    lines = ["preset,set_ratio,mrps,completed"]
    for row in rows:
        lines.append(f"{row['preset']},{row['set_ratio']},"
                     f"{row['mrps']:.6f},{row['completed']}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep,
             "schema": cmd_schema, "trace": cmd_trace, "profile": cmd_profile}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConservationViolation, SimulationError, IllegalTransition,
            MismatchedRuns) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
