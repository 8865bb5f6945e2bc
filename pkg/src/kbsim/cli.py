"""Command-line entry points: run, search, sweep, burst-study, validate."""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, KNOB_ORDER, load_config
from .core import SimulationError
from .experiment import (report_to_json, run_burst_study, run_search,
                         run_static, run_sweep)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _write(out_dir: str, name: str, text: str):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _series_csv(rows) -> str:
    lines = ["interval_start_ns,l2_writebacks,llc_writebacks"]
    lines += [f"{t},{l2},{llc}" for t, l2, llc in rows]
    return "\n".join(lines) + "\n"


def _emit_run_outputs(report, system, out_dir):
    _write(out_dir, "report.json", report_to_json(report))
    _write(out_dir, "writebacks.csv", _series_csv(system.mem.series.rows()))
    if system.cfg["out.samples"]:
        import io
        buf = io.StringIO()
        for lg in system.loadgens:
            lg.dump_samples(buf)
            break  # one port's samples; per-port dumps via per-port runs
        _write(out_dir, "samples.csv", buf.getvalue())


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    report, system = run_static(cfg)
    _emit_run_outputs(report, system, args.out)
    drop = report["results"]["latency"][0]["drop_pct"]
    print(f"run complete: tx={report['results']['conservation']['tx']} "
          f"rx={report['results']['conservation']['rx']} drop_pct={drop:.3f}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    cfg["loadgen.mode"] = "search"
    report, system = run_search(cfg)
    _emit_run_outputs(report, system, args.out)
    s = report["results"]["search"]
    print(f"max sustainable bandwidth: {s['max_sustainable_gbps']:.1f} Gbps "
          f"({s['max_sustainable_gbps_per_port']:.1f} per port; {s['diagnostic']})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    nics = tuple(int(x) for x in args.nics.split(","))
    stacks = tuple(args.stacks.split(","))
    knobs = args.knobs.split(",") if args.knobs else None
    results = run_sweep(cfg, args.axis, nics, stacks, knobs, jobs=args.jobs)
    lines = ["axis_point,max_sustainable_gbps"]
    failures = 0
    for label, gbps, report, err in results:
        if err is not None:
            failures += 1
            lines.append(f"{label},error")
            print(f"sweep point {label} failed: {err}", file=sys.stderr)
            continue
        lines.append(f"{label},{gbps:.1f}")
        if args.per_point_reports:
            _write(args.out, f"report_{label}.json", report_to_json(report))
    path = _write(args.out, "sweep.csv", "\n".join(lines) + "\n")
    print(f"wrote {path} ({len(results) - failures}/{len(results)} points ok)")
    return EXIT_OK


def cmd_burst_study(args) -> int:
    cfg = load_config(args.config)
    bursts = [int(b) for b in args.bursts.split(",")]
    results = run_burst_study(cfg, bursts)
    for burst, (report, rows) in results.items():
        _write(args.out, f"writebacks_{burst}.csv", _series_csv(rows))
        _write(args.out, f"report_burst_{burst}.json", report_to_json(report))
        total_llc = report["results"]["writebacks"]["llc_total"]
        rx = report["results"]["conservation"]["rx"]
        print(f"burst {burst}: rx={rx} llc_writebacks={total_llc}")
    return EXIT_OK


def cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbsim",
        description="Desk-scale simulator of kernel-bypass vs. kernel-stack "
                    "networking (NIC descriptor rings, PMD and kernel paths, "
                    "DCA-aware cache model, load generator).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single static-rate run")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("search", help="maximum sustainable bandwidth search")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("sweep", help="scalability / sensitivity sweep")
    p.add_argument("config")
    p.add_argument("--axis", choices=("nics", "knobs"), required=True)
    p.add_argument("--nics", default="1,2,3,4")
    p.add_argument("--stacks", default="pmd,kernel")
    p.add_argument("--knobs", default=",".join(KNOB_ORDER))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--per-point-reports", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("burst-study", help="writeback rate vs. PMD burst size")
    p.add_argument("config")
    p.add_argument("--bursts", default="32,1024")
    p.add_argument("--out", default="out")
    p.set_defaults(fn=cmd_burst_study)

    p = sub.add_parser("validate", help="check a config file and exit")
    p.add_argument("config")
    p.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
