"""Command-line frontend.

Exit codes: 0 success, 2 usage, 3 unreadable or malformed input,
4 invalid configuration, 5 energy ledger failure, 6 selftest failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import selftest
from .config import ConfigError, build_configs
from .engine import LedgerError, Report, WaveformRecorder, run_comparison, simulate
from .harvester import TraceError, load_trace, synth_trace, write_trace

log = logging.getLogger("reactsim")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_LEDGER = 5
EXIT_SELFTEST = 6


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, metavar="PATH", help="JSON configuration file")
    p.add_argument("--trace", metavar="PATH", help="power trace CSV (overrides the config)")
    p.add_argument("--out", metavar="PATH", help="report destination (default: stdout)")
    p.add_argument("--waveform", metavar="PATH", help="per-step waveform CSV")
    p.add_argument("--decimation", type=int, default=1, metavar="K",
                   help="keep every K-th waveform sample")
    p.add_argument("--dt", type=float, metavar="SECONDS", help="simulation timestep")
    p.add_argument("--seed", type=int, metavar="N", help="seed for synthetic traces")
    p.add_argument("--no-drain", action="store_true",
                   help="stop when the trace ends instead of draining on zero input")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress the text summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reactsim",
                                     description="Energy-buffer simulator for batteryless devices")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one buffer, write a JSON report")
    _common(run)
    cmp_ = sub.add_parser("compare", help="simulate several buffers, write one CSV row each")
    _common(cmp_)
    cmp_.add_argument("--jobs", type=int, default=1, help="worker processes")

    syn = sub.add_parser("synth-trace", help="generate a synthetic power trace CSV")
    syn.add_argument("kind", choices=["constant", "square", "two_phase", "random_walk"])
    syn.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                     help="generator parameter, repeatable")
    syn.add_argument("--seed", type=int, default=0, metavar="N")
    syn.add_argument("--out", required=True, metavar="PATH")

    sub.add_parser("selftest", help="check closed-form reference values")
    return parser


# -- helpers -----------------------------------------------------------------

def _load(args) -> list:
    cfg_path = Path(args.config)
    try:
        raw = json.loads(cfg_path.read_text())
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read config {cfg_path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{cfg_path}: invalid JSON: {exc}") from None
    trace = None
    try:
        if args.trace:
            trace = load_trace(args.trace)
        return build_configs(raw, base=cfg_path.parent, trace=trace, dt=args.dt,
                             seed=args.seed, drain=False if args.no_drain else None)
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read {exc.filename}: {exc.strerror}") from None
    except TraceError as exc:
        raise CliError(EXIT_PARSE, f"trace error: {exc}") from None
    except (ConfigError, ValueError, TypeError) as exc:
        raise CliError(EXIT_VALIDATION, f"invalid configuration: {exc}") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(reports: Sequence[Report]) -> str:
    head = ("buffer", "latency_s", "on_time", "cycles", "delivered_J", "leaked_J",
            "clipped_J", "dissip_J")
    rows = [head]
    for r in reports:
        lat = "never" if r.latency_to_first_on is None else f"{r.latency_to_first_on:.4f}"
        lg = r.ledger
        rows.append((r.name, lat, f"{r.on_time_fraction:.4f}", str(r.power_cycles),
                     f"{lg.delivered_to_load:.6f}", f"{lg.leaked:.6f}", f"{lg.clipped:.6f}",
                     f"{lg.dissipated_switching:.6f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    return "".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) + "\n" for row in rows)


def report_row(report: Report) -> dict:
    """Flatten a report into one comparison-table row."""
    d = report.to_dict()
    row = {k: d[k] for k in ("name", "latency_to_first_on", "on_time_fraction",
                             "mean_power_cycle_length", "power_cycles")}
    row.update(d["counters"])
    row.update({f"ledger_{k}": v for k, v in d["ledger"].items()})
    row["ledger_residual"] = d["ledger_residual"]
    row["drain_truncated"] = d["drain_truncated"]
    return {k: ("" if v is None else repr(v) if isinstance(v, float) else v)
            for k, v in row.items()}


def _waveform_path(base: str, index: int, name: str) -> Path:
    p = Path(base)
    return p.with_name(f"{p.stem}.{index}.{name}{p.suffix or '.csv'}")


# -- subcommands -------------------------------------------------------------

def cmd_run(args) -> int:
    configs = _load(args)
    if len(configs) != 1:
        raise CliError(EXIT_VALIDATION, f"run takes exactly one buffer, got {len(configs)}; "
                                        "use compare")
    rec = WaveformRecorder(args.decimation) if args.waveform else None
    report = simulate(configs[0], rec)
    _emit(report.to_json(), args.out)
    if rec is not None:
        rec.write_csv(args.waveform)
    if args.out and not args.quiet:
        sys.stdout.write(_summary([report]))
    return EXIT_OK


def cmd_compare(args) -> int:
    configs = _load(args)
    if len(configs) < 2:
        raise CliError(EXIT_VALIDATION, "compare requires ≥2 buffers")
    if args.waveform:
        reports = []
        for i, c in enumerate(configs):
            rec = WaveformRecorder(args.decimation)
            reports.append(simulate(c, rec))
            rec.write_csv(_waveform_path(args.waveform, i, reports[-1].name))
    else:
        reports = run_comparison(configs, max_workers=args.jobs)
    rows = [report_row(r) for r in reports]
    fields = list(rows[0])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        if not args.quiet:
            sys.stdout.write(_summary(reports))
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return EXIT_OK


def _parse_params(items: Sequence[str]) -> dict:
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise CliError(EXIT_USAGE, f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise CliError(EXIT_USAGE, f"--param {key}: {value!r} is not a number") from None
    return params


def cmd_synth(args) -> int:
    try:
        trace = synth_trace(args.kind, _parse_params(args.param), args.seed)
    except (KeyError, TypeError) as exc:
        raise CliError(EXIT_VALIDATION, f"{args.kind}: bad or missing parameter {exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"{args.kind}: {exc}") from None
    write_trace(trace, args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if selftest.run(print) else EXIT_SELFTEST


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "synth-trace": cmd_synth,
            "selftest": cmd_selftest}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"reactsim: error: {exc}", file=sys.stderr)
        return exc.code
    except LedgerError as exc:
        print(f"reactsim: ledger failure: {exc}", file=sys.stderr)
        return EXIT_LEDGER
    except OSError as exc:
        print(f"reactsim: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
