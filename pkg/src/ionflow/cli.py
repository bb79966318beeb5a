"""Command-line interface.

Subcommands:
  compile     parse + pass pipeline + backend; emit text/guarded/exec forms
  run         compile and execute shots; per-shot CSV export
  experiment  build and run the msd / rus programs; report row as CSV/JSON
  report      merge report CSVs into one summary table (CSV + JSON)
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import textir
from .emulator import NOISELESS, NoiseModel, run_shots
from .experiments import (
    CSV_HEADER,
    MsdConfig,
    RusConfig,
    report_to_json_dict,
    run_msd,
    run_rus,
)
from .passes import BudgetExceeded, FlattenConfig
from .predication import format_guarded
from .qccd import ALWAYS, CONDITIONAL, TrapLayout
from .regalloc import RegisterPressureExceeded
from .textir import ParseError
from .toolchain import DEFAULT_PASSES, DEFAULT_REGISTERS, CompileError, compile_module


def _add_compile_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--registers", type=int, default=DEFAULT_REGISTERS, help="real-time register file size K")
    p.add_argument("--trap", type=Path, default=None, help="trap layout JSON (slots, gate_zones)")
    p.add_argument("--transport-mode", choices=[CONDITIONAL, ALWAYS], default=CONDITIONAL)
    p.add_argument("--passes", default=",".join(DEFAULT_PASSES), help="comma list from: fold,flatten,peephole")
    p.add_argument("--max-inline-depth", type=int, default=64)
    p.add_argument("--max-unroll", type=int, default=1024)


def _add_run_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--noise", type=Path, default=None, help="noise model JSON")
    p.add_argument("--noiseless", action="store_true")


def _load_trap(args) -> TrapLayout | None:
    if args.trap is None:
        return None
    return TrapLayout.from_json(args.trap.read_text())


def _load_noise(args) -> NoiseModel:
    if getattr(args, "noise", None) is not None:
        return NoiseModel.from_json(args.noise.read_text())
    return NOISELESS


def _compile_from_args(args):
    source = sys.stdin.read() if str(args.file) == "-" else Path(args.file).read_text()
    module = textir.parse(source)
    return compile_module(
        module,
        trap=_load_trap(args),
        mode=args.transport_mode,
        registers=args.registers,
        pass_names=tuple(args.passes.split(",")) if args.passes else (),
        flatten_config=FlattenConfig(args.max_inline_depth, args.max_unroll),
    )


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_compile(args) -> int:
    res = _compile_from_args(args)
    if args.emit == "text":
        _write(textir.emit(res.module), args.output)
    elif args.emit == "guarded":
        _write(format_guarded(res.guarded), args.output)
    else:
        _write(res.program.to_json() + "\n", args.output)
    return 0


def cmd_run(args) -> int:
    res = _compile_from_args(args)
    noise = _load_noise(args)
    shots = run_shots(res.program, noise, args.shots, args.seed, args.jobs)
    lines = ["shot,outputs,executed_transport_steps,executed_gates,skipped_blocks"]
    for i, s in enumerate(shots):
        toks = ";".join(str(t) for t in s.outputs)
        lines.append(f"{i},{toks},{s.executed_transport_steps},{s.executed_gates},{s.skipped_blocks}")
    _write("\n".join(lines) + "\n", args.csv)
    return 0


def cmd_experiment(args) -> int:
    noise = _load_noise(args)
    trap = _load_trap(args)
    common = dict(
        shots=args.shots,
        seed=args.seed,
        noise=noise,
        trap=trap,
        mode=args.transport_mode,
        jobs=args.jobs,
        registers=args.registers,
    )
    if args.kind == "msd":
        cfg = MsdConfig(limit=args.limit, basis=args.basis, prep_overrotation=args.overrotation)
        res, _shots, report = run_msd(cfg, **common)
    else:
        cfg = RusConfig(limit=args.limit, basis=args.basis, style=args.style)
        res, _shots, report = run_rus(cfg, **common)
    if args.emit == "exec":
        _write(res.program.to_json() + "\n", args.output)
        return 0
    csv_text = CSV_HEADER + "\n" + report.csv_row() + "\n"
    _write(csv_text, args.csv)
    if args.json is not None:
        args.json.write_text(json.dumps(report_to_json_dict(report), indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    rows: list[str] = []
    for f in args.files:
        lines = [l for l in Path(f).read_text().splitlines() if l.strip()]
        if not lines:
            continue
        if lines[0] != CSV_HEADER:
            print(f"error: {f} is not a report CSV (bad header)", file=sys.stderr)
            return 1
        rows.extend(lines[1:])
    csv_text = CSV_HEADER + "\n" + "\n".join(rows) + ("\n" if rows else "")
    _write(csv_text, args.output)
    if args.json is not None:
        keys = CSV_HEADER.split(",")
        records = []
        for row in rows:
            vals = row.split(",")
            records.append({k: (v if v != "" else None) for k, v in zip(keys, vals)})
        args.json.write_text(json.dumps(records, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ionflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a source file")
    c.add_argument("file", help="source path or - for stdin")
    c.add_argument("--emit", choices=["text", "guarded", "exec"], default="exec")
    c.add_argument("-o", "--output", type=Path, default=None)
    _add_compile_opts(c)
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="compile and run shots")
    r.add_argument("file", help="source path or - for stdin")
    r.add_argument("--csv", type=Path, default=None, help="per-shot CSV output path")
    _add_compile_opts(r)
    _add_run_opts(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="run a built-in experiment")
    e.add_argument("kind", choices=["msd", "rus"])
    e.add_argument("--limit", type=int, required=True)
    e.add_argument("--basis", choices=["X", "Y", "Z"], default="Z")
    e.add_argument("--style", choices=["loop", "recursion"], default="loop")
    e.add_argument("--overrotation", type=float, default=0.0)
    e.add_argument("--emit", choices=["report", "exec"], default="report")
    e.add_argument("--csv", type=Path, default=None)
    e.add_argument("--json", type=Path, default=None)
    e.add_argument("-o", "--output", type=Path, default=None)
    _add_compile_opts(e)
    _add_run_opts(e)
    e.set_defaults(func=cmd_experiment)

    m = sub.add_parser("report", help="merge report CSVs")
    m.add_argument("files", nargs="+")
    m.add_argument("-o", "--output", type=Path, default=None)
    m.add_argument("--json", type=Path, default=None)
    m.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, CompileError, BudgetExceeded, RegisterPressureExceeded, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
