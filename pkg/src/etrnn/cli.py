"""Command-line front end: ``etrnn <command> ...``.

Exit status: 0 success or accepted, 1 rejected or nothing found, 2 usage,
input or schema error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from etrnn.errors import EtrnnError, InputError, InvariantViolation, SchemaError
from etrnn.evaluate import decode_witness, encode_witness, verify_witness
from etrnn.formula import FormulaSyntaxError, parse_etr_inv
from etrnn.lowering import STAGES, compile_full, decode_map, encode_map
from etrnn.network import decode_instance, emit_dot, encode_instance
from etrnn.scalars import format_rational, parse_rational
from etrnn.solver import SolverConfig, grid_search, local_search
from etrnn.witness import extract_assignment, synthesize_witness

OK, REJECTED, USAGE, INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 as well; keep the message on stderr
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def read_assignment(text: str) -> dict:
    """Assignment file: JSON object name -> "p/q" string, or name -> JSON number (float mode)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("expected an object mapping names to values")
    out = {}
    for name, raw in obj.items():
        if isinstance(raw, str):
            try:
                out[name] = parse_rational(raw)
            except ValueError as exc:
                raise SchemaError(str(exc), f"/{name}") from None
        elif isinstance(raw, (int, float)) and not isinstance(raw, bool):
            out[name] = float(raw)
        else:
            raise SchemaError("expected a 'p/q' string or a number", f"/{name}")
    return out


def encode_assignment(a: dict) -> bytes:
    obj = {k: format_rational(v) if isinstance(v, Fraction) else float(v) for k, v in a.items()}
    return (json.dumps(obj, indent=1) + "\n").encode("utf-8")


def _formula(path: str):
    return parse_etr_inv(_read_text(path))


def cmd_compile(args, out) -> int:
    inst, cmap = compile_full(_formula(args.formula), cost=args.cost, stop_after=args.stop_after)
    _write(args.output, encode_instance(inst))
    if args.map:
        _write(args.map, encode_map(cmap))
    return OK


def cmd_verify(args, out) -> int:
    inst = decode_instance(_read_text(args.instance))
    w = decode_witness(_read_text(args.witness))
    report = verify_witness(inst, w, args.tolerance)
    if args.report == "json":
        out.write(json.dumps(report.to_json()) + "\n")
    else:
        cost = str(report.total_cost) if report.mode == "exact" else repr(float(report.total_cost))
        out.write(f"{'accepted' if report.accepted else 'rejected'} cost {cost}\n")
    return OK if report.accepted else REJECTED


def cmd_synth(args, out) -> int:
    inst, cmap = compile_full(_formula(args.formula), cost=args.cost, stop_after=args.stop_after)
    a = read_assignment(_read_text(args.solution))
    w = synthesize_witness(cmap, a, inst, tolerance=args.tolerance)
    _write(args.output, encode_witness(w))
    return OK


def cmd_extract(args, out) -> int:
    inst = decode_instance(_read_text(args.instance))
    w = decode_witness(_read_text(args.witness))
    cmap = decode_map(_read_text(args.map))
    a = extract_assignment(inst, w, cmap)
    data = encode_assignment(a)
    if args.output:
        _write(args.output, data)
    else:
        out.write(data.decode("utf-8"))
    return OK


def cmd_solve(args, out) -> int:
    inst = decode_instance(_read_text(args.instance))
    if args.grid is not None:
        try:
            grid = [parse_rational(t.strip()) for t in args.grid.split(",") if t.strip()]
        except ValueError as exc:
            raise InputError(f"bad grid: {exc}") from None
        w = grid_search(inst, grid, args.budget)
        found = w is not None
        cost = "0" if found else None
    else:
        cfg = SolverConfig(restarts=args.restarts, iterations=args.iters, step=args.step, seed=args.seed,
                           init_low=args.init_low, init_high=args.init_high)
        res = local_search(inst, cfg)
        w = res.witness
        found = w is not None and res.cost < cfg.tolerance
        cost = None if w is None else repr(res.cost)
    if w is not None and args.output:
        _write(args.output, encode_witness(w))
    if args.report == "json":
        out.write(json.dumps({"found": found, "cost": cost}) + "\n")
    else:
        out.write(("found" if found else "not found") + ("" if cost is None else f" cost {cost}") + "\n")
    return OK if found else REJECTED


def cmd_dot(args, out) -> int:
    inst = decode_instance(_read_text(args.instance))
    w = decode_witness(_read_text(args.witness)) if args.witness else None
    _write(args.output, emit_dot(inst, w))
    return OK


def instance_stats(inst) -> dict:
    s, h, t = len(inst.inputs), len(inst.hidden), len(inst.outputs)
    d = len(inst.data)
    return {"inputs": s, "hidden": h, "outputs": t, "edges": len(inst.edges), "data": d,
            "matrix_entries": d * (s + t)}


def cmd_stats(args, out) -> int:
    st = instance_stats(decode_instance(_read_text(args.instance)))
    if args.report == "json":
        out.write(json.dumps(st) + "\n")
    else:
        out.write(f"|S| {st['inputs']}  |H| {st['hidden']}  |T| {st['outputs']}  |E| {st['edges']}  "
                  f"|D| {st['data']}  matrix {st['matrix_entries']}\n")
    return OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="etrnn", description="Compile ETR-INV formulas into neural-network training instances.")
    p.add_argument("--report", choices=("text", "json"), default="text",
                   help="output and error format (default: text)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="formula -> training instance")
    c.add_argument("formula")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--map", help="also write the compilation map")
    c.add_argument("--stop-after", choices=STAGES, default="plain")
    c.add_argument("--cost", choices=("mse", "l1"), default="mse")
    c.set_defaults(run=cmd_compile)

    v = sub.add_parser("verify", help="check a witness against an instance")
    v.add_argument("instance")
    v.add_argument("witness")
    v.add_argument("--tolerance", type=float, default=0.0)
    v.set_defaults(run=cmd_verify)

    s = sub.add_parser("synth", help="formula solution -> zero-cost witness")
    s.add_argument("formula")
    s.add_argument("--solution", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--stop-after", choices=STAGES, default="plain")
    s.add_argument("--cost", choices=("mse", "l1"), default="mse")
    s.add_argument("--tolerance", type=float, default=None, help="satisfaction tolerance for float solutions")
    s.set_defaults(run=cmd_synth)

    e = sub.add_parser("extract", help="zero-cost witness -> formula solution")
    e.add_argument("instance")
    e.add_argument("witness")
    e.add_argument("--map", required=True)
    e.add_argument("-o", "--output")
    e.set_defaults(run=cmd_extract)

    so = sub.add_parser("solve", help="search for a witness")
    so.add_argument("instance")
    so.add_argument("--restarts", type=int, default=SolverConfig.restarts)
    so.add_argument("--iters", type=int, default=SolverConfig.iterations)
    so.add_argument("--seed", type=int, default=SolverConfig.seed)
    so.add_argument("--step", type=float, default=SolverConfig.step)
    so.add_argument("--init-low", type=float, default=SolverConfig.init_low)
    so.add_argument("--init-high", type=float, default=SolverConfig.init_high)
    so.add_argument("--grid", help="comma-separated rationals; exact grid search instead of descent")
    so.add_argument("--budget", type=int, default=10**6)
    so.add_argument("-o", "--output")
    so.set_defaults(run=cmd_solve)

    d = sub.add_parser("dot", help="Graphviz rendering")
    d.add_argument("instance")
    d.add_argument("-w", "--witness")
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(run=cmd_dot)

    st = sub.add_parser("stats", help="instance dimensions")
    st.add_argument("instance")
    st.set_defaults(run=cmd_stats)

    for sp in sub.choices.values():
        sp.add_argument("--report", choices=("text", "json"), default=argparse.SUPPRESS)
    return p


def _error(kind: str, exc: BaseException, report: str, err) -> None:
    if report == "json":
        obj = {"error": kind, "message": str(exc)}
        if isinstance(exc, FormulaSyntaxError):
            obj.update(line=exc.line, column=exc.column)
        if isinstance(exc, SchemaError):
            obj["path"] = exc.path
        err.write(json.dumps(obj) + "\n")
    else:
        err.write(f"etrnn: {kind}: {exc}\n")


def run_command(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    report = "json" if "json" in [argv[i + 1] for i, t in enumerate(argv[:-1]) if t == "--report"] else "text"
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _error("UsageError", exc, report, err)
        return USAGE
    try:
        return args.run(args, out)
    except InputError as exc:
        _error(type(exc).__name__, exc, args.report, err)
        return USAGE
    except InvariantViolation as exc:
        _error(type(exc).__name__, exc, args.report, err)
        return INTERNAL
    except EtrnnError as exc:
        _error(type(exc).__name__, exc, args.report, err)
        return REJECTED
    except ValueError as exc:
        _error("UsageError", exc, args.report, err)
        return USAGE


def main() -> None:
    sys.exit(run_command())
