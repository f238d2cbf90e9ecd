"""Command-line pipeline: compile, check, run, gen-iface.

Exit codes: 0 ok, 1 syntax/manifest error, 2 type/protocol/schema error,
3 I/O error, 4 stuck, 5 clash or protocol violation, 6 step limit.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import ifgen, vm, xir
from .diag import ParseError, has_errors
from .interop import (HostFault, ProtocolViolation, SignatureMismatch,
                      UngroundArgument, UnknownClass, build_registry)
from .parser import desugar, parse_program
from .typecheck import check_extern_usage, check_protocol_schema, check_sorts

EXIT_OK = 0
EXIT_SYNTAX = 1
EXIT_TYPE = 2
EXIT_IO = 3
EXIT_STUCK = 4
EXIT_FAULT = 5
EXIT_STEP_LIMIT = 6


def _read_file(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _check_pipeline(path, out=None):
    """Parse + desugar + all static checks.  Returns (program, exit_code);
    program is None on failure.  Diagnostics are printed either way."""
    out = out if out is not None else sys.stdout
    try:
        text = _read_file(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_IO
    try:
        program = parse_program(text, filename=str(path))
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=out)
        return None, EXIT_SYNTAX
    program = desugar(program)
    diags = list(check_sorts(program))
    for decl in program.externs:
        diags.extend(check_protocol_schema(decl))
    diags.extend(check_extern_usage(program))
    for d in diags:
        print(d, file=out)
    if has_errors(diags):
        return None, EXIT_TYPE
    return program, EXIT_OK


def cmd_compile(args) -> int:
    program, code = _check_pipeline(args.input)
    if program is None:
        return code
    try:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(xir.to_xml(program))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_check(args) -> int:
    _, code = _check_pipeline(args.input)
    return code


def cmd_run(args) -> int:
    try:
        text = _read_file(args.input)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        program = xir.from_xml(text)
    except xir.SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TYPE
    try:
        registry = build_registry(args.registry)
        trace = vm.run(program, seed=args.seed, max_steps=args.max_steps,
                       registry=registry)
    except (UnknownClass, SignatureMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TYPE
    if args.trace == "json":
        print(trace.to_json())
    elif trace.events:
        print(trace.lines())
    if trace.status == "terminated":
        return EXIT_OK
    if trace.status == "stuck-with-residuals":
        try:
            report = vm.detect_stuck(trace.machine)
            if report.residuals:
                print(report.lines(), file=sys.stderr)
        except vm.NotStuck:
            print("stuck: pending host return undeliverable", file=sys.stderr)
        return EXIT_STUCK
    if trace.status in ("clash", "violation"):
        return EXIT_FAULT
    return EXIT_STEP_LIMIT


def cmd_geniface(args) -> int:
    try:
        manifest = ifgen.load_manifest(args.input)
        source = ifgen.generate_interface(manifest, args.alias)
    except ifgen.ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SYNTAX
    # append an empty main so the file is a complete, checkable program
    source += "nil\n"
    try:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(source)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _default_seed() -> int:
    try:
        return int(os.environ.get("PIC_SEED", "0"))
    except ValueError:
        return 0


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pichan",
                                 description="pi-calculus toolchain")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile .pi source to .xir.xml")
    p.add_argument("input")
    p.add_argument("-o", dest="output", required=True)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("check", help="run all static checks")
    p.add_argument("input")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("run", help="execute a .xir.xml program")
    p.add_argument("input")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=vm.DEFAULT_MAX_STEPS)
    p.add_argument("--trace", choices=["lines", "json"], default="lines")
    p.add_argument("--registry", default="std")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("gen-iface", help="generate an extern block from a manifest")
    p.add_argument("input")
    p.add_argument("--alias", required=True)
    p.add_argument("-o", dest="output", required=True)
    p.set_defaults(fn=cmd_geniface)
    return ap


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    if getattr(args, "seed", None) is None and args.command == "run":
        args.seed = _default_seed()
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: seed must be non-negative", file=sys.stderr)
        return EXIT_SYNTAX
    if getattr(args, "max_steps", 0) < 0:
        print("error: max-steps must be non-negative", file=sys.stderr)
        return EXIT_SYNTAX
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
