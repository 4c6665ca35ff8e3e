"""Batch compiler driver: parse, infer, rewrite, translate, emit.

One compilation per invocation; every stage can be inspected with `--emit`,
and failures surface as structured diagnostics (plain text or JSON lines)
with the stage that produced them.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .codegen import emit
from .dpia import phrase_text, ptype_text
from .errors import CompilerError, InterpreterError
from .interpreter import eval_program, to_plain
from .lowering import TranslationContext, translate_unit
from .parser import parse
from .primitives import default_registry
from .printer import print_expr, print_typed
from .rules import describe_rules, rule_factories
from .strategy import RewriteContext, Failure, parse_strategy
from .typecheck import infer
from .types import type_to_text

STAGES = ("rise", "rise-typed", "rise-lowered", "dpia-fun", "dpia-imp", "code")

SURFACE_NAMES = None  # populated from the registry at build time


@dataclass
class CompileConfig:
    input_path: str
    strategy_path: str | None = None
    target: str = "c"
    emit_stage: str = "code"
    output_path: str | None = None
    run: bool = False
    inputs_path: str | None = None
    nat_text: str = ""
    trace: bool = False
    trace_translation: bool = False
    diag_format: str = "text"


@dataclass
class Diagnostic:
    stage: str
    severity: str
    file: str
    line: int | None
    column: int | None
    code: str
    message: str

    def text(self) -> str:
        pos = f"{self.file}:{self.line}:{self.column}: " if self.line else f"{self.file}: "
        return f"{pos}{self.severity}: [{self.stage}] {self.message}"

    def json_line(self) -> str:
        return json.dumps(
            {
                "stage": self.stage,
                "severity": self.severity,
                "file": self.file,
                "line": self.line,
                "column": self.column,
                "code": self.code,
                "message": self.message,
            },
            sort_keys=True,
        )


@dataclass
class CompileResult:
    output_text: str = ""
    diagnostics: list = field(default_factory=list)
    report: dict = field(default_factory=dict)
    run_output: object = None
    exit_code: int = 0


def _diag_from_error(err: CompilerError, path: str) -> Diagnostic:
    line = col = None
    if isinstance(err.loc, tuple):
        line, col = err.loc
    return Diagnostic(
        stage=err.stage,
        severity="error",
        file=path,
        line=line,
        column=col,
        code=type(err).__name__,
        message=str(err),
    )


def parse_nat_assignment(text: str) -> dict:
    out = {}
    if not text:
        return out
    for piece in text.split(","):
        if not piece.strip():
            continue
        name, _, value = piece.partition("=")
        out[name.strip()] = int(value)
    return out


def compile_config(cfg: CompileConfig) -> CompileResult:
    result = CompileResult()
    registry = default_registry()
    path = cfg.input_path
    try:
        source = Path(path).read_text()
    except OSError as err:
        result.diagnostics.append(
            Diagnostic("driver", "error", path, None, None, "io", str(err))
        )
        result.exit_code = 1
        return result
    try:
        name, parsed = parse(source, registry)
        unit_name = name or Path(path).stem
        if cfg.emit_stage == "rise":
            result.output_text = print_expr(parsed) + "\n"
            return result
        inferred = infer(parsed, registry)
        typed = inferred.expr
        free_sizes = list(inferred.free_sizes)
        if cfg.emit_stage == "rise-typed":
            result.output_text = print_typed(typed) + "\n"
            return result

        rewrite_ctx = RewriteContext(registry=registry)
        rewrite_ctx.free_sizes.extend(free_sizes)
        rewritten = typed
        if cfg.strategy_path:
            strategy_text = Path(cfg.strategy_path).read_text()
            strategy = parse_strategy(
                strategy_text, rule_factories(), surface_of=registry.surface_name
            )
            outcome = strategy(typed, rewrite_ctx)
            if isinstance(outcome, Failure):
                raise CompilerErrorAt("rewrite", f"strategy failed: {outcome.reason}")
            rewritten = outcome.expr
        result.report["rules"] = [
            {"rule": rule, "path": list(at)} for rule, at in rewrite_ctx.trace
        ]
        result.report["assumptions"] = [
            f"{_nat_text(den)} divides {_nat_text(num)}"
            for num, den in rewrite_ctx.assumptions
        ]
        surface = {"reduceSeqIn": "reduceSeq"}
        if cfg.emit_stage == "rise-lowered":
            result.output_text = print_expr(rewritten, surface) + "\n"
            return result

        if cfg.run:
            nat_assignment = parse_nat_assignment(cfg.nat_text)
            inputs = _load_inputs(cfg.inputs_path, rewritten)
            value = eval_program(rewritten, nat_assignment, inputs)
            result.run_output = to_plain(value)
            result.output_text = json.dumps(result.run_output) + "\n"
            return result

        translation_ctx = TranslationContext(
            target=cfg.target, assumptions=tuple(rewrite_ctx.assumptions)
        )
        unit = translate_unit(
            rewritten, unit_name, translation_ctx, free_sizes=tuple(rewrite_ctx.free_sizes)
        )
        if cfg.trace_translation:
            result.report["translation"] = [f"{kind} {tag}" for kind, tag in translation_ctx.trace]
        if cfg.emit_stage == "dpia-fun":
            result.output_text = _unit_header(unit) + phrase_text(unit.functional) + "\n"
            return result
        if cfg.emit_stage == "dpia-imp":
            result.output_text = _unit_header(unit) + phrase_text(unit.body) + "\n"
            return result
        result.output_text = emit(unit, cfg.target)
        return result
    except CompilerError as err:
        result.diagnostics.append(_diag_from_error(err, path))
        result.exit_code = 1
        return result


def _nat_text(n) -> str:
    from . import nat

    return nat.to_text(n)


class CompilerErrorAt(CompilerError):
    def __init__(self, stage, message):
        super().__init__(message)
        self.stage = stage


def _unit_header(unit) -> str:
    params = [f"{unit.output.name}: {ptype_text(unit.output.ptype)}"]
    params += [f"{name}: Nat" for name in unit.nat_params]
    params += [f"{v.name}: {ptype_text(v.ptype)}" for v, _dt in unit.inputs]
    return f"unit {unit.name}({', '.join(params)})\n"


def _load_inputs(inputs_path, program):
    if inputs_path is None:
        raise InterpreterError("--run needs --inputs <file>")
    raw = json.loads(Path(inputs_path).read_text())
    if isinstance(raw, dict):
        from .expr import DepLambda, Lambda

        names = []
        e = program
        while True:
            if isinstance(e, DepLambda):
                e = e.body
            elif isinstance(e, Lambda):
                names.append(e.param.name)
                e = e.body
            else:
                break
        missing = [n for n in names if n not in raw]
        if missing:
            raise InterpreterError(f"missing inputs for {missing}")
        return [raw[n] for n in names]
    if isinstance(raw, list):
        return raw
    raise InterpreterError("inputs file must hold a JSON list or object")


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="risec",
        description="Compile functional data-parallel programs to C, OpenMP, or OpenCL.",
    )
    ap.add_argument("input", nargs="?", help="source file (.rise)")
    ap.add_argument("--strategy", help="rewrite strategy file (.elv)")
    ap.add_argument("--target", choices=("c", "openmp", "opencl"), default="c")
    ap.add_argument("--emit", choices=STAGES, default="code", dest="emit_stage")
    ap.add_argument("-o", "--output", dest="output_path")
    ap.add_argument("--run", action="store_true", help="evaluate instead of emitting")
    ap.add_argument("--inputs", dest="inputs_path", help="JSON inputs for --run")
    ap.add_argument("--nat", dest="nat_text", default="", help="size assignment, e.g. n=4,m=8,s=2")
    ap.add_argument("--trace", action="store_true", help="print applied rules")
    ap.add_argument("--trace-translation", action="store_true")
    ap.add_argument("--list-rules", action="store_true")
    ap.add_argument("--diag-format", choices=("text", "json-lines"), default="text")
    return ap


def main(argv=None) -> int:
    args = build_arg_parser().parse_args(argv)
    if args.list_rules:
        for line in describe_rules():
            print(line)
        return 0
    if not args.input:
        print("error: an input file is required", file=sys.stderr)
        return 2
    cfg = CompileConfig(
        input_path=args.input,
        strategy_path=args.strategy,
        target=args.target,
        emit_stage=args.emit_stage,
        output_path=args.output_path,
        run=args.run,
        inputs_path=args.inputs_path,
        nat_text=args.nat_text,
        trace=args.trace,
        trace_translation=args.trace_translation,
        diag_format=args.diag_format,
    )
    result = compile_config(cfg)
    for diag in result.diagnostics:
        line = diag.json_line() if cfg.diag_format == "json-lines" else diag.text()
        print(line, file=sys.stderr)
    if result.exit_code:
        return result.exit_code
    if cfg.trace and result.report.get("rules"):
        for entry in result.report["rules"]:
            print(f"applied {entry['rule']} at {entry['path']}", file=sys.stderr)
    if cfg.output_path:
        Path(cfg.output_path).write_text(result.output_text)
        report_path = cfg.output_path + ".report.json"
        Path(report_path).write_text(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(result.output_text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
