#!/usr/bin/env python3
"""
ncdc - Main Entry Point
Compile, check, run, differentiate, cost, rewrite, plan and render .ncd diagrams
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

# Add project root to path
sys.path.append(str(Path(__file__).parent.parent))

from src.autodiff import (  # noqa: E402
    evaluate_gradient, finite_difference_gradient, jacobian_materialize, relative_error, scalarize,
)
from src.complexity import compare, cost_report  # noqa: E402
from src.config import get_current_config  # noqa: E402
from src.core.errors import DiagramError, EnvMismatch, UndefinedName  # noqa: E402
from src.core.ir import Diagram  # noqa: E402
from src.core.shapes import infer_shapes  # noqa: E402
from src.corpus import load_corpus, verify_corpus, write_golden  # noqa: E402
from src.emit import to_plan, to_svg  # noqa: E402
from src.interp import (  # noqa: E402
    Env, ParamStore, evaluate, format_tensor, random_inputs, random_params, read_tensor, write_tensor,
)
from src.parser import compile_file, format_diagram  # noqa: E402
from src.rewrite import RULES  # noqa: E402

import numpy as np  # noqa: E402

logger = logging.getLogger("ncdc")

COMMANDS = ("check", "run", "grad", "jacobian", "cost", "rewrite", "plan", "render", "corpus")

RED = "\033[31m"
RESET = "\033[0m"


def _split_binding(text: str) -> List[str]:
    name, sep, value = text.partition("=")
    if not sep or not name or not value:
        raise ValueError(f"expected NAME=VALUE, got '{text}'")
    return [name.strip(), value.strip()]


class Invocation(BaseModel):
    """One validated command line"""
    command: str = Field(..., description="Subcommand to run")
    file: Optional[Path] = Field(None, description=".ncd source file")
    diagram: Optional[str] = Field(None, description="Diagram name; the first declared one by default")
    axes: Dict[str, int] = Field(default_factory=dict, description="Axis bindings overriding the file")
    inputs: Dict[str, Path] = Field(default_factory=dict, description="Input segment tensor files")
    params: Dict[str, Path] = Field(default_factory=dict, description="Parameter tensor files")
    output: Optional[Path] = Field(None, description="Output file; stdout when absent")
    seed: Optional[int] = Field(None, description="Seed for unbound inputs and parameters")
    verbose: bool = False
    mode: str = Field("reverse", description="Gradient mode")
    check: bool = Field(False, description="Compare the gradient against finite differences")
    compare: Optional[str] = Field(None, description="Second diagram for cost comparison")
    rule: Optional[str] = Field(None, description="Rewrite rule name")
    at: Optional[str] = Field(None, description="Cell address section.cell[/section.cell...]")
    moves: Optional[str] = Field(None, description="Axis moves for the transpose rule")
    verify: bool = Field(False, description="Run every corpus check")
    manifest: Optional[str] = Field(None, description="Corpus manifest path")
    update_golden: bool = Field(False, description="Rewrite the golden SVG and cost files")

    @field_validator("command")
    @classmethod
    def _known_command(cls, value: str) -> str:
        if value not in COMMANDS:
            raise ValueError(f"unknown subcommand '{value}'")
        return value

    @field_validator("axes", mode="before")
    @classmethod
    def _parse_axes(cls, value):
        if isinstance(value, dict):
            return value
        axes = {}
        for text in value or []:
            name, raw = _split_binding(text)
            try:
                n = int(raw)
            except ValueError:
                raise ValueError(f"axis {name} must be bound to an integer, got '{raw}'")
            if n < 1:
                raise ValueError(f"axis {name} must be bound to a length >= 1, got {n}")
            axes[name] = n
        return axes

    @field_validator("inputs", "params", mode="before")
    @classmethod
    def _parse_files(cls, value):
        if isinstance(value, dict):
            return value
        files = {}
        for text in value or []:
            name, path = _split_binding(text)
            if not Path(path).is_file():
                raise ValueError(f"tensor file '{path}' for {name} does not exist")
            files[name] = Path(path)
        return files

    @field_validator("mode")
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ("reverse", "forward"):
            raise ValueError(f"mode must be reverse or forward, got '{value}'")
        return value

    @model_validator(mode="after")
    def _source_exists(self) -> "Invocation":
        if self.command == "corpus":
            return self
        if self.file is None:
            raise ValueError(f"{self.command} needs a source file")
        if not self.file.is_file():
            raise ValueError(f"source file '{self.file}' does not exist")
        if self.command == "rewrite" and self.rule not in RULES:
            raise ValueError(f"--rule must be one of {', '.join(RULES)}")
        return self


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="Source .ncd file")
    common.add_argument("-d", "--diagram", help="Diagram name (default: first declared)")
    common.add_argument("-a", "--axis", dest="axes", action="append", default=[], metavar="NAME=INT",
                        help="Bind an axis length, overriding the file")
    common.add_argument("-o", "--output", help="Write the result here instead of stdout")
    common.add_argument("--verbose", action="store_true", help="Debug logging on stderr")

    env = argparse.ArgumentParser(add_help=False)
    env.add_argument("-i", "--input", dest="inputs", action="append", default=[], metavar="NAME=PATH",
                     help="Bind an input segment (NAME, NAME.k or k) to a .t file")
    env.add_argument("-p", "--param", dest="params", action="append", default=[], metavar="NAME=PATH",
                     help="Bind a parameter (or NAME.bias) to a .t file")
    env.add_argument("--seed", type=int, help="Seed for unbound inputs and parameters")

    parser = argparse.ArgumentParser(
        prog="ncdc",
        description="ncdc - neural circuit diagram compiler",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python src/main.py check corpus/mlp.ncd
  python src/main.py run corpus/conv1d.ncd -i v=v.t -i v.1=w.t -o out.t
  python src/main.py grad corpus/losses.ncd -d chain_loss --mode forward --check
  python src/main.py cost corpus/losses.ncd -d chain_loss -a a=32 -a b=32
  python src/main.py rewrite corpus/attention.ncd -d scaled_attention --rule normalize
  python src/main.py render corpus/mlp.ncd -o mlp.svg
  python src/main.py corpus --verify
  python src/main.py corpus --update-golden
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", parents=[common], help="Parse, type-check and print boundary shapes")
    sub.add_parser("run", parents=[common, env], help="Evaluate a diagram")

    grad = sub.add_parser("grad", parents=[common, env], help="Gradient of a scalar loss")
    grad.add_argument("--mode", choices=["reverse", "forward"], default="reverse", help="Derivative mode")
    grad.add_argument("--check", action="store_true", help="Compare against central finite differences")

    sub.add_parser("jacobian", parents=[common, env], help="Materialize the Jacobian at a point")

    cost = sub.add_parser("cost", parents=[common], help="Symbolic time and space cost (JSON)")
    cost.add_argument("--compare", metavar="NAME2", help="Second diagram with the same boundary")

    rewrite = sub.add_parser("rewrite", parents=[common], help="Apply one rewrite rule")
    rewrite.add_argument("--rule", required=True, choices=sorted(RULES), help="Rule to apply")
    rewrite.add_argument("--at", help="Cell address, e.g. 2.0 or 3.1/0.0")
    rewrite.add_argument("--moves", help="Transpose axis moves: full, out:i,j, in:i or out:i;in:j")

    sub.add_parser("plan", parents=[common], help="Contraction plan as JSON lines")
    sub.add_parser("render", parents=[common], help="SVG picture of a diagram")

    corpus = sub.add_parser("corpus", help="List (and verify) the corpus")
    corpus.add_argument("--verify", action="store_true", help="check/run/oracle/cost/render every entry")
    corpus.add_argument("--manifest", help="Manifest path (default from config)")
    corpus.add_argument("--seed", type=int, help="Seed for random environments")
    corpus.add_argument("--update-golden", action="store_true", help="Rewrite the golden SVG and cost files")
    corpus.add_argument("-o", "--output", help="Golden directory (default from config)")
    corpus.add_argument("--verbose", action="store_true", help="Debug logging on stderr")
    return parser


def _configure_logging(verbose: bool) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.WARNING)


def _emit(text: str, output: Optional[Path], out) -> None:
    if output is None:
        out.write(text)
    else:
        with open(output, "w", encoding="utf-8") as f:
            f.write(text)


def _select(inv: Invocation) -> Diagram:
    diagrams = compile_file(str(inv.file), inv.axes)
    if not diagrams:
        raise UndefinedName(f"{inv.file} declares no diagrams")
    name = inv.diagram or next(iter(diagrams))
    if name not in diagrams:
        raise UndefinedName(f"no diagram named '{name}' (declared: {', '.join(diagrams)})")
    return diagrams[name]


def _segment_index(key: str, diagram: Diagram) -> int:
    name, _, suffix = key.partition(".")
    if name.isdigit() and not suffix:
        k = int(name)
    elif name == diagram.input_name:
        k = int(suffix) if suffix else 0
    else:
        raise EnvMismatch(f"'{key}' names no input of {diagram.name} (input is '{diagram.input_name}')")
    if k >= len(diagram.domain):
        raise EnvMismatch(f"{diagram.name} has {len(diagram.domain)} input segments, '{key}' asks for {k}")
    return k


def _environment(inv: Invocation, diagram: Diagram) -> Env:
    seed = inv.seed if inv.seed is not None else get_current_config().corpus.seed
    rng = np.random.default_rng(seed)
    inputs = random_inputs(diagram, rng)
    for key, path in sorted(inv.inputs.items()):
        inputs[_segment_index(key, diagram)] = read_tensor(path)
    params = ParamStore({name: read_tensor(path) for name, path in inv.params.items()})
    return Env(inputs, random_params(diagram, rng, params))


def _write_tensors(tensors: Sequence[np.ndarray], inv: Invocation, out) -> None:
    if inv.output is None:
        for k, t in enumerate(tensors):
            if len(tensors) > 1:
                out.write(f"# segment {k}\n")
            out.write(format_tensor(t))
        return
    for k, t in enumerate(tensors):
        path = inv.output if k == 0 else inv.output.with_name(f"{inv.output.stem}.{k}{inv.output.suffix}")
        write_tensor(path, t)


def _loss(diagram: Diagram) -> Diagram:
    scalar = scalarize(diagram)
    if scalar is not diagram:
        logger.info("%s is not a scalar loss; differentiating the sum of its outputs", diagram.name)
    return scalar


def cmd_check(inv: Invocation, out) -> int:
    diagram = _select(inv)
    lines = [f"{diagram.name}: {diagram.domain} -> {diagram.codomain}"]
    lines += [f"{k}: {state}" for k, state in enumerate(infer_shapes(diagram))]
    _emit("\n".join(lines) + "\n", inv.output, out)
    return 0


def cmd_run(inv: Invocation, out) -> int:
    diagram = _select(inv)
    _write_tensors(evaluate(diagram, _environment(inv, diagram)), inv, out)
    return 0


def cmd_grad(inv: Invocation, out) -> int:
    diagram = _select(inv)
    env = _environment(inv, diagram)
    loss = _loss(diagram)
    grads = evaluate_gradient(loss, env, mode=inv.mode)
    _write_tensors(grads, inv, out)
    if inv.check:
        expected = finite_difference_gradient(loss, env)
        error = max((relative_error(g, e) for g, e in zip(grads, expected)), default=0.0)
        out.write(f"# finite-difference relative error: {error:.3e}\n")
    return 0


def cmd_jacobian(inv: Invocation, out) -> int:
    diagram = _select(inv)
    _write_tensors([jacobian_materialize(diagram, _environment(inv, diagram))], inv, out)
    return 0


def cmd_cost(inv: Invocation, out) -> int:
    diagram = _select(inv)
    if inv.compare:
        other = _select(inv.model_copy(update={"diagram": inv.compare}))
        data = compare(diagram, other)
    else:
        data = cost_report(diagram).to_dict()
    _emit(json.dumps(data, indent=2, sort_keys=True) + "\n", inv.output, out)
    return 0


def cmd_rewrite(inv: Invocation, out) -> int:
    diagram = _select(inv)
    result = RULES[inv.rule](diagram, at=inv.at, moves=inv.moves)
    if not result.applied:
        sys.stderr.write(f"{inv.file}: note: rule {inv.rule} did not match; diagram unchanged\n")
    _emit(format_diagram(result.diagram), inv.output, out)
    return 0


def cmd_plan(inv: Invocation, out) -> int:
    _emit(to_plan(_select(inv)).to_jsonl(), inv.output, out)
    return 0


def cmd_render(inv: Invocation, out) -> int:
    _emit(to_svg(_select(inv)), inv.output, out)
    return 0


def cmd_corpus(inv: Invocation, out) -> int:
    if inv.update_golden:
        for path in write_golden(inv.manifest, inv.output):
            out.write(f"{path}\n")
        return 0
    if not inv.verify:
        for entry in load_corpus(inv.manifest):
            out.write(f"{entry.name}\t{entry.file}:{entry.diagram}\t{entry.oracle or '-'}\n")
        return 0
    failed = 0
    for report in verify_corpus(inv.seed, inv.manifest):
        status = "ok" if report.passed else "FAIL"
        out.write(f"{report.name}\t{status}\terror={report.error:.3e}\ttime={report.time_cost}\n")
        failed += not report.passed
    if failed:
        sys.stderr.write(f"ncdc: error[oracle]: {failed} corpus entries exceed their tolerance\n")
        return 1
    return 0


HANDLERS = {
    "check": cmd_check, "run": cmd_run, "grad": cmd_grad, "jacobian": cmd_jacobian, "cost": cmd_cost,
    "rewrite": cmd_rewrite, "plan": cmd_plan, "render": cmd_render, "corpus": cmd_corpus,
}


def diagnostic(source: str, exc: DiagramError, color: bool) -> str:
    """``file:line:col: error[code]: message`` plus one line of detail."""
    where = f"{source}:{exc.span}" if exc.span is not None else source
    label = f"{RED}error{RESET}" if color else "error"
    detail = (type(exc).__doc__ or "").strip().splitlines()
    line = f"{where}: {label}[{exc.code}]: {exc.message}\n"
    return line + (f"  note: {detail[0]}\n" if detail else "")


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    """Run one subcommand; returns the process exit code."""
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        inv = Invocation(**{k: v for k, v in vars(args).items() if v is not None})
    except ValidationError as exc:
        message = exc.errors()[0]["msg"].removeprefix("Value error, ")
        sys.stderr.write(f"ncdc: error[usage]: {message}\n")
        return 1
    _configure_logging(inv.verbose)
    source = str(inv.file) if inv.file is not None else "ncdc"
    try:
        return HANDLERS[inv.command](inv, out)
    except DiagramError as exc:
        sys.stderr.write(diagnostic(source, exc, get_current_config().diagnostics.color))
        return 1
    except Exception as exc:
        logger.debug("internal error", exc_info=True)
        sys.stderr.write(f"{source}: internal error: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == '__main__':
    sys.exit(main())
