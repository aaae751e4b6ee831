"""
Oracle dispatch and whole-corpus verification.

Each oracle takes (entry, diagram, env) and returns the largest deviation
between the interpreter and the definitional formula.
"""

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..autodiff.transforms import evaluate_gradient, finite_difference_gradient, relative_error
from ..complexity.cost import cost_report
from ..config import get_current_config
from ..core.ir import Diagram, Pool, iter_cells
from ..core.shapes import infer_shapes
from ..emit.svg import to_svg
from ..interp.evaluator import evaluate
from ..interp.oracles import (
    oracle_attention, oracle_conv, oracle_conv_transposed, oracle_multihead, oracle_pool,
)
from ..interp.params import Env, ParamStore, bias_key, random_env
from ..parser.lower import compile_file
from .registry import (
    CorpusEntry, compile_diagram, compile_entry, corpus_directory, golden_directory, load_corpus,
)

logger = logging.getLogger(__name__)

Oracle = Callable[[CorpusEntry, Diagram, Env], float]

ORACLES: Dict[str, Oracle] = {}


def oracle(name: str):
    def register(fn: Oracle) -> Oracle:
        ORACLES[name] = fn
        return fn
    return register


def _deviation(found: np.ndarray, expected: np.ndarray) -> float:
    found, expected = np.asarray(found), np.asarray(expected)
    if found.shape != expected.shape:
        return float("inf")
    return float(np.max(np.abs(found - expected))) if found.size else 0.0


def _output(diagram: Diagram, env: Env) -> np.ndarray:
    return evaluate(diagram, env)[0]


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@oracle("mlp")
def _(entry, diagram, env):
    p = env.params
    h = env.inputs[0].reshape(-1)
    for layer in ("W1", "W2"):
        h = _relu(h @ p[layer] + p[bias_key(layer)])
    z = h @ p["W3"] + p[bias_key("W3")]
    e = np.exp(z - z.max())
    return _deviation(_output(diagram, env), e / e.sum())


@oracle("gradient")
def _(entry, diagram, env):
    found = evaluate_gradient(diagram, env, mode="reverse")
    expected = finite_difference_gradient(diagram, env)
    return max((relative_error(f, e) for f, e in zip(found, expected)), default=0.0)


@oracle("attention")
def _(entry, diagram, env):
    return _deviation(_output(diagram, env), oracle_attention(*env.inputs))


@oracle("masked_attention")
def _(entry, diagram, env):
    q, k, v, mask = env.inputs
    return _deviation(_output(diagram, env), oracle_attention(q, k, v, mask))


@oracle("scores")
def _(entry, diagram, env):
    q, k = env.inputs
    expected = np.zeros((q.shape[0], q.shape[2], k.shape[2]))
    for h in range(q.shape[0]):
        expected[h] = q[h].T @ k[h]
    return _deviation(_output(diagram, env), expected)


@oracle("multihead")
def _(entry, diagram, env):
    p = env.params
    bias = p[bias_key("WO")] if bias_key("WO") in p else None
    expected = oracle_multihead(*env.inputs, p["WQ"], p["WK"], p["WV"], p["WO"], bias)
    return _deviation(_output(diagram, env), expected)


def _conv_args(entry: CorpusEntry) -> Dict[str, int]:
    return {k: int(entry.options.get(k, d)) for k, d in (("stride", 1), ("dilation", 1), ("pad", 0))}


@oracle("conv")
def _(entry, diagram, env):
    v, w = env.inputs
    return _deviation(_output(diagram, env), oracle_conv(v, w, **_conv_args(entry)))


@oracle("conv_channels")
def _(entry, diagram, env):
    (v,) = env.inputs
    w = env.params["Wc"]
    args = _conv_args(entry)
    columns = [sum(oracle_conv(v[c], w[c, :, o], **args) for c in range(v.shape[0]))
               for o in range(w.shape[2])]
    return _deviation(_output(diagram, env), np.stack(columns, axis=-1))


@oracle("conv_transposed")
def _(entry, diagram, env):
    g, w = env.inputs
    extent = diagram.codomain.segments[0].extents
    expected = oracle_conv_transposed(g, w, extent, **_conv_args(entry))
    return _deviation(_output(diagram, env), expected)


@oracle("pool")
def _(entry, diagram, env):
    mode = next(cell.body.mode for _, cell in iter_cells(diagram) if isinstance(cell.body, Pool))
    expected = oracle_pool(env.inputs[0], int(entry.options.get("kernel", 2)), mode=mode)
    return _deviation(_output(diagram, env), expected)


@oracle("residual")
def _(entry, diagram, env):
    branch_name = str(entry.options.get("branch", entry.diagram.replace("_block", "_branch")))
    branch = compile_diagram(entry, branch_name)
    expected = env.inputs[0] + evaluate(branch, env.inputs, env.params)[0]
    return _deviation(_output(diagram, env), expected)


@oracle("unet")
def _(entry, diagram, env):
    (x,) = env.inputs
    p = env.params
    wd, wu = p["Wd"], p["Wu"]
    c, n = x.shape
    m = n // 2
    down = np.zeros((m, wd.shape[2]))
    for e in range(wd.shape[2]):
        down[:, e] = sum(oracle_conv(x[ch], wd[ch, :, e], stride=2) for ch in range(c))
    down = _relu(down + p[bias_key("Wd")])
    u = np.tensordot(down, wu, axes=([1], [0]))
    up = np.zeros((c, n))
    for i in range(m):
        for j in range(2):
            up[:, 2 * i + j] += u[i, :, j]
    expected = up.T @ p["Wa"] + x.T @ p["Wb"]
    return _deviation(_output(diagram, env), expected)


@oracle("visual_attention")
def _(entry, diagram, env):
    p = env.params
    c = env.inputs[0].shape[0]
    a, b = env.inputs[0].shape[1:]
    tokens = [img.reshape(c, a * b).T for img in env.inputs]
    weights = [p[name].reshape(c, p[name].shape[3], p[name].shape[4]) for name in ("WQ", "WK", "WV")]
    flat = oracle_multihead(*tokens, *weights, p["WO"])
    expected = flat.reshape(a, b, c).transpose(2, 0, 1)
    return _deviation(_output(diagram, env), expected)


@oracle("flattened_multihead")
def _(entry, diagram, env):
    """Visual attention equals multi-head attention over the flattened pixels."""
    p = env.params
    c, a, b = env.inputs[0].shape
    h, k = p["WQ"].shape[3:]
    pixels = a * b
    flat = compile_file(str(corpus_directory() / "multihead.ncd"),
                        {"y": pixels, "x": pixels, "c": c, "h": h, "k": k, "f": h * k})["multihead"]
    params = ParamStore({name: p[name].reshape(c, h, k) for name in ("WQ", "WK", "WV")})
    params["WO"] = p["WO"]
    params[bias_key("WO")] = np.zeros(c)
    tokens = [img.reshape(c, pixels).T for img in env.inputs]
    expected = evaluate(flat, tokens, params)[0].reshape(a, b, c).transpose(2, 0, 1)
    return _deviation(_output(diagram, env), expected)


@oracle("sq_loss")
def _(entry, diagram, env):
    x, t = env.inputs
    return _deviation(_output(diagram, env), np.sum((x - t) ** 2))


def check_oracle(entry: CorpusEntry, diagram: Optional[Diagram] = None, env: Optional[Env] = None,
                 seed: Optional[int] = None) -> float:
    """Oracle deviation for one entry on a seeded random environment."""
    if entry.oracle is None:
        return 0.0
    if entry.oracle not in ORACLES:
        raise KeyError(f"unknown oracle '{entry.oracle}' for corpus entry {entry.name}")
    diagram = diagram or compile_entry(entry)
    if env is None:
        env = random_env(diagram, seed if seed is not None else get_current_config().corpus.seed)
    return ORACLES[entry.oracle](entry, diagram, env)


@dataclass
class EntryReport:
    name: str
    boundaries: int
    oracle: Optional[str]
    error: float
    tolerance: float
    time_cost: str
    peak_space: str
    svg_bytes: int

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance

    def to_dict(self) -> Dict:
        return dict(asdict(self), passed=self.passed)


def verify_entry(entry: CorpusEntry, seed: Optional[int] = None) -> EntryReport:
    """check, run against the oracle, cost and render one entry."""
    diagram = compile_entry(entry)
    boundaries = infer_shapes(diagram)
    error = check_oracle(entry, diagram, seed=seed)
    report = cost_report(diagram)
    svg = to_svg(diagram)
    result = EntryReport(entry.name, len(boundaries), entry.oracle, error, entry.tolerance,
                         str(report.total_time), str(report.peak_space), len(svg.encode("utf-8")))
    if not result.passed:
        logger.warning("corpus entry %s: oracle error %.3g exceeds %.3g", entry.name, error, entry.tolerance)
    return result


def verify_corpus(seed: Optional[int] = None, manifest: Optional[str] = None) -> List[EntryReport]:
    return [verify_entry(entry, seed) for entry in load_corpus(manifest)]


def golden_artifacts(entry: CorpusEntry) -> List[Tuple[str, str]]:
    """(file name, text) of the rendered SVG and the cost JSON of one entry."""
    diagram = compile_entry(entry)
    cost = json.dumps(cost_report(diagram).to_dict(), indent=2, sort_keys=True) + "\n"
    return [(f"{entry.name}.svg", to_svg(diagram)), (f"{entry.name}.cost.json", cost)]


def write_golden(manifest: Optional[str] = None, directory: Optional[Path] = None,
                 missing_only: bool = False) -> List[Path]:
    """Write the golden files of every entry; returns the paths written."""
    directory = directory or golden_directory()
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for entry in load_corpus(manifest):
        for name, text in golden_artifacts(entry):
            path = directory / name
            if missing_only and path.exists():
                continue
            path.write_text(text, encoding="utf-8")
            written.append(path)
    logger.info("wrote %d golden files to %s", len(written), directory)
    return written
