"""
Interpreter environments: diagram inputs plus learned parameters.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from ..core.errors import EnvMismatch
from ..core.ir import Diagram, LinearParam, collect_params

logger = logging.getLogger(__name__)


def bias_key(name: str) -> str:
    return f"{name}.bias"


class ParamStore:
    """Learned weights by parameter name; biases live under ``NAME.bias``."""

    def __init__(self, tensors: Optional[Dict[str, np.ndarray]] = None):
        self._tensors: Dict[str, np.ndarray] = {}
        for key, value in (tensors or {}).items():
            self[key] = value

    def __setitem__(self, key: str, value) -> None:
        self._tensors[key] = np.asarray(value, dtype=np.float64)

    def __getitem__(self, key: str) -> np.ndarray:
        return self._tensors[key]

    def __contains__(self, key: str) -> bool:
        return key in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._tensors))

    def __len__(self) -> int:
        return len(self._tensors)

    def weight(self, prim: LinearParam) -> np.ndarray:
        if prim.name not in self._tensors:
            raise EnvMismatch(f"parameter '{prim.name}' is not bound")
        w = self._tensors[prim.name]
        expected = prim.weight_shape.extents
        if w.shape != expected:
            raise EnvMismatch(f"parameter '{prim.name}' has shape {w.shape}, expected {expected}")
        return w

    def bias(self, prim: LinearParam) -> np.ndarray:
        key = bias_key(prim.name)
        if key not in self._tensors:
            raise EnvMismatch(f"bias '{key}' is not bound")
        b = self._tensors[key]
        if b.shape != prim.target.extents:
            raise EnvMismatch(f"bias '{key}' has shape {b.shape}, expected {prim.target.extents}")
        return b

    def copy(self) -> "ParamStore":
        return ParamStore(dict(self._tensors))

    def to_dict(self) -> Dict[str, List]:
        return {k: self._tensors[k].tolist() for k in self}


@dataclass
class Env:
    """Inputs per domain segment plus the parameter store"""
    inputs: List[np.ndarray]
    params: ParamStore = field(default_factory=ParamStore)


def check_inputs(diagram: Diagram, inputs: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(inputs) != len(diagram.domain):
        raise EnvMismatch(
            f"{diagram.name} takes {len(diagram.domain)} input segments, got {len(inputs)}")
    arrays = []
    for k, (value, shape) in enumerate(zip(inputs, diagram.domain.segments)):
        array = np.asarray(value, dtype=np.float64)
        if array.shape != shape.extents:
            raise EnvMismatch(f"input segment {k} of {diagram.name} has shape {array.shape}, "
                              f"expected {shape.extents} for {shape}")
        arrays.append(array)
    return arrays


def random_params(diagram: Diagram, rng: np.random.Generator,
                  params: Optional[ParamStore] = None) -> ParamStore:
    """Fill every unbound parameter (and bias) of the diagram with N(0, 1/fan_in) draws."""
    store = params.copy() if params is not None else ParamStore()
    for name, prim in sorted(collect_params(diagram).items()):
        if name not in store:
            fan_in = max(prim.source.size, 1)
            store[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), prim.weight_shape.extents)
        if prim.bias and bias_key(name) not in store:
            store[bias_key(name)] = rng.normal(0.0, 0.1, prim.target.extents)
    return store


def random_inputs(diagram: Diagram, rng: np.random.Generator) -> List[np.ndarray]:
    return [rng.normal(0.0, 1.0, shape.extents) for shape in diagram.domain.segments]


def random_env(diagram: Diagram, seed: int = 0) -> Env:
    rng = np.random.default_rng(seed)
    inputs = random_inputs(diagram, rng)
    return Env(inputs, random_params(diagram, rng))
