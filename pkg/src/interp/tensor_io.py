"""
Tensor text format (.t).

Line 1: rank r. Line 2: r space-separated extents (empty for a scalar).
Remaining whitespace-separated decimal values in row-major order.
Values are written with repr(float) so a write/read cycle is exact.
"""

from typing import Union
import os

import numpy as np

from ..core.errors import TensorFormatError


def format_tensor(tensor: np.ndarray) -> str:
    tensor = np.asarray(tensor, dtype=np.float64)
    values = " ".join(repr(float(v)) for v in tensor.ravel())
    extents = " ".join(str(e) for e in tensor.shape)
    return f"{tensor.ndim}\n{extents}\n{values}\n"


def parse_tensor(text: str, source: str = "<tensor>") -> np.ndarray:
    lines = text.split("\n")
    if len(lines) < 2:
        raise TensorFormatError(f"{source}: expected rank and extent lines")
    try:
        rank = int(lines[0].strip())
        extents = tuple(int(e) for e in lines[1].split())
    except ValueError as exc:
        raise TensorFormatError(f"{source}: bad header ({exc})") from exc
    if rank < 0 or len(extents) != rank:
        raise TensorFormatError(f"{source}: rank {rank} but {len(extents)} extents")
    if any(e < 1 for e in extents):
        raise TensorFormatError(f"{source}: extents must be positive, got {extents}")
    try:
        values = [float(v) for v in " ".join(lines[2:]).split()]
    except ValueError as exc:
        raise TensorFormatError(f"{source}: bad value ({exc})") from exc
    expected = int(np.prod(extents, dtype=np.int64)) if extents else 1
    if len(values) != expected:
        raise TensorFormatError(f"{source}: expected {expected} values, found {len(values)}")
    return np.array(values, dtype=np.float64).reshape(extents)


def read_tensor(path: Union[str, os.PathLike]) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return parse_tensor(f.read(), str(path))


def write_tensor(path: Union[str, os.PathLike], tensor: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_tensor(tensor))
