"""
Definitional oracles.

Direct, loop-level implementations of the formulas the corpus diagrams
encode. They share no code with the evaluator so tests can compare the two.
"""

import itertools
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ConvArithmeticError, EnvMismatch
from ..core.shapes import conv_out_extent


def _per_dim(value, rank: int, what: str) -> Tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * rank
    value = tuple(value)
    if len(value) != rank:
        raise ConvArithmeticError(f"{what} needs {rank} values, got {len(value)}")
    return value


def oracle_conv(v: np.ndarray, w: np.ndarray, stride=1, dilation=1, pad=0) -> np.ndarray:
    """y[i] = Σ_j v_padded[s·i + d·j] · w[j], nested loops over the zero-padded input."""
    v, w = np.asarray(v, dtype=np.float64), np.asarray(w, dtype=np.float64)
    if v.ndim != w.ndim:
        raise ConvArithmeticError(f"input rank {v.ndim} does not match kernel rank {w.ndim}")
    r = v.ndim
    s, d, p = _per_dim(stride, r, "stride"), _per_dim(dilation, r, "dilation"), _per_dim(pad, r, "pad")
    ys = tuple(conv_out_extent(v.shape[a], w.shape[a], s[a], d[a], p[a]) for a in range(r))
    padded = np.pad(v, [(q, q) for q in p])
    out = np.zeros(ys)
    for i in itertools.product(*(range(n) for n in ys)):
        total = 0.0
        for j in itertools.product(*(range(n) for n in w.shape)):
            src = tuple(s[a] * i[a] + d[a] * j[a] for a in range(r))
            total += padded[src] * w[j]
        out[i] = total
    return out


def oracle_conv_transposed(g: np.ndarray, w: np.ndarray, extent: Sequence[int], stride=1,
                           dilation=1, pad=0) -> np.ndarray:
    """x[l] = Σ g[i]·w[j] over every (i, j) with s·i + d·j - pad = l."""
    g, w = np.asarray(g, dtype=np.float64), np.asarray(w, dtype=np.float64)
    r = w.ndim
    s, d, p = _per_dim(stride, r, "stride"), _per_dim(dilation, r, "dilation"), _per_dim(pad, r, "pad")
    extent = tuple(extent)
    ys = tuple(conv_out_extent(extent[a], w.shape[a], s[a], d[a], p[a]) for a in range(r))
    if g.shape != ys:
        raise ConvArithmeticError(f"transposed conv input has shape {g.shape}, expected {ys}")
    out = np.zeros(extent)
    for i in itertools.product(*(range(n) for n in ys)):
        for j in itertools.product(*(range(n) for n in w.shape)):
            dst = tuple(s[a] * i[a] + d[a] * j[a] - p[a] for a in range(r))
            if all(0 <= dst[a] < extent[a] for a in range(r)):
                out[dst] += g[i] * w[j]
    return out


def oracle_pool(v: np.ndarray, kernel, stride=None, mode: str = "max") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    r = v.ndim
    k = _per_dim(kernel, r, "kernel")
    s = _per_dim(stride if stride is not None else kernel, r, "stride")
    ys = tuple(conv_out_extent(v.shape[a], k[a], s[a], 1, 0) for a in range(r))
    out = np.zeros(ys)
    for i in itertools.product(*(range(n) for n in ys)):
        window = v[tuple(slice(s[a] * i[a], s[a] * i[a] + k[a]) for a in range(r))]
        out[i] = window.max() if mode == "max" else window.mean()
    return out


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    out = np.zeros_like(scores)
    for row in range(scores.shape[0]):
        e = np.exp(scores[row] - scores[row].max())
        out[row] = e / e.sum()
    return out


def oracle_attention(Q: np.ndarray, K: np.ndarray, V: np.ndarray,
                     mask: Optional[np.ndarray] = None) -> np.ndarray:
    """SoftMax(Q Kᵀ / √d_k + mask) V with Q [y, k], K [x, k], V [x, v]."""
    Q, K, V = (np.asarray(t, dtype=np.float64) for t in (Q, K, V))
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise EnvMismatch(f"attention shapes Q{Q.shape} K{K.shape} V{V.shape} do not agree")
    scores = (Q @ K.T) / math.sqrt(Q.shape[1])
    if mask is not None:
        scores = scores + np.asarray(mask, dtype=np.float64)
    return _softmax_rows(scores) @ V


def oracle_multihead(Q: np.ndarray, K: np.ndarray, V: np.ndarray, WQ: np.ndarray, WK: np.ndarray,
                     WV: np.ndarray, WO: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """Concat(head_1..head_h) W^O (+ bias), head_i = Attention(Q WQ_i, K WK_i, V WV_i).

    Projections are stored per head as [c, h, k]; W^O as [h·k, c'].
    """
    WQ, WK, WV = (np.asarray(t, dtype=np.float64) for t in (WQ, WK, WV))
    h = WQ.shape[1]
    if WK.shape[1] != h or WV.shape[1] != h:
        raise EnvMismatch("projection weights disagree on the number of heads")
    heads = [oracle_attention(Q @ WQ[:, i, :], K @ WK[:, i, :], V @ WV[:, i, :]) for i in range(h)]
    out = np.concatenate(heads, axis=1) @ np.asarray(WO, dtype=np.float64)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out
