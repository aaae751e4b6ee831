"""
Symbolic contraction algebra.

A ``Term`` is a pending multilinear expression: a list of operands (value
registers with one index per axis) and an ordered output index list. The
plumbing kernels (transpose, diag, cup, sum, product) act on terms without
touching data; ``index_string`` renders a term in einsum notation with
letters assigned by first use.
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple

from .errors import NotMultilinear
from .ir import Axis, TensorShape

EINSUM_SYMBOLS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"

Operand = Tuple[str, Tuple[int, ...]]


class IndexSource:
    """Fresh index ids; one source per plan so ids never collide"""

    def __init__(self):
        self._ids: Iterator[int] = itertools.count()

    def fresh(self, count: int) -> Tuple[int, ...]:
        return tuple(next(self._ids) for _ in range(count))


@dataclass(frozen=True)
class Term:
    operands: Tuple[Operand, ...]
    out: Tuple[int, ...]
    axes: Tuple[Axis, ...]

    @property
    def shape(self) -> TensorShape:
        return TensorShape(self.axes)

    @property
    def trivial(self) -> bool:
        """A single register read back unchanged."""
        return len(self.operands) == 1 and self.operands[0][1] == self.out

    def rename(self, old: int, new: int) -> "Term":
        def swap(ids):
            return tuple(new if i == old else i for i in ids)
        return Term(tuple((reg, swap(ids)) for reg, ids in self.operands), swap(self.out), self.axes)

    def relabel(self, source: IndexSource) -> "Term":
        """Same expression over fresh index ids."""
        used = sorted({i for _, ids in self.operands for i in ids} | set(self.out))
        mapping = dict(zip(used, source.fresh(len(used))))
        return Term(tuple((reg, tuple(mapping[i] for i in ids)) for reg, ids in self.operands),
                    tuple(mapping[i] for i in self.out), self.axes)


def leaf(register: str, shape: TensorShape, source: IndexSource) -> Term:
    ids = source.fresh(shape.rank)
    return Term(((register, ids),), ids, shape.axes)


def transpose(term: Term, perm: Sequence[int], lead: int = 0) -> Term:
    order = tuple(range(lead)) + tuple(lead + p for p in perm)
    return Term(term.operands, tuple(term.out[k] for k in order), tuple(term.axes[k] for k in order))


def diag(term: Term, p: int, q: int) -> Term:
    """Identify axes p and q; the merged axis stays at p."""
    merged = term.rename(term.out[q], term.out[p])
    keep = [k for k in range(len(term.out)) if k != q]
    return Term(merged.operands, tuple(merged.out[k] for k in keep), tuple(term.axes[k] for k in keep))


def cup(term: Term, p: int, q: int) -> Term:
    """Identify axes p and q and sum the shared index away."""
    merged = term.rename(term.out[q], term.out[p])
    keep = [k for k in range(len(term.out)) if k not in (p, q)]
    return Term(merged.operands, tuple(merged.out[k] for k in keep), tuple(term.axes[k] for k in keep))


def sum_axis(term: Term, axis: int) -> Term:
    keep = [k for k in range(len(term.out)) if k != axis]
    return Term(term.operands, tuple(term.out[k] for k in keep), tuple(term.axes[k] for k in keep))


def product(first: Term, second: Term, out: Sequence[int], axes: Sequence[Axis]) -> Term:
    """Multiply two terms. Indices the terms share are zipped (one loop over
    both); ``out`` lists the surviving indices in result order."""
    present = {i for _, ids in first.operands + second.operands for i in ids}
    missing = [i for i in out if i not in present]
    if missing:
        raise NotMultilinear(f"output index {missing[0]} is not read by any operand")
    return Term(first.operands + second.operands, tuple(out), tuple(axes))


def index_string(term: Term) -> str:
    letters: Dict[int, str] = {}

    def letter(i: int) -> str:
        if i not in letters:
            if len(letters) == len(EINSUM_SYMBOLS):
                raise NotMultilinear(f"contraction needs more than {len(EINSUM_SYMBOLS)} indices")
            letters[i] = EINSUM_SYMBOLS[len(letters)]
        return letters[i]

    inputs = ",".join("".join(letter(i) for i in ids) for _, ids in term.operands)
    return inputs + "->" + "".join(letter(i) for i in term.out)


def registers(term: Term) -> List[str]:
    return [reg for reg, _ in term.operands]
