"""
Diagram Intermediate Representation

Immutable, hashable value types for neural circuit diagrams:

- AxisLen / Axis / TensorShape / DataShape describe wire bundles
- Primitive subclasses form the closed kernel set
- Cell = primitive (or nested Diagram) under broadcast scopes
- Diagram = ordered vertical sections of cells tiling the current DataShape

Cells consume a contiguous run of tuple segments. Positions stored inside a
primitive (segment indices, axis indices) are relative to that run and to the
body's own input shapes after broadcast scopes have been stripped.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

from .errors import SegmentOutOfRange, ShapeMismatch, UnboundAxis


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisLen:
    """Axis length: symbolic (named) and/or concrete.

    Symbolic lengths carry the value bound in the compilation environment.
    A symbolic length with ``value=None`` is unbound and fails on use.
    """
    name: Optional[str] = None
    value: Optional[int] = None

    def __post_init__(self):
        if self.name is None and self.value is None:
            raise ValueError("AxisLen needs a name or a value")
        if self.value is not None and self.value < 1:
            raise ShapeMismatch(f"axis {self.name or self.value}", "length >= 1", self.value)

    @property
    def n(self) -> int:
        if self.value is None:
            raise UnboundAxis(self.name or "?")
        return self.value

    @property
    def symbolic(self) -> bool:
        return self.name is not None

    def bind(self, env: Dict[str, int]) -> "AxisLen":
        if self.name is not None and self.name in env:
            return AxisLen(self.name, env[self.name])
        return self

    def __str__(self) -> str:
        return self.name if self.name is not None else str(self.value)


@dataclass(frozen=True)
class Axis:
    """One wire: a length, a width flag (overline) and an optional tandem group"""
    length: AxisLen
    width: bool = False
    tandem: Optional[str] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.length.n

    @property
    def name(self) -> Optional[str]:
        return self.length.name

    def __str__(self) -> str:
        return ("~" if self.width else "") + str(self.length)


def make_axis(spec: Union[str, int], value: Optional[int] = None, width: bool = False) -> Axis:
    """Build an axis from a name (with its bound value) or from a concrete integer."""
    if isinstance(spec, int):
        return Axis(AxisLen(None, spec), width)
    return Axis(AxisLen(spec, value), width)


@dataclass(frozen=True)
class TensorShape:
    """Ordered axes of one tuple segment; the empty shape is a scalar"""
    axes: Tuple[Axis, ...] = ()

    @property
    def rank(self) -> int:
        return len(self.axes)

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def size(self) -> int:
        total = 1
        for a in self.axes:
            total *= a.n
        return total

    def matches(self, other: "TensorShape") -> bool:
        """Axis-length unification: names may differ, lengths and order may not."""
        return self.extents == other.extents

    def prepend(self, axis: Axis) -> "TensorShape":
        return TensorShape((axis,) + self.axes)

    def without(self, *positions: int) -> "TensorShape":
        drop = set(positions)
        return TensorShape(tuple(a for i, a in enumerate(self.axes) if i not in drop))

    def __len__(self) -> int:
        return len(self.axes)

    def __iter__(self) -> Iterator[Axis]:
        return iter(self.axes)

    def __getitem__(self, i):
        return self.axes[i]

    def __str__(self) -> str:
        return "[" + ", ".join(str(a) for a in self.axes) + "]"


def shape_of(*axes: Axis) -> TensorShape:
    return TensorShape(tuple(axes))


@dataclass(frozen=True)
class DataShape:
    """Tuple of tensor shapes; segments are separated by dashed lines in pictures"""
    segments: Tuple[TensorShape, ...] = ()

    @property
    def size(self) -> int:
        return sum(s.size for s in self.segments)

    def matches(self, other: "DataShape") -> bool:
        return len(self) == len(other) and all(
            a.matches(b) for a, b in zip(self.segments, other.segments))

    def __add__(self, other: "DataShape") -> "DataShape":
        return DataShape(self.segments + other.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[TensorShape]:
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    def __str__(self) -> str:
        return " | ".join(str(s) for s in self.segments) if self.segments else "()"


def data_of(*shapes: TensorShape) -> DataShape:
    return DataShape(tuple(shapes))


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Primitive:
    """Base of the closed kernel set"""
    kind = "primitive"

    @property
    def arity(self) -> int:
        return 1


@dataclass(frozen=True)
class Identity(Primitive):
    kind = "identity"


@dataclass(frozen=True)
class Copy(Primitive):
    """Δ(x) = (x, x)"""
    kind = "copy"


@dataclass(frozen=True)
class Delete(Primitive):
    kind = "delete"


@dataclass(frozen=True)
class SegmentSwap(Primitive):
    """Exchange segments i and j of the run; the others keep their place"""
    i: int = 0
    j: int = 1
    kind = "swap"

    @property
    def arity(self) -> int:
        return max(self.i, self.j) + 1


@dataclass(frozen=True)
class AxisTranspose(Primitive):
    """Output axis k is input axis perm[k]"""
    perm: Tuple[int, ...] = ()
    kind = "transpose"


@dataclass(frozen=True)
class Diag(Primitive):
    """Merge equal-length axes p < q into one axis at p"""
    p: int = 0
    q: int = 1
    kind = "diag"


@dataclass(frozen=True)
class View(Primitive):
    """Row-major reshape between shapes of equal element count"""
    source: TensorShape = TensorShape()
    target: TensorShape = TensorShape()
    kind = "view"


@dataclass(frozen=True)
class IndexKet(Primitive):
    """Fix one axis to an index, removing it"""
    axis: int = 0
    index: int = 0
    kind = "index"


@dataclass(frozen=True)
class OuterProduct(Primitive):
    """x_i ⊗ x_j; the combined tensor leads, the rest of the run follows in order"""
    i: int = 0
    j: int = 1
    kind = "outer"

    @property
    def arity(self) -> int:
        return max(self.i, self.j) + 1


@dataclass(frozen=True)
class Cup(Primitive):
    """Contract two equal-length axes p < q"""
    p: int = 0
    q: int = 1
    kind = "cup"


@dataclass(frozen=True)
class Unit(Primitive):
    """x ↦ x ⊗ I_a, appending two axes of the given length"""
    axis: Axis = Axis(AxisLen(None, 1))
    kind = "unit"


# closed builtin set; scale and addc take a numeric argument
ELEMENTWISE_NAMES = frozenset({
    "relu", "gelu", "exp", "neg", "scale", "addc", "recip", "sqrt",
    "drelu", "dgelu", "drecip", "dsqrt",
})
PARAMETRIC_ELEMENTWISE = frozenset({"scale", "addc"})


@dataclass(frozen=True)
class ElementWise(Primitive):
    """Scalar builtin lifted to every element"""
    fn: str = "relu"
    arg: Optional[float] = None
    kind = "ew"

    @property
    def label(self) -> str:
        return self.fn if self.arg is None else f"{self.fn}({self.arg!r})"


@dataclass(frozen=True)
class SoftMax(Primitive):
    """exp(v[i]) / Σ_k exp(v[k]) over a rank-1 segment"""
    kind = "softmax"


@dataclass(frozen=True)
class Add(Primitive):
    """x_i + x_j; the sum leads, the rest of the run follows in order"""
    i: int = 0
    j: int = 1
    kind = "add"

    @property
    def arity(self) -> int:
        return max(self.i, self.j) + 1


@dataclass(frozen=True)
class SumAxis(Primitive):
    axis: int = 0
    kind = "sum"


@dataclass(frozen=True)
class LinearParam(Primitive):
    """Learned linear layer; weight tensor has shape source ++ target.

    With ``transposed`` set the cell is the associated transpose and maps
    target -> source. Bias is only allowed on the forward direction.
    """
    name: str = "W"
    source: TensorShape = TensorShape()
    target: TensorShape = TensorShape()
    bias: bool = False
    transposed: bool = False
    kind = "linear"

    @property
    def weight_shape(self) -> TensorShape:
        return TensorShape(self.source.axes + self.target.axes)


@dataclass(frozen=True)
class ConvTensor(Primitive):
    """Convolution tensor ★ with entry 1 iff l = s·i + d·j - pad.

    Forward: [x_0..x_r-1] -> [y_0..y_r-1, k_0..k_r-1].
    Transposed: [y.., k..] -> [x..]; ``extent`` holds the x extents.
    ``labels`` optionally names the derived axes (y forward, x transposed).
    """
    rank: int = 1
    extent: Tuple[int, ...] = ()
    kernel: Tuple[int, ...] = ()
    stride: Tuple[int, ...] = ()
    dilation: Tuple[int, ...] = ()
    pad: Tuple[int, ...] = ()
    transposed: bool = False
    labels: Tuple[str, ...] = ()
    kind = "conv"


@dataclass(frozen=True)
class Pool(Primitive):
    """max or mean over the whole block tensor of the segment"""
    mode: str = "max"
    kind = "pool"


@dataclass(frozen=True)
class ConstScalar(Primitive):
    value: float = 0.0
    kind = "const"

    @property
    def arity(self) -> int:
        return 0


@dataclass(frozen=True)
class MaxMask(Primitive):
    """One-hot tensor marking the lowest-index maximum"""
    kind = "maxmask"


# ---------------------------------------------------------------------------
# Cells and diagrams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BroadcastScope:
    """Lift a cell over a new leading axis.

    ``targets=None`` is an outer broadcast (every input segment carries the
    axis). Otherwise only the listed run positions carry it and the other
    inputs are shared by all instances. Every output gains the axis.
    """
    axis: Axis
    targets: Optional[Tuple[int, ...]] = None

    @property
    def outer(self) -> bool:
        return self.targets is None

    def carries(self, position: int) -> bool:
        return self.targets is None or position in self.targets


Body = Union[Primitive, "Diagram"]


@dataclass(frozen=True)
class Cell:
    body: Body
    broadcasts: Tuple[BroadcastScope, ...] = ()

    @property
    def arity(self) -> int:
        return body_arity(self.body)


Section = Tuple[Cell, ...]


@dataclass(frozen=True)
class Diagram:
    """A named program: domain -> codomain through vertical sections"""
    name: str
    input_name: str
    domain: DataShape
    codomain: DataShape
    sections: Tuple[Section, ...] = ()
    transpose_of: Optional[Any] = field(default=None, compare=False, hash=False)

    @property
    def arity(self) -> int:
        return len(self.domain)


def body_arity(body: Body) -> int:
    if isinstance(body, Diagram):
        return len(body.domain)
    return body.arity


IDENTITY = Cell(Identity())


def is_identity_cell(cell: Cell) -> bool:
    return isinstance(cell.body, Identity) and all(b.carries(0) for b in cell.broadcasts)


def identity_cells(count: int) -> Tuple[Cell, ...]:
    return tuple(IDENTITY for _ in range(count))


def is_identity_section(section: Section) -> bool:
    return all(is_identity_cell(c) for c in section)


def cell_runs(section: Section) -> List[Tuple[int, Cell]]:
    """Pair each cell with the input position its run starts at."""
    runs, pos = [], 0
    for cell in section:
        runs.append((pos, cell))
        pos += cell.arity
    return runs


def iter_cells(diagram: Diagram, prefix: str = "") -> Iterator[Tuple[str, Cell]]:
    """Yield (address, cell) for every cell, nested diagrams included.

    Addresses are ``section.cell`` with ``/`` separating nesting levels.
    """
    for s, section in enumerate(diagram.sections):
        for c, cell in enumerate(section):
            address = f"{prefix}{s}.{c}"
            yield address, cell
            if isinstance(cell.body, Diagram):
                yield from iter_cells(cell.body, address + "/")


def collect_params(diagram: Diagram) -> Dict[str, LinearParam]:
    """Every learned parameter referenced anywhere in the diagram, by name."""
    found: Dict[str, LinearParam] = {}
    for _, cell in iter_cells(diagram):
        if isinstance(cell.body, LinearParam):
            prior = found.get(cell.body.name)
            if prior is None or (cell.body.bias and not prior.bias):
                found[cell.body.name] = cell.body
    return found


def collect_axis_names(diagram: Diagram) -> Dict[str, int]:
    """Symbolic axis names used by the diagram with their bound values."""
    names: Dict[str, int] = {}

    def visit(obj: Any) -> None:
        if isinstance(obj, AxisLen):
            if obj.name is not None and obj.value is not None:
                names.setdefault(obj.name, obj.value)
        elif isinstance(obj, (tuple, list)):
            for item in obj:
                visit(item)
        elif hasattr(obj, "__dataclass_fields__"):
            for f in obj.__dataclass_fields__:
                if f != "transpose_of":
                    visit(getattr(obj, f))

    visit(diagram)
    return names


def parse_address(address: str) -> List[Tuple[int, int]]:
    """'3.0/1.2' -> [(3, 0), (1, 2)]"""
    path = []
    for part in address.split("/"):
        s, _, c = part.partition(".")
        path.append((int(s), int(c or 0)))
    return path


def cell_at(diagram: Diagram, address: str) -> Cell:
    current: Body = diagram
    cell = None
    for s, c in parse_address(address):
        if not isinstance(current, Diagram) or s >= len(current.sections) or c >= len(current.sections[s]):
            raise SegmentOutOfRange(f"no cell at address {address} in diagram {diagram.name}")
        cell = current.sections[s][c]
        current = cell.body
    return cell
