"""Linear stochastic subsystems with internal/external I/O and their interconnection.

A subsystem evolves as ``x(k+1) = A x(k) + B nu(k) + D omega(k) + F noise(k)``
with external output ``y_ext = C_ext x`` and one internal output block
``C_int[j] x`` per peer ``j`` it feeds.  An interconnection matches each
internal input slice to a peer's internal output block and eliminates the
internal signals, leaving a closed monolithic system driven only by external
inputs and noise.

Subsystem ids double as block positions: the i-th entry of a subsystem list
must carry ``id == i``, and topology edges and ``C_int`` keys refer to those
indices.
"""

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import DanglingInput, DimensionMismatch

__all__ = [
    "LinearSubsystem",
    "Edge",
    "Topology",
    "InterconnectedSystem",
    "validate_subsystem",
    "assemble_interconnection",
]


def _matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearSubsystem:
    """One agent of the network.

    ``C_int`` maps peer index ``j`` to the output block feeding ``j``'s
    internal input; an absent key means that connecting output is identically
    zero (no edge toward ``j`` is possible).
    """

    id: int
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    F: np.ndarray
    C_ext: np.ndarray
    C_int: Mapping[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("A", "B", "D", "F", "C_ext"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        blocks = {int(j): _matrix(m, f"C_int[{j}]") for j, m in self.C_int.items()}
        object.__setattr__(self, "C_int", MappingProxyType(blocks))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.D.shape[1]

    @property
    def q(self) -> int:
        return self.F.shape[1]

    @property
    def r(self) -> int:
        return self.C_ext.shape[0]

    def output_matrix(self) -> np.ndarray:
        """Full output map: internal and external blocks stacked by ascending peer index.

        The external block sits at the subsystem's own index, mirroring the
        block layout ``[h_0; h_1; ...]`` of the partitioned output.
        """
        blocks = dict(self.C_int)
        blocks[self.id] = self.C_ext
        return np.vstack([blocks[j] for j in sorted(blocks)])


def validate_subsystem(s: LinearSubsystem) -> list[str]:
    """Return dimension-consistency violations (empty list when well formed).

    Diagnostics are returned rather than raised so callers can report every
    problem at once.
    """
    out: list[str] = []
    n = s.A.shape[0]
    if s.A.shape[0] != s.A.shape[1]:
        out.append(f"A not square ({s.A.shape[0]}x{s.A.shape[1]})")
    if s.B.shape[0] != n:
        out.append(f"B rows != state dim ({s.B.shape[0]} != {n})")
    if s.D.shape[0] != n:
        out.append(f"D rows != state dim ({s.D.shape[0]} != {n})")
    if s.F.shape[0] != n:
        out.append(f"F rows != state dim ({s.F.shape[0]} != {n})")
    if s.C_ext.shape[1] != n:
        out.append(f"C_ext cols != state dim ({s.C_ext.shape[1]} != {n})")
    for j, m in s.C_int.items():
        if j == s.id:
            out.append(f"C_int contains self block {j}")
        if m.shape[1] != n:
            out.append(f"C_int[{j}] cols != state dim ({m.shape[1]} != {n})")
    return out


@dataclass(frozen=True)
class Edge:
    """Internal output of ``source`` feeds rows ``start:stop`` of ``target``'s omega."""

    source: int
    target: int
    start: int
    stop: int

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("self-edges are not allowed")
        if self.start < 0 or self.stop <= self.start:
            raise ValueError(f"bad slice [{self.start}, {self.stop})")

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class Topology:
    """Wiring of an interconnection.

    ``unconnected`` lists, per target index, the omega rows that are
    deliberately fed by the constant zero signal.  Rows that are neither
    covered by an edge slice nor declared here make the assembly fail.
    """

    n_subsystems: int
    edges: tuple[Edge, ...] = ()
    unconnected: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        frozen = {int(k): tuple(int(r) for r in v) for k, v in self.unconnected.items()}
        object.__setattr__(self, "unconnected", MappingProxyType(frozen))
        for e in self.edges:
            if not (0 <= e.source < self.n_subsystems and 0 <= e.target < self.n_subsystems):
                raise ValueError(f"edge ({e.source}->{e.target}) out of range")

    @classmethod
    def from_pairs(cls, subsystems: Sequence[LinearSubsystem], pairs) -> "Topology":
        """Build a topology from ``(source, target)`` index pairs.

        Slices are assigned per target in ascending source order starting at
        omega row 0, each with the row count of the source's connecting output
        block; leftover omega rows are declared unconnected.
        """
        n = len(subsystems)
        incoming: dict[int, list[int]] = {i: [] for i in range(n)}
        for src, tgt in pairs:
            src, tgt = int(src), int(tgt)
            if not (0 <= src < n and 0 <= tgt < n):
                raise DimensionMismatch(f"edge ({src}->{tgt}) references unknown subsystem")
            incoming[tgt].append(src)
        edges = []
        unconnected: dict[int, tuple[int, ...]] = {}
        for tgt in range(n):
            cursor = 0
            for src in sorted(incoming[tgt]):
                block = subsystems[src].C_int.get(tgt)
                if block is None:
                    raise DimensionMismatch(
                        f"subsystem {src} has no connecting output toward {tgt}"
                    )
                edges.append(Edge(src, tgt, cursor, cursor + block.shape[0]))
                cursor += block.shape[0]
            p = subsystems[tgt].p
            if cursor > p:
                raise DimensionMismatch(
                    f"incoming slices of subsystem {tgt} need {cursor} rows, D has {p}"
                )
            if cursor < p:
                unconnected[tgt] = tuple(range(cursor, p))
        return cls(n, tuple(edges), unconnected)

    def in_degree(self, target: int) -> int:
        return sum(1 for e in self.edges if e.target == target)


@dataclass(frozen=True, eq=False)
class InterconnectedSystem:
    """Closed monolithic system over the stacked state of its subsystems."""

    A_cl: np.ndarray
    B_cl: np.ndarray
    F_cl: np.ndarray
    C_cl: np.ndarray
    subsystems: tuple[LinearSubsystem, ...]
    topology: Topology

    def __post_init__(self):
        for name in ("A_cl", "B_cl", "F_cl", "C_cl"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.A_cl.shape[0]

    @property
    def state_offsets(self) -> tuple[int, ...]:
        offs, total = [], 0
        for s in self.subsystems:
            offs.append(total)
            total += s.n
        return tuple(offs)

    def step(self, x: np.ndarray, nu: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return self.A_cl @ x + self.B_cl @ nu + self.F_cl @ noise

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.C_cl @ x


def _block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def assemble_interconnection(
    subsystems: Sequence[LinearSubsystem], topology: Topology
) -> InterconnectedSystem:
    """Close the loop ``omega_ij = y_ji`` and return the monolithic system.

    Substituting each internal input by the peer output that feeds it turns
    the coupled recursions into a single linear system over the stacked state;
    stepping the result reproduces stepping the subsystems signal-for-signal.

    Raises
    ------
    DimensionMismatch
        If a subsystem is malformed, an edge slice width disagrees with the
        source block, or slices overlap.
    DanglingInput
        If an omega row is neither covered by an edge nor declared unconnected.
    """
    subsystems = tuple(subsystems)
    if topology.n_subsystems != len(subsystems):
        raise DimensionMismatch(
            f"topology expects {topology.n_subsystems} subsystems, got {len(subsystems)}"
        )
    problems = []
    for i, s in enumerate(subsystems):
        if s.id != i:
            problems.append(f"subsystem at position {i} has id {s.id}")
        problems += [f"subsystem {s.id}: {v}" for v in validate_subsystem(s)]
    if problems:
        raise DimensionMismatch("; ".join(problems))

    offsets = []
    total = 0
    for s in subsystems:
        offsets.append(total)
        total += s.n

    A_cl = _block_diag([s.A for s in subsystems])
    coverage: dict[int, dict[int, Edge]] = {i: {} for i in range(len(subsystems))}
    for e in topology.edges:
        src, tgt = subsystems[e.source], subsystems[e.target]
        block = src.C_int.get(e.target)
        if block is None:
            raise DimensionMismatch(
                f"edge ({e.source}->{e.target}): source has no connecting output block"
            )
        if block.shape[0] != e.width:
            raise DimensionMismatch(
                f"edge ({e.source}->{e.target}): slice width {e.width} != "
                f"output rows {block.shape[0]}"
            )
        if e.stop > tgt.p:
            raise DimensionMismatch(
                f"edge ({e.source}->{e.target}): slice [{e.start},{e.stop}) "
                f"exceeds internal input dim {tgt.p}"
            )
        for row in range(e.start, e.stop):
            if row in coverage[e.target]:
                raise DimensionMismatch(
                    f"omega row {row} of subsystem {e.target} covered by multiple edges"
                )
            coverage[e.target][row] = e
        ri, rj = offsets[e.target], offsets[e.source]
        A_cl[ri : ri + tgt.n, rj : rj + src.n] += tgt.D[:, e.start : e.stop] @ block

    for i, s in enumerate(subsystems):
        declared = set(topology.unconnected.get(i, ()))
        for row in range(s.p):
            if row not in coverage[i] and row not in declared:
                raise DanglingInput(
                    f"omega row {row} of subsystem {i} is neither fed nor declared unconnected"
                )
            if row in coverage[i] and row in declared:
                raise DimensionMismatch(
                    f"omega row {row} of subsystem {i} both fed and declared unconnected"
                )

    return InterconnectedSystem(
        A_cl=A_cl,
        B_cl=_block_diag([s.B for s in subsystems]),
        F_cl=_block_diag([s.F for s in subsystems]),
        C_cl=_block_diag([s.C_ext for s in subsystems]),
        subsystems=subsystems,
        topology=topology,
    )
