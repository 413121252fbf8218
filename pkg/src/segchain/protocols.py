"""
Lattice-deformation protocols on the segmented chain, and a symbolic verifier.

Geometry
--------
Every physical segment holds ``d`` non-shuttle qubits: a long column has ``d``
data qubits, a short one ``d - 1`` plus a spare.  Within a segment all qubits
are interchangeable, so a segment can play either parity of virtual column.
A configuration places pieces of patches on a virtual checkerboard (data on
``row + col`` even, X checks on odd rows, Z checks on even rows).  The type of
an exposed side follows from its parity: an even column or an odd row gives a
smooth (X-type) side, an odd column or an even row a rough (Z-type) side, so
moving a side by one row or column flips its type.

Verifier
--------
:class:`SymbolicState` tracks the stabiliser group of the whole register and a
representative of every input logical operator.  Measurements use the usual
update rule and raise :class:`LogicalMeasurementError` if a measurement would
reveal tracked logical information.  Signs are not tracked: every byproduct is
a Pauli known from outcomes, so the Clifford map is checked modulo phases.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .pauli import PauliOperator, reduce_vector, row_reduce

__all__ = [
    "ProtocolError", "LogicalMeasurementError", "GeometryError",
    "ChainGeometry", "Piece", "DeformedLattice", "DeformationStep", "Protocol",
    "SymbolicState", "ProtocolReport", "apply_step", "run_protocol",
    "build_protocol", "cnot_protocol", "hadamard_protocol", "state_transfer_protocol",
    "verify_cnot", "verify_hadamard", "verify_state_transfer", "verify_protocol",
    "audit_distance", "lattice_distance", "space_time_blocks", "MUTATIONS",
]


class ProtocolError(RuntimeError):
    pass


class LogicalMeasurementError(ProtocolError):
    """A measurement commutes with the group but not with a tracked logical."""


class GeometryError(ProtocolError):
    pass


# -- geometry -----------------------------------------------------------------

@dataclass(frozen=True)
class ChainGeometry:
    d: int
    n_patches: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("code distance must be >= 2")
        if self.n_patches < 1:
            raise ValueError("need at least one patch")

    @property
    def width(self) -> int:
        return 2 * self.d - 1

    @property
    def n_segments(self) -> int:
        return self.width * self.n_patches

    @property
    def n_qubits(self) -> int:
        return self.n_segments * self.d

    def segment(self, patch: int, j: int) -> int:
        if not 0 <= patch < self.n_patches or not 0 <= j < self.width:
            raise GeometryError(f"no column {j} in patch {patch}")
        return patch * self.width + j

    def is_long(self, seg: int) -> bool:
        return (seg % self.width) % 2 == 0

    def slot(self, seg: int, row: int) -> int:
        """Index within its segment of the qubit drawn at virtual ``row``.

        Long segments: even rows ``0..2d-2`` and odd rows ``1..2d-1`` both map
        onto the ``d`` data qubits in order (row -1 takes the last one).
        Short segments: odd rows ``1..2d-3`` are the data qubits, rows ``-1``
        and ``2d - 1`` the spare; as an even column the spare sits on row 0.
        """
        d = self.d
        top = 2 * d - 1
        if self.is_long(seg):
            if row % 2 == 0 and 0 <= row <= top - 1:
                return row // 2
            if row % 2 == 1 and 1 <= row <= top:
                return (row - 1) // 2
            if row == -1:
                return d - 1
        else:
            if row % 2 == 1 and 1 <= row <= top - 2:
                return (row - 1) // 2
            if row in (-1, top, 0):
                return d - 1
            if row % 2 == 0 and 2 <= row <= top - 1:
                return (row - 2) // 2
        raise GeometryError(f"segment {seg} has no qubit on row {row}")

    def qubit(self, seg: int, row: int) -> int:
        return seg * self.d + self.slot(seg, row)

    def segment_of(self, q: int) -> int:
        return q // self.d

    def layout_qubit(self, layout, q: int) -> int:
        seg, k = divmod(q, self.d)
        col = layout.columns[seg]
        if k < len(col.data_qubits):
            return col.data_qubits[k]
        return col.unused_qubit


@dataclass(frozen=True)
class Piece:
    """Columns ``j_lo..j_hi`` of ``patch`` drawn from virtual column ``x0`` on,
    keeping the data rows in ``[y_lo, y_hi]``."""

    patch: int
    j_lo: int
    j_hi: int
    x0: int
    y_lo: int
    y_hi: int

    @property
    def x_hi(self) -> int:
        return self.x0 + self.j_hi - self.j_lo

    def sides(self) -> dict[str, str]:
        def col(x):
            return "smooth" if x % 2 == 0 else "rough"

        def row(y):
            return "rough" if y % 2 == 0 else "smooth"

        return {"left": col(self.x0), "right": col(self.x_hi),
                "top": row(self.y_lo), "bottom": row(self.y_hi)}


_NB = ((0, -1, "left"), (-1, 0, "up"), (1, 0, "down"), (0, 1, "right"))


@dataclass(frozen=True)
class Check:
    kind: str
    row: int
    col: int  # virtual column
    qubits: tuple[int, ...]
    neighbours: tuple[tuple[str, int], ...]


class DeformedLattice:
    """Checks of one connected lattice built from pieces."""

    def __init__(self, geom: ChainGeometry, pieces: Sequence[Piece], name: str = ""):
        self.geom = geom
        self.pieces = tuple(pieces)
        self.name = name
        grid: dict[tuple[int, int], int] = {}
        colseg: dict[int, int] = {}
        owner: dict[int, int] = {}
        for k, pc in enumerate(self.pieces):
            for j in range(pc.j_lo, pc.j_hi + 1):
                x = pc.x0 + j - pc.j_lo
                seg = geom.segment(pc.patch, j)
                if colseg.setdefault(x, seg) != seg:
                    raise GeometryError(f"virtual column {x} claimed twice")
                for y in range(pc.y_lo, pc.y_hi + 1):
                    if (x + y) % 2 == 0:
                        grid[(y, x)] = geom.qubit(seg, y)
                        owner[grid[(y, x)]] = k
        if len(set(grid.values())) != len(grid):
            raise GeometryError("a qubit sits at two positions")
        xs = sorted(colseg)
        for a, b in zip(xs, xs[1:]):
            if b != a + 1:
                raise GeometryError("virtual columns must be contiguous")
            if abs(colseg[b] - colseg[a]) not in (1, 2):
                raise GeometryError(f"segments {colseg[a]} and {colseg[b]} are not neighbours")
        self.grid = grid
        self.column_segments = colseg
        self._owner = owner
        self.checks = self._checks()

    def _checks(self) -> list[Check]:
        grid = self.grid
        ys = [y for y, _ in grid]
        xs = [x for _, x in grid]
        cands = []
        for y in range(min(ys) - 1, max(ys) + 2):
            for x in range(min(xs) - 1, max(xs) + 2):
                if (x + y) % 2 == 0:
                    continue
                nb = tuple((name, grid[(y + dy, x + dx)]) for dy, dx, name in _NB
                           if (y + dy, x + dx) in grid)
                if len(nb) >= 2:
                    cands.append(Check("X" if y % 2 else "Z", y, x, tuple(q for _, q in nb), nb))
        # weight-2 checks only survive where they fit the bulk (corners); a
        # corner inside one piece wins over one straddling a seam
        out = [c for c in cands if len(c.qubits) >= 3]
        pairs = [c for c in cands if len(c.qubits) == 2]
        pairs.sort(key=lambda c: len({self._owner[q] for q in c.qubits}))
        for c in pairs:
            if all(_overlap(c, o) for o in out if o.kind != c.kind):
                out.append(c)
        for i, a in enumerate(out):
            for b in out[i + 1:]:
                if a.kind != b.kind and not _overlap(a, b):
                    raise GeometryError(f"checks at {(a.row, a.col)} and {(b.row, b.col)} anticommute")
        out.sort(key=lambda c: (c.kind, c.row, c.col))
        return out

    @property
    def qubits(self) -> list[int]:
        return sorted(self.grid.values())

    def stabilizers(self, kind: Optional[str] = None) -> list[PauliOperator]:
        n = self.geom.n_qubits
        return [PauliOperator.from_sparse(n, xs=c.qubits if c.kind == "X" else (),
                                          zs=c.qubits if c.kind == "Z" else ())
                for c in self.checks if kind is None or c.kind == kind]

    def top_row(self) -> list[int]:
        y = min(y for y, _ in self.grid)
        return [q for (r, _), q in sorted(self.grid.items(), key=lambda t: t[0][1]) if r == y]

    def left_column(self) -> list[int]:
        x = min(x for _, x in self.grid)
        return [q for (_, c), q in sorted(self.grid.items()) if c == x]

    def logical_pair(self) -> dict[str, PauliOperator]:
        """X along the top row and Z down the left column (single-patch lattices)."""
        n = self.geom.n_qubits
        return {"X": PauliOperator.from_sparse(n, xs=self.top_row()),
                "Z": PauliOperator.from_sparse(n, zs=self.left_column())}

    def boundary_types(self) -> dict[str, str]:
        """Type of every exposed piece side, keyed ``"<patch>.<side>"``."""
        out = {}
        for k, pc in enumerate(self.pieces):
            sides = pc.sides()
            for side, t in sides.items():
                if side == "left" and any(o.x_hi == pc.x0 - 1 for o in self.pieces):
                    continue
                if side == "right" and any(o.x0 == pc.x_hi + 1 for o in self.pieces):
                    continue
                out[f"{pc.patch}.{side}"] = t
        return out

    def boundary_segments(self) -> int:
        """Number of alternating rough/smooth stretches around the perimeter."""
        bd = [c for c in self.checks if len(c.qubits) < 4]
        if not bd:
            return 0
        cy = np.mean([c.row for c in bd])
        cx = np.mean([c.col for c in bd])
        ring = sorted(bd, key=lambda c: math.atan2(c.row - cy, c.col - cx))
        kinds = [c.kind for c in ring]
        return sum(a != b for a, b in zip(kinds, kinds[1:] + kinds[:1]))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pieces": [pc.__dict__ for pc in self.pieces],
            "boundary": self.boundary_types(),
            "checks": [{"kind": c.kind, "row": c.row, "col": c.col, "qubits": list(c.qubits)}
                       for c in self.checks],
        }


def _overlap(a: Check, b: Check) -> bool:
    """Even overlap, i.e. an X and a Z check commute."""
    return len(set(a.qubits) & set(b.qubits)) % 2 == 0


# -- symbolic engine ------------------------------------------------------------

def _anti(a: int, b: int, n: int) -> int:
    mask = (1 << n) - 1
    return (bin(((a >> n) & (b & mask)) ^ ((a & mask) & (b >> n))).count("1")) & 1


class SymbolicState:
    """Stabiliser group of the full register plus tracked logical representatives.

    Vectors pack ``x << n | z``.  Qubits outside every lattice carry a
    single-qubit stabiliser (initially Z).
    """

    def __init__(self, n: int):
        self.n = n
        self.gens: list[int] = [1 << q for q in range(n)]
        self.reps: dict[str, int] = {}
        self._rref: Optional[list[int]] = None

    @staticmethod
    def vec(p: PauliOperator) -> int:
        return (p.x << p.n) | p.z

    def op(self, v: int) -> PauliOperator:
        return PauliOperator(self.n, v >> self.n, v & ((1 << self.n) - 1))

    @property
    def k(self) -> int:
        return self.n - len(self.gens)

    def _span(self) -> list[int]:
        if self._rref is None:
            self._rref = row_reduce(self.gens)
        return self._rref

    def contains(self, v: int) -> bool:
        return reduce_vector(v, self._span()) == 0

    def set_code(self, stabs: Iterable[PauliOperator], logicals: Mapping[str, PauliOperator]) -> None:
        """Replace the state by a code with free logical qubits (the protocol input)."""
        for name, p in logicals.items():
            self.reps[name] = self.vec(p)
        for s in stabs:
            self.measure(self.vec(s))

    def free(self, qubits: Iterable[int]) -> None:
        """Release tracked degrees of freedom on ``qubits`` for an input code."""
        n = self.n
        drop = 0
        for q in qubits:
            drop |= (1 << q) | (1 << (q + n))
        self.gens = [g for g in self.gens if not g & drop]
        self._rref = None

    def measure(self, v: int) -> str:
        n = self.n
        anti = [i for i, g in enumerate(self.gens) if _anti(g, v, n)]
        if anti:
            i0 = anti[0]
            g0 = self.gens[i0]
            for i in anti[1:]:
                self.gens[i] ^= g0
            for name, r in self.reps.items():
                if _anti(r, v, n):
                    self.reps[name] = r ^ g0
            self.gens[i0] = v
            self._rref = None
            return "random"
        if v in self.gens or self.contains(v):
            return "deterministic"
        hit = [name for name, r in self.reps.items() if _anti(r, v, n)]
        if hit:
            raise LogicalMeasurementError(f"measurement reveals {', '.join(hit)}: {self.op(v).to_sparse()}")
        self.gens.append(v)
        self._rref = None
        return "new"

    def measure_single(self, q: int, basis: str) -> str:
        v = (1 << (q + self.n)) if basis == "X" else (1 << q)
        return self.measure(v)

    def hadamard(self, qubits: Iterable[int]) -> None:
        n = self.n
        m = 0
        for q in qubits:
            m |= 1 << q
        full = (1 << n) - 1

        def h(v):
            x, z = v >> n, v & full
            x2 = (x & ~m) | (z & m)
            z2 = (z & ~m) | (x & m)
            return (x2 << n) | z2

        self.gens = [h(g) for g in self.gens]
        self.reps = {k: h(r) for k, r in self.reps.items()}
        self._rref = None

    def check(self) -> None:
        n = self.n
        for i, a in enumerate(self.gens):
            for b in self.gens[i + 1:]:
                if _anti(a, b, n):
                    raise ProtocolError("stabiliser generators anticommute")
            for name, r in self.reps.items():
                if _anti(a, r, n):
                    raise ProtocolError(f"logical {name} anticommutes with the group")


# -- protocols ------------------------------------------------------------------

@dataclass
class DeformationStep:
    """One change of lattice configuration.

    Qubits entering the configuration are initialised in ``initialized[q]``,
    qubits leaving it are measured in ``measured[q]``; ``teleport`` moves
    column qubits ``src -> dst`` first, ``hadamard`` is a transversal gate.
    """

    name: str
    lattices: Optional[list[DeformedLattice]]
    initialized: dict[int, str] = field(default_factory=dict)
    measured: dict[int, str] = field(default_factory=dict)
    teleport: tuple[tuple[int, int], ...] = ()
    hadamard: tuple[int, ...] = ()
    k_change: int = 0

    def __post_init__(self):
        both = set(self.initialized) & set(self.measured)
        if both:
            raise ProtocolError(f"qubits {sorted(both)} both initialised and measured")
        for basis in list(self.initialized.values()) + list(self.measured.values()):
            if basis not in ("X", "Z"):
                raise ProtocolError(f"unknown basis {basis!r}")

    @property
    def boundary_types(self) -> list[dict[str, str]]:
        return [lat.boundary_types() for lat in self.lattices or []]

    @property
    def active_lattice(self) -> list[int]:
        return sorted(q for lat in self.lattices or [] for q in lat.qubits)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "initialized": {str(q): b for q, b in sorted(self.initialized.items())},
            "measured": {str(q): b for q, b in sorted(self.measured.items())},
            "teleport": [list(p) for p in self.teleport],
            "hadamard": list(self.hadamard),
            "lattices": [lat.to_dict() for lat in self.lattices or []],
        }


@dataclass
class Protocol:
    name: str
    geom: ChainGeometry
    inputs: list[DeformedLattice]
    input_names: list[str]
    steps: list[DeformationStep]
    outputs: list[DeformedLattice]
    output_names: list[str]
    expected: dict[str, tuple[str, ...]]  # input logical -> product of output logicals
    patches_in: tuple[int, ...] = ()
    patches_out: tuple[int, ...] = ()

    @property
    def d(self) -> int:
        return self.geom.d

    @property
    def n_patches(self) -> int:
        return self.geom.n_patches

    def logicals(self, lattices, names) -> dict[str, PauliOperator]:
        out = {}
        for lat, nm in zip(lattices, names):
            for k, p in lat.logical_pair().items():
                out[f"{k}{nm}"] = p
        return out

    def to_layout_lattice(self, layout, lat: DeformedLattice):
        """Map a virtual lattice onto a :class:`~segchain.layout.ChainLayout`."""
        from .layout import Lattice, Site

        if layout.code_distance != self.geom.d:
            raise ValueError("layout distance does not match the protocol")
        g = self.geom
        pos = {q: yx for yx, q in lat.grid.items()}
        sites = []
        for c in lat.checks:
            nb = {name: None for _, _, name in _NB}
            for name, q in c.neighbours:
                nb[name] = g.layout_qubit(layout, q)
            seg = lat.column_segments[c.col]
            segs = {"left": lat.column_segments.get(c.col - 1, seg),
                    "right": lat.column_segments.get(c.col + 1, seg)}
            sites.append(Site(c.kind, c.row, seg, nb, segs))
        data = sorted(g.layout_qubit(layout, q) for q in pos)
        out = Lattice(sites, data)
        if len(lat.pieces) == 1:
            lp = lat.logical_pair()
            out.logicals = {k: frozenset(g.layout_qubit(layout, q) for q in p.support)
                            for k, p in lp.items()}
        return out


def _step(name, prev: Sequence[DeformedLattice], new: Sequence[DeformedLattice],
          init_basis, meas_basis, teleport=(), hadamard=()) -> DeformationStep:
    """Derive the initialised/measured qubit sets from two configurations.

    ``init_basis``/``meas_basis`` map a qubit to "X" or "Z"; they may be a
    constant string or a callable.
    """
    old = {q for lat in prev for q in lat.qubits}
    cur = {q for lat in new for q in lat.qubits}
    moved = {q for pair in teleport for q in pair}

    def pick(rule, q):
        return rule(q) if callable(rule) else rule

    init = {q: pick(init_basis, q) for q in sorted(cur - old - moved)}
    meas = {q: pick(meas_basis, q) for q in sorted(old - cur - moved)}
    return DeformationStep(name, list(new), init, meas, tuple(teleport), tuple(hadamard))


def _std(geom: ChainGeometry, patch: int, name: str = "") -> DeformedLattice:
    d = geom.d
    return DeformedLattice(geom, [Piece(patch, 0, 2 * d - 2, 0, 0, 2 * d - 2)], name)


def cnot_protocol(d: int, mutation: Optional[str] = None) -> Protocol:
    """CNOT from patch C (0) to patch T (4) through ancilla patches A1..A3.

    A1 and A3 sit on odd virtual columns, so the five patches stay side by
    side without skipped segments.

    1. A3 in |+>, top row dropped (smooth), merged with T.
    2. A2 in |0>, merged; bottoms of A2, A3, T grow a row (smooth), fresh
       qubits in |0>.
    3. A1 in |+>, C merged in; the bottom rows are measured in Z (rough).
    4. A1..A3 measured in X.
    """
    g = ChainGeometry(d, 5)
    W = 2 * d - 1
    top = 2 * d - 2
    C, A1, A2, A3, T = range(5)
    m = mutation or ""
    a3_top = 0 if m == "a3_top_rough" else 1
    low = top if m == "keep_bottom_rough" else top + 1
    a2_basis = "X" if m == "a2_plus" else "Z"
    a1_basis = "Z" if m == "a1_zero" else "X"

    def a3(x0, y_hi):
        return [Piece(A3, 0, W - 1, x0, a3_top, y_hi)]

    def a2(y_hi):
        if m == "a2_corner_smooth":
            # top-right corner of A2 dropped: its top row loses a qubit
            return [Piece(A2, 0, W - 2, 0, 0, y_hi), Piece(A2, W - 1, W - 1, W - 1, 2, y_hi)]
        return [Piece(A2, 0, W - 1, 0, 0, y_hi)]

    c_lat = _std(g, C, "C")
    t_lat = _std(g, T, "T")
    s1 = DeformedLattice(g, a3(1, top) + [Piece(T, 0, W - 1, W + 1, 0, top)], "A3+T")
    s2 = DeformedLattice(g, a2(low) + a3(W, low)
                         + [Piece(T, 0, W - 1, 2 * W, 0, low)], "A2+A3+T")
    s3 = DeformedLattice(g, [Piece(C, 0, W - 1, 0, 0, top), Piece(A1, 0, W - 1, W, 0, top),
                             Piece(A2, 0, W - 1, 2 * W, 0, top)] + a3(3 * W, top)
                         + [Piece(T, 0, W - 1, 4 * W, 0, top)], "C+A1+A2+A3+T")
    seg_patch = lambda q: g.segment_of(q) // W  # noqa: E731
    steps = [
        _step("init A3 |+>, merge with T", [c_lat, t_lat], [c_lat, s1], "X", "X"),
        _step("init A2 |0>, smooth bottoms", [c_lat, s1], [c_lat, s2],
              lambda q: a2_basis if seg_patch(q) == A2 else "Z", "X"),
        _step("init A1 |+>, merge C, rough bottoms", [c_lat, s2], [s3], a1_basis, "Z"),
    ]
    if m != "skip_split":
        steps.append(_step("measure A1, A2, A3 in X", [s3], [c_lat, t_lat], "X", "X"))
    return Protocol(
        "cnot", g, [c_lat, t_lat], ["c", "t"], steps, [c_lat, t_lat], ["c", "t"],
        {"Xc": ("Xc", "Xt"), "Zc": ("Zc",), "Xt": ("Xt",), "Zt": ("Zc", "Zt")},
        (C, T), (C, T),
    )


def state_transfer_protocol(d: int, direction: str = "left", mutation: Optional[str] = None) -> Protocol:
    """Move a patch one slot along the chain.

    The destination patch, minus its column next to the source, is prepared
    in |+> and merged; after ``h - 1`` rounds the facing source column is
    teleported into the skipped column, and the rest of the source is
    measured in X.
    """
    g = ChainGeometry(d, 2)
    W = 2 * d - 1
    top = 2 * d - 2
    m = mutation or ""
    src, dst = (1, 0) if direction == "left" else (0, 1)
    s_lat = _std(g, src, f"P{src}")
    d_lat = _std(g, dst, f"P{dst}")
    init = "Z" if m == "init_zero" else "X"
    if direction == "left":
        merged = DeformedLattice(g, [Piece(0, 0, W - 2, 0, 0, top), Piece(1, 0, W - 1, W - 1, 0, top)])
        after = DeformedLattice(g, [Piece(0, 0, W - 1, 0, 0, top), Piece(1, 1, W - 1, W, 0, top)])
        pairs = tuple((g.qubit(g.segment(1, 0), y), g.qubit(g.segment(0, W - 1), y))
                      for y in range(0, top + 1, 2))
    elif direction == "right":
        merged = DeformedLattice(g, [Piece(0, 0, W - 1, 0, 0, top), Piece(1, 1, W - 1, W, 0, top)])
        after = DeformedLattice(g, [Piece(0, 0, W - 2, 0, 0, top), Piece(1, 0, W - 1, W - 1, 0, top)])
        pairs = tuple((g.qubit(g.segment(0, W - 1), y), g.qubit(g.segment(1, 0), y))
                      for y in range(0, top + 1, 2))
    else:
        raise ValueError("direction must be 'left' or 'right'")
    steps = [
        _step("init destination |+>, merge", [s_lat], [merged], init, "X"),
        _step("teleport facing column", [merged], [after], "X", "X", teleport=pairs),
        _step("measure source in X", [after], [d_lat], "X", "Z" if m == "source_z" else "X"),
    ]
    return Protocol(f"state_transfer_{direction}", g, [s_lat], ["1"], steps, [d_lat], ["1"],
                    {"X1": ("X1",), "Z1": ("Z1",)}, (src,), (dst,))


def hadamard_protocol(d: int, mutation: Optional[str] = None) -> Protocol:
    """Logical H moving patch 0 to patch 1.

    1. Patch 1 shifted by one column (odd virtual columns) prepared in |+>
       and merged: a smooth-sided double-width lattice.
    2. Patch 1 drops its top row (smooth) and grows a bottom row and its last
       column (rough right side, fresh qubits in |0>); patch 0 grows a bottom
       row.  The Z logical now runs from patch 0's top to patch 1's right side.
    3. Patch 0 measured in Z, leaving patch 1 with rough left/right sides.
    4. Transversal H turns it into a standard patch.
    """
    g = ChainGeometry(d, 2)
    W = 2 * d - 1
    top = 2 * d - 2
    m = mutation or ""
    p0 = _std(g, 0, "P0")
    p1 = _std(g, 1, "P1")
    m1 = DeformedLattice(g, [Piece(0, 0, W - 1, 0, 0, top), Piece(1, 0, W - 2, W, 0, top)])
    p0_low = top if m == "p0_bottom_rough" else top + 1
    m2 = DeformedLattice(g, [Piece(0, 0, W - 1, 0, 0, p0_low), Piece(1, 0, W - 1, W, 1, top + 1)])
    f = DeformedLattice(g, [Piece(1, 0, W - 1, W, 1, top + 1)])
    steps = [
        _step("init patch 1 |+>, merge", [p0], [m1], "X", "X"),
        _step("move corners", [m1], [m2], "X" if m == "plus_extension" else "Z", "X"),
        _step("measure patch 0 in Z", [m2], [f], "Z", "X" if m == "shrink_x" else "Z"),
        DeformationStep("transversal H", [p1], hadamard=tuple(f.qubits)),
    ]
    return Protocol("hadamard", g, [p0], ["1"], steps, [p1], ["1"],
                    {"X1": ("Z1",), "Z1": ("X1",)}, (0,), (1,))


def build_protocol(name: str, d: int, mutation: Optional[str] = None) -> Protocol:
    if name == "cnot":
        return cnot_protocol(d, mutation)
    if name == "hadamard":
        return hadamard_protocol(d, mutation)
    if name in ("state_transfer", "state_transfer_left"):
        return state_transfer_protocol(d, "left", mutation)
    if name == "state_transfer_right":
        return state_transfer_protocol(d, "right", mutation)
    raise ValueError(f"unknown protocol {name!r}")


# mutations that must be rejected, per protocol
MUTATIONS = {
    "cnot": ("a3_top_rough", "keep_bottom_rough", "a2_plus", "a1_zero", "a2_corner_smooth", "skip_split"),
    "hadamard": ("p0_bottom_rough", "plus_extension", "shrink_x"),
    "state_transfer": ("init_zero", "source_z"),
}


# -- running and checking -----------------------------------------------------

def apply_step(state: SymbolicState, step: DeformationStep, rounds: int = 1) -> None:
    """Apply one deformation step and ``rounds`` rounds of its lattice checks."""
    for q, b in step.measured.items():
        state.measure_single(q, b)
    for q, b in step.initialized.items():
        state.measure_single(q, b)
    n = state.n
    for src, dst in step.teleport:
        state.measure_single(dst, "X")
        state.measure((1 << src) | (1 << dst))
        state.measure_single(src, "X")
    if step.hadamard:
        state.hadamard(step.hadamard)
    if step.lattices is None:
        return
    stabs = [s for lat in step.lattices for kind in ("X", "Z") for s in lat.stabilizers(kind)]
    for _ in range(rounds):
        for s in stabs:
            state.measure((s.x << n) | s.z)


def _express(state: SymbolicState, v: int, basis: Mapping[str, int]) -> Optional[tuple[str, ...]]:
    """Write ``v`` as a product of named operators modulo the group, if possible."""
    names = sorted(basis)
    for r in range(len(names) + 1):
        for combo in itertools.combinations(names, r):
            w = v
            for nm in combo:
                w ^= basis[nm]
            if state.contains(w):
                return combo
    return None


@dataclass
class ProtocolReport:
    protocol: str
    d: int
    passed: bool
    logical_map: dict[str, Optional[list[str]]]
    expected: dict[str, list[str]]
    k_per_step: list[int]
    distances: list[int]
    errors: list[str]
    mutation: Optional[str] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def run_protocol(proto: Protocol, rounds: int = 1) -> tuple[SymbolicState, list[int]]:
    """Prepare the inputs with free logicals and run every step."""
    g = proto.geom
    state = SymbolicState(g.n_qubits)
    state.free(q for lat in proto.inputs for q in lat.qubits)
    stabs = [s for lat in proto.inputs for s in lat.stabilizers()]
    state.set_code(stabs, proto.logicals(proto.inputs, proto.input_names))
    ks = [state.k]
    for step in proto.steps:
        apply_step(state, step, rounds)
        ks.append(state.k)
        if ks[-1] != ks[-2] + step.k_change:
            raise ProtocolError(f"step {step.name!r} changed the logical count {ks[-2]} -> {ks[-1]}")
    return state, ks


def _configs(proto: Protocol) -> list[list[DeformedLattice]]:
    out = [proto.inputs]
    out += [s.lattices for s in proto.steps if s.lattices is not None]
    return out


def audit_distance(proto: Protocol) -> list[int]:
    """Minimum logical weight of every configuration (inputs, then each step)."""
    return [min((lattice_distance(lat) for lat in cfg), default=0) for cfg in _configs(proto)]


def space_time_blocks(proto: Protocol) -> int:
    """Patch footprints held through the protocol, one per patch per step.

    Each footprint is measured for ``h`` rounds, so the protocol's volume is
    this count times a patch-round block.
    """
    return sum(len({pc.patch for pc in lat.pieces})
               for s in proto.steps if s.lattices is not None for lat in s.lattices)


def verify_protocol(proto: Protocol, rounds: int = 1, check_distance: bool = True,
                    mutation: Optional[str] = None) -> ProtocolReport:
    errors: list[str] = []
    ks: list[int] = []
    found: dict[str, Optional[list[str]]] = {}
    try:
        state, ks = run_protocol(proto, rounds)
        state.check()
        outs = proto.logicals(proto.outputs, proto.output_names)
        basis = {k: SymbolicState.vec(p) for k, p in outs.items()}
        for lat in proto.outputs:
            for s in lat.stabilizers():
                if not state.contains(SymbolicState.vec(s)):
                    errors.append(f"output check at {lat.name} not in the final group")
                    break
        if state.k != len(proto.outputs):
            errors.append(f"{state.k} logical qubits left, expected {len(proto.outputs)}")
        for name in proto.expected:
            combo = _express(state, state.reps[name], basis)
            found[name] = list(combo) if combo is not None else None
            if combo is None or sorted(combo) != sorted(proto.expected[name]):
                errors.append(f"{name} -> {combo}, expected {proto.expected[name]}")
    except ProtocolError as exc:
        errors.append(str(exc))
    dists: list[int] = []
    if check_distance:
        try:
            dists = audit_distance(proto)
            for i, w in enumerate(dists):
                if w == 0:
                    errors.append(f"configuration {i} encodes no logical qubit")
                elif w < proto.d:
                    errors.append(f"configuration {i} has a logical of weight {w} < {proto.d}")
        except ProtocolError as exc:
            errors.append(str(exc))
    return ProtocolReport(proto.name, proto.d, not errors, found,
                          {k: list(v) for k, v in proto.expected.items()}, ks, dists, errors, mutation)


def verify_cnot(d: int, **kw) -> ProtocolReport:
    return verify_protocol(cnot_protocol(d), **kw)


def verify_hadamard(d: int, **kw) -> ProtocolReport:
    return verify_protocol(hadamard_protocol(d), **kw)


def verify_state_transfer(d: int, direction: str = "left", **kw) -> ProtocolReport:
    return verify_protocol(state_transfer_protocol(d, direction), **kw)


# -- distance -----------------------------------------------------------------

def _gf2_rank_rows(rows: list[int]) -> list[int]:
    return row_reduce(rows)


def _logical_basis(checks_same: list[int], checks_other: list[int], n: int) -> list[int]:
    """Vectors commuting with ``checks_other`` that are independent of ``checks_same``.

    All vectors are bit masks over ``n`` positions of one Pauli type.
    """
    # kernel of checks_other (as a binary matrix) by elimination on columns
    m = np.array([[(c >> q) & 1 for q in range(n)] for c in checks_other], dtype=np.uint8)
    kernel = _nullspace(m, n)
    span = row_reduce(checks_same)
    out = []
    for v in kernel:
        r = reduce_vector(v, span)
        if r:
            span = row_reduce(span + [r])
            out.append(v)
    return out


def _nullspace(m: np.ndarray, n: int) -> list[int]:
    a = m.copy() % 2
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hit = np.flatnonzero(a[r:, c])
        if hit.size == 0:
            continue
        p = r + hit[0]
        a[[r, p]] = a[[p, r]]
        for i in np.flatnonzero(a[:, c]):
            if i != r:
                a[i] ^= a[r]
        pivots.append(c)
        r += 1
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = 1 << f
        for i, c in enumerate(pivots):
            if a[i, f]:
                v |= 1 << c
        basis.append(v)
    return basis


def _min_odd_cycle(checks: list[int], n: int, label: int) -> int:
    """Shortest error commuting with ``checks`` with odd overlap with ``label``.

    Each qubit lies in at most two checks, so errors are edge sets of the
    check graph with an extra boundary node; the answer is the shortest path
    between the two copies of a node in the parity-doubled graph.
    """
    nc = len(checks)
    bnode = nc
    owners: dict[int, list[int]] = {}
    for i, c in enumerate(checks):
        q = 0
        while c:
            if c & 1:
                owners.setdefault(q, []).append(i)
            c >>= 1
            q += 1
    best = math.inf
    rows, cols = [], []
    nn = nc + 1
    for q in range(n):
        own = owners.get(q, [])
        if len(own) > 2:
            raise GeometryError(f"qubit {q} is in {len(own)} checks of one type")
        par = (label >> q) & 1
        u, v = (own + [bnode, bnode])[:2]
        if u == v == bnode:
            if par:
                best = 1
            continue
        for s in (0, 1):
            rows.append(u + s * nn)
            cols.append(v + ((s ^ par) * nn))
    if best == 1:
        return 1
    if not rows:
        return int(best) if best < math.inf else 0
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * nn, 2 * nn)).tocsr()
    dist = shortest_path(graph, directed=False, unweighted=True, indices=list(range(nn)))
    for u in range(nn):
        best = min(best, dist[u, u + nn])
    return int(best) if best < math.inf else 0


def lattice_distance(lat: DeformedLattice) -> int:
    """Exact minimum weight of a nontrivial logical of a CSS lattice.

    The weight of any logical is at least that of its X or Z part, and each
    part is found exactly by :func:`_min_odd_cycle` against every conjugate
    logical in a basis.
    """
    qubits = lat.qubits
    index = {q: i for i, q in enumerate(qubits)}
    n = len(qubits)

    def mask(c: Check) -> int:
        v = 0
        for q in c.qubits:
            v |= 1 << index[q]
        return v

    xs = [mask(c) for c in lat.checks if c.kind == "X"]
    zs = [mask(c) for c in lat.checks if c.kind == "Z"]
    x_logs = _logical_basis(xs, zs, n)  # X-type logicals
    z_logs = _logical_basis(zs, xs, n)
    if not x_logs:
        return 0
    best = math.inf
    # Z-type errors live on the X-check graph; nontrivial iff odd with some X logical
    for lab in x_logs:
        best = min(best, _min_odd_cycle(xs, n, lab))
    for lab in z_logs:
        best = min(best, _min_odd_cycle(zs, n, lab))
    return int(best)
