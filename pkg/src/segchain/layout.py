"""
Segmented-chain geometry and stabiliser-round schedules.

Coordinates follow the unrotated planar code drawn on a checkerboard.  A data
qubit sits at ``(row, col)`` with ``row + col`` even.  Even columns are *long*
(``d`` data qubits on even rows) and odd columns are *short* (``d - 1`` data
qubits on odd rows).  X stabilisers (vertices) sit on ``(odd, even)`` sites and
Z stabilisers (plaquettes) on ``(even, odd)`` sites, so the left/right sides
are smooth and the top/bottom sides rough.  Every column is one segment.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

__all__ = [
    "ColumnSpec", "ChainLayout", "Site", "Lattice", "StepOp", "Stabilizer",
    "RoundSchedule", "build_layout", "patch_lattice", "schedule_round",
    "schedule_lattice", "schedule_protocol",
]

OFFSETS = {"left": (0, -1), "up": (-1, 0), "down": (1, 0), "right": (0, 1)}


@dataclass(frozen=True)
class ColumnSpec:
    index: int
    kind: str  # "long" | "short"
    data_qubits: tuple[int, ...]
    rows: tuple[int, ...]
    unused_qubit: Optional[int]
    shuttles: tuple[int, int]
    patch: int


@dataclass(frozen=True)
class ChainLayout:
    segment_size: int
    code_distance: int
    n_logical: int
    columns: tuple[ColumnSpec, ...]
    n_qubits: int
    n_data: int

    @property
    def logical_qubit_extent(self) -> int:
        return 2 * self.code_distance - 1

    @property
    def shuttle_qubits(self) -> list[tuple[int, int]]:
        return [col.shuttles for col in self.columns]

    @property
    def unused_qubits(self) -> list[int]:
        return [col.unused_qubit for col in self.columns if col.unused_qubit is not None]

    def data_qubit(self, row: int, col: int) -> Optional[int]:
        if not 0 <= col < len(self.columns):
            return None
        spec = self.columns[col]
        if row in spec.rows:
            return spec.data_qubits[spec.rows.index(row)]
        return None

    def segment_of(self, qubit: int) -> int:
        """Home segment of a data, unused or shuttle qubit."""
        return self._segments[qubit]

    @property
    def _segments(self) -> dict[int, int]:
        cache = self.__dict__.get("_seg_cache")
        if cache is None:
            cache = {}
            for col in self.columns:
                for q in col.data_qubits:
                    cache[q] = col.index
                if col.unused_qubit is not None:
                    cache[col.unused_qubit] = col.index
                for q in col.shuttles:
                    cache[q] = col.index
            object.__setattr__(self, "_seg_cache", cache)
        return cache

    def position(self, qubit: int) -> tuple[int, int]:
        """``(row, col)`` of a data or unused qubit (unused sit on row ``2d - 1``)."""
        for col in self.columns:
            if qubit in col.data_qubits:
                return col.rows[col.data_qubits.index(qubit)], col.index
            if qubit == col.unused_qubit:
                return 2 * self.code_distance - 1, col.index
        raise KeyError(qubit)

    def patch_columns(self, patch: int) -> range:
        w = self.logical_qubit_extent
        return range(patch * w, (patch + 1) * w)

    def to_dict(self) -> dict:
        return {
            "segment_size": self.segment_size,
            "code_distance": self.code_distance,
            "n_logical": self.n_logical,
            "n_qubits": self.n_qubits,
            "columns": [
                {
                    "index": c.index, "kind": c.kind, "patch": c.patch,
                    "data_qubits": list(c.data_qubits), "rows": list(c.rows),
                    "unused_qubit": c.unused_qubit, "shuttles": list(c.shuttles),
                }
                for c in self.columns
            ],
        }


def build_layout(s: int, n_logical: int = 1) -> ChainLayout:
    """Lay out ``n_logical`` distance ``s - 2`` patches along a chain of segments."""
    if s < 5:
        raise ValueError(f"segment size {s} < 5 gives code distance < 3")
    if n_logical < 1:
        raise ValueError("need at least one logical qubit")
    d = s - 2
    width = 2 * d - 1
    n_cols = width * n_logical
    kinds = ["long" if (g % width) % 2 == 0 else "short" for g in range(n_cols)]

    next_q = 0
    data: list[tuple[int, ...]] = []
    rows: list[tuple[int, ...]] = []
    for g in range(n_cols):
        rs = tuple(range(0, 2 * d - 1, 2)) if kinds[g] == "long" else tuple(range(1, 2 * d - 2, 2))
        data.append(tuple(range(next_q, next_q + len(rs))))
        rows.append(rs)
        next_q += len(rs)
    n_data = next_q
    unused: list[Optional[int]] = []
    for g in range(n_cols):
        if kinds[g] == "short":
            unused.append(next_q)
            next_q += 1
        else:
            unused.append(None)
    shuttles = []
    for g in range(n_cols):
        shuttles.append((next_q, next_q + 1))
        next_q += 2
    columns = tuple(
        ColumnSpec(g, kinds[g], data[g], rows[g], unused[g], shuttles[g], g // width)
        for g in range(n_cols)
    )
    return ChainLayout(s, d, n_logical, columns, next_q, n_data)


@dataclass(frozen=True)
class Site:
    """A stabiliser site of a lattice: type, position and its four neighbours."""

    kind: str  # "X" | "Z"
    row: int
    col: int  # physical segment hosting the shuttles
    neighbours: Mapping[str, Optional[int]]  # left/up/down/right -> qubit
    segments: Mapping[str, int]  # left/right -> physical segment

    @property
    def qubits(self) -> tuple[int, ...]:
        return tuple(q for q in (self.neighbours[k] for k in ("left", "up", "down", "right"))
                     if q is not None)


@dataclass
class Lattice:
    """Stabiliser sites of one (possibly deformed) surface-code lattice."""

    sites: list[Site]
    data_qubits: list[int]
    logicals: dict[str, frozenset[int]] = field(default_factory=dict)

    def stabilizers(self, kind: Optional[str] = None) -> list[Site]:
        return [s for s in self.sites if kind is None or s.kind == kind]


def lattice_from_columns(layout: ChainLayout, columns: Sequence[int], active: Iterable[int],
                         rows: tuple[int, int] | None = None,
                         extra: Mapping[tuple[int, int], int] | None = None) -> Lattice:
    """Build the checkerboard lattice over a sequence of physical columns.

    ``columns`` lists physical segments left to right; consecutive entries are
    treated as adjacent virtual columns, so skipping a segment merges its
    neighbours.  The virtual column of entry ``i`` is long when ``i`` is even.
    ``active`` selects which data qubits take part.  ``extra`` places extra
    qubits (e.g. spare short-column qubits) at virtual ``(row, i)`` positions.
    Sites with at least two active neighbours become stabilisers.
    """
    d = layout.code_distance
    r_lo, r_hi = rows if rows is not None else (-1, 2 * d - 1)
    active = set(active)
    grid: dict[tuple[int, int], int] = {}
    for i, g in enumerate(columns):
        spec = layout.columns[g]
        long_virtual = i % 2 == 0
        if long_virtual != (spec.kind == "long"):
            raise ValueError(f"segment {g} ({spec.kind}) cannot sit at virtual column {i}")
        for r, q in zip(spec.rows, spec.data_qubits):
            if q in active:
                grid[(r, i)] = q
    for (r, i), q in (extra or {}).items():
        if q in active:
            if (r + i) % 2:
                raise ValueError(f"extra qubit at non-data site {(r, i)}")
            grid[(r, i)] = q
    sites = []
    n = len(columns)
    for r in range(r_lo, r_hi + 1):
        for i in range(n):
            if (r + i) % 2 == 0:
                continue
            kind = "X" if r % 2 else "Z"
            nb = {k: grid.get((r + dr, i + dc)) for k, (dr, dc) in OFFSETS.items()}
            if sum(q is not None for q in nb.values()) < 2:
                continue
            segs = {"left": columns[i - 1] if i > 0 else columns[i],
                    "right": columns[i + 1] if i + 1 < n else columns[i]}
            sites.append(Site(kind, r, columns[i], nb, segs))
    return Lattice(sites, sorted(grid.values()))


def patch_lattice(layout: ChainLayout, patch: int = 0) -> Lattice:
    cols = list(layout.patch_columns(patch))
    active = [q for g in cols for q in layout.columns[g].data_qubits]
    lat = lattice_from_columns(layout, cols, active)
    d = layout.code_distance
    top = [layout.data_qubit(0, g) for g in cols[::2]]
    left = [layout.data_qubit(r, cols[0]) for r in range(0, 2 * d - 1, 2)]
    # X logical along the top row (smooth to smooth); Z logical down the left column
    lat.logicals = {"X": frozenset(top), "Z": frozenset(left)}
    return lat


@dataclass(frozen=True)
class StepOp:
    kind: str  # init | measure | cnot | idle | move
    qubits: tuple[int, ...]
    basis: Optional[str] = None  # "X" / "Z" for init and measure
    segment: Optional[int] = None


@dataclass(frozen=True)
class Stabilizer:
    index: int
    kind: str
    row: int
    col: int
    qubits: tuple[int, ...]
    shuttles: tuple[int, int]
    measure_step: int


@dataclass(frozen=True)
class RoundSchedule:
    steps: tuple[tuple[StepOp, ...], ...]
    stabilizers: tuple[Stabilizer, ...]
    data_qubits: tuple[int, ...]
    n_qubits: int
    logicals: Mapping[str, frozenset[int]] = field(default_factory=dict)

    @property
    def step_count(self) -> int:
        return len(self.steps)

    @property
    def stabilizer_map(self) -> dict[int, tuple[str, tuple[int, ...], int]]:
        return {s.index: (s.kind, s.qubits, s.measure_step) for s in self.stabilizers}

    def cnots(self) -> list[StepOp]:
        return [op for step in self.steps for op in step if op.kind == "cnot"]

    def to_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "stabilizers": [
                {"index": s.index, "kind": s.kind, "row": s.row, "col": s.col,
                 "qubits": list(s.qubits), "shuttles": list(s.shuttles),
                 "measure_step": s.measure_step}
                for s in self.stabilizers
            ],
            "steps": [
                [{"kind": op.kind, "qubits": list(op.qubits), "basis": op.basis,
                  "segment": op.segment} for op in step]
                for step in self.steps
            ],
            "logicals": {k: sorted(v) for k, v in self.logicals.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _row_ops(sites: Sequence[Site], layout: ChainLayout):
    """Five time steps measuring one row of same-type stabilisers."""
    init, ent, second, third, meas = [], [], [], [], []
    active_shuttles = []
    for site in sites:
        a, b = layout.columns[site.col].shuttles
        home = site.col
        active_shuttles += [a, b]
        nb = site.neighbours
        init += [StepOp("init", (a,), "X", home), StepOp("init", (b,), "Z", home)]
        ent.append(StepOp("cnot", (a, b), segment=home))

        def cx(anc, q, seg):
            # ancilla controls for X checks, data controls for Z checks
            pair = (anc, q) if site.kind == "X" else (q, anc)
            return StepOp("cnot", pair, segment=seg)

        # step ii: a hops to the left segment, b stays home
        if nb["left"] is not None:
            second.append(StepOp("move", (a,), segment=site.segments["left"]))
            second.append(cx(a, nb["left"], site.segments["left"]))
        if nb["down"] is not None:
            second.append(cx(b, nb["down"], home))
        # step iii: both hop right
        if nb["left"] is not None:
            third.append(StepOp("move", (a,), segment=home))
        if nb["up"] is not None:
            third.append(cx(a, nb["up"], home))
        if nb["right"] is not None:
            third.append(StepOp("move", (b,), segment=site.segments["right"]))
            third.append(cx(b, nb["right"], site.segments["right"]))
        meas += [StepOp("measure", (a,), site.kind, home), StepOp("measure", (b,), site.kind, home)]
    return [init, ent, second, third, meas], active_shuttles


def _add_idles(step: list[StepOp], candidates: Iterable[int]) -> tuple[StepOp, ...]:
    busy = set()
    for op in step:
        if op.kind in ("init", "measure", "cnot"):
            busy.update(op.qubits)
    idles = [StepOp("idle", (q,)) for q in candidates if q not in busy]
    return tuple(step) + tuple(idles)


def schedule_lattice(layout: ChainLayout, lattices: Sequence[Lattice],
                     idle_qubits: Iterable[int] = ()) -> RoundSchedule:
    """Row-by-row schedule: all X rows top to bottom, then all Z rows.

    Lattices given together are measured in parallel, row index by row index.
    """
    sites = [s for lat in lattices for s in lat.sites]
    data = sorted({q for lat in lattices for q in lat.data_qubits})
    spectators = sorted(set(data) | set(idle_qubits))
    steps: list[tuple[StepOp, ...]] = []
    stabs: list[Stabilizer] = []
    for kind in ("X", "Z"):
        rows = sorted({s.row for s in sites if s.kind == kind})
        for r in rows:
            row_sites = sorted((s for s in sites if s.kind == kind and s.row == r), key=lambda s: s.col)
            t0 = len(steps)
            ops, shuttles = _row_ops(row_sites, layout)
            for k, step in enumerate(ops):
                # shuttles idle in ii/iii when a boundary check drops their CNOT
                cand = spectators + (shuttles if k in (2, 3) else [])
                steps.append(_add_idles(step, cand))
            for s in row_sites:
                stabs.append(Stabilizer(len(stabs), s.kind, s.row, s.col, s.qubits,
                                        layout.columns[s.col].shuttles, t0 + 4))
    logicals: dict[str, frozenset[int]] = {}
    if len(lattices) == 1:
        logicals = dict(lattices[0].logicals)
    return RoundSchedule(tuple(steps), tuple(stabs), tuple(data), layout.n_qubits, logicals)


def schedule_round(layout: ChainLayout) -> RoundSchedule:
    """Memory-round schedule for every patch of ``layout``; unused qubits idle."""
    lats = [patch_lattice(layout, k) for k in range(layout.n_logical)]
    sched = schedule_lattice(layout, lats, idle_qubits=layout.unused_qubits)
    if layout.n_logical == 1:
        return sched
    return RoundSchedule(sched.steps, sched.stabilizers, sched.data_qubits, sched.n_qubits,
                         {f"{k}{p}": v for p, lat in enumerate(lats) for k, v in lat.logicals.items()})


def schedule_protocol(layout: ChainLayout, protocol: str, h: Optional[int] = None):
    """Lattice configurations of a deformation protocol, each with ``h`` rounds.

    Returns a list of ``(DeformationStep, [RoundSchedule] * h)``.
    """
    from .protocols import build_protocol

    d = layout.code_distance
    h = d if h is None else h
    if h < 1:
        raise ValueError("h must be >= 1")
    proto = build_protocol(protocol, d)
    if proto.n_patches > layout.n_logical:
        raise ValueError(f"{protocol} needs {proto.n_patches} patches, layout has {layout.n_logical}")
    out = []
    for step in proto.steps:
        if step.lattices is None:
            out.append((step, []))
            continue
        lats = [proto.to_layout_lattice(layout, lat) for lat in step.lattices]
        sched = schedule_lattice(layout, lats, idle_qubits=[])
        out.append((step, [sched] * h))
    return out
