"""
Concatenated four-qubit gauge code on a chain of surface-code logical qubits.

The [[4,1,2]] subsystem code is laid out as a 2x2 grid ``q0 q1 / q2 q3``:

    X gauges   X0X1, X2X3        Z gauges   Z0Z2, Z1Z3
    stabilisers XXXX, ZZZZ (products of two gauge outcomes)
    logical     X = X0X2, Z = Z0Z1

A level-j block is a row of six level-(j-1) units ``[D0 A0 D1 D2 A1 D3]``
(four data units holding q0..q3 and two gauge ancillas), so a level-n block
spans ``6**n`` chain sites. Two-qubit gates act only between corresponding
sites of neighbouring units; Z-gauge pairing needs D1 and D2 exchanged,
which is done with a unit SWAP and undone afterwards. Each information qubit
owns four surface-code slots, so before every gauge CNOT the ancilla unit
crosses the three free slots towards its partner; each crossing is billed
as a SWAP.

Decoding is hard and hierarchical and works on syndrome changes. Every
data node remembers its last stabiliser value. At level 1 a change raises a
flag and nothing is corrected. From level 2 up a change is corrected when
exactly one data unit carries a pending flag; otherwise
the block itself is flagged and the new value becomes the reference. At
level 2 two flagged units also flag the block, since a single fault on
the D1/D2 swap of detection-only units is a logical error. An
ancilla readout is checked against the remembered syndromes of the data
units it touched; when the ancilla itself cannot be decoded the round is
skipped. A decision looks at every pending flag but clears only those that
were already up when the gauge was copied out; later flags belong to faults
the readout may not have seen.

The simulator is a bit-sliced Pauli frame: 64 trials per machine word.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

MAX_LEVEL = 4
TRANSITS = 3  # slots between neighbouring information qubits, 4 per qubit
_DSLOT = (0, 2, 3, 5)  # slots of q0..q3 inside a unit
_LOGICAL = {"Z": (0, 1), "X": (0, 2)}  # data units carrying each logical operator
_MULT = {"I": 1, "M": 1, "C": 4, "S": 12, "T": 12}  # memory multiplier for a layer holding the op
_NOISY = ("I", "M", "C", "S", "T", "W")
_ONE_QUBIT = ("T", "W")  # depolarizing one-qubit locations


# -- rates -------------------------------------------------------------------

@dataclass(frozen=True)
class LogicalRates:
    """Error rates of surface-code logical operations, derived from ``(p_L, d)``."""

    p_L: float
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0.0 <= self.p_L:
            raise ValueError("p_L must be non-negative")
        if self.p_SWAP > 1.0:
            raise ValueError(f"p_SWAP={self.p_SWAP:.3g} exceeds 1")

    @classmethod
    def from_p_cnot(cls, p_cnot: float, d: int = 1) -> "LogicalRates":
        return cls(p_cnot / (14 * d), d)

    @property
    def p_IM(self) -> float:
        return self.d * self.p_L

    @property
    def p_CNOT(self) -> float:
        return 14 * self.d * self.p_L

    @property
    def p_SWAP(self) -> float:
        return 3 * self.p_CNOT

    @property
    def p0(self) -> float:
        return self.d * self.p_L

    def memory(self, op: str) -> float:
        return _MULT[op] * self.p0

    def as_dict(self) -> dict:
        return {"p_L": self.p_L, "d": self.d, "p_IM": self.p_IM, "p_CNOT": self.p_CNOT,
                "p_SWAP": self.p_SWAP, "p0": self.p0}


@dataclass(frozen=True)
class GaugeConfig:
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_LEVEL:
            raise ValueError(f"level must be in 1..{MAX_LEVEL}, got {self.n}")

    @property
    def distance(self) -> int:
        return 2 ** self.n

    @property
    def block_size(self) -> int:
        return 6 ** self.n

    @property
    def surface_qubits(self) -> int:
        # one information qubit per four surface-code qubits
        return 4 * self.block_size


# -- layout helpers ----------------------------------------------------------

def data_offsets(j: int) -> np.ndarray:
    """Sites of the data qubits inside a level-j unit.

    Ordered with the top-level data unit most significant, so that
    ``reshape(-1, 4)`` groups the four qubits of each level-1 block.
    """
    if j == 0:
        return np.zeros(1, dtype=np.int64)
    sub = data_offsets(j - 1)
    m = 6 ** (j - 1)
    return np.concatenate([s * m + sub for s in _DSLOT])


def logical_index(j: int, kind: str) -> np.ndarray:
    """Positions (into ``data_offsets(j)``) of the logical ``kind`` operator."""
    if j == 0:
        return np.zeros(1, dtype=np.int64)
    sub = logical_index(j - 1, kind)
    return np.concatenate([c * 4 ** (j - 1) + sub for c in _LOGICAL[kind]])


def unit_adjacent(a: int, b: int, n: int) -> bool:
    """True when sites a, b are corresponding sites of neighbouring units."""
    a, b = min(a, b), max(a, b)
    for i in range(n + 1):
        m = 6 ** i
        if b - a == m and (a // m) % 6 < 5 and a // (6 * m) == b // (6 * m):
            return True
    return False


# -- circuit -----------------------------------------------------------------

# quantum ops:  ("I", q, basis) ("M", q, basis, slot) ("C", c, t) ("S", a, b)
# classical:    ("DEC", reg, slots, level, basis, expect)
#               ("EC", level, err, flag_reg, synd_reg, g0, g1, child_flags, corr, top)
#               ("FIN", err, qubits, level, expect, pending)
#               ("SNAP", dst_regs, src_regs)
# ``expect`` lists, per level 1..j, the syndrome registers whose XOR is the
# parity each node of the readout should show.
# idle noise:   ("W", q, n1, n4, n12)  merged memory noise over an idle gap
# routing:      ("T", q)  one slot transit of an ancilla site, priced as a SWAP

@dataclass
class GaugeCircuit:
    n: int
    ops: list
    n_qubits: int
    n_regs: int
    n_slots: int
    depth: int
    live_init: np.ndarray = field(repr=False)
    blocks: tuple = ()

    def counts(self) -> dict:
        out: dict = {}
        for op in self.ops:
            out[op[0]] = out.get(op[0], 0) + 1
        return out

    def two_qubit_pairs(self):
        for op in self.ops:
            if op[0] in ("C", "S"):
                yield op[1], op[2]

    def is_nn(self) -> bool:
        return all(unit_adjacent(a, b, self.n) for a, b in self.two_qubit_pairs())

    def n_locations(self) -> int:
        return sum(1 for op in self.ops if op[0] in _NOISY)

    def weight(self, rates: "LogicalRates") -> float:
        """Expected number of faults per trial."""
        return float(sum(_location_probs(self, rates)))


class _Builder:
    def __init__(self, n: int, transits: bool = True):
        self.n = n
        self.transits = transits
        self.ops: list = []
        self.n_regs = 0
        self.n_slots = 0
        self.flag_reg: dict = {}

    def reg(self) -> int:
        self.n_regs += 1
        return self.n_regs - 1

    def flag(self, uid, err) -> int:
        return self._named(("flag", uid, err))

    def synd(self, uid, err) -> int:
        return self._named(("synd", uid, err))

    def _named(self, key) -> int:
        if key not in self.flag_reg:
            self.flag_reg[key] = self.reg()
        return self.flag_reg[key]

    def nodes(self, uid, j: int, kind: str, err: str) -> tuple:
        """Registers of the level 1..j nodes below ``uid``, one tuple per level."""
        get = self.synd if kind == "synd" else self.flag
        return tuple(tuple(get(uid + p, err) for p in _paths(j - i)) for i in range(1, j + 1))

    def snapshot(self, uid, j: int, err: str) -> tuple:
        """Copy the syndromes and the flag of a data unit as they stand now.

        Returns ``(syndromes per level, flag copy)``.
        """
        src = self.nodes(uid, j, "synd", err)
        dst = tuple(tuple(self.reg() for _ in lvl) for lvl in src)
        f = self.reg()
        self.ops.append(("SNAP", tuple(r for lvl in dst for r in lvl) + (f,),
                         tuple(r for lvl in src for r in lvl) + (self.flag(uid, err),)))
        return dst, f

    # unit-level primitives --------------------------------------------------

    def sites(self, base: int, j: int) -> np.ndarray:
        return base + data_offsets(j)

    def prep(self, base: int, j: int, basis: str) -> None:
        """Encoded |0> (basis Z) or |+> (basis X) built from Bell pairs of units."""
        if j == 0:
            self.ops.append(("I", base, basis))
            return
        m = 6 ** (j - 1)
        s = [base + k * m for k in range(6)]
        # |0>: Bell pairs on X-gauge pairs (D0,D1), (D2,D3).
        # |+>: Bell pairs on Z-gauge pairs, built in the swapped order and swapped back.
        self.prep(s[0], j - 1, "X")
        self.prep(s[1], j - 1, "Z")
        self.prep(s[3], j - 1, "X")
        self.prep(s[4], j - 1, "Z")
        self.cnot(s[0], s[1], j - 1)
        self.cnot(s[3], s[4], j - 1)
        self.swap(s[1], s[2], j - 1)
        self.swap(s[4], s[5], j - 1)
        if basis == "X":
            self.swap(s[2], s[3], j - 1)

    def cnot(self, bc: int, bt: int, j: int) -> None:
        for c, t in zip(self.sites(bc, j), self.sites(bt, j)):
            self.ops.append(("C", int(c), int(t)))

    def transit(self, base: int, j: int) -> None:
        # an ancilla crosses the free surface-code slots to reach its partner
        if self.transits:
            for _ in range(TRANSITS):
                for q in self.sites(base, j):
                    self.ops.append(("T", int(q)))

    def swap(self, b1: int, b2: int, j: int) -> None:
        for a, b in zip(self.sites(b1, j), self.sites(b2, j)):
            self.ops.append(("S", int(a), int(b)))

    def measure(self, base: int, j: int, basis: str, snaps=()) -> int:
        slots = []
        for q in self.sites(base, j):
            self.ops.append(("M", int(q), basis, self.n_slots))
            slots.append(self.n_slots)
            self.n_slots += 1
        r = self.reg()
        # each node should show the XOR of the syndromes it copied
        snaps = [sn[0] for sn in snaps]
        expect = tuple(tuple(tuple(sn[i][k] for sn in snaps) for k in range(len(lvl)))
                       for i, lvl in enumerate(snaps[0])) if snaps else ()
        self.ops.append(("DEC", r, tuple(slots), j, basis, expect))
        return r

    # error correction ---------------------------------------------------------

    def ladder(self, base: int, j: int, uid: tuple) -> None:
        """EC at every level 1..j of a data unit, bottom up."""
        for i in range(1, j + 1):
            for path in _paths(j - i):
                self.ec(base + _path_offset(path, j), i, uid + path)

    def ec(self, base: int, j: int, uid: tuple) -> None:
        m = 6 ** (j - 1)
        s = [base + k * m for k in range(6)]
        kids = [uid + (c,) for c in range(4)]
        top = j == self.n and len(uid) == 1

        def after(b, c):
            if j > 1:
                self.ladder(b, j - 1, kids[c])

        # X gauges detect Z errors
        self.prep(s[1], j - 1, "X")
        self.prep(s[4], j - 1, "X")
        snaps = {}
        for a, c in ((1, 0), (1, 1), (4, 2), (4, 3)):
            if j > 1:
                snaps[c] = self.snapshot(kids[c], j - 1, "Z")
            self.transit(s[a], j - 1)
            self.cnot(s[a], s[_DSLOT[c]], j - 1)
            after(s[_DSLOT[c]], c)
        g0 = self.measure(s[1], j - 1, "X", (snaps[0], snaps[1]) if j > 1 else ())
        g1 = self.measure(s[4], j - 1, "X", (snaps[2], snaps[3]) if j > 1 else ())
        self._decide(j, "Z", uid, kids, g0, g1, [s[_DSLOT[c]] for c in range(4)], top, snaps)

        # Z gauges detect X errors; D1 and D2 exchange places meanwhile
        self.swap(s[2], s[3], j - 1)
        after(s[3], 1)
        after(s[2], 2)
        where = [s[0], s[3], s[2], s[5]]
        self.prep(s[1], j - 1, "Z")
        self.prep(s[4], j - 1, "Z")
        snaps = {}
        for a, c in ((1, 0), (1, 2), (4, 1), (4, 3)):
            if j > 1:
                snaps[c] = self.snapshot(kids[c], j - 1, "X")
            self.transit(s[a], j - 1)
            self.cnot(where[c], s[a], j - 1)
            after(where[c], c)
        g0 = self.measure(s[1], j - 1, "Z", (snaps[0], snaps[2]) if j > 1 else ())
        g1 = self.measure(s[4], j - 1, "Z", (snaps[1], snaps[3]) if j > 1 else ())
        self._decide(j, "X", uid, kids, g0, g1, where, top, snaps)
        self.swap(s[2], s[3], j - 1)
        after(s[2], 1)
        after(s[3], 2)

    def _decide(self, j, err, uid, kids, g0, g1, bases, top, snaps):
        # a Z error flips the logical X of its unit and is undone by logical Z
        fix = "Z" if err == "Z" else "X"
        # flags as they stood when the gauge was copied out, and the live registers
        child_flags = (tuple(snaps[c][1] for c in range(4)),
                       tuple(self.flag(k, err) for k in kids)) if j > 1 else None
        corr = tuple(tuple(int(q) for q in b + data_offsets(j - 1)[logical_index(j - 1, fix)])
                     for b in bases)
        self.ops.append(("EC", j, err, self.flag(uid, err), self.synd(uid, err), g0, g1,
                         child_flags, corr, top))


def _paths(depth: int):
    if depth == 0:
        return [()]
    return [(c,) + p for c in range(4) for p in _paths(depth - 1)]


def _path_offset(path: tuple, j: int) -> int:
    off = 0
    for k, c in enumerate(path):
        off += _DSLOT[c] * 6 ** (j - 1 - k)
    return off


def build_gauge_circuit(n: int, transits: bool = True) -> GaugeCircuit:
    """Level-n CNOT exRec: EC ladders on both blocks, transversal CNOT, EC ladders.

    Block A (control) occupies sites ``[0, 6**n)`` and block B (target) the
    next ``6**n`` sites.
    """
    cfg = GaugeConfig(n)
    N = cfg.block_size
    b = _Builder(n, transits)
    A, B = ("A",), ("B",)
    b.ladder(0, n, A)
    b.ladder(N, n, B)
    b.cnot(0, N, n)
    b.ladder(0, n, A)
    b.ladder(N, n, B)
    for err in ("X", "Z"):
        for base, uid in ((0, A), (N, B)):
            b.ops.append(("FIN", err, tuple(int(q) for q in base + data_offsets(n)), n,
                          tuple(tuple((r,) for r in lvl) for lvl in b.nodes(uid, n, "synd", err)),
                          b.nodes(uid, n, "flag", err)))
    live = np.zeros(2 * N, dtype=bool)
    live[data_offsets(n)] = True
    live[N + data_offsets(n)] = True
    ops, depth = _schedule(b.ops, 2 * N, live)
    return GaugeCircuit(n, ops, 2 * N, b.n_regs, b.n_slots, depth, live, (0, N))


def _schedule(ops: list, nq: int, live0: np.ndarray):
    """ASAP layering; inserts merged memory noise ("W") before each op that ends an idle gap."""
    last = np.full(nq, -1, dtype=np.int64)
    layer = []
    for op in ops:
        k = op[0]
        if k in ("I", "M", "T"):
            t = last[op[1]] + 1
            last[op[1]] = t
        elif k in ("C", "S"):
            t = max(last[op[1]], last[op[2]]) + 1
            last[op[1]] = last[op[2]] = t
        else:
            t = -1
        layer.append(int(t))
    depth = int(last.max()) + 1 if nq else 0
    kind = np.ones(depth, dtype=np.int64)
    for op, t in zip(ops, layer):
        if t >= 0:
            kind[t] = max(kind[t], _MULT[op[0]])
    cum = {m: np.concatenate([[0], np.cumsum(kind == m)]) for m in (1, 4, 12)}

    def gap(t0, t1):  # idle layers strictly between t0 and t1
        lo, hi = t0 + 1, t1
        if hi <= lo:
            return None
        return tuple(int(cum[m][hi] - cum[m][lo]) for m in (1, 4, 12))

    out = []
    live = live0.copy()
    prev = np.full(nq, -1, dtype=np.int64)
    for op, t in zip(ops, layer):
        k = op[0]
        if k in ("M", "T", "C", "S"):
            for q in op[1:2] if k in ("M", "T") else op[1:3]:
                if live[q]:
                    g = gap(prev[q], t)
                    if g:
                        out.append(("W", q) + g)
        out.append(op)
        if k == "I":
            live[op[1]] = True
            prev[op[1]] = t
        elif k == "M":
            live[op[1]] = False
            prev[op[1]] = t
        elif k == "T":
            prev[op[1]] = t
        elif k == "C":
            prev[op[1]] = prev[op[2]] = t
        elif k == "S":
            a, b = op[1], op[2]
            prev[a] = prev[b] = t
            live[a], live[b] = live[b], live[a]
    # idle to the end of the exRec, before the final readout
    tail = []
    for q in np.flatnonzero(live):
        g = gap(prev[q], depth)
        if g:
            tail.append(("W", int(q)) + g)
    first_fin = next(i for i, op in enumerate(out) if op[0] == "FIN")
    out[first_fin:first_fin] = tail
    return out, depth


# -- noise -------------------------------------------------------------------

def _compose_depolarizing(p: float, count: int) -> float:
    # single-qubit depolarizing (X, Y, Z each p/3) applied `count` times
    return 0.75 * (1.0 - (1.0 - 4.0 * p / 3.0) ** count)


def _location_probs(circ: GaugeCircuit, rates: LogicalRates) -> list:
    ps = []
    for op in circ.ops:
        k = op[0]
        if k in ("I", "M"):
            ps.append(rates.p_IM)
        elif k == "C":
            ps.append(rates.p_CNOT)
        elif k in ("S", "T"):
            ps.append(rates.p_SWAP)
        elif k == "W":
            lam = 1.0
            for m, c in zip((1, 4, 12), op[2:5]):
                lam *= (1.0 - 4.0 * min(m * rates.p0, 0.75) / 3.0) ** c
            ps.append(0.75 * (1.0 - lam))
    return ps


# -- bit-sliced engine -------------------------------------------------------

_ONE = np.uint64(1)


def _exactly_one(f):
    f0, f1, f2, f3 = f
    odd = f0 ^ f1 ^ f2 ^ f3
    two = (f0 & f1) | (f2 & f3) | ((f0 | f1) & (f2 | f3))
    return odd & ~two


def decode_block(r: np.ndarray, level: int, basis: str, expect=None, pending=None):
    """Hierarchical decode of a transversal readout.

    ``r`` has shape ``(4**level, W)`` in ``data_offsets`` order. Returns
    ``(value, flag)`` word arrays. ``basis`` names the logical being read
    (Z reads q0^q1, X reads q0^q2). ``expect[i]`` holds the parity each
    level-(i+1) node should show, shape ``(4**(level-i-1), W)``; zero when omitted.
    ``pending[i]`` (same shape) holds flags the node already carries.
    """
    a, b = _LOGICAL[basis]
    W = r.shape[1]
    v = r.reshape(-1, W)
    f = np.zeros_like(v)
    for i in range(level):
        v = v.reshape(-1, 4, W)
        f = f.reshape(-1, 4, W)
        par = v[:, 0] ^ v[:, 1] ^ v[:, 2] ^ v[:, 3]
        if expect is not None:
            par = par ^ expect[i]
        f_in = f
        one = _exactly_one([f[:, c] for c in range(4)])
        fix = par & one
        v = v.copy()
        for c in range(4):
            v[:, c] ^= fix & f[:, c]
        val = v[:, a] ^ v[:, b]
        f = par & ~one
        if i == 1:
            # two flagged detection-only blocks may hide a logical error
            f = f | ((f_in[:, 0] | f_in[:, 1] | f_in[:, 2] | f_in[:, 3]) & ~one)
        if pending is not None:
            f = f | pending[i]
        v = val
    return v.reshape(W), f.reshape(W)


class _Engine:
    def __init__(self, circ: GaugeCircuit, W: int):
        self.c = circ
        self.W = W
        self.x = np.zeros((circ.n_qubits, W), dtype=np.uint64)
        self.z = np.zeros((circ.n_qubits, W), dtype=np.uint64)
        self.regs: dict = {}
        self.slots: dict = {}
        self.fail = np.zeros(W, dtype=np.uint64)
        self.flagged = np.zeros(W, dtype=np.uint64)
        self.zero = np.zeros(W, dtype=np.uint64)

    def reg(self, r):
        return self.regs.get(r, self.zero)

    def run(self, events):
        """``events``: per noisy location, ``(words, masks_x_a, masks_z_a, ...)``."""
        x, z = self.x, self.z
        li = 0
        for op in self.c.ops:
            k = op[0]
            if k == "C":
                c, t = op[1], op[2]
                x[t] ^= x[c]
                z[c] ^= z[t]
                self._noise2(events[li], c, t)
                li += 1
            elif k == "S":
                a, b = op[1], op[2]
                tmp = x[a].copy(); x[a] = x[b]; x[b] = tmp
                tmp = z[a].copy(); z[a] = z[b]; z[b] = tmp
                self._noise2(events[li], a, b)
                li += 1
            elif k in _ONE_QUBIT:
                self._noise1(events[li], op[1])
                li += 1
            elif k == "I":
                q, basis = op[1], op[2]
                x[q] = 0
                z[q] = 0
                ev = events[li]
                if ev is not None:
                    # a flip of the prepared eigenstate
                    np.bitwise_xor.at(x[q] if basis == "Z" else z[q], ev[0], ev[1])
                li += 1
            elif k == "M":
                q, basis, slot = op[1], op[2], op[3]
                r = (x[q] if basis == "Z" else z[q]).copy()
                ev = events[li]
                if ev is not None:
                    np.bitwise_xor.at(r, ev[0], ev[1])
                self.slots[slot] = r
                li += 1
            elif k == "DEC":
                _, reg, slots, j, basis, exp = op
                r = np.stack([self.slots.pop(s) for s in slots])
                self.regs[reg] = decode_block(r, j, basis, self._expect(exp))
            elif k == "EC":
                self._ec(op)
            elif k == "SNAP":
                for d, s in zip(op[1], op[2]):
                    self.regs[d] = self.reg(s)
            elif k == "FIN":
                _, err, qs, j, exp, pend = op
                r = (x if err == "X" else z)[list(qs)]
                # a noiseless final round; X errors are judged against logical Z
                v, f = decode_block(r, j, "Z" if err == "X" else "X", self._expect(exp),
                                    self._expect(tuple(tuple((q,) for q in lvl) for lvl in pend)))
                self.fail |= v | f
        self.fail |= self.flagged

    def _expect(self, exp):
        out = []
        for level in exp:
            rows = []
            for regs in level:
                acc = self.reg(regs[0])
                for r in regs[1:]:
                    acc = acc ^ self.reg(r)
                rows.append(acc)
            out.append(np.stack(rows))
        return out

    def _ec(self, op):
        _, j, err, freg, sreg, g0, g1, child, corr, top = op
        v0, f0 = self.regs.pop(g0)
        v1, f1 = self.regs.pop(g1)
        s = v0 ^ v1
        prev = self.reg(sreg)
        event = s ^ prev
        if child is None:
            new = event
            self.regs[sreg] = s
        else:
            ok = ~(f0 | f1)
            # decide on every flag raised so far, consume only those that
            # existed when the gauge was copied out
            seen = [self.reg(r) for r in child[0]]
            fl = [self.reg(r) for r in child[1]]
            one = _exactly_one(fl)
            go = event & one & ok
            frame = self.z if err == "Z" else self.x
            for c in range(4):
                m = go & fl[c]
                if m.any():
                    for q in corr[c]:
                        frame[q] ^= m
                self.regs[child[1][c]] = fl[c] & ~(seen[c] & ok)
            # two flagged detection-only units with an unchanged parity may hide a
            # logical error (one fault on the D1/D2 swap); above level 2 such
            # pairs come from ancilla spread, which is a gauge operator
            many = (fl[0] | fl[1] | fl[2] | fl[3]) & ~one if j == 2 else self.zero
            self.regs[sreg] = prev ^ (event & ~one & ok)
            new = ((event & ~one) | many) & ok
        self.regs[freg] = self.reg(freg) | new
        if top:
            self.flagged |= new

    def _noise1(self, ev, q):
        if ev is None:
            return
        w, mx, mz = ev
        np.bitwise_xor.at(self.x[q], w, mx)
        np.bitwise_xor.at(self.z[q], w, mz)

    def _noise2(self, ev, a, b):
        if ev is None:
            return
        w, mxa, mza, mxb, mzb = ev
        np.bitwise_xor.at(self.x[a], w, mxa)
        np.bitwise_xor.at(self.z[a], w, mza)
        np.bitwise_xor.at(self.x[b], w, mxb)
        np.bitwise_xor.at(self.z[b], w, mzb)


def _pauli_bits(p):
    # 0 I, 1 X, 2 Y, 3 Z
    return ((p == 1) | (p == 2)), ((p == 2) | (p == 3))


def _sample_events(circ: GaugeCircuit, rates: LogicalRates, T: int, rng: np.random.Generator):
    probs = np.asarray(_location_probs(circ, rates), dtype=float)
    kinds = [op[0] for op in circ.ops if op[0] in _NOISY]
    counts = rng.binomial(T, np.clip(probs, 0.0, 1.0))
    events = []
    for k, cnt in zip(kinds, counts):
        if cnt == 0:
            events.append(None)
            continue
        # distinct trials for each location
        idx = rng.choice(T, size=cnt, replace=False) if cnt > 64 else _distinct(rng, T, cnt)
        w = (idx >> 6).astype(np.intp)
        bit = _ONE << (idx & 63).astype(np.uint64)
        if k in ("I", "M"):
            events.append((w, bit))
        elif k in _ONE_QUBIT:
            p = rng.integers(1, 4, size=cnt)
            bx, bz = _pauli_bits(p)
            events.append((w, bit * bx, bit * bz))
        else:
            p = rng.integers(1, 16, size=cnt)
            ax, az = _pauli_bits(p >> 2)
            bx, bz = _pauli_bits(p & 3)
            events.append((w, bit * ax, bit * az, bit * bx, bit * bz))
    return events


def _distinct(rng, T, cnt):
    idx = rng.integers(0, T, size=cnt)
    while len(np.unique(idx)) < cnt:
        idx = rng.integers(0, T, size=cnt)
    return idx


def _popcount(a: np.ndarray) -> int:
    # padding trials beyond T never receive events, so their bits stay zero
    return int(np.unpackbits(a.view(np.uint8)).sum())


@dataclass(frozen=True)
class GaugeResult:
    n: int
    p_CNOT: float
    trials: int
    failures: int

    @property
    def P_CNOT(self) -> float:
        return self.failures / self.trials

    @property
    def stderr(self) -> float:
        P = self.P_CNOT
        return math.sqrt(P * (1 - P) / self.trials)

    def row(self) -> dict:
        return {"n": self.n, "p_CNOT": self.p_CNOT, "trials": self.trials,
                "failures": self.failures, "P_CNOT": self.P_CNOT, "stderr": self.stderr}


_CIRCUITS: dict = {}


def gauge_circuit(n: int) -> GaugeCircuit:
    """Cached ``build_gauge_circuit``; circuits are immutable once built."""
    if n not in _CIRCUITS:
        _CIRCUITS[n] = build_gauge_circuit(n)
    return _CIRCUITS[n]


def count_failures(circ: GaugeCircuit, rates: LogicalRates, trials: int,
                   rng: np.random.Generator) -> int:
    T = int(trials)
    W = (T + 63) // 64
    eng = _Engine(circ, W)
    eng.run(_sample_events(circ, rates, T, rng))
    return _popcount(eng.fail)


def rate_key(p: float) -> int:
    """Stable integer for a rate, used to key random streams."""
    return int(round(float(p) * 1e15))


def simulate_gauge_cnot(n: int, rates: LogicalRates, trials: int, seed: int = 0,
                        chunk: int = 1 << 16) -> GaugeResult:
    """Monte Carlo logical failure rate of one level-n CNOT exRec."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    circ = gauge_circuit(n)
    # stream keyed by (seed, level, rate) so grid points never share draws
    ss = np.random.SeedSequence([int(seed), n, rate_key(rates.p_CNOT)])
    fails = 0
    done = 0
    for child in ss.spawn((trials + chunk - 1) // chunk):
        t = min(chunk, trials - done)
        fails += count_failures(circ, rates, t, np.random.default_rng(child))
        done += t
    return GaugeResult(n, rates.p_CNOT, trials, fails)


def run_with_faults(circ: GaugeCircuit, faults: Sequence[tuple]) -> tuple[bool, bool]:
    """Single trial with the given ``(location, pauli)`` faults and no other noise.

    ``location`` indexes the noisy ops in order; ``pauli`` is 1..3 for one-qubit
    locations (X, Y, Z) and 1..15 for two-qubit ones (``4*a + b``). Init and
    measurement locations flip regardless of ``pauli``. Returns
    ``(failed, top_flag_raised)``.
    """
    kinds = [op[0] for op in circ.ops if op[0] in _NOISY]
    events: list = [None] * len(kinds)
    w = np.zeros(1, dtype=np.intp)
    for loc, p in faults:
        k = kinds[loc]
        if k in ("I", "M"):
            ev = (w, np.array([_ONE]))
        elif k in _ONE_QUBIT:
            bx, bz = _pauli_bits(np.array([p]))
            ev = (w, _ONE * bx, _ONE * bz)
        else:
            ax, az = _pauli_bits(np.array([p >> 2]))
            bx, bz = _pauli_bits(np.array([p & 3]))
            ev = (w, _ONE * ax, _ONE * az, _ONE * bx, _ONE * bz)
        if events[loc] is not None:
            raise ValueError(f"location {loc} given twice")
        events[loc] = tuple(np.asarray(a, dtype=np.uint64) if i else a for i, a in enumerate(ev))
    eng = _Engine(circ, 1)
    eng.run(events)
    return bool(eng.fail[0] & _ONE), bool(eng.flagged[0] & _ONE)


def location_kinds(circ: GaugeCircuit) -> list[str]:
    return [op[0] for op in circ.ops if op[0] in _NOISY]


# -- fitting -----------------------------------------------------------------

@dataclass
class GaugeFit:
    n: int
    kappa: float
    eta: float
    sigma_kappa: float
    sigma_eta: float
    cov: np.ndarray
    points: list

    def evaluate(self, p):
        return np.exp(self.kappa * np.log(p) + self.eta)

    def to_dict(self) -> dict:
        return {"n": self.n, "kappa": self.kappa, "eta": self.eta,
                "sigma_kappa": self.sigma_kappa, "sigma_eta": self.sigma_eta,
                "points": [list(map(float, p)) for p in self.points]}


def fit_gauge_scaling(points: Iterable[Sequence[float]], n: int = 0) -> GaugeFit:
    """Weighted least squares of ``log P = kappa log p + eta``.

    ``points`` rows are ``(p_CNOT, P_CNOT, stderr)``; rows with ``P <= 0``
    are dropped, and a zero stderr means unit weight in log space.
    """
    rows = [tuple(map(float, r)) for r in points if r[1] > 0]
    if len(rows) < 3:
        raise ValueError(f"need at least 3 points with P > 0, got {len(rows)}")
    p = np.array([r[0] for r in rows])
    P = np.array([r[1] for r in rows])
    se = np.array([r[2] if len(r) > 2 else 0.0 for r in rows])
    if len(set(p)) < 2:
        raise ValueError("degenerate data: a single p_CNOT value")
    x, y = np.log(p), np.log(P)
    sig = np.where(se > 0, se / P, 1.0)
    A = np.stack([x, np.ones_like(x)], axis=1) / sig[:, None]
    coef, *_ = np.linalg.lstsq(A, y / sig, rcond=None)
    cov = np.linalg.inv(A.T @ A)
    if not np.all(se > 0):
        # no absolute errors known: scale by the residual variance
        dof = max(len(rows) - 2, 1)
        cov = cov * float(np.sum((y - (coef[0] * x + coef[1])) ** 2) / dof)
    return GaugeFit(n, float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])),
                    float(math.sqrt(cov[1, 1])), cov, rows)


MAX_FIT_P = 0.3  # above this a curve bends towards saturation, not a power law


def fit_level_curve(rows: Iterable[dict], n: int, p_lo: float = 0.0, p_hi: float = math.inf,
                    max_P: float = MAX_FIT_P, min_failures: int = 20) -> GaugeFit:
    """Fit one level from level-CSV rows, keeping well-measured unsaturated points."""
    pts = [(r["p_CNOT"], r["P_CNOT"], r["stderr"]) for r in rows
           if r["n"] == n and p_lo <= r["p_CNOT"] <= p_hi
           and r["failures"] >= min_failures and r["P_CNOT"] <= max_P]
    return fit_gauge_scaling(sorted(pts), n)


def crossing(f_lo: GaugeFit, f_hi: GaugeFit) -> float:
    """p_CNOT where two level curves meet (log-log lines)."""
    dk = f_hi.kappa - f_lo.kappa
    if dk == 0:
        raise ValueError("parallel level curves")
    return math.exp((f_lo.eta - f_hi.eta) / dk)


# -- CSV ---------------------------------------------------------------------

LEVEL_COLUMNS = ("n", "p_CNOT", "trials", "failures", "P_CNOT", "stderr")


def write_level_csv(path, results: Iterable[GaugeResult], meta: Optional[dict] = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.DictWriter(fh, fieldnames=LEVEL_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})


def read_level_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        out.append({k: (int(v) if k in ("n", "trials", "failures") else float(v)) for k, v in r.items()})
    return out


def single_faults(circ: GaugeCircuit):
    """Every single fault as ``(location, pauli)``; init/measure flips use pauli 1."""
    out = []
    for loc, k in enumerate(location_kinds(circ)):
        if k in ("I", "M"):
            out.append((loc, 1))
        elif k in _ONE_QUBIT:
            out.extend((loc, p) for p in (1, 2, 3))
        else:
            out.extend((loc, p) for p in range(1, 16))
    return out


def fault_outcomes(circ: GaugeCircuit, faults: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray]:
    """Run one trial per fault (all in one batch); returns ``(failed, flagged)`` bool arrays."""
    kinds = location_kinds(circ)
    T = len(faults)
    W = max((T + 63) // 64, 1)
    by_loc: dict = {}
    for i, (loc, p) in enumerate(faults):
        by_loc.setdefault(loc, []).append((i, p))
    events: list = [None] * len(kinds)
    for loc, items in by_loc.items():
        idx = np.array([i for i, _ in items], dtype=np.int64)
        p = np.array([q for _, q in items], dtype=np.int64)
        w = (idx >> 6).astype(np.intp)
        bit = _ONE << (idx & 63).astype(np.uint64)
        k = kinds[loc]
        if k in ("I", "M"):
            events[loc] = (w, bit)
        elif k in _ONE_QUBIT:
            bx, bz = _pauli_bits(p)
            events[loc] = (w, bit * bx, bit * bz)
        else:
            ax, az = _pauli_bits(p >> 2)
            bx, bz = _pauli_bits(p & 3)
            events[loc] = (w, bit * ax, bit * az, bit * bx, bit * bz)
    eng = _Engine(circ, W)
    eng.run(events)

    def unpack(a):
        return np.unpackbits(a.view(np.uint8), bitorder="little")[:T].astype(bool)

    return unpack(eng.fail), unpack(eng.flagged)
