"""
Binary symplectic Pauli algebra.

Pauli operators are stored as a pair of integer bit masks (``x`` and ``z``),
one bit per qubit, with the global phase dropped. A ``Y`` on qubit ``i`` has
bit ``i`` set in both masks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple


def _popcount(v: int) -> int:
    return bin(v).count("1")


def _bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class PauliOperator:
    """Phase-free Pauli operator on ``n`` qubits."""

    n: int
    x: int = 0
    z: int = 0

    def __post_init__(self):
        limit = 1 << self.n
        if self.x < 0 or self.z < 0 or self.x >= limit or self.z >= limit:
            raise ValueError(f"mask exceeds {self.n} qubits")

    @classmethod
    def identity(cls, n: int) -> PauliOperator:
        return cls(n)

    @classmethod
    def from_string(cls, label: str) -> PauliOperator:
        """Build from a dense label such as ``"XIZY"`` (qubit 0 first)."""
        x = z = 0
        for i, ch in enumerate(label.upper()):
            if ch in "XY":
                x |= 1 << i
            if ch in "ZY":
                z |= 1 << i
            if ch not in "IXYZ_":
                raise ValueError(f"bad Pauli character {ch!r}")
        return cls(len(label), x, z)

    @classmethod
    def from_sparse(cls, n: int, xs: Iterable[int] = (), zs: Iterable[int] = (),
                    ys: Iterable[int] = ()) -> PauliOperator:
        # int(): numpy indices would make fixed-width masks
        x = z = 0
        for q in xs:
            x ^= 1 << int(q)
        for q in zs:
            z ^= 1 << int(q)
        for q in ys:
            x ^= 1 << int(q)
            z ^= 1 << int(q)
        return cls(n, x, z)

    @classmethod
    def single(cls, n: int, qubit: int, kind: str) -> PauliOperator:
        kind = kind.upper()
        bit = 1 << int(qubit)
        return cls(n, bit if kind in "XY" else 0, bit if kind in "ZY" else 0)

    def _check(self, other: PauliOperator) -> None:
        if self.n != other.n:
            raise ValueError(f"qubit count mismatch: {self.n} != {other.n}")

    def __mul__(self, other: PauliOperator) -> PauliOperator:
        self._check(other)
        return PauliOperator(self.n, self.x ^ other.x, self.z ^ other.z)

    def commutes(self, other: PauliOperator) -> bool:
        self._check(other)
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    @property
    def weight(self) -> int:
        return _popcount(self.x | self.z)

    @property
    def support(self) -> list[int]:
        return _bits(self.x | self.z)

    def x_part(self) -> PauliOperator:
        return PauliOperator(self.n, self.x, 0)

    def z_part(self) -> PauliOperator:
        return PauliOperator(self.n, 0, self.z)

    def restrict(self, qubits: Iterable[int]) -> PauliOperator:
        mask = 0
        for q in qubits:
            mask |= 1 << q
        return PauliOperator(self.n, self.x & mask, self.z & mask)

    def to_string(self) -> str:
        chars = []
        for i in range(self.n):
            xb = (self.x >> i) & 1
            zb = (self.z >> i) & 1
            chars.append("IXZY"[xb + 2 * zb])
        return "".join(chars)

    def to_sparse(self) -> str:
        if self.is_identity():
            return "I"
        parts = []
        for q in self.support:
            xb = (self.x >> q) & 1
            zb = (self.z >> q) & 1
            parts.append(f"{'IXZY'[xb + 2 * zb]}{q}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"PauliOperator({self.n}, {self.to_sparse()!r})"


def multiply(p: PauliOperator, q: PauliOperator) -> PauliOperator:
    return p * q


def commutes(p: PauliOperator, q: PauliOperator) -> bool:
    return p.commutes(q)


class CliffordGate(NamedTuple):
    """A Clifford gate acting on the listed qubits.

    ``kind`` is one of ``"CNOT"`` (control, target), ``"H"``, ``"SWAP"``.
    """

    kind: str
    qubits: tuple[int, ...]


class PauliFrame:
    """Mutable error frame tracked through a Clifford circuit.

    Only one simulation trial owns a frame; copy before sharing.
    """

    __slots__ = ("n", "x", "z")

    def __init__(self, n: int, x: int = 0, z: int = 0):
        self.n = n
        self.x = x
        self.z = z

    @classmethod
    def from_pauli(cls, p: PauliOperator) -> PauliFrame:
        return cls(p.n, p.x, p.z)

    def to_pauli(self) -> PauliOperator:
        return PauliOperator(self.n, self.x, self.z)

    def copy(self) -> PauliFrame:
        return PauliFrame(self.n, self.x, self.z)

    def apply_pauli(self, p: PauliOperator) -> None:
        if p.n != self.n:
            raise ValueError(f"qubit count mismatch: {self.n} != {p.n}")
        self.x ^= p.x
        self.z ^= p.z

    def _valid(self, q: int) -> None:
        if not 0 <= q < self.n:
            raise IndexError(f"qubit {q} outside frame of {self.n} qubits")

    def cnot(self, c: int, t: int) -> None:
        self._valid(c)
        self._valid(t)
        if c == t:
            raise ValueError("CNOT control and target coincide")
        if (self.x >> c) & 1:
            self.x ^= 1 << t
        if (self.z >> t) & 1:
            self.z ^= 1 << c

    def h(self, q: int) -> None:
        self._valid(q)
        xb = (self.x >> q) & 1
        zb = (self.z >> q) & 1
        if xb != zb:
            self.x ^= 1 << q
            self.z ^= 1 << q

    def swap(self, a: int, b: int) -> None:
        self._valid(a)
        self._valid(b)
        for attr in ("x", "z"):
            v = getattr(self, attr)
            ba = (v >> a) & 1
            bb = (v >> b) & 1
            if ba != bb:
                setattr(self, attr, v ^ ((1 << a) | (1 << b)))

    def reset(self, q: int) -> None:
        self._valid(q)
        m = ~(1 << q)
        self.x &= m
        self.z &= m

    def x_bit(self, q: int) -> int:
        return (self.x >> q) & 1

    def z_bit(self, q: int) -> int:
        return (self.z >> q) & 1

    def __repr__(self) -> str:
        return f"PauliFrame({self.to_pauli().to_sparse()!r})"


def conjugate(frame: PauliFrame | PauliOperator, gate: CliffordGate):
    """Propagate ``frame`` through ``gate``.

    A :class:`PauliFrame` is updated in place and returned; a
    :class:`PauliOperator` yields a new operator.
    """
    if isinstance(frame, PauliOperator):
        f = PauliFrame.from_pauli(frame)
        conjugate(f, gate)
        return f.to_pauli()
    kind = gate.kind.upper()
    if kind == "CNOT":
        frame.cnot(*gate.qubits)
    elif kind == "H":
        (q,) = gate.qubits
        frame.h(q)
    elif kind == "SWAP":
        frame.swap(*gate.qubits)
    else:
        raise ValueError(f"unsupported gate {gate.kind!r}")
    return frame


def _vec(p: PauliOperator) -> int:
    # x in the high half so that X-type pivots come first
    return (p.x << p.n) | p.z


def _unvec(n: int, v: int) -> PauliOperator:
    return PauliOperator(n, v >> n, v & ((1 << n) - 1))


def row_reduce(vectors: Iterable[int]) -> list[int]:
    """Reduced row-echelon form of GF(2) row vectors stored as ints.

    Rows are sorted by descending pivot; zero rows are dropped.
    """
    rows: list[int] = []
    for v in vectors:
        for r in rows:
            if v ^ r < v:
                v ^= r
        if v:
            # eliminate the new pivot from existing rows
            top = v.bit_length() - 1
            rows = [r ^ v if (r >> top) & 1 else r for r in rows]
            rows.append(v)
            rows.sort(reverse=True)
    return rows


def reduce_vector(v: int, rows: list[int]) -> int:
    """Remainder of ``v`` modulo the span of reduced ``rows``."""
    for r in rows:
        if v ^ r < v:
            v ^= r
    return v


@dataclass
class StabilizerGroup:
    """Generators of an abelian Pauli group plus named logical representatives."""

    n: int
    generators: list[PauliOperator] = field(default_factory=list)
    logical_reps: dict[str, PauliOperator] = field(default_factory=dict)

    def check(self) -> None:
        """Raise ``ValueError`` if the group invariants are violated."""
        gens = self.generators
        for i, g in enumerate(gens):
            for h in gens[i + 1:]:
                if not g.commutes(h):
                    raise ValueError(f"generators {g} and {h} anticommute")
        for name, rep in self.logical_reps.items():
            for g in gens:
                if not rep.commutes(g):
                    raise ValueError(f"logical {name} anticommutes with {g}")

    def _rows(self) -> list[int]:
        return row_reduce(_vec(g) for g in self.generators)

    def reduce(self) -> StabilizerGroup:
        rows = self._rows()
        gens = [_unvec(self.n, r) for r in rows]
        return StabilizerGroup(self.n, gens, dict(self.logical_reps))

    def rank(self) -> int:
        return len(self._rows())

    def contains(self, p: PauliOperator) -> bool:
        return reduce_vector(_vec(p), self._rows()) == 0

    def equivalent(self, p: PauliOperator, q: PauliOperator) -> bool:
        """True if ``p`` and ``q`` differ by a group element."""
        return self.contains(p * q)

    def canonical(self, p: PauliOperator) -> PauliOperator:
        return _unvec(self.n, reduce_vector(_vec(p), self._rows()))


def reduce(group: StabilizerGroup) -> StabilizerGroup:
    return group.reduce()


def membership(p: PauliOperator, group: StabilizerGroup) -> bool:
    return group.contains(p)
