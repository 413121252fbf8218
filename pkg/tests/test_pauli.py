import itertools
from functools import reduce as freduce

import numpy as np
import pytest
from hypothesis import given, strategies as st

from segchain.pauli import (CliffordGate, PauliFrame, PauliOperator, StabilizerGroup, commutes,
                            conjugate, membership, multiply, reduce)

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]])
Z = np.array([[1, 0], [0, -1]])
Y = 1j * X @ Z
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def dense(p: PauliOperator) -> np.ndarray:
    mats = []
    for q in range(p.n):
        xb, zb = (p.x >> q) & 1, (p.z >> q) & 1
        mats.append([[I2, Z], [X, Y]][xb][zb])
    # qubit 0 is the most significant factor
    return freduce(np.kron, mats)


def dense_gate(g: CliffordGate, n: int) -> np.ndarray:
    dim = 2 ** n
    U = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        if g.kind == "CNOT":
            c, t = g.qubits
            bits[t] ^= bits[c]
            U[sum(b << (n - 1 - q) for q, b in enumerate(bits)), col] = 1
        elif g.kind == "SWAP":
            a, b = g.qubits
            bits[a], bits[b] = bits[b], bits[a]
            U[sum(v << (n - 1 - q) for q, v in enumerate(bits)), col] = 1
    if g.kind == "H":
        (q,) = g.qubits
        U = freduce(np.kron, [H if k == q else I2 for k in range(n)])
    return U


def same_up_to_phase(A, B) -> bool:
    k = np.flatnonzero(np.abs(B.ravel()) > 1e-9)[0]
    ph = A.ravel()[k] / B.ravel()[k]
    return abs(abs(ph) - 1) < 1e-9 and np.allclose(A, ph * B)


paulis = st.integers(1, 4).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, 2 ** n - 1), st.integers(0, 2 ** n - 1))
).map(lambda t: PauliOperator(*t))


def pair(n):
    m = st.integers(0, 2 ** n - 1)
    return st.tuples(st.builds(PauliOperator, st.just(n), m, m), st.builds(PauliOperator, st.just(n), m, m))


pairs = st.integers(1, 4).flatmap(pair)


def test_x_times_z_is_y():
    assert multiply(PauliOperator.from_string("X"), PauliOperator.from_string("Z")) == PauliOperator(1, 1, 1)


def test_commutation_examples():
    assert not commutes(PauliOperator.from_string("X"), PauliOperator.from_string("Z"))
    assert commutes(PauliOperator.from_string("XI"), PauliOperator.from_string("XX"))
    assert not commutes(PauliOperator.from_string("ZIII"), PauliOperator.from_string("XXXX"))


def test_length_mismatch():
    with pytest.raises(ValueError):
        multiply(PauliOperator(1, 1), PauliOperator(2, 1))
    with pytest.raises(ValueError):
        commutes(PauliOperator(1, 1), PauliOperator(2, 1))


def test_mask_bounds():
    with pytest.raises(ValueError):
        PauliOperator(2, 4, 0)


@given(paulis)
def test_involution(p):
    assert (p * p).is_identity()
    assert p * PauliOperator.identity(p.n) == p


@given(pairs)
def test_product_matches_matrices(pq):
    p, q = pq
    assert same_up_to_phase(dense(p) @ dense(q), dense(p * q))


@given(pairs)
def test_commutation_matches_matrices(pq):
    p, q = pq
    A, B = dense(p), dense(q)
    assert commutes(p, q) == np.allclose(A @ B, B @ A)


@given(paulis)
def test_identity_iff_masks_zero(p):
    assert p.is_identity() == (p.x == 0 and p.z == 0)
    assert PauliOperator.from_string(p.to_string()) == p


def test_conjugation_rules():
    f = PauliFrame.from_pauli(PauliOperator.from_string("XI"))
    conjugate(f, CliffordGate("CNOT", (0, 1)))
    assert f.to_pauli() == PauliOperator.from_string("XX")
    f = PauliFrame.from_pauli(PauliOperator.from_string("ZI"))
    conjugate(f, CliffordGate("CNOT", (0, 1)))
    assert f.to_pauli() == PauliOperator.from_string("ZI")
    assert conjugate(PauliOperator.from_string("X"), CliffordGate("H", (0,))) == PauliOperator.from_string("Z")


def test_invalid_qubit():
    with pytest.raises(IndexError):
        conjugate(PauliFrame(2), CliffordGate("CNOT", (0, 2)))
    with pytest.raises(ValueError):
        conjugate(PauliFrame(2), CliffordGate("S", (0,)))


gates3 = st.one_of(
    st.permutations(range(3)).map(lambda p: CliffordGate("CNOT", (p[0], p[1]))),
    st.permutations(range(3)).map(lambda p: CliffordGate("SWAP", (p[0], p[1]))),
    st.integers(0, 2).map(lambda q: CliffordGate("H", (q,))),
)


@given(st.builds(PauliOperator, st.just(3), st.integers(0, 7), st.integers(0, 7)), gates3)
def test_conjugation_matches_matrices(p, g):
    U = dense_gate(g, 3)
    assert same_up_to_phase(U @ dense(p) @ U.conj().T, dense(conjugate(p, g)))


def span(gens, n):
    out = set()
    for coeffs in itertools.product((0, 1), repeat=len(gens)):
        acc = PauliOperator.identity(n)
        for c, g in zip(coeffs, gens):
            if c:
                acc = acc * g
        out.add(acc)
    return out


@st.composite
def groups(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(0, 4))
    # commuting generators: random products of Z-type and a fixed X-type set
    gens = [PauliOperator(n, 0, draw(st.integers(0, 2 ** n - 1))) for _ in range(m)]
    return StabilizerGroup(n, gens)


@given(groups(), st.integers(0, 255), st.integers(0, 255))
def test_reduce_preserves_span(g, xm, zm):
    r = reduce(g)
    assert span(r.generators, g.n) == span(g.generators, g.n)
    # reduced generators are independent
    assert len(span(r.generators, g.n)) == 2 ** len(r.generators)
    p = PauliOperator(g.n, xm % (1 << g.n), zm % (1 << g.n))
    assert membership(p, g) == (p in span(g.generators, g.n))


def test_group_check():
    g = StabilizerGroup(2, [PauliOperator.from_string("XX"), PauliOperator.from_string("ZZ")],
                        {"Z": PauliOperator.from_string("ZI")})
    with pytest.raises(ValueError):
        g.check()
    StabilizerGroup(2, [PauliOperator.from_string("XX"), PauliOperator.from_string("ZZ")]).check()


def test_numpy_indices_give_exact_masks():
    import numpy as np

    p = PauliOperator.from_sparse(100, xs=np.array([0, 70, 99]), zs=np.arange(60, 66))
    assert isinstance(p.x, int) and p.support == [0, 60, 61, 62, 63, 64, 65, 70, 99]
    assert not PauliOperator.single(100, np.int64(70), "Z").commutes(p)
