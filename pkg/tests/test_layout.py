from collections import Counter

import pytest
from hypothesis import given, strategies as st

from segchain.layout import build_layout, patch_lattice, schedule_protocol, schedule_round
from segchain.protocols import build_protocol, space_time_blocks

sizes = st.sampled_from([5, 7, 9, 11, 13])


def test_s5_gives_d3_with_13_data():
    lay = build_layout(5)
    assert lay.code_distance == 3
    assert lay.n_data == 13


def test_s7_gives_d5_with_41_data():
    assert build_layout(7).n_data == 41


@pytest.mark.parametrize("s", [4, 3, 0])
def test_small_segments_rejected(s):
    with pytest.raises(ValueError):
        build_layout(s)


def test_d3_round_has_25_steps_split_10_15():
    sch = schedule_round(build_layout(5))
    assert sch.step_count == 25
    x_last = max(s.measure_step for s in sch.stabilizers if s.kind == "X")
    assert x_last + 1 == 10


@given(sizes, st.integers(1, 3))
def test_layout_invariants(s, n_logical):
    lay = build_layout(s, n_logical)
    d = lay.code_distance
    assert d == s - 2
    assert lay.n_data == n_logical * (d * d + (d - 1) ** 2)
    for col in lay.columns:
        j = col.index % lay.logical_qubit_extent
        assert col.kind == ("long" if j % 2 == 0 else "short")
        if col.kind == "long":
            assert len(col.data_qubits) == d and col.unused_qubit is None
        else:
            assert len(col.data_qubits) == d - 1 and col.unused_qubit is not None
    every = [q for c in lay.columns for q in c.data_qubits + c.shuttles] + lay.unused_qubits
    assert len(every) == len(set(every)) == lay.n_qubits


@given(sizes)
def test_round_invariants(s):
    lay = build_layout(s)
    sch = schedule_round(lay)
    d = lay.code_distance
    assert sch.step_count == 5 * (2 * (s - 2) - 1)
    assert {len(st_.qubits) for st_ in sch.stabilizers} <= {3, 4}
    n_x = sum(1 for st_ in sch.stabilizers if st_.kind == "X")
    n_z = sum(1 for st_ in sch.stabilizers if st_.kind == "Z")
    assert n_x == n_z == d * (d - 1)
    per_x, per_z = Counter(), Counter()
    for st_ in sch.stabilizers:
        (per_x if st_.kind == "X" else per_z).update(st_.qubits)
        cols = sorted({lay.position(q)[1] for q in st_.qubits})
        # the check's shuttles visit its home column and at most its two neighbours
        assert cols[-1] - cols[0] <= 2 and st_.col in cols
    assert max(per_x.values()) <= 2 and max(per_z.values()) <= 2
    for step in sch.steps:
        segs = Counter(op.segment for op in step if op.kind == "cnot")
        assert all(v == 1 for v in segs.values())
        for op in step:
            if op.kind == "move":
                assert abs(op.segment - lay.segment_of(op.qubits[0])) <= 1
        busy = [q for op in step if op.kind != "move" for q in op.qubits]
        assert len(busy) == len(set(busy))


def test_shuttles_init_and_measured_once_per_row():
    lay = build_layout(5)
    sch = schedule_round(lay)
    inits = Counter(op.qubits[0] for step in sch.steps for op in step if op.kind == "init")
    meas = Counter(op.qubits[0] for step in sch.steps for op in step if op.kind == "measure")
    assert inits == meas
    rows = Counter()
    for st_ in sch.stabilizers:
        for q in st_.shuttles:
            rows[q] += 1
    assert inits == rows


def test_boundary_rows_drop_one_cnot():
    sch = schedule_round(build_layout(5))
    n_cnot = len(sch.cnots())
    # one shuttle-shuttle CNOT plus one CNOT per data qubit of each check
    assert n_cnot == sum(1 + len(s.qubits) for s in sch.stabilizers)
    assert any(len(s.qubits) == 3 for s in sch.stabilizers)


def test_data_qubits_idle_when_untouched():
    lay = build_layout(5)
    sch = schedule_round(lay)
    for step in sch.steps:
        touched = {q for op in step for q in op.qubits}
        assert set(sch.data_qubits) | set(lay.unused_qubits) <= touched


def test_cnot_protocol_has_4_steps_and_14_blocks():
    lay = build_layout(5, 5)
    out = schedule_protocol(lay, "cnot", 3)
    assert len(out) == 4
    assert all(len(h) == 3 for _, h in out)
    assert space_time_blocks(build_protocol("cnot", 3)) == 14


def test_protocol_needs_enough_patches():
    with pytest.raises(ValueError):
        schedule_protocol(build_layout(5, 2), "cnot", 3)


def test_state_transfer_and_hadamard_step_lists():
    lay = build_layout(5, 2)
    st_steps = schedule_protocol(lay, "state_transfer")
    assert len(st_steps) == 3 and all(len(h) == 3 for _, h in st_steps)
    had = schedule_protocol(lay, "hadamard")
    assert len(had) == 4
    assert "H" in had[-1][0].name or "hadamard" in had[-1][0].name.lower()


def test_patch_logicals_anticommute():
    lat = patch_lattice(build_layout(7))
    assert len(lat.logicals["X"] & lat.logicals["Z"]) % 2 == 1
