import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from segchain import gauge as G
from segchain.analysis import TABLE_II
from segchain.gauge import (GaugeCircuit, GaugeConfig, GaugeResult, LogicalRates, build_gauge_circuit,
                            count_failures, crossing, data_offsets, fault_outcomes, fit_gauge_scaling,
                            fit_level_curve, gauge_circuit, location_kinds, logical_index,
                            read_level_csv, run_with_faults, simulate_gauge_cnot, single_faults,
                            write_level_csv)
from segchain.pauli import PauliFrame, PauliOperator
from segchain.sweep import gauge_chunk

N_PAULI = {"I": 1, "M": 1, "T": 3, "W": 3, "C": 15, "S": 15}


# -- rates and sizes ------------------------------------------------------------

def test_rate_relations():
    r = LogicalRates(1e-7, 9)
    assert r.p_IM == pytest.approx(9e-7)
    assert r.p_CNOT == pytest.approx(14 * 9e-7)
    assert r.p_SWAP == pytest.approx(3 * r.p_CNOT)
    assert r.p0 == pytest.approx(9e-7)
    assert [r.memory(k) for k in ("I", "C", "S")] == pytest.approx([9e-7, 36e-7, 108e-7])
    assert LogicalRates.from_p_cnot(r.p_CNOT, 9).p_L == pytest.approx(1e-7)


def test_rates_validated():
    with pytest.raises(ValueError):
        LogicalRates(-1e-9, 3)
    with pytest.raises(ValueError):
        LogicalRates.from_p_cnot(0.5)  # p_SWAP > 1


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_config_sizes(n):
    c = GaugeConfig(n)
    assert c.distance == 2 ** n
    assert c.block_size == 6 ** n
    assert c.surface_qubits == 4 * 6 ** n


def test_surface_overhead_levels_3_4():
    assert GaugeConfig(3).surface_qubits == 864
    assert GaugeConfig(4).surface_qubits == 5184


def test_level_out_of_range():
    with pytest.raises(ValueError):
        GaugeConfig(0)
    with pytest.raises(ValueError):
        GaugeConfig(5)


# -- code algebra ---------------------------------------------------------------

def _block_ops(j, kind, idx_kind):
    """Pauli ``kind`` on the level-j logical ``idx_kind`` support, 4**j qubits."""
    n = 4 ** j
    return PauliOperator.from_sparse(n, **{("xs" if kind == "X" else "zs"): logical_index(j, idx_kind)})


def _gauges(j):
    """All gauge operators of a level-j block, on 4**j qubits in data_offsets order."""
    n = 4 ** j
    if j == 0:
        return []
    sub = 4 ** (j - 1)
    out = []
    for c in range(4):
        for g in _gauges(j - 1):
            out.append(PauliOperator.from_sparse(n, xs=[c * sub + q for q in range(sub) if g.x >> q & 1],
                                                 zs=[c * sub + q for q in range(sub) if g.z >> q & 1]))

    def lift(kind, units):
        li = logical_index(j - 1, kind)
        qs = [u * sub + int(q) for u in units for q in li]
        return PauliOperator.from_sparse(n, **{("xs" if kind == "X" else "zs"): qs})

    out += [lift("X", (0, 1)), lift("X", (2, 3)), lift("Z", (0, 2)), lift("Z", (1, 3))]
    return out


@pytest.mark.parametrize("j", [1, 2, 3])
def test_logicals_commute_with_every_gauge(j):
    lx, lz = _block_ops(j, "X", "X"), _block_ops(j, "Z", "Z")
    assert not lx.commutes(lz)
    for g in _gauges(j):
        assert g.commutes(lx) and g.commutes(lz)


def test_level_one_layout():
    assert list(data_offsets(1)) == [0, 2, 3, 5]
    assert sorted(data_offsets(2)) == sorted({6 * a + b for a in (0, 2, 3, 5) for b in (0, 2, 3, 5)})
    assert list(logical_index(1, "Z")) == [0, 1]
    assert list(logical_index(1, "X")) == [0, 2]
    assert len(logical_index(3, "X")) == 8


# -- circuit --------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
def test_circuit_is_nearest_neighbour(n):
    c = gauge_circuit(n)
    assert c.is_nn()
    assert c.n_qubits == 2 * 6 ** n


@pytest.mark.parametrize("n", [1, 2])
def test_transits_precede_gauge_cnots(n):
    c = gauge_circuit(n)
    nxt = {}
    for op in reversed(c.ops):
        if op[0] == "T":
            assert nxt.get(op[1]) == "C"
        elif op[0] in ("C", "S"):
            nxt[op[1]] = nxt[op[2]] = op[0]
    assert "T" not in build_gauge_circuit(n, transits=False).counts()


def test_level_one_transit_count():
    # 4 ECs, 8 gauge CNOTs each, 3 transits of a single-site ancilla per CNOT
    assert gauge_circuit(1).counts()["T"] == 4 * 8 * 3


def _quantum_only(circ):
    ops = [op for op in circ.ops if op[0] in ("I", "M", "C", "S", "T", "W")]
    return GaugeCircuit(circ.n, ops, circ.n_qubits, 0, circ.n_slots, circ.depth, circ.live_init)


@given(st.lists(st.tuples(st.integers(0, 10 ** 6), st.integers(1, 15)), min_size=1, max_size=12,
                unique_by=lambda t: t[0]))
def test_frame_propagation_matches_reference(faults):
    circ = _quantum_only(gauge_circuit(1))
    kinds = location_kinds(circ)
    L = len(kinds)
    faults = {loc % L: p for loc, p in faults}
    one = np.uint64(1)
    w = np.zeros(1, dtype=np.intp)
    events = [None] * L
    for loc, p in faults.items():
        k = kinds[loc]
        if k in ("I", "M"):
            events[loc] = (w, np.array([one]))
        elif k in ("T", "W"):
            q = p % 3 + 1
            events[loc] = (w, np.array([one * (q in (1, 2))]), np.array([one * (q in (2, 3))]))
        else:
            a, b = p >> 2, p & 3
            events[loc] = tuple([w] + [np.array([one * v]) for v in
                                       (a in (1, 2), a in (2, 3), b in (1, 2), b in (2, 3))])
    eng = G._Engine(circ, 1)
    eng.run(events)

    # reference: walk the same ops with the generic Pauli frame
    fr = PauliFrame(circ.n_qubits)
    meas = {}
    n = circ.n_qubits
    li = 0
    for op in circ.ops:
        k = op[0]
        hit = faults.get(li)
        if k == "I":
            fr.reset(op[1])
            if hit is not None:
                fr.apply_pauli(PauliOperator.single(n, op[1], "X" if op[2] == "Z" else "Z"))
        elif k == "M":
            bit = fr.x_bit(op[1]) if op[2] == "Z" else fr.z_bit(op[1])
            meas[op[3]] = bit ^ (hit is not None)
        elif k in ("T", "W"):
            if hit is not None:
                fr.apply_pauli(PauliOperator.single(n, op[1], "XYZ"[hit % 3]))
        elif k in ("C", "S"):
            if k == "C":
                fr.cnot(op[1], op[2])
            else:
                fr.swap(op[1], op[2])
            if hit is not None:
                for q, v in ((op[1], hit >> 2), (op[2], hit & 3)):
                    if v:
                        fr.apply_pauli(PauliOperator.single(n, q, "IXYZ"[v]))
        li += 1
    assert [int(eng.x[q][0]) for q in range(n)] == [fr.x_bit(q) for q in range(n)]
    assert [int(eng.z[q][0]) for q in range(n)] == [fr.z_bit(q) for q in range(n)]
    assert {s: int(v[0]) for s, v in eng.slots.items()} == meas


# -- failures -------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 3])
def test_zero_noise_never_fails(n):
    r = simulate_gauge_cnot(n, LogicalRates(0.0, 1), 2000, seed=1)
    assert r.failures == 0
    assert run_with_faults(gauge_circuit(n), []) == (False, False)


def test_level_one_detects_but_cannot_correct():
    c = gauge_circuit(1)
    fa, fl = fault_outcomes(c, single_faults(c))
    assert fl.sum() > 0          # most single faults are caught by the flag
    assert (fa & ~fl).sum() > 0  # distance two: some still slip through


def test_level_two_has_failing_single_faults():
    c = gauge_circuit(2)
    fa, _ = fault_outcomes(c, single_faults(c))
    assert fa.sum() > 0


def test_level_three_corrects_every_single_fault():
    c = gauge_circuit(3)
    faults = single_faults(c)
    fa, fl = fault_outcomes(c, faults)
    assert len(faults) > 300_000
    assert not fa.any() and not fl.any()


def test_batched_and_single_trial_runs_agree():
    c = gauge_circuit(2)
    rng = np.random.default_rng(0)
    faults = single_faults(c)
    fa, fl = fault_outcomes(c, faults)
    for i in rng.choice(len(faults), 60, replace=False):
        assert run_with_faults(c, [faults[i]]) == (bool(fa[i]), bool(fl[i]))


def _first_order(n, p):
    c = gauge_circuit(n)
    faults = single_faults(c)
    fa, _ = fault_outcomes(c, faults)
    kinds = location_kinds(c)
    probs = G._location_probs(c, LogicalRates.from_p_cnot(p))
    return sum(probs[loc] * fa[i] / N_PAULI[kinds[loc]] for i, (loc, _) in enumerate(faults))


@pytest.mark.parametrize("n, p, trials", [(1, 1e-5, 400_000), (2, 1e-6, 1_000_000)])
def test_sampler_matches_first_order_enumeration(n, p, trials):
    want = _first_order(n, p) * trials
    got = count_failures(gauge_circuit(n), LogicalRates.from_p_cnot(p), trials, np.random.default_rng(11))
    assert abs(got - want) < 4 * math.sqrt(want) + 0.02 * want


def test_failure_rate_increases_with_p():
    c = gauge_circuit(1)
    Ps = [count_failures(c, LogicalRates.from_p_cnot(p), 50_000, np.random.default_rng(3))
          for p in (3e-5, 1e-4, 3e-4, 1e-3)]
    assert Ps == sorted(Ps) and Ps[0] < Ps[-1]


def test_chunks_are_deterministic():
    assert gauge_chunk(2, 1e-4, 5000, 7, 3) == gauge_chunk(2, 1e-4, 5000, 7, 3)
    assert simulate_gauge_cnot(1, LogicalRates.from_p_cnot(1e-4), 3000, seed=5).failures == \
        simulate_gauge_cnot(1, LogicalRates.from_p_cnot(1e-4), 3000, seed=5).failures


def test_weight_is_sum_of_location_probabilities():
    c = gauge_circuit(1)
    r = LogicalRates.from_p_cnot(1e-4)
    assert c.weight(r) == pytest.approx(sum(G._location_probs(c, r)))
    assert c.n_locations() == len(location_kinds(c))


def test_memory_noise_composes_as_depolarizing():
    # three rounds of p each equal one channel of the composed rate
    p = 0.01
    one = 1 - 4 * p / 3
    assert G._compose_depolarizing(p, 3) == pytest.approx(0.75 * (1 - one ** 3))


# -- fits -----------------------------------------------------------------------

@given(st.floats(0.8, 3.5), st.floats(0.0, 40.0))
def test_fit_recovers_synthetic_power_law(kappa, eta):
    ps = np.logspace(-7, -5, 6)
    pts = [(p, math.exp(kappa * math.log(p) + eta), 0.0) for p in ps]
    pts = [q for q in pts if 0 < q[1]]
    f = fit_gauge_scaling(pts)
    assert f.kappa == pytest.approx(kappa, rel=1e-9, abs=1e-9)
    assert f.eta == pytest.approx(eta, rel=1e-9, abs=1e-7)


def test_table_ii_crossing_near_4e_6():
    f2 = G.GaugeFit(2, *TABLE_II[2][:2], 0, 0, None, [])
    f3 = G.GaugeFit(3, *TABLE_II[3][:2], 0, 0, None, [])
    x = crossing(f2, f3)
    assert x == pytest.approx(math.exp((5.8552 - 18.7274) / (2.0717 - 1.0303)))
    assert 3e-6 < x < 6e-6


def test_fit_level_curve_filters_rows():
    rows = [{"n": 1, "p_CNOT": p, "trials": 10 ** 6, "failures": int(P * 1e6), "P_CNOT": P,
             "stderr": math.sqrt(P * (1 - P) / 1e6)}
            for p, P in ((1e-5, 1e-3), (1e-4, 1e-2), (1e-3, 1e-1), (1e-2, 0.9))]
    f = fit_level_curve(rows, 1)
    assert len(f.points) == 3
    assert f.kappa == pytest.approx(1.0, abs=1e-6)


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_gauge_scaling([(1e-5, 1e-3, 1e-5), (1e-4, 1e-2, 1e-4)])


def test_level_csv_round_trip(tmp_path):
    res = [GaugeResult(1, 3e-5, 1000, 14), GaugeResult(2, 1e-4, 2000, 0)]
    path = tmp_path / "levels.csv"
    write_level_csv(path, res, {"schema": "gauge-level/1"})
    rows = read_level_csv(path)
    assert [r["failures"] for r in rows] == [14, 0]
    assert rows[0]["p_CNOT"] == 3e-5 and rows[0]["P_CNOT"] == 0.014
    assert path.read_text().startswith("# schema: gauge-level/1\n")
