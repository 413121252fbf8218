"""
Pauli-frame Monte Carlo for repeated stabiliser rounds.

A round schedule is compiled once into a flat instruction list.  Three engines
run on it:

* :func:`run_trial` -- one trial, noise sampled at every location, integer
  bit-mask frame.  The reference engine.
* :func:`enumerate_single_faults` -- every single fault of one round pushed
  through the round in parallel (one bit column per fault).
* :class:`FaultSampler` -- many trials at once by drawing which channels fire
  and XOR-ing their enumerated signatures.  Frames are linear over GF(2), so
  this reproduces the reference engine's statistics exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .layout import ChainLayout, RoundSchedule
from .noise import PAULI1, PAULI2, NoiseParams
from .pauli import PauliFrame, PauliOperator

# opcodes
RESET, CX, MEAS_X, MEAS_Z, END_STEP = 0, 1, 2, 3, 4
DEP1, DEP2, XERR, ZERR, MFLIP = 10, 11, 12, 13, 14
NOISE_OPS = (DEP1, DEP2, XERR, ZERR, MFLIP)

CHANNEL_NAMES = {DEP1: "dep1", DEP2: "dep2", XERR: "init_x", ZERR: "init_z", MFLIP: "meas_flip"}


@dataclass(frozen=True)
class Instruction:
    op: int
    a: int = -1
    b: int = -1
    p: float = 0.0
    step: int = -1
    label: str = ""  # idle | gate | init | measure


@dataclass(frozen=True)
class RoundCircuit:
    """One compiled noisy round."""

    instructions: tuple[Instruction, ...]
    n_qubits: int
    n_slots: int
    stab_slots: tuple[tuple[int, int], ...]
    stab_kinds: tuple[str, ...]
    stab_supports: tuple[int, ...]  # data-qubit bit masks
    data_mask: int
    logical_x: int  # support of the X logical (row), probes phase errors
    logical_z: int  # support of the Z logical (column), probes bit errors
    n_steps: int

    @property
    def n_stabs(self) -> int:
        return len(self.stab_kinds)

    def channels(self) -> list[int]:
        return [i for i, ins in enumerate(self.instructions) if ins.op in NOISE_OPS]


def _mask(qubits: Iterable[int]) -> int:
    m = 0
    for q in qubits:
        m |= 1 << q
    return m


def compile_round(schedule: RoundSchedule, noise: NoiseParams) -> RoundCircuit:
    ins: list[Instruction] = []
    slot_of: dict[tuple[int, int], int] = {}
    for t, step in enumerate(schedule.steps):
        for op in step:
            if op.kind == "init":
                (q,) = op.qubits
                ins.append(Instruction(RESET, q, step=t, label="init"))
                if op.basis == "X":
                    # prepared as |0> then rotated: the flip lands as Z, plus H noise
                    ins.append(Instruction(ZERR, q, p=noise.epsI, step=t, label="init"))
                    ins.append(Instruction(DEP1, q, p=noise.eps1, step=t, label="init"))
                else:
                    ins.append(Instruction(XERR, q, p=noise.epsI, step=t, label="init"))
            elif op.kind == "cnot":
                c, tq = op.qubits
                ins.append(Instruction(CX, c, tq, step=t, label="gate"))
                ins.append(Instruction(DEP2, c, tq, p=noise.eps2, step=t, label="gate"))
            elif op.kind == "measure":
                (q,) = op.qubits
                slot = len(slot_of)
                slot_of[(t, q)] = slot
                if op.basis == "X":
                    ins.append(Instruction(DEP1, q, p=noise.eps1, step=t, label="measure"))
                    ins.append(Instruction(MEAS_X, q, slot, step=t, label="measure"))
                else:
                    ins.append(Instruction(MEAS_Z, q, slot, step=t, label="measure"))
                ins.append(Instruction(MFLIP, slot, p=noise.epsM, step=t, label="measure"))
            elif op.kind == "idle":
                (q,) = op.qubits
                ins.append(Instruction(DEP1, q, p=noise.eps0, step=t, label="idle"))
            elif op.kind == "move":
                continue
            else:
                raise ValueError(f"unknown step op {op.kind!r}")
        ins.append(Instruction(END_STEP, step=t))
    stab_slots = tuple((slot_of[(s.measure_step, s.shuttles[0])], slot_of[(s.measure_step, s.shuttles[1])])
                       for s in schedule.stabilizers)
    logicals = schedule.logicals
    return RoundCircuit(
        tuple(ins), schedule.n_qubits, len(slot_of), stab_slots,
        tuple(s.kind for s in schedule.stabilizers),
        tuple(_mask(s.qubits) for s in schedule.stabilizers),
        _mask(schedule.data_qubits),
        _mask(logicals.get("X", ())), _mask(logicals.get("Z", ())),
        len(schedule.steps),
    )


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def syndrome_of(circuit: RoundCircuit, frame_x: int, frame_z: int) -> list[int]:
    """Ideal stabiliser flips caused by a data-qubit error."""
    out = []
    for kind, supp in zip(circuit.stab_kinds, circuit.stab_supports):
        out.append(_parity(frame_z & supp) if kind == "X" else _parity(frame_x & supp))
    return out


@dataclass
class SyndromeRecord:
    trial_id: int
    rounds: int
    detection_events: set[tuple[int, int]]
    final_frame: PauliOperator
    boundary_outcomes: tuple[int, ...]
    outcomes: list[list[int]] = field(default_factory=list, repr=False)

    def events_of_kind(self, circuit: RoundCircuit, kind: str) -> set[tuple[int, int]]:
        return {(s, r) for s, r in self.detection_events if circuit.stab_kinds[s] == kind}

    def phase_flip(self, circuit: RoundCircuit) -> int:
        """Parity of the uncorrected frame against the X logical."""
        return _parity(self.final_frame.z & circuit.logical_x)

    def bit_flip(self, circuit: RoundCircuit) -> int:
        return _parity(self.final_frame.x & circuit.logical_z)


@dataclass(frozen=True)
class FaultLocation:
    """Inject ``pauli`` at the end of ``step`` of ``round`` (step -1: round start)."""

    round: int
    step: int


def _apply_instruction(frame: PauliFrame, meas: list[int], ins: Instruction) -> None:
    op = ins.op
    if op == CX:
        frame.cnot(ins.a, ins.b)
    elif op == RESET:
        frame.reset(ins.a)
    elif op == MEAS_X:
        meas[ins.b] = frame.z_bit(ins.a)
    elif op == MEAS_Z:
        meas[ins.b] = frame.x_bit(ins.a)


def _sample_noise(frame: PauliFrame, meas: list[int], ins: Instruction, rng) -> None:
    if ins.p <= 0.0 or rng.random() >= ins.p:
        return
    op = ins.op
    if op == DEP1:
        x, z = PAULI1[rng.integers(3)]
        if x:
            frame.x ^= 1 << ins.a
        if z:
            frame.z ^= 1 << ins.a
    elif op == DEP2:
        x0, z0, x1, z1 = PAULI2[rng.integers(15)]
        frame.x ^= (x0 << ins.a) | (x1 << ins.b)
        frame.z ^= (z0 << ins.a) | (z1 << ins.b)
    elif op == XERR:
        frame.x ^= 1 << ins.a
    elif op == ZERR:
        frame.z ^= 1 << ins.a
    elif op == MFLIP:
        meas[ins.a] ^= 1


def simulate(circuit: RoundCircuit, rounds: int, rng: Optional[np.random.Generator] = None,
             injections: Sequence[tuple[FaultLocation, PauliOperator]] = (),
             trial_id: int = 0) -> SyndromeRecord:
    """Run ``rounds`` noisy rounds plus one perfect readout round."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    inj: dict[tuple[int, int], list[PauliOperator]] = {}
    for loc, p in injections:
        if not 0 <= loc.round < rounds or not -1 <= loc.step < circuit.n_steps:
            raise ValueError(f"invalid fault location {loc}")
        if p.n != circuit.n_qubits:
            raise ValueError("injected Pauli has wrong qubit count")
        inj.setdefault((loc.round, loc.step), []).append(p)
    frame = PauliFrame(circuit.n_qubits)
    prev = [0] * circuit.n_stabs
    events: set[tuple[int, int]] = set()
    outcomes = []
    for r in range(rounds):
        for p in inj.get((r, -1), ()):
            frame.apply_pauli(p)
        meas = [0] * circuit.n_slots
        for ins in circuit.instructions:
            if ins.op >= DEP1:
                if rng is not None:
                    _sample_noise(frame, meas, ins, rng)
            elif ins.op == END_STEP:
                for p in inj.get((r, ins.step), ()):
                    frame.apply_pauli(p)
            else:
                _apply_instruction(frame, meas, ins)
        cur = [meas[a] ^ meas[b] for a, b in circuit.stab_slots]
        for s in range(circuit.n_stabs):
            if cur[s] != prev[s]:
                events.add((s, r))
        outcomes.append(cur)
        prev = cur
    final = syndrome_of(circuit, frame.x, frame.z)
    for s in range(circuit.n_stabs):
        if final[s] != prev[s]:
            events.add((s, rounds))
    data = PauliOperator(circuit.n_qubits, frame.x & circuit.data_mask, frame.z & circuit.data_mask)
    return SyndromeRecord(trial_id, rounds, events, data, tuple(final), outcomes)


def run_trial(layout: ChainLayout, schedule: RoundSchedule, noise: NoiseParams, rounds: int,
              seed: int, trial_id: int = 0) -> SyndromeRecord:
    """One Monte Carlo trial; deterministic in ``(seed, trial_id)``."""
    circuit = compile_round(schedule, noise)
    rng = np.random.default_rng([seed, trial_id])
    return simulate(circuit, rounds, rng, trial_id=trial_id)


def inject_fault(layout: ChainLayout, schedule: RoundSchedule, location: FaultLocation,
                 pauli: PauliOperator, rounds: int = 2) -> SyndromeRecord:
    """Noiseless run with a single injected Pauli."""
    circuit = compile_round(schedule, NoiseParams(0, 0, 0, 0, 0, layout.code_distance))
    return simulate(circuit, rounds, None, [(location, pauli)])


@dataclass(frozen=True)
class FaultEntry:
    instruction: int  # index into the round's instructions
    step: int
    channel: str
    qubits: tuple[int, ...]
    pauli: PauliOperator  # on the full register; identity for measurement flips
    meas_flip: bool
    probability: float
    signature: frozenset[tuple[int, int]]  # (stabiliser, round offset 0|1)
    residual: PauliOperator  # data error left behind after the round

    @property
    def location(self) -> tuple[int, tuple[int, ...]]:
        return self.step, self.qubits


def _channel_faults(ins: Instruction):
    """Yield ``(x_bits, z_bits, meas_flip, prob)`` for each outcome of a channel."""
    if ins.op == DEP1:
        for x, z in PAULI1:
            yield ((ins.a, x),), ((ins.a, z),), False, ins.p / 3
    elif ins.op == DEP2:
        for x0, z0, x1, z1 in PAULI2:
            yield ((ins.a, x0), (ins.b, x1)), ((ins.a, z0), (ins.b, z1)), False, ins.p / 15
    elif ins.op == XERR:
        yield ((ins.a, 1),), (), False, ins.p
    elif ins.op == ZERR:
        yield (), ((ins.a, 1),), False, ins.p
    elif ins.op == MFLIP:
        yield (), (), True, ins.p


def propagate_faults(circuit: RoundCircuit):
    """Push every single fault of one round to the end of the round.

    Returns ``(meta, meas, res_x, res_z)`` where column ``j`` of the boolean
    arrays belongs to ``meta[j] = (instruction, x_bits, z_bits, flip, prob)``.
    """
    meta = []
    for i, ins in enumerate(circuit.instructions):
        if ins.op in NOISE_OPS:
            for xb, zb, flip, prob in _channel_faults(ins):
                meta.append((i, xb, zb, flip, prob))
    nf = len(meta)
    by_ins: dict[int, list[int]] = {}
    for j, m in enumerate(meta):
        by_ins.setdefault(m[0], []).append(j)
    x = np.zeros((circuit.n_qubits, nf), dtype=bool)
    z = np.zeros((circuit.n_qubits, nf), dtype=bool)
    meas = np.zeros((circuit.n_slots, nf), dtype=bool)
    for i, ins in enumerate(circuit.instructions):
        op = ins.op
        if op == CX:
            x[ins.b] ^= x[ins.a]
            z[ins.a] ^= z[ins.b]
        elif op == RESET:
            x[ins.a] = False
            z[ins.a] = False
        elif op == MEAS_X:
            meas[ins.b] = z[ins.a]
        elif op == MEAS_Z:
            meas[ins.b] = x[ins.a]
        elif op in NOISE_OPS:
            for j in by_ins[i]:
                _, xb, zb, flip, _ = meta[j]
                for q, bit in xb:
                    if bit:
                        x[q, j] ^= True
                for q, bit in zb:
                    if bit:
                        z[q, j] ^= True
                if flip:
                    meas[ins.a, j] ^= True
    return meta, meas, x, z


def _bits_of(mask: int) -> list[int]:
    return [q for q in range(mask.bit_length()) if (mask >> q) & 1]


def _rows_to_ints(rows: np.ndarray, qubits: Sequence[int]) -> list[int]:
    """Pack selected boolean rows (qubits) into one int mask per column."""
    out = [0] * rows.shape[1]
    for q in qubits:
        for j in np.flatnonzero(rows[q]):
            out[j] |= 1 << q
    return out


def enumerate_single_faults(layout: ChainLayout, schedule: RoundSchedule,
                            noise: Optional[NoiseParams] = None) -> list[FaultEntry]:
    """Every single fault location x nontrivial Pauli in one round.

    Signatures are expressed as ``(stabiliser, offset)`` with offset 0 for the
    round containing the fault and 1 for the following round.
    """
    if noise is None:
        noise = NoiseParams(0, 0, 0, 0, 0, layout.code_distance)
    circuit = compile_round(schedule, noise)
    return _entries(circuit)


def _entries(circuit: RoundCircuit) -> list[FaultEntry]:
    meta, meas, x, z = propagate_faults(circuit)
    data_qubits = [q for q in range(circuit.n_qubits) if (circuit.data_mask >> q) & 1]
    res_x = _rows_to_ints(x, data_qubits)
    res_z = _rows_to_ints(z, data_qubits)
    a = np.array([s[0] for s in circuit.stab_slots], dtype=int)
    b = np.array([s[1] for s in circuit.stab_slots], dtype=int)
    flips = meas[a] ^ meas[b]  # (n_stabs, n_faults)
    # persistent syndrome of the residual data error, read out next round
    supp = np.zeros((circuit.n_stabs, circuit.n_qubits), dtype=np.uint8)
    for s, m in enumerate(circuit.stab_supports):
        supp[s, _bits_of(m)] = 1
    is_x = np.array([k == "X" for k in circuit.stab_kinds])
    nxt = np.where(is_x[:, None], supp @ z.astype(np.uint8), supp @ x.astype(np.uint8)) & 1
    later = nxt.astype(bool) ^ flips
    entries = []
    for j, (i, xb, zb, flip, prob) in enumerate(meta):
        ins = circuit.instructions[i]
        sig = {(int(s), 0) for s in np.flatnonzero(flips[:, j])}
        sig.update((int(s), 1) for s in np.flatnonzero(later[:, j]))
        px = sum(bit << q for q, bit in xb)
        pz = sum(bit << q for q, bit in zb)
        qubits = (ins.a,) if ins.op != DEP2 else (ins.a, ins.b)
        if ins.op == MFLIP:
            qubits = ()
        entries.append(FaultEntry(
            i, ins.step, CHANNEL_NAMES[ins.op], qubits,
            PauliOperator(circuit.n_qubits, px, pz), flip, prob, frozenset(sig),
            PauliOperator(circuit.n_qubits, res_x[j], res_z[j]),
        ))
    return entries


@dataclass
class FaultModel:
    """Per-round fault mechanisms grouped by channel, ready for sampling."""

    circuit: RoundCircuit
    entries: list[FaultEntry]
    channel_ins: np.ndarray  # instruction index of each channel
    channel_p: np.ndarray
    channel_first: np.ndarray  # first entry index of each channel
    channel_count: np.ndarray  # outcomes per channel
    sig_ptr: np.ndarray  # CSR over entries -> (stab, offset)
    sig_stab: np.ndarray
    sig_off: np.ndarray
    obs_z: np.ndarray  # per entry: flips the X-logical parity (phase error)
    obs_x: np.ndarray

    @classmethod
    def from_circuit(cls, circuit: RoundCircuit) -> FaultModel:
        entries = _entries(circuit)
        ch_ins, ch_p, ch_first, ch_count = [], [], [], []
        for k, e in enumerate(entries):
            if not ch_ins or ch_ins[-1] != e.instruction:
                ch_ins.append(e.instruction)
                ch_p.append(circuit.instructions[e.instruction].p)
                ch_first.append(k)
                ch_count.append(0)
            ch_count[-1] += 1
        ptr = [0]
        stab, off = [], []
        for e in entries:
            for s, o in sorted(e.signature):
                stab.append(s)
                off.append(o)
            ptr.append(len(stab))
        obs_z = np.array([_parity(e.residual.z & circuit.logical_x) for e in entries], dtype=np.uint8)
        obs_x = np.array([_parity(e.residual.x & circuit.logical_z) for e in entries], dtype=np.uint8)
        return cls(circuit, entries, np.array(ch_ins), np.array(ch_p, dtype=float),
                   np.array(ch_first), np.array(ch_count), np.array(ptr), np.array(stab, dtype=np.int64),
                   np.array(off, dtype=np.int64), obs_z, obs_x)

    @property
    def n_stabs(self) -> int:
        return self.circuit.n_stabs


def _bernoulli_positions(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices in ``range(n)`` of independent Bernoulli(p) successes."""
    if p <= 0.0 or n == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 0.05:
        return np.flatnonzero(rng.random(n) < p)
    out = []
    pos = -1
    while True:
        mean = (n - pos) * p
        k = int(mean + 6 * np.sqrt(mean + 1) + 16)
        gaps = rng.geometric(p, size=k)
        cand = pos + np.cumsum(gaps)
        out.append(cand[cand < n])
        if cand[-1] >= n:
            break
        pos = int(cand[-1])
    return np.concatenate(out)


@dataclass
class SampleBatch:
    """Detection events (trials x (rounds + 1) * n_stabs) and true logical flips."""

    events: np.ndarray
    obs_z: np.ndarray
    obs_x: np.ndarray
    rounds: int
    n_stabs: int


class FaultSampler:
    """Batch sampler over ``rounds`` identical noisy rounds plus a perfect readout."""

    def __init__(self, model: FaultModel, rounds: int):
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        self.model = model
        self.rounds = rounds
        live = model.channel_p > 0
        self._groups = []
        for p in np.unique(model.channel_p[live]):
            chans = np.flatnonzero(model.channel_p == p)
            self._groups.append((float(p), chans))

    def sample(self, shots: int, rng: np.random.Generator) -> SampleBatch:
        m = self.model
        R = self.rounds
        ns = m.n_stabs
        n_nodes = (R + 1) * ns
        trial_parts, entry_parts, round_parts = [], [], []
        for p, chans in self._groups:
            nc = len(chans)
            pos = _bernoulli_positions(shots * R * nc, p, rng)
            if pos.size == 0:
                continue
            trial = pos // (R * nc)
            rem = pos % (R * nc)
            rnd = rem // nc
            ch = chans[rem % nc]
            pick = (rng.random(pos.size) * m.channel_count[ch]).astype(np.int64)
            trial_parts.append(trial)
            entry_parts.append(m.channel_first[ch] + pick)
            round_parts.append(rnd)
        events = np.zeros((shots, n_nodes), dtype=np.uint8)
        obs_z = np.zeros(shots, dtype=np.uint8)
        obs_x = np.zeros(shots, dtype=np.uint8)
        if trial_parts:
            trial = np.concatenate(trial_parts)
            entry = np.concatenate(entry_parts)
            rnd = np.concatenate(round_parts)
            np.bitwise_xor.at(obs_z, trial, m.obs_z[entry])
            np.bitwise_xor.at(obs_x, trial, m.obs_x[entry])
            lens = m.sig_ptr[entry + 1] - m.sig_ptr[entry]
            rep_trial = np.repeat(trial, lens)
            rep_round = np.repeat(rnd, lens)
            starts = np.repeat(m.sig_ptr[entry], lens)
            offs = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
            k = starts + offs
            node = (rep_round + m.sig_off[k]) * ns + m.sig_stab[k]
            flat = rep_trial * n_nodes + node
            counts = np.bincount(flat, minlength=shots * n_nodes)
            events = (counts.reshape(shots, n_nodes) & 1).astype(np.uint8)
        return SampleBatch(events, obs_z, obs_x, R, ns)
