"""
Grid-point runners shared by the command line and the acceptance tests.

Every Monte Carlo point is split into fixed-size chunks. Chunk ``k`` of a
point draws from a stream keyed by ``(seed, d, eps2, k)``, so totals do not
depend on how chunks are spread over worker processes.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations
from typing import Optional

import numpy as np

from .analysis import per_round_rate
from .blossom import min_weight_perfect_matching
from .decoder import BatchDecoder, graph_from_model
from .framesim import FaultModel, FaultSampler, compile_round
from .gauge import LogicalRates, count_failures, gauge_circuit, rate_key
from .layout import build_layout, schedule_round
from .noise import derive_rates

SURFACE_COLUMNS = ["d", "s", "eps2", "rounds", "trials", "failures_Z", "failures_X",
                   "p_L_Z", "p_L_X", "stderr_Z", "stderr_X"]


def resolve_rounds(spec, d: int) -> int:
    """``"8d"`` style multiples of d, or a plain integer."""
    t = str(spec).strip()
    if t.endswith("d"):
        k = int(t[:-1] or 1)
        return k * d
    r = int(t)
    if r < 1:
        raise ValueError("rounds must be >= 1")
    return r


# -- surface-code memory ---------------------------------------------------------

@lru_cache(maxsize=16)
def _surface_setup(d: int, eps2: float, rounds: int, backend: str):
    lay = build_layout(d + 2)
    circ = compile_round(schedule_round(lay), derive_rates(eps2, d))
    model = FaultModel.from_circuit(circ)
    return FaultSampler(model, rounds), BatchDecoder(graph_from_model(model, rounds), backend)


def surface_chunk(d: int, eps2: float, rounds: int, shots: int, seed: int, chunk: int,
                  backend: str = "pymatching") -> tuple[int, int]:
    """Failures ``(Z, X)`` of one chunk of memory trials."""
    sampler, dec = _surface_setup(d, float(eps2), rounds, backend)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), d, rate_key(eps2), chunk]))
    b = sampler.sample(shots, rng)
    f = dec.failures(b.events, b.obs_z, b.obs_x)
    return int(f[:, 0].sum()), int(f[:, 1].sum())


def surface_row(d: int, eps2: float, rounds: int, trials: int, fz: int, fx: int) -> dict:
    rz = per_round_rate(fz, trials, rounds)
    rx = per_round_rate(fx, trials, rounds)
    return {"d": d, "s": d + 2, "eps2": eps2, "rounds": rounds, "trials": trials,
            "failures_Z": fz, "failures_X": fx, "p_L_Z": rz.p_L, "p_L_X": rx.p_L,
            "stderr_Z": rz.stderr, "stderr_X": rx.stderr}


def surface_point(d: int, eps2: float, rounds: int, trials: int, seed: int = 0,
                  chunk: int = 10_000, backend: str = "pymatching") -> dict:
    fz = fx = 0
    for k, n in enumerate(chunk_sizes(trials, chunk)):
        a, b = surface_chunk(d, eps2, rounds, n, seed, k, backend)
        fz += a
        fx += b
    return surface_row(d, eps2, rounds, trials, fz, fx)


def chunk_sizes(trials: int, chunk: int) -> list[int]:
    if trials < 1 or chunk < 1:
        raise ValueError("trials and chunk must be positive")
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


# -- gauge code ------------------------------------------------------------------

def gauge_chunk(n: int, p_cnot: float, shots: int, seed: int, chunk: int) -> int:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n, rate_key(p_cnot), chunk]))
    return count_failures(gauge_circuit(n), LogicalRates.from_p_cnot(p_cnot), shots, rng)


def gauge_row(n: int, p_cnot: float, trials: int, failures: int) -> dict:
    P = failures / trials
    return {"n": n, "p_CNOT": p_cnot, "trials": trials, "failures": failures,
            "P_CNOT": P, "stderr": math.sqrt(P * (1 - P) / trials)}


# -- matching oracle -------------------------------------------------------------

def random_instance(rng: np.random.Generator, n_defects: int, w_max: int = 1000,
                    density: float = 1.0):
    """Random integer-weighted graph on ``n_defects`` vertices with a perfect matching.

    A random perfect matching is always included so the instance is feasible.
    """
    perm = rng.permutation(n_defects)
    edges = {}
    for i in range(0, n_defects, 2):
        a, b = sorted((int(perm[i]), int(perm[i + 1])))
        edges[(a, b)] = int(rng.integers(0, w_max + 1))
    for a, b in combinations(range(n_defects), 2):
        if (a, b) not in edges and rng.random() < density:
            edges[(a, b)] = int(rng.integers(0, w_max + 1))
    return [(a, b, w) for (a, b), w in sorted(edges.items())]


def brute_force_min_matching(n: int, edges) -> Optional[int]:
    """Exhaustive minimum over every perfect matching; ``None`` when none exists."""
    w = {}
    for a, b, c in edges:
        w[(a, b)] = w[(b, a)] = c

    def rec(left: tuple) -> Optional[int]:
        if not left:
            return 0
        a, rest = left[0], left[1:]
        best = None
        for i, b in enumerate(rest):
            if (a, b) not in w:
                continue
            sub = rec(rest[:i] + rest[i + 1:])
            if sub is not None and (best is None or w[(a, b)] + sub < best):
                best = w[(a, b)] + sub
        return best

    return rec(tuple(range(n)))


def matching_check(seeds: int = 200, max_defects: int = 12, seed: int = 0) -> dict:
    """Exact blossom against exhaustive enumeration on random graphs."""
    mismatches = []
    for k in range(seeds):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
        nd = 2 * int(rng.integers(1, max_defects // 2 + 1))
        density = float(rng.choice([0.4, 0.7, 1.0]))
        edges = random_instance(rng, nd, density=density)
        wmap = {(a, b): c for a, b, c in edges}
        got = sum(wmap[(min(a, b), max(a, b))] for a, b in min_weight_perfect_matching(nd, edges))
        want = brute_force_min_matching(nd, edges)
        if got != want:
            mismatches.append({"seed": k, "defects": nd, "blossom": got, "brute_force": want})
    return {"instances": seeds, "max_defects": max_defects, "mismatches": mismatches,
            "passed": not mismatches}


def single_fault_check(d: int, rounds: Optional[int] = None, eps2: float = 0.001,
                       backend: str = "blossom") -> dict:
    """Inject every single fault mechanism in every noisy round and decode it.

    Returns the number of injections and of logical failures (either type).
    """
    rounds = rounds or d
    lay = build_layout(d + 2)
    model = FaultModel.from_circuit(compile_round(schedule_round(lay), derive_rates(eps2, d)))
    dec = BatchDecoder(graph_from_model(model, rounds), backend)
    ns = model.n_stabs
    n_nodes = (rounds + 1) * ns
    E = len(model.entries)
    fails = 0
    for r in range(rounds):
        ev = np.zeros((E, n_nodes), dtype=np.uint8)
        for i in range(E):
            for s in range(model.sig_ptr[i], model.sig_ptr[i + 1]):
                ev[i, (r + model.sig_off[s]) * ns + model.sig_stab[s]] ^= 1
        f = dec.failures(ev, model.obs_z, model.obs_x)
        fails += int(f.any(axis=1).sum())
    return {"d": d, "rounds": rounds, "mechanisms": E, "injections": E * rounds,
            "failures": fails, "passed": fails == 0}


def _placements(d: int, rounds: int, eps2: float):
    """Distinct (events, obs) vectors of every single mechanism placed in every round."""
    lay = build_layout(d + 2)
    model = FaultModel.from_circuit(compile_round(schedule_round(lay), derive_rates(eps2, d)))
    ns = model.n_stabs
    n_nodes = (rounds + 1) * ns
    rows = set()
    for r in range(rounds):
        for i in range(len(model.entries)):
            ev = [0] * n_nodes
            for s in range(model.sig_ptr[i], model.sig_ptr[i + 1]):
                ev[(r + model.sig_off[s]) * ns + model.sig_stab[s]] ^= 1
            rows.add((tuple(ev), int(model.obs_z[i]), int(model.obs_x[i])))
    rows = sorted(rows)
    ev = np.array([r[0] for r in rows], dtype=np.uint8)
    obs = np.array([r[1:] for r in rows], dtype=np.uint8)
    return model, ev, obs


def fault_pair_check(d: int, rounds: Optional[int] = None, eps2: float = 0.001) -> dict:
    """Decode every unordered pair of distinct single-fault placements.

    Placements with identical detection events and observable flips decode
    identically, so each class is injected once.
    """
    rounds = rounds or d
    model, ev, obs = _placements(d, rounds, eps2)
    dec = BatchDecoder(graph_from_model(model, rounds), "pymatching")
    fails = pairs = 0
    for i in range(len(ev) - 1):
        e = ev[i + 1:] ^ ev[i]
        o = obs[i + 1:] ^ obs[i]
        f = dec.failures(e, o[:, 0], o[:, 1])
        fails += int(f.any(axis=1).sum())
        pairs += len(e)
    return {"d": d, "rounds": rounds, "placements": len(ev), "pairs": pairs,
            "failures": fails, "passed": fails == 0}
