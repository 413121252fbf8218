"""
Space-time matching graph and minimum-weight perfect matching decoder.

Nodes are detection sites ``round * n_stabs + stab`` for rounds
``0 .. R`` (round ``R`` is the perfect readout), plus one boundary node at
index ``n_nodes``. X-type and Z-type stabilisers share the node numbering but
never share an edge, so the graph splits into two independent components.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from . import blossom
from .framesim import FaultModel, RoundCircuit, SyndromeRecord, _parity, compile_round
from .layout import ChainLayout, RoundSchedule
from .noise import NoiseParams

BOUNDARY = -1


class MatchingContractError(RuntimeError):
    """The circuit produced a fault the matching graph cannot represent."""


@dataclass(frozen=True)
class MatchingEdge:
    u: int
    v: int  # BOUNDARY for boundary edges
    probability: float
    correction_x: int  # data-qubit mask
    correction_z: int
    mechanisms: int = 1

    @property
    def weight(self) -> float:
        return -math.log(self.probability)

    @property
    def is_boundary(self) -> bool:
        return self.v == BOUNDARY


@dataclass
class MatchingGraph:
    n_stabs: int
    rounds: int
    stab_kinds: tuple[str, ...]
    edges: list[MatchingEdge]
    logical_x: int = 0
    logical_z: int = 0
    stab_supports: tuple[int, ...] = ()
    _csr: Optional[csr_matrix] = field(default=None, repr=False)
    _index: Optional[dict] = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return (self.rounds + 1) * self.n_stabs

    @property
    def boundary_node(self) -> int:
        return self.n_nodes

    def node(self, stab: int, rnd: int) -> int:
        return rnd * self.n_stabs + stab

    def site(self, node: int) -> tuple[int, int]:
        return node % self.n_stabs, node // self.n_stabs

    def kind_of(self, node: int) -> str:
        return self.stab_kinds[node % self.n_stabs]

    def _key(self, u: int, v: int) -> tuple[int, int]:
        a = self.boundary_node if u == BOUNDARY else u
        b = self.boundary_node if v == BOUNDARY else v
        return (a, b) if a < b else (b, a)

    def edge_between(self, u: int, v: int) -> Optional[MatchingEdge]:
        if self._index is None:
            self._index = {self._key(e.u, e.v): k for k, e in enumerate(self.edges)}
        k = self._index.get(self._key(u, v))
        return None if k is None else self.edges[k]

    def csgraph(self) -> csr_matrix:
        if self._csr is None:
            n = self.n_nodes + 1
            rows, cols, w = [], [], []
            for e in self.edges:
                a, b = self._key(e.u, e.v)
                rows += [a, b]
                cols += [b, a]
                w += [e.weight, e.weight]
            self._csr = csr_matrix((w, (rows, cols)), shape=(n, n))
        return self._csr

    def check(self) -> None:
        """Raise ``MatchingContractError`` on non-finite weights or stranded sites."""
        for e in self.edges:
            if not 0.0 < e.probability < 1.0:
                raise MatchingContractError(f"edge {e.u}-{e.v} has p={e.probability}")
        _, labels = connected_components(self.csgraph(), directed=False)
        stranded = np.flatnonzero(labels[:-1] != labels[-1])
        if stranded.size:
            raise MatchingContractError(f"{stranded.size} sites cannot reach the boundary")

    def logical_action(self, cx: int, cz: int) -> tuple[int, int]:
        """(phase flip, bit flip) of a data-qubit correction."""
        return _parity(cz & self.logical_x), _parity(cx & self.logical_z)

    def to_dict(self) -> dict:
        return {
            "n_stabs": self.n_stabs,
            "rounds": self.rounds,
            "n_nodes": self.n_nodes,
            "boundary": self.boundary_node,
            "stab_kinds": list(self.stab_kinds),
            "edges": [
                {"u": e.u, "v": e.v, "p": e.probability, "weight": e.weight,
                 "correction_x": e.correction_x, "correction_z": e.correction_z,
                 "mechanisms": e.mechanisms}
                for e in self.edges
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def graph_from_model(model: FaultModel, rounds: int) -> MatchingGraph:
    """Instantiate every single-fault mechanism of ``model`` in every round.

    Mechanisms with the same detection signature are merged with
    ``p_edge = sum(p)``; the correction is that of the most probable one
    (first in instruction order on ties).
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    c = model.circuit
    ns = c.n_stabs
    # per-round templates: key -> (p, best_p, cx, cz, count)
    templates: dict[tuple, list] = {}
    for e in model.entries:
        if e.probability <= 0.0:
            continue
        for kind in ("X", "Z"):
            sig = sorted((o, s) for s, o in e.signature if c.stab_kinds[s] == kind)
            if len(sig) > 2:
                raise MatchingContractError(
                    f"fault at instruction {e.instruction} flips {len(sig)} {kind}-type detectors")
            cx = e.residual.x if kind == "Z" else 0
            cz = e.residual.z if kind == "X" else 0
            if not sig:
                flip = _parity(cz & c.logical_x) or _parity(cx & c.logical_z)
                if flip:
                    raise MatchingContractError(
                        f"undetectable logical fault at instruction {e.instruction}")
                continue
            key = tuple(sig)
            t = templates.get(key)
            if t is None:
                templates[key] = [e.probability, e.probability, cx, cz, 1]
            else:
                t[0] += e.probability
                t[4] += 1
                if e.probability > t[1]:
                    t[1:4] = [e.probability, cx, cz]

    merged: dict[tuple[int, int], list] = {}
    for r in range(rounds):
        for key, (p, best, cx, cz, count) in templates.items():
            nodes = [(r + o) * ns + s for o, s in key]
            if len(nodes) == 1:
                nodes.append(BOUNDARY)
            u, v = nodes
            k = (u, v) if v == BOUNDARY or u < v else (v, u)
            m = merged.get(k)
            if m is None:
                merged[k] = [p, best, cx, cz, count]
            else:
                m[0] += p
                m[4] += count
                if best > m[1]:
                    m[1:4] = [best, cx, cz]
    edges = [MatchingEdge(u, v, min(m[0], 0.5), m[2], m[3], m[4])
             for (u, v), m in sorted(merged.items(), key=lambda kv: (kv[0][0], kv[0][1] if kv[0][1] >= 0 else 1 << 62))]
    return MatchingGraph(ns, rounds, c.stab_kinds, edges, c.logical_x, c.logical_z, c.stab_supports)


def build_matching_graph(layout: ChainLayout, schedule: RoundSchedule, noise: NoiseParams,
                         rounds: Optional[int] = None) -> MatchingGraph:
    """Weighted space-time graph for ``rounds`` noisy rounds (default ``8d``)."""
    if rounds is None:
        rounds = 8 * layout.code_distance
    model = FaultModel.from_circuit(compile_round(schedule, noise))
    return graph_from_model(model, rounds)


@dataclass
class Pairing:
    pairs: list[tuple[int, int]]  # (node, node | BOUNDARY)
    weight: float
    paths: list[list[int]]  # node sequence per pair, boundary as BOUNDARY
    graph: Optional[MatchingGraph] = field(default=None, repr=False)

    def correction(self) -> tuple[int, int]:
        """Data-qubit correction ``(x, z)`` composed along every matched path."""
        cx = cz = 0
        g = self.graph
        for path in self.paths:
            for a, b in zip(path, path[1:]):
                e = g.edge_between(a, b)
                cx ^= e.correction_x
                cz ^= e.correction_z
        return cx, cz


_SCALE = float(1 << 24)


def _as_int_weights(ws: Iterable[float]) -> list[int]:
    ws = list(ws)
    if all(float(w).is_integer() for w in ws):
        return [int(w) for w in ws]
    return [int(round(w * _SCALE)) for w in ws]


def _walk(pred: np.ndarray, src_row: int, target: int, boundary: int) -> list[int]:
    path = [target]
    while pred[src_row, path[-1]] >= 0:
        path.append(int(pred[src_row, path[-1]]))
    path.reverse()
    return [BOUNDARY if v == boundary else v for v in path]


def min_weight_perfect_matching(graph: MatchingGraph, defects: Iterable[int]) -> Pairing:
    """Exact minimum-weight pairing of ``defects`` (each to another or to the boundary).

    Costs are shortest-path distances; each defect gets its own boundary copy
    and the copies are joined at zero cost. Ties go to the lowest-index pairing.
    """
    defects = sorted(set(int(d) for d in defects))
    k = len(defects)
    if k == 0:
        return Pairing([], 0.0, [], graph)
    bnode = graph.boundary_node
    if any(not 0 <= d < graph.n_nodes for d in defects):
        raise ValueError("defect outside graph")
    dist, pred = dijkstra(graph.csgraph(), directed=False, indices=defects, return_predecessors=True)
    bdist = dist[:, bnode]
    edges = []
    costs = []
    for i in range(k):
        if not math.isfinite(bdist[i]):
            raise MatchingContractError(f"defect {defects[i]} cannot reach the boundary")
        edges.append((i, k + i))
        costs.append(bdist[i])
        for j in range(i + 1, k):
            dij = dist[i, defects[j]]
            if math.isfinite(dij):
                edges.append((i, j))
                costs.append(dij)
    for i in range(k):
        for j in range(i + 1, k):
            edges.append((k + i, k + j))
            costs.append(0.0)
    ints = _as_int_weights(costs)
    result = blossom.min_weight_perfect_matching(2 * k, [(a, b, w) for (a, b), w in zip(edges, ints)])
    pairs, paths = [], []
    total = 0.0
    for a, b in sorted(result):
        if a >= k:
            continue
        if b >= k:
            pairs.append((defects[a], BOUNDARY))
            paths.append(_walk(pred, a, bnode, bnode))
            total += bdist[a]
        else:
            pairs.append((defects[a], defects[b]))
            paths.append(_walk(pred, a, defects[b], bnode))
            total += dist[a, defects[b]]
    return Pairing(pairs, float(total), paths, graph)


def brute_force_matching_weight(graph: MatchingGraph, defects: Iterable[int]) -> float:
    """Exhaustive minimum over all pairings, with all-pairs distances from Floyd-Warshall.

    Reference oracle for small defect sets only.
    """
    from scipy.sparse.csgraph import floyd_warshall

    defects = sorted(set(defects))
    dist = floyd_warshall(graph.csgraph(), directed=False)
    b = graph.boundary_node

    @lru_cache(maxsize=None)
    def best(rest: tuple) -> float:
        if not rest:
            return 0.0
        a, tail = rest[0], rest[1:]
        out = dist[a, b] + best(tail)
        for i, c in enumerate(tail):
            out = min(out, dist[a, c] + best(tail[:i] + tail[i + 1:]))
        return out

    return float(best(tuple(defects)))


def judge_logical_failure(record: SyndromeRecord, pairing: Pairing) -> dict[str, bool]:
    """Apply the matched correction to the final data frame.

    ``"Z"`` reports a phase-error failure (residual Z anticommutes with the
    X logical); ``"X"`` the bit-flip analogue.
    """
    cx, cz = pairing.correction() if pairing.graph is not None else (0, 0)
    g = pairing.graph
    lx = g.logical_x if g is not None else 0
    lz = g.logical_z if g is not None else 0
    res_x = record.final_frame.x ^ cx
    res_z = record.final_frame.z ^ cz
    return {"Z": bool(_parity(res_z & lx)), "X": bool(_parity(res_x & lz))}


def defects_of(record: SyndromeRecord, graph: MatchingGraph) -> list[int]:
    return sorted(graph.node(s, r) for s, r in record.detection_events)


def decode_record(record: SyndromeRecord, graph: MatchingGraph) -> dict[str, bool]:
    return judge_logical_failure(record, min_weight_perfect_matching(graph, defects_of(record, graph)))


class BatchDecoder:
    """Predict logical flips for many shots of detection events.

    ``backend="blossom"`` runs the exact matcher above per shot;
    ``"pymatching"`` delegates to the sparse-blossom library for sweeps.
    """

    def __init__(self, graph: MatchingGraph, backend: str = "pymatching"):
        if backend not in ("pymatching", "blossom"):
            raise ValueError(f"unknown backend {backend!r}")
        self.graph = graph
        self.backend = backend
        self._matching = None
        if backend == "pymatching":
            import pymatching

            m = pymatching.Matching()
            for e in graph.edges:
                fz, fx = graph.logical_action(e.correction_x, e.correction_z)
                ids = set()
                if fz:
                    ids.add(0)
                if fx:
                    ids.add(1)
                if e.is_boundary:
                    m.add_boundary_edge(e.u, fault_ids=ids, weight=e.weight, error_probability=e.probability)
                else:
                    m.add_edge(e.u, e.v, fault_ids=ids, weight=e.weight, error_probability=e.probability)
            # make sure every node and both observables exist
            m.ensure_num_fault_ids(2)
            self._matching = m

    def predict(self, events: np.ndarray) -> np.ndarray:
        """``events`` is (shots, n_nodes); returns (shots, 2) flips as (Z, X)."""
        events = np.asarray(events, dtype=np.uint8)
        if events.ndim != 2 or events.shape[1] != self.graph.n_nodes:
            raise ValueError("events shape does not match graph")
        if self.backend == "pymatching":
            pad = np.zeros((events.shape[0], self._matching.num_detectors), dtype=np.uint8)
            pad[:, :events.shape[1]] = events
            return self._matching.decode_batch(pad).astype(np.uint8)[:, :2]
        out = np.zeros((events.shape[0], 2), dtype=np.uint8)
        g = self.graph
        for i, row in enumerate(events):
            pairing = min_weight_perfect_matching(g, np.flatnonzero(row))
            out[i] = g.logical_action(*pairing.correction())
        return out

    def failures(self, events: np.ndarray, obs_z: np.ndarray, obs_x: np.ndarray) -> np.ndarray:
        """Per-shot (Z, X) logical failure after correction."""
        pred = self.predict(events)
        return pred ^ np.stack([obs_z, obs_x], axis=1).astype(np.uint8)
