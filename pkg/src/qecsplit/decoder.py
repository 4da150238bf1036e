"""Decoding graphs and exact minimum-weight perfect matching.

A graph is built per observable and detector window from single-fault
syndromes: faults firing one decoded detector become boundary edges, faults
firing two become internal edges, parallel mechanisms merge into one edge,
and wider faults are decomposed into existing edges where an exact
decomposition exists.  Decoding matches defects over all-pairs shortest
paths with an exact matcher.

Malignancy uses the full window: all syndrome rounds plus the detectors that
compare the last ancilla round against the noiseless final data readout.
The extra buffer rounds beyond the first d are what let the matching
distinguish measurement errors from data errors near the time boundary;
decoding the first d rounds in isolation provably miscorrects some single
faults, which would break strict fault tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .circuit import Circuit, NoiseModel, fault_labels
from .pauli import Syndrome, SyndromeTable

BOUNDARY = -1

# Exact bitmask DP handles typical defect counts; the blossom fallback covers
# rare large defect sets.
_DP_MAX_DEFECTS = 12


class GraphConstructionError(RuntimeError):
    pass


class MatchingInfeasibleError(RuntimeError):
    pass


@dataclass
class MatchResult:
    pairs: Tuple[Tuple[int, int], ...]   # (u, v) local ids, v may be BOUNDARY
    logical_flip: int
    total_weight: float


@dataclass
class DecodingGraph:
    observable: str
    window: str
    detector_ids: List[int]                    # global detector indices
    local_of: Dict[int, int]
    edges: Dict[Tuple[int, int], Tuple[float, float, int]]  # (u,v)->(q,w,par)
    dist: np.ndarray                           # (V, V) path weights
    parity: np.ndarray                         # (V, V) path logical parities
    bdist: np.ndarray                          # (V,) weight to boundary
    bparity: np.ndarray
    dropped_faults: int
    dropped_mass: float
    decode_calls: int = 0
    detector_bitmask: int = 0

    @property
    def num_vertices(self) -> int:
        return len(self.detector_ids)

    def edge_lines(self) -> List[str]:
        """Canonical sorted dump: 'u v weight parity' per edge."""
        lines = []
        for (u, v), (q, w, par) in sorted(self.edges.items()):
            left = "BOUNDARY" if u == BOUNDARY else str(u)
            lines.append(f"{left} {v} {w:.12g} {par}")
        return lines


def _combine_odd(q1: float, q2: float) -> float:
    # Probability that an odd number of the merged mechanisms fires.
    return q1 + q2 - 2.0 * q1 * q2


def _window_detectors(circuit: Circuit, observable: str, window: str) -> List[int]:
    check_type = "Z" if observable == "Z" else "X"
    dw = min(circuit.distance, circuit.rounds)
    if window == "early":
        return circuit.detector_indices(check_type, max_round=dw)
    if window == "late":
        return circuit.detector_indices(check_type, min_round=dw,
                                        include_readout=True)
    if window == "full":
        return circuit.detector_indices(check_type, include_readout=True)
    raise ValueError(f"unknown window {window!r}")


def _bits_to_locals(bits: int, local_of: Dict[int, int]) -> List[int]:
    out = []
    while bits:
        lsb = bits & -bits
        out.append(local_of[lsb.bit_length() - 1])
        bits ^= lsb
    return out


def build_decoding_graph(circuit: Circuit, noise: NoiseModel, observable: str,
                         window: str = "full",
                         table: Optional[SyndromeTable] = None
                         ) -> DecodingGraph:
    """Derive the weighted matching graph from single-fault syndromes.

    Each fault mechanism firing one or two decoded detectors contributes an
    edge; mechanisms sharing an endpoint pair merge, combining probabilities
    so the edge carries the odds of an odd number of them firing, with the
    merged parity taken from the heavier side.  Edge weight is
    log((1 - q) / q).
    """
    if observable not in ("X", "Z"):
        raise ValueError("observable must be 'X' or 'Z'")
    if table is None:
        table = SyndromeTable(circuit)
    det_ids = _window_detectors(circuit, observable, window)
    local_of = {g: i for i, g in enumerate(det_ids)}
    window_mask = 0
    for g in det_ids:
        window_mask |= 1 << g

    flip_bit = 1 if observable == "X" else 0

    # (u, v) -> list of (q, parity) contributions
    groups: Dict[Tuple[int, int], List[Tuple[float, int]]] = {}
    deferred: List[Tuple[Tuple[int, ...], int, float]] = []

    for g in circuit.gates:
        pr = noise.pr[g.id]
        if pr <= 0.0:
            continue
        labels = fault_labels(g.kind)
        cond = 1.0 / len(labels)
        for label in labels:
            bits = table.mask[(g.id, label)]
            fired = bits & window_mask
            if not fired:
                continue
            par = (table.flip[(g.id, label)] >> flip_bit) & 1
            locs = _bits_to_locals(fired, local_of)
            q = pr * cond
            if len(locs) == 1:
                groups.setdefault((BOUNDARY, locs[0]), []).append((q, par))
            elif len(locs) == 2:
                groups.setdefault((locs[0], locs[1]), []).append((q, par))
            else:
                deferred.append((tuple(locs), par, q))

    # One edge per vertex pair: combined probability, majority-mass parity.
    edges_q: Dict[Tuple[int, int], Tuple[float, int]] = {}
    for key, contribs in groups.items():
        mass = {0: 0.0, 1: 0.0}
        q_all = 0.0
        for (q, par) in contribs:
            mass[par] += q
            q_all = _combine_odd(q_all, q)
        par = 0 if mass[0] >= mass[1] else 1
        edges_q[key] = (q_all, par)

    # Decompose wider faults into chains of existing edges whose parities XOR
    # to the fault's parity; otherwise drop them (they still count toward
    # true logical flips) and report the mass.
    dropped = 0
    dropped_mass = 0.0

    def find_decomposition(locs: Tuple[int, ...], par: int
                           ) -> Optional[List[Tuple[int, int]]]:
        def rec(rem: Tuple[int, ...], need: int
                ) -> Optional[List[Tuple[int, int]]]:
            if not rem:
                return [] if need == 0 else None
            a = rem[0]
            for j in range(1, len(rem)):
                key = (a, rem[j])
                if key in edges_q:
                    rest = rec(rem[1:j] + rem[j + 1:],
                               need ^ edges_q[key][1])
                    if rest is not None:
                        return [key] + rest
            key = (BOUNDARY, a)
            if key in edges_q:
                rest = rec(rem[1:], need ^ edges_q[key][1])
                if rest is not None:
                    return [key] + rest
            return None

        return rec(locs, par)

    for locs, par, q in deferred:
        decomp = find_decomposition(locs, par)
        if decomp is None:
            dropped += 1
            dropped_mass += q
            continue
        for key in decomp:
            q_old, p_old = edges_q[key]
            edges_q[key] = (_combine_odd(q_old, q), p_old)

    edges: Dict[Tuple[int, int], Tuple[float, float, int]] = {}
    for key, (q, par) in edges_q.items():
        if not 0.0 < q < 1.0:
            raise GraphConstructionError(f"edge {key} has probability {q}")
        edges[key] = (q, math.log((1.0 - q) / q), par)

    dist, parity, bdist, bparity = _all_pairs(len(det_ids), edges)
    if len(det_ids) and np.any(np.isinf(bdist)):
        bad = int(np.nonzero(np.isinf(bdist))[0][0])
        raise GraphConstructionError(
            f"detector {det_ids[bad]} cannot reach the boundary")

    return DecodingGraph(
        observable=observable,
        window=window,
        detector_ids=det_ids,
        local_of=local_of,
        edges=edges,
        dist=dist,
        parity=parity,
        bdist=bdist,
        bparity=bparity,
        dropped_faults=dropped,
        dropped_mass=dropped_mass,
        detector_bitmask=window_mask,
    )


def _all_pairs(nv: int, edges: Dict[Tuple[int, int], Tuple[float, float, int]]
               ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Dijkstra from every vertex; the boundary is an endpoint, not a relay."""
    adj: List[List[Tuple[int, float, int]]] = [[] for _ in range(nv)]
    badj: List[List[Tuple[float, int]]] = [[] for _ in range(nv)]
    for (u, v), (q, w, par) in edges.items():
        if u == BOUNDARY:
            badj[v].append((w, par))
        else:
            adj[u].append((v, w, par))
            adj[v].append((u, w, par))

    dist = np.full((nv, nv), np.inf)
    parity = np.zeros((nv, nv), dtype=np.int8)
    bdist = np.full(nv, np.inf)
    bparity = np.zeros(nv, dtype=np.int8)

    for src in range(nv):
        d = [math.inf] * nv
        par = [0] * nv
        d[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            du, u = heappop(heap)
            if du > d[u]:
                continue
            for (v, w, p) in adj[u]:
                nd = du + w
                if nd < d[v]:
                    d[v] = nd
                    par[v] = par[u] ^ p
                    heappush(heap, (nd, v))
        dist[src] = d
        parity[src] = par
        best_b = math.inf
        best_p = 0
        for v in range(nv):
            if math.isinf(d[v]):
                continue
            for (w, p) in badj[v]:
                if d[v] + w < best_b:
                    best_b = d[v] + w
                    best_p = par[v] ^ p
        bdist[src] = best_b
        bparity[src] = best_p
    return dist, parity, bdist, bparity


def _match_dp(graph: DecodingGraph, defects: Sequence[int]
              ) -> Tuple[float, List[Tuple[int, int]]]:
    dist = graph.dist
    bdist = graph.bdist
    memo: Dict[int, Tuple[float, Tuple[Tuple[int, int], ...]]] = {0: (0.0, ())}

    def solve(mask: int) -> Tuple[float, Tuple[Tuple[int, int], ...]]:
        hit = memo.get(mask)
        if hit is not None:
            return hit
        i = (mask & -mask).bit_length() - 1
        rest = mask ^ (1 << i)
        best_w, best_c = solve(rest)
        best_w += bdist[defects[i]]
        best_c = ((defects[i], BOUNDARY),) + best_c
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m ^= 1 << j
            w = dist[defects[i]][defects[j]]
            if not math.isinf(w):
                ww, cc = solve(rest ^ (1 << j))
                if w + ww < best_w:
                    best_w = w + ww
                    best_c = ((defects[i], defects[j]),) + cc
        memo[mask] = (best_w, best_c)
        return memo[mask]

    w, choice = solve((1 << len(defects)) - 1)
    return w, list(choice)


def _match_blossom(graph: DecodingGraph, defects: Sequence[int]
                   ) -> Tuple[float, List[Tuple[int, int]]]:
    """Exact blossom matching on defects plus one boundary copy each."""
    k = len(defects)
    g = nx.Graph()
    scale = 0.0
    for i in range(k):
        scale = max(scale, graph.bdist[defects[i]])
        for j in range(i + 1, k):
            w = graph.dist[defects[i]][defects[j]]
            if not math.isinf(w):
                scale = max(scale, w)
    big = 2.0 * scale * k + 1.0
    for i in range(k):
        g.add_edge(i, k + i, weight=big - graph.bdist[defects[i]])
        for j in range(i + 1, k):
            w = graph.dist[defects[i]][defects[j]]
            if not math.isinf(w):
                g.add_edge(i, j, weight=big - w)
            g.add_edge(k + i, k + j, weight=big)
    mate = nx.max_weight_matching(g, maxcardinality=True)
    total = 0.0
    pairs = []
    for (a, b) in mate:
        a, b = min(a, b), max(a, b)
        if a < k and b < k:
            total += graph.dist[defects[a]][defects[b]]
            pairs.append((defects[a], defects[b]))
        elif a < k and b == k + a:
            total += graph.bdist[defects[a]]
            pairs.append((defects[a], BOUNDARY))
    return total, pairs


def mwpm_decode(graph: DecodingGraph, defects: Iterable[int]) -> MatchResult:
    """Minimum-weight perfect matching of defects (local ids) with boundary."""
    defect_list = sorted(set(int(v) for v in defects))
    for v in defect_list:
        if not 0 <= v < graph.num_vertices:
            raise MatchingInfeasibleError(f"defect {v} outside decoded window")
    graph.decode_calls += 1
    if not defect_list:
        return MatchResult((), 0, 0.0)

    if len(defect_list) <= _DP_MAX_DEFECTS:
        total, pairs = _match_dp(graph, defect_list)
    else:
        total, pairs = _match_blossom(graph, defect_list)
    if math.isinf(total):
        raise MatchingInfeasibleError("no finite-weight perfect matching")

    flip = 0
    for (u, v) in pairs:
        if v == BOUNDARY:
            flip ^= int(graph.bparity[u])
        else:
            flip ^= int(graph.parity[u][v])
    return MatchResult(tuple(sorted(pairs)), flip, total)


def decode_count(graph_or_decoder) -> int:
    """Monotone count of mwpm_decode calls since construction."""
    return graph_or_decoder.decode_calls


class CircuitDecoder:
    """Matching decoder for one observable over the full detector window.

    Wraps a single decoding graph built from all syndrome rounds plus the
    noiseless-readout comparison detectors, and predicts the logical flip of
    a syndrome by exact minimum-weight matching.
    """

    def __init__(self, circuit: Circuit, noise: NoiseModel, observable: str,
                 table: Optional[SyndromeTable] = None, window: str = "full"):
        self.circuit = circuit
        self.noise = noise
        self.observable = observable
        self.table = table if table is not None else SyndromeTable(circuit)
        self.graph = build_decoding_graph(circuit, noise, observable, window,
                                          self.table)

    @property
    def decode_calls(self) -> int:
        return self.graph.decode_calls

    @property
    def dropped_faults(self) -> int:
        return self.graph.dropped_faults

    def predict_bits(self, bits: int) -> int:
        defects = _bits_to_locals(bits & self.graph.detector_bitmask,
                                  self.graph.local_of)
        if not defects:
            return 0
        return mwpm_decode(self.graph, defects).logical_flip

    def predict(self, syndrome: Syndrome) -> int:
        bits = 0
        for i in np.nonzero(syndrome.detectors)[0]:
            bits |= 1 << int(i)
        return self.predict_bits(bits)

    def is_malignant_bits(self, bits: int, flips_packed: int) -> bool:
        true_flip = self.table.logical_flip(flips_packed, self.observable)
        return bool(self.predict_bits(bits) ^ true_flip)
