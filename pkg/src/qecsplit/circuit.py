"""Gate-level rotated-surface-code circuits and circuit-level Pauli noise.

The circuit is a flat, time-ordered list of gates (preparations, CNOTs,
measurements) over d^2 data qubits and d^2-1 check ancillas.  Noise attaches
to gates: each gate g fails independently with probability pr(g), and a
failing gate draws a fault label from a per-kind conditional distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np


class InvalidParameterError(ValueError):
    pass


class InvalidEventError(ValueError):
    pass


class GateKind(Enum):
    PREP_Z = "PrepZ"
    PREP_X = "PrepX"
    CNOT = "CNOT"
    MEAS_Z = "MeasZ"
    MEAS_X = "MeasX"


# Two-qubit Pauli labels for a failing CNOT: uniform over the 15 non-identity
# products.  Preparations produce the orthogonal state; measurements flip the
# classical record only.
_PAULIS = "IXYZ"
CNOT_FAULTS: Tuple[str, ...] = tuple(
    a + b for a in _PAULIS for b in _PAULIS if a + b != "II"
)

_FAULT_BASIS: Dict[GateKind, Tuple[str, ...]] = {
    GateKind.CNOT: CNOT_FAULTS,
    GateKind.PREP_Z: ("X",),
    GateKind.PREP_X: ("Z",),
    GateKind.MEAS_Z: ("FLIP",),
    GateKind.MEAS_X: ("FLIP",),
}


def enumerate_faults(kind: GateKind) -> List[Tuple[str, float]]:
    """Complete fault basis for one gate kind with conditional probabilities."""
    labels = _FAULT_BASIS[kind]
    p = 1.0 / len(labels)
    return [(label, p) for label in labels]


def fault_labels(kind: GateKind) -> Tuple[str, ...]:
    return _FAULT_BASIS[kind]


@dataclass(frozen=True)
class Gate:
    id: int
    kind: GateKind
    qubits: Tuple[int, ...]
    round: int
    timestep: int

    @property
    def control(self) -> int:
        assert self.kind is GateKind.CNOT
        return self.qubits[0]

    @property
    def target(self) -> int:
        assert self.kind is GateKind.CNOT
        return self.qubits[1]


@dataclass(frozen=True)
class DetectorDef:
    """XOR of two measurement records of the same check (one for round 0).

    kind is "check" for round-vs-previous-round comparisons and "readout" for
    the final comparison of the last ancilla record against the check value
    recomputed from the noiseless data readout.
    """

    check_type: str            # "X" or "Z"
    ancilla: int
    round: int
    records: Tuple[int, ...]   # record indices; support qubits close readouts
    kind: str = "check"


@dataclass(frozen=True)
class Event:
    """A physically viable set of (gate-id, fault-label) pairs.

    Pairs are stored sorted by gate id; a gate appears at most once.
    """

    pairs: Tuple[Tuple[int, str], ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.pairs))
        object.__setattr__(self, "pairs", ordered)
        gids = [g for g, _ in ordered]
        if len(set(gids)) != len(gids):
            raise InvalidEventError("event assigns two faults to one gate")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[int, str]]) -> "Event":
        return cls(tuple(pairs))

    @classmethod
    def empty(cls) -> "Event":
        return cls(())

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def gate_ids(self) -> FrozenSet[int]:
        return frozenset(g for g, _ in self.pairs)

    def with_pair(self, gate_id: int, label: str) -> "Event":
        return Event(self.pairs + ((gate_id, label),))

    def without_gate(self, gate_id: int) -> "Event":
        return Event(tuple(p for p in self.pairs if p[0] != gate_id))


@dataclass
class Circuit:
    distance: int
    rounds: int
    basis: str                       # "Z" or "X" memory
    gates: List[Gate]
    data_qubits: Tuple[int, ...]
    x_ancillas: Tuple[int, ...]
    z_ancillas: Tuple[int, ...]
    detectors: List[DetectorDef]
    logical_x: Tuple[int, ...]       # column of data qubits (X support)
    logical_z: Tuple[int, ...]       # row of data qubits (Z support)
    check_support: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    measurement_order: List[int] = field(default_factory=list)  # gate ids

    @property
    def num_qubits(self) -> int:
        return len(self.data_qubits) + len(self.x_ancillas) + len(self.z_ancillas)

    @property
    def num_gates(self) -> int:
        return len(self.gates)

    def gate(self, gate_id: int) -> Gate:
        return self.gates[gate_id]

    def detector_indices(self, check_type: str, max_round: Optional[int] = None,
                         min_round: int = 0, include_readout: bool = False
                         ) -> List[int]:
        """Indices into self.detectors selected by type and round window."""
        out = []
        for i, det in enumerate(self.detectors):
            if det.check_type != check_type:
                continue
            if det.kind == "readout":
                if include_readout:
                    out.append(i)
                continue
            if det.round < min_round:
                continue
            if max_round is not None and det.round >= max_round:
                continue
            out.append(i)
        return out


def _plaquettes(d: int) -> List[Tuple[int, int, str]]:
    """(row, col, type) for the d^2-1 checks of the rotated layout.

    Plaquette (r, c) touches data qubits (r-1, c-1), (r-1, c), (r, c-1), (r, c)
    that fall inside the d x d grid.  Interior plaquettes alternate X/Z by
    (r + c) parity; only alternating boundary plaquettes are kept so that the
    weight-2 census comes out to 2(d-1).
    """
    plaqs = []
    for r in range(d + 1):
        for c in range(d + 1):
            ptype = "X" if (r + c) % 2 == 1 else "Z"
            interior = 1 <= r <= d - 1 and 1 <= c <= d - 1
            if interior:
                plaqs.append((r, c, ptype))
                continue
            # Boundary rows carry X checks, boundary columns carry Z checks.
            if r in (0, d) and 1 <= c <= d - 1 and ptype == "X":
                plaqs.append((r, c, ptype))
            elif c in (0, d) and 1 <= r <= d - 1 and ptype == "Z":
                plaqs.append((r, c, ptype))
    return plaqs


def _plaquette_data(d: int, r: int, c: int) -> Dict[str, Optional[int]]:
    """Map NW/NE/SW/SE corner names to data-qubit indices (None off-grid)."""
    def idx(i: int, j: int) -> Optional[int]:
        if 0 <= i < d and 0 <= j < d:
            return i * d + j
        return None

    return {
        "NW": idx(r - 1, c - 1),
        "NE": idx(r - 1, c),
        "SW": idx(r, c - 1),
        "SE": idx(r, c),
    }


# Per-round CNOT corner orders; chosen so no data qubit is touched twice in a
# timestep and single hook faults cannot span the code distance.
X_CNOT_ORDER = ("NW", "NE", "SW", "SE")
Z_CNOT_ORDER = ("NW", "SW", "NE", "SE")


def build_rotated_surface_code(d: int, rounds: Optional[int] = None,
                               basis: str = "Z") -> Circuit:
    """Build the syndrome-extraction circuit of a [[d^2, 1, d]] rotated code.

    Each round is six timesteps: ancilla preparations, four CNOT layers, and
    ancilla measurements.  Data qubits are initialized noiselessly in the
    memory basis before round 0 and read out noiselessly at the end; idle
    qubits carry no gates.
    """
    if d < 3 or d % 2 == 0:
        raise InvalidParameterError("distance must be an odd integer >= 3")
    if rounds is None:
        rounds = 2 * d
    if rounds < 1:
        raise InvalidParameterError("rounds must be >= 1")
    if basis not in ("Z", "X"):
        raise InvalidParameterError("basis must be 'Z' or 'X'")

    n_data = d * d
    plaqs = _plaquettes(d)
    assert len(plaqs) == d * d - 1

    data_qubits = tuple(range(n_data))
    ancilla_of_plaq = {}
    x_anc, z_anc = [], []
    support = {}
    anc_type = {}
    for k, (r, c, ptype) in enumerate(sorted(plaqs)):
        q = n_data + k
        ancilla_of_plaq[(r, c)] = q
        corners = _plaquette_data(d, r, c)
        support[q] = tuple(sorted(v for v in corners.values() if v is not None))
        anc_type[q] = ptype
        (x_anc if ptype == "X" else z_anc).append(q)

    gates: List[Gate] = []
    meas_order: List[int] = []
    record_index: Dict[Tuple[int, int], int] = {}  # (ancilla, round) -> record

    def add(kind: GateKind, qubits: Tuple[int, ...], rnd: int, ts: int) -> None:
        gates.append(Gate(len(gates), kind, qubits, rnd, ts))

    for rnd in range(rounds):
        base_ts = rnd * 6
        for q in sorted(x_anc + z_anc):
            kind = GateKind.PREP_X if anc_type[q] == "X" else GateKind.PREP_Z
            add(kind, (q,), rnd, base_ts)
        for layer in range(4):
            layer_gates = []
            for (r, c, ptype) in sorted(plaqs):
                q = ancilla_of_plaq[(r, c)]
                corners = _plaquette_data(d, r, c)
                order = X_CNOT_ORDER if ptype == "X" else Z_CNOT_ORDER
                dq = corners[order[layer]]
                if dq is None:
                    continue
                # X check: ancilla controls; Z check: data controls.
                pair = (q, dq) if ptype == "X" else (dq, q)
                layer_gates.append(pair)
            for pair in sorted(layer_gates):
                add(GateKind.CNOT, pair, rnd, base_ts + 1 + layer)
        for q in sorted(x_anc + z_anc):
            kind = GateKind.MEAS_X if anc_type[q] == "X" else GateKind.MEAS_Z
            add(kind, (q,), rnd, base_ts + 5)
            record_index[(q, rnd)] = len(meas_order)
            meas_order.append(gates[-1].id)

    detectors: List[DetectorDef] = []
    for rnd in range(rounds):
        for q in sorted(x_anc + z_anc):
            recs = (record_index[(q, rnd)],)
            if rnd > 0:
                recs = (record_index[(q, rnd - 1)], record_index[(q, rnd)])
            detectors.append(DetectorDef(anc_type[q], q, rnd, recs, "check"))
    # Readout detectors compare the last ancilla record against the check
    # value recomputed from the noiseless final data readout.
    for q in sorted(x_anc + z_anc):
        recs = (record_index[(q, rounds - 1)],)
        detectors.append(DetectorDef(anc_type[q], q, rounds, recs, "readout"))

    mid = 0
    logical_z = tuple(mid * d + j for j in range(d))      # a data row
    logical_x = tuple(i * d + mid for i in range(d))      # a data column

    return Circuit(
        distance=d,
        rounds=rounds,
        basis=basis,
        gates=gates,
        data_qubits=data_qubits,
        x_ancillas=tuple(x_anc),
        z_ancillas=tuple(z_anc),
        detectors=detectors,
        logical_x=logical_x,
        logical_z=logical_z,
        check_support=support,
        measurement_order=meas_order,
    )


class NoiseModel:
    """Per-gate failure probabilities with optional region multipliers.

    The base rate applies to every gate; gates touching a marked qubit region
    have their rate multiplied.  Conditional fault distributions are uniform
    per gate kind (see enumerate_faults).
    """

    def __init__(self, circuit: Circuit, base_rate: float,
                 region: Optional[Iterable[int]] = None,
                 multiplier: float = 1.0):
        if not 0.0 <= base_rate < 1.0:
            raise InvalidParameterError("base rate must be in [0, 1)")
        self.circuit = circuit
        self.base_rate = base_rate
        self.region = frozenset(region) if region is not None else frozenset()
        self.multiplier = multiplier
        mult = np.ones(circuit.num_gates)
        if self.region:
            for g in circuit.gates:
                if any(q in self.region for q in g.qubits):
                    mult[g.id] = multiplier
        self._mult = mult
        self.pr = base_rate * mult
        if np.any(self.pr >= 1.0):
            raise InvalidParameterError("a multiplied gate rate reached 1")
        with np.errstate(divide="ignore"):
            self._log_pr = np.log(self.pr)
        self._log_1m = np.log1p(-self.pr)
        self.log_prob_empty = float(self._log_1m.sum())

    @classmethod
    def uniform(cls, circuit: Circuit, p: float) -> "NoiseModel":
        return cls(circuit, p)

    def rescaled(self, base_rate: float) -> "NoiseModel":
        """Same structure (region, multiplier) at a different base rate."""
        return NoiseModel(self.circuit, base_rate, self.region or None,
                          self.multiplier)

    def fault_probability(self, gate_id: int, label: str) -> float:
        kind = self.circuit.gate(gate_id).kind
        return 1.0 / len(_FAULT_BASIS[kind])

    def log_pair_weight(self, gate_id: int, label: str) -> float:
        """log( pr(g) * Pr_g(f) / (1 - pr(g)) ) for one event pair."""
        kind = self.circuit.gate(gate_id).kind
        return (self._log_pr[gate_id]
                - math.log(len(_FAULT_BASIS[kind]))
                - self._log_1m[gate_id])


def event_log_probability(event: Event, noise: NoiseModel) -> float:
    """log pi(E) = sum over pairs of log(pr * Pr_g(f)) + sum over rest of log(1-pr)."""
    total = noise.log_prob_empty
    for gate_id, label in event:
        kind = noise.circuit.gate(gate_id).kind
        if label not in _FAULT_BASIS[kind]:
            raise InvalidEventError(
                f"fault {label!r} invalid for gate kind {kind.value}")
        total += noise.log_pair_weight(gate_id, label)
    return total


def serialize_circuit(circuit: Circuit) -> str:
    """Line-oriented dump: gates, then DETECTOR lines, then LOGICAL lines."""
    lines = []
    for g in circuit.gates:
        qs = " ".join(str(q) for q in g.qubits)
        lines.append(f"{g.id} {g.kind.value} {qs} {g.round} {g.timestep}")
    for det in circuit.detectors:
        recs = " ".join(str(r) for r in det.records)
        lines.append(f"DETECTOR {det.kind} {det.check_type} {det.ancilla} "
                     f"{det.round} {recs}")
    lines.append("LOGICAL X " + " ".join(str(q) for q in circuit.logical_x))
    lines.append("LOGICAL Z " + " ".join(str(q) for q in circuit.logical_z))
    return "\n".join(lines) + "\n"
