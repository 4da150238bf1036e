"""Deterministic Pauli-frame propagation of fault events to syndromes.

All randomness lives elsewhere; these are pure functions of (circuit, event).
The frame tracks X and Z components relative to the noiseless reference run,
so every detector value reduces to an XOR of measurement-record flips.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np

from .circuit import (
    Circuit,
    Event,
    GateKind,
    InvalidEventError,
    NoiseModel,
    fault_labels,
)


@dataclass
class Syndrome:
    detectors: np.ndarray            # uint8 per circuit.detectors entry
    logical_flips: Dict[str, int]    # observable -> flip bit

    def fired(self) -> List[int]:
        return [int(i) for i in np.nonzero(self.detectors)[0]]

    def dump(self) -> str:
        """Debug dump, one 0/1 line per detector."""
        return "\n".join(str(int(b)) for b in self.detectors) + "\n"


class PauliFrame:
    __slots__ = ("x", "z", "record")

    def __init__(self, num_qubits: int):
        self.x = bytearray(num_qubits)
        self.z = bytearray(num_qubits)
        self.record: List[int] = []

    def apply_pauli(self, qubit: int, pauli: str) -> None:
        if pauli == "X":
            self.x[qubit] ^= 1
        elif pauli == "Z":
            self.z[qubit] ^= 1
        elif pauli == "Y":
            self.x[qubit] ^= 1
            self.z[qubit] ^= 1


def _apply_gate(frame: PauliFrame, kind: GateKind, qubits: Tuple[int, ...],
                fault: str) -> None:
    if kind is GateKind.CNOT:
        c, t = qubits
        frame.x[t] ^= frame.x[c]
        frame.z[c] ^= frame.z[t]
        if fault:
            frame.apply_pauli(c, fault[0])
            frame.apply_pauli(t, fault[1])
    elif kind is GateKind.PREP_Z or kind is GateKind.PREP_X:
        q = qubits[0]
        frame.x[q] = 0
        frame.z[q] = 0
        if fault:
            frame.apply_pauli(q, fault)
    elif kind is GateKind.MEAS_Z:
        q = qubits[0]
        flip = frame.x[q] ^ (1 if fault else 0)
        frame.record.append(flip)
    elif kind is GateKind.MEAS_X:
        q = qubits[0]
        flip = frame.z[q] ^ (1 if fault else 0)
        frame.record.append(flip)


def propagate(circuit: Circuit, event: Event) -> Syndrome:
    """Insert each fault at its gate's output and conjugate through the rest.

    Returns detector bits (including the noiseless-readout detectors) and the
    flips of both logical observables at the final data readout.
    """
    faults: Dict[int, str] = {}
    for gate_id, label in event:
        if not 0 <= gate_id < circuit.num_gates:
            raise InvalidEventError(f"gate id {gate_id} out of range")
        kind = circuit.gate(gate_id).kind
        if label not in fault_labels(kind):
            raise InvalidEventError(
                f"fault {label!r} invalid for gate kind {kind.value}")
        faults[gate_id] = label

    frame = PauliFrame(circuit.num_qubits)
    for g in circuit.gates:
        _apply_gate(frame, g.kind, g.qubits, faults.get(g.id, ""))

    rec = frame.record
    dets = np.zeros(len(circuit.detectors), dtype=np.uint8)
    for i, det in enumerate(circuit.detectors):
        bit = 0
        for r in det.records:
            bit ^= rec[r]
        if det.kind == "readout":
            # Check value recomputed from the noiseless final readout: X
            # checks see Z-frame parity, Z checks see X-frame parity.
            comp = frame.z if det.check_type == "X" else frame.x
            for q in circuit.check_support[det.ancilla]:
                bit ^= comp[q]
        dets[i] = bit

    flip_z = 0
    for q in circuit.logical_z:
        flip_z ^= frame.x[q]
    flip_x = 0
    for q in circuit.logical_x:
        flip_x ^= frame.z[q]
    return Syndrome(dets, {"X": flip_x, "Z": flip_z})


class SyndromeTable:
    """Precomputed single-fault syndromes, exploiting GF(2) linearity.

    syndrome(E) is the XOR of the single-pair syndromes of E's elements, so a
    table of one propagation per (gate, fault) pair turns event evaluation
    into a handful of integer XORs.  Detector bitmasks are Python ints.
    """

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.num_detectors = len(circuit.detectors)
        self.mask: Dict[Tuple[int, str], int] = {}
        self.flip: Dict[Tuple[int, str], int] = {}  # bit0: Z flip, bit1: X flip
        for g in circuit.gates:
            for label in fault_labels(g.kind):
                syn = propagate(circuit, Event.from_pairs([(g.id, label)]))
                bits = 0
                for i in np.nonzero(syn.detectors)[0]:
                    bits |= 1 << int(i)
                self.mask[(g.id, label)] = bits
                self.flip[(g.id, label)] = (syn.logical_flips["Z"]
                                            | (syn.logical_flips["X"] << 1))

    def syndrome_bits(self, pairs: Iterable[Tuple[int, str]]) -> Tuple[int, int]:
        """(detector bitmask, packed logical flips) for an event."""
        bits = 0
        flips = 0
        for pair in pairs:
            bits ^= self.mask[pair]
            flips ^= self.flip[pair]
        return bits, flips

    def logical_flip(self, flips_packed: int, observable: str) -> int:
        return (flips_packed >> (1 if observable == "X" else 0)) & 1


def is_malignant(circuit: Circuit, noise: NoiseModel, event: Event,
                 decoder, observable: str) -> bool:
    """True iff the decoder's predicted flip differs from the event's true flip.

    The decoder handle is a decoder.CircuitDecoder (or anything exposing
    predict(syndrome) -> flip bit); it must be built for this circuit, noise,
    and observable.
    """
    syn = propagate(circuit, event)
    predicted = decoder.predict(syn)
    return bool(predicted ^ syn.logical_flips[observable])
