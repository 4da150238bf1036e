"""Pauli-frame propagation tests against an independent dense oracle."""

import numpy as np
import pytest

from qecsplit.circuit import (
    Event,
    GateKind,
    InvalidEventError,
    NoiseModel,
    build_rotated_surface_code,
    fault_labels,
)
from qecsplit.decoder import CircuitDecoder
from qecsplit.pauli import SyndromeTable, is_malignant, propagate


def reference_propagate(circuit, pairs):
    """Independent simulation: dense symplectic vectors per qubit.

    Tracks the residual Pauli as explicit (x, z) integer vectors and applies
    the CNOT conjugation rules written out from the symplectic update
    matrix, with no code shared with the implementation under test.
    """
    nq = circuit.num_qubits
    x = np.zeros(nq, dtype=np.int64)
    z = np.zeros(nq, dtype=np.int64)
    records = []
    faults = dict(pairs)
    for g in circuit.gates:
        f = faults.get(g.id)
        if g.kind is GateKind.CNOT:
            c, t = g.qubits
            # X_c -> X_c X_t, Z_t -> Z_c Z_t
            x[t] = (x[t] + x[c]) % 2
            z[c] = (z[c] + z[t]) % 2
            if f:
                for q, pauli in zip((c, t), f):
                    if pauli in ("X", "Y"):
                        x[q] = (x[q] + 1) % 2
                    if pauli in ("Z", "Y"):
                        z[q] = (z[q] + 1) % 2
        elif g.kind in (GateKind.PREP_Z, GateKind.PREP_X):
            q = g.qubits[0]
            x[q] = 0
            z[q] = 0
            if f:
                if f in ("X", "Y"):
                    x[q] = 1
                if f in ("Z", "Y"):
                    z[q] = 1
        elif g.kind is GateKind.MEAS_Z:
            q = g.qubits[0]
            records.append((x[q] + (1 if f else 0)) % 2)
        elif g.kind is GateKind.MEAS_X:
            q = g.qubits[0]
            records.append((z[q] + (1 if f else 0)) % 2)
    dets = []
    for det in circuit.detectors:
        bit = 0
        for r in det.records:
            bit ^= records[r]
        if det.kind == "readout":
            comp = z if det.check_type == "X" else x
            for q in circuit.check_support[det.ancilla]:
                bit ^= int(comp[q])
        dets.append(bit)
    flip_z = int(sum(x[q] for q in circuit.logical_z) % 2)
    flip_x = int(sum(z[q] for q in circuit.logical_x) % 2)
    return dets, {"X": flip_x, "Z": flip_z}


def random_event(circuit, rng, max_weight=4):
    k = int(rng.integers(0, max_weight + 1))
    gids = rng.choice(circuit.num_gates, size=k, replace=False)
    pairs = []
    for g in gids:
        labs = fault_labels(circuit.gate(int(g)).kind)
        pairs.append((int(g), labs[int(rng.integers(len(labs)))]))
    return tuple(sorted(pairs))


def test_empty_event_zero_syndrome():
    c = build_rotated_surface_code(3)
    syn = propagate(c, Event.empty())
    assert not syn.detectors.any()
    assert syn.logical_flips == {"X": 0, "Z": 0}
    assert syn.fired() == []


def test_invalid_fault_label_rejected():
    c = build_rotated_surface_code(3)
    cnot = next(g for g in c.gates if g.kind is GateKind.CNOT)
    meas = next(g for g in c.gates if g.kind is GateKind.MEAS_Z)
    with pytest.raises(InvalidEventError):
        propagate(c, Event.from_pairs([(cnot.id, "FLIP")]))
    with pytest.raises(InvalidEventError):
        propagate(c, Event.from_pairs([(meas.id, "XX")]))


def test_measurement_fault_fires_two_consecutive_detectors():
    c = build_rotated_surface_code(3)
    for g in c.gates:
        if g.kind in (GateKind.MEAS_Z, GateKind.MEAS_X) \
                and 0 < g.round < c.rounds - 1:
            syn = propagate(c, Event.from_pairs([(g.id, "FLIP")]))
            fired = [c.detectors[i] for i in syn.fired()]
            assert len(fired) == 2
            assert {d.round for d in fired} == {g.round, g.round + 1}
            assert {d.ancilla for d in fired} == {g.qubits[0]}
            assert syn.logical_flips == {"X": 0, "Z": 0}
            break
    else:
        pytest.fail("no mid-circuit measurement found")


def test_oracle_cross_check_random_events():
    c = build_rotated_surface_code(3)
    rng = np.random.default_rng(11)
    for _ in range(100):
        pairs = random_event(c, rng)
        syn = propagate(c, Event.from_pairs(pairs))
        dets, flips = reference_propagate(c, pairs)
        assert list(syn.detectors) == dets
        assert syn.logical_flips == flips


def test_gf2_linearity():
    c = build_rotated_surface_code(3)
    table = SyndromeTable(c)
    rng = np.random.default_rng(7)
    for _ in range(10_000):
        e1 = random_event(c, rng, max_weight=3)
        e2 = random_event(c, rng, max_weight=3)
        used = {g for g, _ in e1}
        e2 = tuple(p for p in e2 if p[0] not in used)
        b1, f1 = table.syndrome_bits(e1)
        b2, f2 = table.syndrome_bits(e2)
        b12, f12 = table.syndrome_bits(e1 + e2)
        assert b12 == b1 ^ b2
        assert f12 == f1 ^ f2


def test_syndrome_table_matches_propagate():
    c = build_rotated_surface_code(3)
    table = SyndromeTable(c)
    rng = np.random.default_rng(3)
    for _ in range(50):
        pairs = random_event(c, rng)
        bits, flips = table.syndrome_bits(pairs)
        syn = propagate(c, Event.from_pairs(pairs))
        expect_bits = 0
        for i in syn.fired():
            expect_bits |= 1 << i
        assert bits == expect_bits
        assert table.logical_flip(flips, "Z") == syn.logical_flips["Z"]
        assert table.logical_flip(flips, "X") == syn.logical_flips["X"]


def test_propagate_deterministic():
    c = build_rotated_surface_code(3)
    e = Event.from_pairs([(0, fault_labels(c.gate(0).kind)[0]),
                          (50, fault_labels(c.gate(50).kind)[0])])
    a = propagate(c, e)
    b = propagate(c, e)
    assert (a.detectors == b.detectors).all()
    assert a.logical_flips == b.logical_flips


def test_strict_fault_tolerance_weight_one():
    c = build_rotated_surface_code(3)
    noise = NoiseModel.uniform(c, 1e-3)
    table = SyndromeTable(c)
    for obs in ("Z", "X"):
        decoder = CircuitDecoder(c, noise, obs, table)
        for g in c.gates:
            for lab in fault_labels(g.kind):
                e = Event.from_pairs([(g.id, lab)])
                assert not is_malignant(c, noise, e, decoder, obs), \
                    f"single fault ({g.id}, {lab}) malignant for {obs}"


def test_is_malignant_empty_event():
    c = build_rotated_surface_code(3)
    noise = NoiseModel.uniform(c, 1e-3)
    decoder = CircuitDecoder(c, noise, "Z")
    assert not is_malignant(c, noise, Event.empty(), decoder, "Z")


def test_syndrome_dump():
    c = build_rotated_surface_code(3)
    syn = propagate(c, Event.empty())
    dump = syn.dump()
    assert dump.count("\n") == len(c.detectors)
    assert set(dump) <= {"0", "1", "\n"}
