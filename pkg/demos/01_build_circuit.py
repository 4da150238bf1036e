"""Build a rotated surface-code syndrome-extraction circuit and inspect it.

The d=3 circuit runs 2d rounds of eight stabilizer checks over nine data
qubits; each round is 8 preparations, 24 CNOTs, and 8 measurements, for
40 gates per round and 240 fault locations in total.
"""

from qecsplit import (
    GateKind,
    NoiseModel,
    build_rotated_surface_code,
    enumerate_faults,
    serialize_circuit,
)

circuit = build_rotated_surface_code(3)
print(f"distance {circuit.distance}, {circuit.rounds} rounds, "
      f"{circuit.num_gates} gates")
print(f"{len(circuit.data_qubits)} data qubits, "
      f"{len(circuit.x_ancillas)} X ancillas, "
      f"{len(circuit.z_ancillas)} Z ancillas, "
      f"{len(circuit.detectors)} detectors")

kinds = {}
for g in circuit.gates:
    if g.round == 0:
        kinds[g.kind.value] = kinds.get(g.kind.value, 0) + 1
print("gates in round 0:", kinds)

print("\nCNOT fault basis (first five of fifteen):")
for label, prob in enumerate_faults(GateKind.CNOT)[:5]:
    print(f"  {label}: {prob:.6f}")

noise = NoiseModel.uniform(circuit, 1e-3)
print(f"\nuniform noise at p=1e-3: "
      f"log Pr(no faults) = {noise.log_prob_empty:.4f}")

text = serialize_circuit(circuit)
print(f"\nserialized circuit: {len(text.splitlines())} lines; first three:")
for line in text.splitlines()[:3]:
    print(" ", line)
