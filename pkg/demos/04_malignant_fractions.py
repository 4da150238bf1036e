"""Malignant-fault fractions: which few-fault events defeat the decoder.

Weight-1 events are never malignant (the decoder is strictly fault
tolerant), while a few percent of weight-2 events at d=3 already flip the
logical observable.  Exhaustive enumeration covers weight 1; weight 2 is
sampled uniformly from the product space of gate pairs and fault labels.
"""

from qecsplit import NoiseModel, build_rotated_surface_code
from qecsplit.estimator import MalignancyOracle, malignant_fraction

circuit = build_rotated_surface_code(3)
noise = NoiseModel.uniform(circuit, 1e-3)
oracle = MalignancyOracle(circuit, noise, "Z")

w1 = malignant_fraction(circuit, noise, 1, mode="exhaustive",
                        oracle=oracle)
print(f"weight 1 (exhaustive): {w1.malignant}/{w1.total} malignant")

for k in (2, 3):
    est = malignant_fraction(circuit, noise, k, mode="sampled",
                             budget=50_000, seed=0, oracle=oracle)
    print(f"weight {k} (sampled, {est.total} draws): "
          f"{100 * est.fraction:.2f}% malignant, "
          f"95% CI [{100 * est.ci_low:.2f}%, {100 * est.ci_high:.2f}%]")
