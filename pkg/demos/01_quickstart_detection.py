"""Quickstart: build a reference set and get explainable verdicts.

Builds a small single-technique historical database, then checks three new
records against it: a typical one, one with a digit-swapped prescription
(Type 1), and one whose features do not match its prescription (Type 2).

Usage:
  python demos/01_quickstart_detection.py
"""

import numpy as np

from rxcheck import ModelParams, build_historical_db, detect, explain
from rxcheck.records import TreatmentRecord

rng = np.random.default_rng(0)

# Three treatment patterns: prescription plus the feature profile that
# historically accompanies it.
patterns = [
    ((5, 400), "mixed photon", "palliative", "C34.90", "80463", 76),
    ((10, 300), "x15", "palliative", "C78.1", None, 74),
    ((20, 250), "x06", "curative", "C34.10", "81403", 62),
]

records = []
for p, (rx, energy, intent, icd10, morphology, age) in enumerate(patterns):
    for k in range(40):
        records.append(TreatmentRecord.create(
            f"hist-{p}-{k:02d}", rx[0], rx[1], "3D",
            energy=energy, intent=intent, icd10=icd10, morphology=morphology,
            age_at_tx=age + int(rng.integers(-5, 6)),
        ))

db = build_historical_db(records)
print(f"reference set: {db.size} records, theta={db.theta:.3f}, tau={db.tau:.3f}")

params = ModelParams(a=0.3, b=0.3, mu=0.05, nu=0.05)

queries = {
    "typical": TreatmentRecord.create(
        "new-typical", 5, 400, "3D", energy="mixed photon", intent="palliative",
        icd10="C34.90", morphology="80463", age_at_tx=71),
    # 5 x 400 with its leading digits exchanged: 4 x 500 was never prescribed.
    "digit swap": TreatmentRecord.create(
        "new-swap", 4, 500, "3D", energy="mixed photon", intent="palliative",
        icd10="C34.90", morphology="80463", age_at_tx=76),
    # A common prescription paired with another pattern's features.
    "feature mismatch": TreatmentRecord.create(
        "new-mismatch", 5, 400, "3D", energy="x06", intent="curative",
        icd10="C34.10", morphology="81403", age_at_tx=62),
}

for label, query in queries.items():
    verdict = detect(query, db, params)
    print(f"\n--- {label} ({query.record_id}) -> {verdict.status}")
    for line in explain(verdict):
        print(f"    {line}")
