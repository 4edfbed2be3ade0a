"""Smoke test for the bicoh extension: simulate, decompose, score."""
import json

import bicoh

recipe = {
    "duration": 30,
    "fs": 250,
    "seed": 3,
    "components": [{"kind": "nested_noise", "delay": 0.0}],
    "noise": {"kind": "one_over_f", "level_db": 0},
}
sig = bicoh.simulate(json.dumps(recipe))
assert len(sig) == 7500 and sig.fs == 250.0, sig

bank = bicoh.design_bank(250.0, 0.0, 20.0, 2.0)
assert bank[0].center == 0.0 and abs(bank[1].center - 1.0) < 1e-12

plane = bicoh.bicoherence(sig, (0.0, 90.0), (0.0, 90.0), bias_correct=True)
assert len(plane.magnitude) == len(plane.axis1)
assert all(abs(v) <= 1.0 + 1e-9 for row in plane.beta for v in row)

report = json.loads(bicoh.features(plane, (6.0, 10.0), (30.0, 80.0)))
assert report["verdicts"]["pac_like"], report

pac = bicoh.phase_power_coherence(sig, [4.0, 6.0, 8.0, 10.0], [40.0, 60.0, 80.0])
assert (len(pac.axis1), len(pac.axis2)) == (4, 3)

try:
    bicoh.simulate('{"duration": 1}')
except ValueError:
    pass
else:
    raise AssertionError("malformed recipe accepted")

print("smoke test ok:", report["outside_score"])
