"""
ADE, FDE and miss rate on toy trajectories
==========================================
"""

import numpy as np

from hybridpred.metrics import MissRateThresholds, ade, fde, min_over_modes, miss_rate

t = np.linspace(0, 3, 31)[1:, None]
truth = np.hstack([10 * t, 0 * t])          # straight ahead at 10 m/s

drifting = truth + np.hstack([0 * t, 0.3 * t])   # slowly drifts left
late = truth.copy()
late[-1] += [3.0, 4.0]                        # only the last point is off

print("ADE drifting", round(ade(drifting, truth), 3), "FDE drifting", round(fde(drifting, truth), 3))
print("ADE late    ", round(ade(late, truth), 3), "FDE late    ", round(fde(late, truth), 3))
print("min-ADE over both modes", round(min_over_modes(ade, [drifting, late], truth), 3))

th = MissRateThresholds()
for v in (1.0, 6.2, 11.0, 20.0):
    print(f"longitudinal threshold at {v:4.1f} m/s: {th.longitudinal(v):.2f} m")

# one sample per row: (modes, truth, ground-truth speed, final heading)
samples = [(np.stack([drifting]), truth, 10.0, 0.0),
           (np.stack([late]), truth, 10.0, 0.0),
           (np.stack([drifting, late]), truth, 10.0, 0.0)]
print("miss rate", miss_rate(samples, th), "with", th.describe())
