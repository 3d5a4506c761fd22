"""Local interpretations, intra-instance statistics and contribution tiers.

Run: python3 demos/local_and_contributions.py
"""

import numpy as np

from rxprobe.interpret import (
    contribution_analysis,
    cumulative_shares,
    intra_instance_stats,
    kfold_interpret,
    skewness,
)
from rxprobe.performer import ActivationSet
from rxprobe.probe import ProbeConfig

rng = np.random.default_rng(1)
n = 1500
snr = rng.uniform(-10, 25, n)
# the unit only "sees" SNR above 5 dB, so low-SNR frames are hard
x = np.where(snr > 5, snr, 5.0)[:, None, None, None] * rng.uniform(0.05, 0.1, (1, 3, 3))
aset = ActivationSet("CLIPPED", None, (x + 0.05 * rng.standard_normal((n, 1, 3, 3))).astype(np.float32), snr)

s = kfold_interpret(aset, ProbeConfig(scale=0.125, max_epochs=15, lr=1e-3, batch_size=64), k=5, seed=0)
sq = np.array([r.sq_error for r in s.locals])
print(f"global MSE {s.mean_mse:.2f} dB^2 (mean of {len(sq)} local squared errors: {sq.mean():.2f})")
mx, mean, std = intra_instance_stats(s.locals)
print(f"intra-instance max {mx:.1f}, mean {mean:.2f}, std {std:.2f}, skewness {skewness(sq):.2f}")

low = np.array([r.snr_true < 5 for r in s.locals])
print(f"mean squared error below 5 dB: {sq[low].mean():.2f}, above: {sq[~low].mean():.2f}")

c = contribution_analysis(sq)
for label, share in c.table():
    print(f"{label:>8}: {share:.3f}")
shares = cumulative_shares(sq)
n80 = int(np.searchsorted(shares, 0.8)) + 1
print(f"{n80} of {len(sq)} instances ({n80 / len(sq):.0%}) carry 80% of the total error")
