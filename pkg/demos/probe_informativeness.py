"""Probes separate an SNR-bearing unit from a noise unit.

Two synthetic units: one is a noisy linear function of the SNR, the other is
independent noise. Ten-fold probing ranks them by inverse MSE.

Run: python3 demos/probe_informativeness.py   (under a minute)
"""

import numpy as np

from rxprobe.interpret import kfold_interpret, rank_units
from rxprobe.performer import ActivationSet
from rxprobe.probe import ProbeConfig

rng = np.random.default_rng(0)
n, shape = 600, (2, 6, 6)
snr = rng.uniform(-10, 25, n)
w = rng.uniform(0.02, 0.1, shape)
units = [
    ActivationSet("INFO", None, (snr[:, None, None, None] * w + 0.05 * rng.standard_normal((n, *shape))).astype(np.float32), snr),
    ActivationSet("NOISE", None, rng.standard_normal((n, *shape)).astype(np.float32), snr),
]
cfg = ProbeConfig(scale=0.25, max_epochs=25, early_stop_epochs=5, lr=1e-3, batch_size=64)

summaries = [kfold_interpret(u, cfg, k=10, seed=0) for u in units]
print(f"Var(SNR) = {np.var(snr):.2f} dB^2")
for s in summaries:
    print(f"{s.unit:>6}: MSE {s.mean_mse:7.2f} +- {s.std_mse:5.2f} dB^2, inverse MSE {s.inverse_mse:.4f}")
order, _ = rank_units([r for s in summaries for r in s.runs[:1]])
print("most informative first:", [summaries[i].unit for i in order])
