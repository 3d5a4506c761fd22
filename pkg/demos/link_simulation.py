"""Toy OFDM link: constellations, channel, and bit error rate against SNR.

Run: python3 demos/link_simulation.py
"""

import math

import numpy as np

from rxprobe.linksim import LinkConfig, apply_channel, generate_dataset, hard_decision, modulate

rng = np.random.default_rng(0)
bits = rng.integers(0, 2, 100_000, dtype=np.uint8)

print("hard-decision BER over AWGN")
print(f"{'SNR dB':>7} {'QPSK':>9} {'QPSK theory':>12} {'16-QAM':>9}")
for snr in (-10, -5, 0, 4, 8, 12, 16):
    row = [snr]
    for mod in ("qpsk", "qam16"):
        rx = apply_channel(modulate(bits, mod), "awgn", snr, seed=snr + 100)
        row.append(np.mean(hard_decision(rx, mod) != bits))
    theory = 0.5 * math.erfc(math.sqrt(10 ** (snr / 10) / 2))
    print(f"{row[0]:>7} {row[1]:>9.4f} {theory:>12.4f} {row[2]:>9.4f}")

# A dataset is a stack of frames, each with its own SNR label drawn uniformly in dB.
ds = generate_dataset(LinkConfig(n_instances=500, channel="rayleigh_block", seed=1))
print("\nrx grid", ds.rx_grid.shape, "bits", ds.tx_bits.shape)
print(f"SNR labels span {ds.snr_db.min():.2f} .. {ds.snr_db.max():.2f} dB")
print("snr_db == 10 log10(P_signal / P_noise):",
      np.allclose(10 * np.log10(ds.signal_power / ds.noise_power), ds.snr_db))
