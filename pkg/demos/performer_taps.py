"""Train a small receiver and look at what its named taps capture.

Run: python3 demos/performer_taps.py   (about ten seconds)
"""

import numpy as np

from rxprobe.linksim import LinkConfig, generate_dataset, hard_decision
from rxprobe.performer import PerformerConfig, capture_units, train_performer

link = LinkConfig(n_subcarriers=24, n_symbols=14, n_instances=600, seed=0)
cfg = PerformerConfig(n_blocks=2, filters=(32, 16), dilations_freq=(1, 4), dilations_time=(1, 2),
                      n_subcarriers=24, n_symbols=14, epochs=3)
train = generate_dataset(link)
model = train_performer(train, cfg, seed=0)
print("BCE per epoch (epoch 0 = untrained):", np.round(model.history, 4))

# held-out frames at fixed SNRs
for snr in (-5.0, 5.0, 20.0):
    test = generate_dataset(LinkConfig(n_subcarriers=24, n_symbols=14, n_instances=50,
                                       snr_range_db=(snr - 1e-6, snr), seed=99))
    probs, _ = model.forward(test.rx_grid, taps=False)
    rx = test.rx_grid[:, 0] + 1j * test.rx_grid[:, 1]
    classic = hard_decision(rx.ravel(), "qpsk").reshape(-1, 24, 14, 2)
    learned = np.mean((probs > 0.5) != test.tx_bits)
    baseline = np.mean(np.moveaxis(classic, -1, 1) != test.tx_bits)
    print(f"SNR {snr:5.1f} dB: receiver BER {learned:.4f}  (hard decision {baseline:.4f})")

print("\ntaps:", cfg.tap_names())
sets = capture_units(model, train, [("B1-POST", None), ("B2-PRE", [3, 7])])
for a in sets:
    energy = a.tensors.reshape(len(a), -1).mean(axis=1)
    corr = np.corrcoef(energy, a.labels)[0, 1]
    print(f"{a.tap} channels={a.channel_filter}: shape {a.tensors.shape[1:]}, "
          f"corr(mean activation, SNR) = {corr:+.3f}")
