"""The k-NN information baseline: entropy, KSG mutual information, NMI.

Shows the estimator oracles, why the radius is kept in the log domain, and
the dimension sweep with negative-entropy failures recorded as data.

Run: python3 demos/mi_baseline.py
"""

import math

import numpy as np

from rxprobe.dimred import dim_sweep, pca_fit, pca_transform
from rxprobe.mi import KsgConfig, kl_entropy, ksg_mi, log_radius

rng = np.random.default_rng(0)

print("entropy of N(0,1):", round(kl_entropy(rng.standard_normal(5000)), 4),
      "analytic", round(0.5 * math.log(2 * math.pi * math.e), 4))
x = rng.standard_normal(2000)
y = 0.6 * x + 0.8 * rng.standard_normal(2000)
print("KSG on rho=0.6 Gaussians:", round(ksg_mi(x, y), 4), "analytic", round(-0.5 * math.log(1 - 0.36), 4))

# 512 dimensions, every neighbour extent about e^3: the linear product overflows
pts = np.vstack([np.zeros(512), math.exp(3) * rng.uniform(0.5, 1, (5, 512))])
ext = np.abs(pts[1:]).max(axis=0)
with np.errstate(over="ignore"):
    print("linear-domain volume:", np.prod(ext), " log-domain:", round(log_radius(pts, 0, 5), 2))

# dimension sweep on PCA components of activations that encode SNR in a few
# directions; the trailing components are low-variance noise, so the joint
# entropy estimate eventually goes negative and NMI is reported as a failure
n, d = 400, 40
snr = rng.uniform(-10, 25, n)
basis = rng.standard_normal((3, d))
acts = np.column_stack([snr, np.sin(snr / 5), rng.standard_normal(n)]) @ basis + 0.05 * rng.standard_normal((n, d))
model = pca_fit(acts[:300])
z = pca_transform(model, acts[300:], 11)
print(f"\nPCA keeps {model.n_retained} components for 95% variance")
rows = dim_sweep({k: z[:, :k] for k in range(1, 12)}, snr[300:], range(1, 12), KsgConfig())
for r in rows:
    e = r.estimates[0]
    status = f"NMI {e.nmi:.3f}" if e.failure == "none" else f"failed: {e.failure} (H_x = {e.entropy_x:.2f})"
    print(f"dim {r.dim:>2}: {status}")
