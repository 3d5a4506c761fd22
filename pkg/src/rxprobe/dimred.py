"""PCA, external embedding import, and the NMI-versus-dimension sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mi import KsgConfig, NmiEstimate, nmi


@dataclass
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (min(N, d), d), orthonormal rows
    eigenvalues: np.ndarray  # variance along each component, non-increasing
    n_retained: int
    retained_fraction: float

    @property
    def explained_variance_ratio(self):
        return self.eigenvalues / self.eigenvalues.sum()


def pca_fit(x, retain=0.95):
    """PCA by SVD of the centred data.

    Keeps the fewest leading components whose explained variance reaches
    ``retain``. Each component is signed so its largest-magnitude loading is
    positive.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise ValueError("need an (N >= 2, d >= 1) matrix")
    if not 0 < retain <= 1:
        raise ValueError("retain must lie in (0, 1]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    eig = s ** 2 / (x.shape[0] - 1)
    total = eig.sum()
    if total <= 0:
        raise ValueError("data has zero total variance")
    idx = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(len(vt)), idx])
    vt = vt * signs[:, None]
    frac = np.cumsum(eig) / total
    # tolerate rounding in the cumulative sum at exactly ``retain``
    r = int(np.searchsorted(frac, retain - 1e-12) + 1)
    r = min(r, len(eig))
    return PcaModel(mean, vt, eig, r, float(frac[r - 1]))


def pca_transform(model: PcaModel, x, n_components=None):
    """Centred projection onto the first ``n_components`` (default: retained) components."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != model.mean.shape[0]:
        raise ValueError(f"expected {model.mean.shape[0]} columns, got {x.shape[1]}")
    r = model.n_retained if n_components is None else int(n_components)
    if not 1 <= r <= len(model.components):
        raise ValueError(f"n_components must lie in [1, {len(model.components)}]")
    z = (x - model.mean) @ model.components[:r].T
    return z[0] if single else z


def pca_inverse_transform(model: PcaModel, z):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    return z @ model.components[: z.shape[1]] + model.mean


def import_embedding(path, ids):
    """Read an externally computed embedding and align its rows to ``ids``."""
    from .store import read_matrix

    matrix, file_ids = read_matrix(path)
    ids = np.asarray(ids)
    pos = {int(i): r for r, i in enumerate(file_ids)}
    if len(pos) != len(file_ids):
        raise ValueError(f"{path}: duplicate instance ids")
    rows = []
    for r, i in enumerate(ids):
        if int(i) not in pos:
            raise ValueError(f"{path}: instance id {int(i)} (dataset row {r}) missing from embedding")
        rows.append(pos[int(i)])
    if len(file_ids) != len(ids):
        extra = sorted(set(pos) - {int(i) for i in ids})
        raise ValueError(f"{path}: row for unknown instance id {extra[0]}")
    return matrix[rows]


@dataclass
class SweepRow:
    dim: int
    estimates: list[NmiEstimate]

    @property
    def values(self):
        return [e.nmi for e in self.estimates if e.failure == "none"]

    @property
    def n_failures(self):
        return sum(e.failure != "none" for e in self.estimates)

    @property
    def nmi_mean(self):
        v = self.values
        return float(np.mean(v)) if v else math.nan

    @property
    def nmi_std(self):
        v = self.values
        return float(np.std(v)) if v else math.nan

    def to_dict(self):
        return {
            "dim": self.dim,
            "nmi_mean": self.nmi_mean,
            "nmi_std": self.nmi_std,
            "n_failures": self.n_failures,
            "estimates": [e.to_dict() for e in self.estimates],
        }


def dim_sweep(x_reduced_per_dim, y, dims=range(1, 12), config: KsgConfig = KsgConfig()):
    """NMI between reduced activations and labels, one row per dimension.

    ``x_reduced_per_dim[dim]`` is an (N, dim) matrix, or a list of such
    matrices (one per fold). ``y`` is the label vector, or a list of label
    vectors matching the folds. Failures are recorded in the row.
    """
    rows = []
    for dim in dims:
        mats = x_reduced_per_dim[dim]
        folded = isinstance(mats, (list, tuple))
        mats = list(mats) if folded else [mats]
        ys = list(y) if folded else [y]
        if len(ys) != len(mats):
            raise ValueError(f"dim {dim}: {len(mats)} matrices but {len(ys)} label vectors")
        ests = []
        for f, (m, yy) in enumerate(zip(mats, ys)):
            m = np.asarray(m, dtype=np.float64)
            if m.ndim != 2 or m.shape[1] != dim:
                raise ValueError(f"dim {dim}: matrix has shape {m.shape}")
            ests.append(nmi(m, yy, config, {"dim": dim, "fold": f}))
        rows.append(SweepRow(dim, ests))
    return rows
