"""k-nearest-neighbour entropy, mutual information and NMI estimates.

All neighbour searches are exact brute force under the max-norm. Entropy
uses the hyper-rectangle spanned by each point's k nearest neighbours;
its volume is handled as a sum of per-dimension log extents so that
high-dimensional inputs cannot overflow.

Mutual information is measured on columns rescaled to unit standard
deviation, so neighbour ranks and hence the estimate do not depend on the
units of either variable. The normalisation ``I / sqrt(H(X) H(Y))`` and the
rectangle-volume radius are stand-ins for an externally defined formulation;
reports should flag them as such.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import digamma

NMI_DEFINITION = "I_ksg1 / sqrt(H_kl(X) * H_kl(Y)); rectangle k-NN volume in log domain"


class DegenerateInputError(ValueError):
    """Zero extent in some dimension; k-NN estimates are undefined."""


@dataclass(frozen=True)
class KsgConfig:
    k: int = 5
    tie_jitter: float = 1e-10
    seed: int = 0


@dataclass
class NmiEstimate:
    mi_nats: float  # clamped at 0
    mi_raw: float
    entropy_x: float
    entropy_y: float
    nmi: float | None
    failure: str = "none"  # none | negative_entropy | degenerate_input
    config: dict = field(default_factory=dict)
    reduction: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _as_2d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("expected an (N, d) array")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite sample values")
    return a


def jitter(x, amplitude, rng):
    """Add noise of ``amplitude`` times each column's standard deviation."""
    if amplitude == 0:
        return x
    return x + amplitude * x.std(axis=0) * rng.standard_normal(x.shape)


def _blocks(n, d, budget=2 ** 22):
    step = max(1, budget // max(1, n * d))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def _cheb(a, b):
    """Pairwise max-norm distances between rows of ``a`` and ``b``."""
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


def knn_indices(points, k):
    """Indices (N, k) of each point's k nearest neighbours under the max-norm."""
    x = _as_2d(points)
    n, d = x.shape
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < N, got k={k}, N={n}")
    out = np.empty((n, k), dtype=np.int64)
    for sl in _blocks(n, d):
        dist = _cheb(x[sl], x)
        rows = np.arange(sl.start, sl.stop)
        dist[rows - sl.start, rows] = np.inf
        part = np.argpartition(dist, k - 1, axis=1)[:, :k]
        out[sl] = part
    return out


def log_radii(points, k):
    """Log of the k-NN rectangle size for every point.

    For point i the half-extent along dimension m is the largest
    ``|x_jm - x_im|`` over its k nearest neighbours; the returned value is
    the sum over m of the log half-extents.
    """
    x = _as_2d(points)
    nbrs = knn_indices(x, k)
    out = np.empty(len(x))
    for sl in _blocks(len(x), x.shape[1] * k, 2 ** 22):
        ext = np.abs(x[nbrs[sl]] - x[sl, None, :]).max(axis=1)
        if np.any(ext <= 0):
            raise DegenerateInputError("zero neighbour extent in some dimension")
        out[sl] = np.log(ext).sum(axis=1)
    return out


def log_radius(points, index, k):
    """Log k-NN rectangle size of a single point (see :func:`log_radii`)."""
    x = _as_2d(points)
    n = len(x)
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < N, got k={k}, N={n}")
    dist = np.abs(x - x[index]).max(axis=1)
    dist[index] = np.inf
    nbrs = np.argpartition(dist, k - 1)[:k]
    ext = np.abs(x[nbrs] - x[index]).max(axis=0)
    if np.any(ext <= 0):
        raise DegenerateInputError(f"zero neighbour extent for point {index}")
    return float(np.log(ext).sum())


def kl_entropy(x, k=5, tie_jitter=0.0, seed=0):
    """Kozachenko-Leonenko differential entropy (nats) with rectangle volumes.

    H = psi(N) - psi(k) + (d - 1)/k + mean_i sum_m log(2 e_im), where e_im is
    the half-extent of point i's k-NN rectangle along dimension m.
    """
    x = _as_2d(x)
    n, d = x.shape
    if n <= k:
        raise ValueError(f"need N > k, got N={n}, k={k}")
    x = jitter(x, tie_jitter, np.random.default_rng(seed))
    lr = log_radii(x, k)
    return float(digamma(n) - digamma(k) + (d - 1) / k + d * math.log(2) + lr.mean())


def _check_marginal(a, name):
    if np.any(np.ptp(a, axis=0) == 0):
        raise DegenerateInputError(f"{name} has a constant column")


def ksg_mi(x, y, config: KsgConfig = KsgConfig()):
    """KSG estimator 1 of I(X; Y) in nats (not clamped).

    I = psi(k) + psi(N) - mean_i[psi(n_x(i) + 1) + psi(n_y(i) + 1)], with
    n_x(i), n_y(i) the marginal neighbours strictly inside the joint k-th
    neighbour distance. Every column is divided by its standard deviation
    first, which makes the estimate invariant to rescaling either variable.
    """
    x, y = _as_2d(x), _as_2d(y)
    n = len(x)
    if len(y) != n:
        raise ValueError("x and y must have the same number of samples")
    k = config.k
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < N, got k={k}, N={n}")
    _check_marginal(x, "x")
    _check_marginal(y, "y")
    rng = np.random.default_rng(config.seed)
    x = jitter(x, config.tie_jitter, rng)
    y = jitter(y, config.tie_jitter, rng)
    x = x / x.std(axis=0)
    y = y / y.std(axis=0)
    nx = np.empty(n, dtype=np.int64)
    ny = np.empty(n, dtype=np.int64)
    for sl in _blocks(n, x.shape[1] + y.shape[1]):
        dx = _cheb(x[sl], x)
        dy = _cheb(y[sl], y)
        dz = np.maximum(dx, dy)
        rows = np.arange(sl.start, sl.stop) - sl.start
        dz[rows, rows + sl.start] = np.inf
        eps = np.partition(dz, k - 1, axis=1)[:, k - 1]
        if np.any(eps == 0):
            raise DegenerateInputError("duplicate joint samples")
        # self is at distance 0 < eps and is excluded by the -1
        nx[sl] = (dx < eps[:, None]).sum(axis=1) - 1
        ny[sl] = (dy < eps[:, None]).sum(axis=1) - 1
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


def nmi(x, y, config: KsgConfig = KsgConfig(), reduction=None):
    """Normalised MI; estimator failures are returned in the record, not raised."""
    cfg = asdict(config)
    reduction = dict(reduction or {})
    try:
        raw = ksg_mi(x, y, config)
        hx = kl_entropy(x, config.k, config.tie_jitter, config.seed)
        hy = kl_entropy(y, config.k, config.tie_jitter, config.seed + 1)
    except DegenerateInputError:
        nan = math.nan
        return NmiEstimate(nan, nan, nan, nan, None, "degenerate_input", cfg, reduction)
    mi = max(raw, 0.0)
    if hx <= 0 or hy <= 0:
        return NmiEstimate(mi, raw, hx, hy, None, "negative_entropy", cfg, reduction)
    return NmiEstimate(mi, raw, hx, hy, mi / math.sqrt(hx * hy), "none", cfg, reduction)
