"""Token point clouds and intrinsic-dimension estimation.

A text is treated as a cloud of token vectors sampled from a manifold in the
representation space. Two estimators of the manifold dimension are provided:

* ``two_nn`` -- ratio of second- to first-nearest-neighbor distances,
  closed-form maximum-likelihood (Pareto) fit with an optional discard of the
  largest ratios.
* ``levina_bickel`` -- per-point maximum-likelihood fit on the distances to a
  fixed number of neighbors, averaged over points.

Both estimators remove exact duplicate points first (a zero first-neighbor
distance would break the log-ratios) and are invariant under scaling,
rigid motions, and point reordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.spatial import cKDTree

from .common import DataError, DegenerateCloudError

ESTIMATOR_TWONN = "twonn"
ESTIMATOR_LBMLE = "lbmle"

CLOUD_KINDS = ("hypercube", "hypersphere-surface", "gaussian-blob")


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered set of token vectors in a D-dimensional representation space.

    Point order carries no semantic weight for estimation; estimators are
    permutation-invariant.
    """

    points: np.ndarray
    source_id: str = ""

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DataError(f"points must be a 2-D matrix, got ndim={pts.ndim}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"points must be at least 1x1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class FilterConfig:
    """Length and special-token filtering applied before cloud construction."""

    min_tokens: int = 15
    max_tokens: int = 128
    drop_special: bool = True

    def __post_init__(self) -> None:
        if not (1 <= self.min_tokens <= self.max_tokens):
            raise ValueError(
                f"need 1 <= min_tokens <= max_tokens, got "
                f"min={self.min_tokens} max={self.max_tokens}"
            )


@dataclass(frozen=True)
class FilteredOut:
    """Marker for a text rejected by the length filter."""

    source_id: str
    n_content: int


@dataclass(frozen=True)
class IdEstimate:
    """Estimator output: value, estimator identity, usable point count, params."""

    value: float
    estimator: str
    n_used: int
    params: dict = field(default_factory=dict)


def build_point_cloud(
    tokens: Sequence[str],
    vectors: np.ndarray,
    special_mask: Sequence[bool],
    cfg: FilterConfig,
    source_id: str = "",
) -> Union[PointCloud, FilteredOut]:
    """Assemble a point cloud from per-token vectors, applying the filter.

    Special tokens are removed when ``cfg.drop_special``. If fewer than
    ``cfg.min_tokens`` content tokens remain the text is rejected with a
    :class:`FilteredOut` marker; more than ``cfg.max_tokens`` are truncated
    to the first ``max_tokens`` in reading order.
    """
    vecs = np.asarray(vectors, dtype=np.float64)
    if vecs.ndim != 2:
        raise DataError(f"vectors must be a 2-D matrix, got ndim={vecs.ndim}")
    if not (len(tokens) == vecs.shape[0] == len(special_mask)):
        raise DataError(
            f"length mismatch: {len(tokens)} tokens, {vecs.shape[0]} vectors, "
            f"{len(special_mask)} mask entries"
        )
    if not np.all(np.isfinite(vecs)):
        raise DataError("token vectors contain non-finite coordinates")

    if cfg.drop_special:
        keep = ~np.asarray(special_mask, dtype=bool)
        vecs = vecs[keep]
    if vecs.shape[0] < cfg.min_tokens:
        return FilteredOut(source_id=source_id, n_content=vecs.shape[0])
    if vecs.shape[0] > cfg.max_tokens:
        vecs = vecs[: cfg.max_tokens]
    return PointCloud(points=vecs, source_id=source_id)


def knn_distances(cloud: PointCloud, k: int) -> np.ndarray:
    """N x k matrix of ascending Euclidean distances to nearest other points.

    Row ``i`` holds the distances from point ``i`` to its ``k`` nearest
    neighbors (self excluded), sorted ascending. Exact computation; requires
    ``k`` strictly below the number of unique points.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n_unique = np.unique(cloud.points, axis=0).shape[0]
    if k >= n_unique:
        raise DataError(f"k={k} must be below the unique-point count {n_unique}")
    tree = cKDTree(cloud.points)
    dist, _ = tree.query(cloud.points, k=k + 1)
    # column 0 is the self match at distance 0 (any co-located duplicate is
    # interchangeable with it)
    return np.asarray(dist[:, 1:], dtype=np.float64)


def _unique_points(cloud: PointCloud) -> tuple[np.ndarray, int]:
    unique = np.unique(cloud.points, axis=0)
    return unique, cloud.n - unique.shape[0]


def neighbor_ratios(cloud: PointCloud) -> np.ndarray:
    """Per-point ratios mu_i = r2/r1 on the deduplicated cloud, unsorted."""
    unique, _ = _unique_points(cloud)
    if unique.shape[0] < 3:
        raise DegenerateCloudError(
            f"need >= 3 unique points for neighbor ratios, got {unique.shape[0]}"
        )
    dist = knn_distances(PointCloud(unique, cloud.source_id), k=2)
    r1, r2 = dist[:, 0], dist[:, 1]
    if np.any(r1 <= 0):
        raise RuntimeError("zero first-neighbor distance after deduplication")
    return r2 / r1


def two_nn(cloud: PointCloud, discard_fraction: float = 0.1) -> IdEstimate:
    """TwoNN estimate from the distribution of mu = r2/r1 neighbor ratios.

    Under the Pareto model, log mu is exponential with rate equal to the
    manifold dimension. The ``ceil(discard_fraction * N)`` largest ratios
    (the noisiest tail) are discarded; the estimate is the closed-form
    censored MLE ``d = M / (sum of retained log mu + n_discarded * largest
    retained log mu)``, which treats the discarded ratios as right-censored
    so the truncation does not bias the fit. With nothing discarded this is
    the plain MLE ``M / sum(log mu)``. Deterministic for a fixed cloud.
    """
    if not (0.0 <= discard_fraction < 1.0):
        raise ValueError(f"discard_fraction must be in [0, 1), got {discard_fraction}")
    unique, n_dup = _unique_points(cloud)
    if unique.shape[0] < 3:
        raise DegenerateCloudError(
            f"need >= 3 unique points for TwoNN, got {unique.shape[0]}"
        )
    mu = neighbor_ratios(PointCloud(unique, cloud.source_id))
    log_mu = np.sort(np.log(mu))
    n_discard = math.ceil(discard_fraction * log_mu.size)
    retained = log_mu[: log_mu.size - n_discard]
    if retained.size < 1:
        raise DataError(
            f"discard_fraction={discard_fraction} leaves no ratios "
            f"(N={log_mu.size})"
        )
    total = float(retained.sum()) + n_discard * float(retained[-1])
    if total <= 0.0:
        raise DegenerateCloudError(
            "all retained neighbor ratios equal 1; TwoNN is undefined"
        )
    return IdEstimate(
        value=retained.size / total,
        estimator=ESTIMATOR_TWONN,
        n_used=unique.shape[0],
        params={
            "discard_fraction": discard_fraction,
            "n_discarded": n_discard,
            "duplicates_removed": n_dup,
        },
    )


def levina_bickel(cloud: PointCloud, k: int = 10) -> IdEstimate:
    """Levina-Bickel MLE over distances to the k nearest neighbors.

    Per point, ``m(x) = [ mean_{j<k} log(T_k(x)/T_j(x)) ]^-1`` with T_j the
    distance to the j-th neighbor; the estimate is the arithmetic mean of the
    per-point values.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    unique, n_dup = _unique_points(cloud)
    if k >= unique.shape[0]:
        raise DataError(
            f"k={k} must be below the unique-point count {unique.shape[0]}"
        )
    dist = knn_distances(PointCloud(unique, cloud.source_id), k=k)
    if np.any(dist <= 0):
        raise RuntimeError("zero neighbor distance after deduplication")
    t_k = dist[:, -1:]
    log_ratios = np.log(t_k / dist[:, :-1])
    denom = log_ratios.mean(axis=1)
    if np.any(denom <= 0):
        raise DegenerateCloudError(
            "neighbor distances carry no radial spread; Levina-Bickel is undefined"
        )
    per_point = np.sort(1.0 / denom)  # sorted sum keeps the mean order-independent
    return IdEstimate(
        value=float(per_point.mean()),
        estimator=ESTIMATOR_LBMLE,
        n_used=unique.shape[0],
        params={"k": k, "duplicates_removed": n_dup},
    )


def embedding_rotation(ambient_dim: int, seed: int) -> np.ndarray:
    """Seeded Haar-random orthogonal matrix used by :func:`synthetic_cloud`.

    Exposed so callers can un-rotate a synthetic cloud for verification.
    """
    rng = np.random.default_rng([seed, 1])
    gauss = rng.standard_normal((ambient_dim, ambient_dim))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def synthetic_cloud(
    kind: str,
    d: int,
    ambient_dim: int,
    n: int,
    seed: int,
    rotate: bool = True,
) -> PointCloud:
    """Sample n points on a known d-dimensional manifold embedded in R^D.

    Kinds: ``hypercube`` (uniform in [0,1]^d), ``hypersphere-surface``
    (uniform on the unit d-sphere in R^{d+1}), ``gaussian-blob`` (standard
    normal in R^d). Points are zero-padded to the ambient dimension and, when
    ``rotate``, mapped through :func:`embedding_rotation`. Deterministic per
    seed.
    """
    if kind not in CLOUD_KINDS:
        raise ValueError(f"unknown cloud kind {kind!r}; expected one of {CLOUD_KINDS}")
    if d < 1 or n < 1:
        raise ValueError(f"d and n must be >= 1, got d={d} n={n}")
    native_dim = d + 1 if kind == "hypersphere-surface" else d
    if native_dim > ambient_dim:
        raise ValueError(
            f"{kind} with d={d} needs ambient dimension >= {native_dim}, "
            f"got {ambient_dim}"
        )

    rng = np.random.default_rng([seed, 0])
    if kind == "hypercube":
        native = rng.uniform(0.0, 1.0, size=(n, d))
    elif kind == "hypersphere-surface":
        native = rng.standard_normal((n, d + 1))
        norms = np.linalg.norm(native, axis=1, keepdims=True)
        while np.any(norms == 0.0):  # measure-zero guard
            bad = norms[:, 0] == 0.0
            native[bad] = rng.standard_normal((int(bad.sum()), d + 1))
            norms = np.linalg.norm(native, axis=1, keepdims=True)
        native = native / norms
    else:
        native = rng.standard_normal((n, d))

    points = np.zeros((n, ambient_dim))
    points[:, :native_dim] = native
    if rotate:
        points = points @ embedding_rotation(ambient_dim, seed).T
    return PointCloud(
        points=points,
        source_id=f"synthetic:{kind}:d{d}:D{ambient_dim}:n{n}:seed{seed}",
    )
