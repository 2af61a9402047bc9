"""Gaussian-mixture feature model, ML classification, and discriminant gain.

Features of class l are N(mu_l, C) with a shared SPD covariance.  The
maximum-likelihood classifier is the minimum-Mahalanobis-distance rule, and
class separability is summarized by the discriminant gain (DG): the
Mahalanobis distance between the closest centroid pair, decomposed per
eigen-dimension of C.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

# covariances this ill-conditioned are rejected rather than silently inverted
MAX_CONDITION = 1e12
MIN_RELATIVE_EIGENVALUE = 1e-12


class ModelError(ValueError):
    """Raised for structurally invalid mixture models."""


def q_function(x):
    """Gaussian tail probability Q(x) = P[N(0,1) > x].

    Accepts scalars or arrays.  Q(1.96) ~= 0.0249979.
    """
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def accuracy_lower_bound(num_classes: int, g_min: float) -> float:
    """Union-bound accuracy floor 1 - (L-1) Q(sqrt(g_min)/2).

    g_min is the minimum pairwise receive DG.  The bound can be negative for
    small gains and large L; callers decide whether a vacuous bound is useful.
    """
    if num_classes < 2:
        raise ModelError(f"need at least 2 classes, got {num_classes}")
    if g_min < 0:
        raise ModelError(f"discriminant gain must be nonnegative, got {g_min}")
    return 1.0 - (num_classes - 1) * float(q_function(np.sqrt(g_min) / 2.0))


class LabelPair(NamedTuple):
    """Unordered class pair, stored with first < second."""

    first: int
    second: int


@dataclass(frozen=True)
class GmmModel:
    """Shared-covariance Gaussian mixture over feature space.

    Parameters
    ----------
    centroids : (L, D) array
        Per-class means, L >= 2, pairwise distinct.
    covariance : (D, D) array
        Shared SPD covariance.  A 1-D array of length D is accepted and
        treated as a diagonal.
    """

    centroids: np.ndarray
    covariance: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cent = np.atleast_2d(np.asarray(self.centroids, dtype=float))
        cov = np.asarray(self.covariance, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cent.ndim != 2 or cent.shape[0] < 2:
            raise ModelError(f"centroids must be (L>=2, D), got {cent.shape}")
        dim = cent.shape[1]
        if cov.shape != (dim, dim):
            raise ModelError(f"covariance shape {cov.shape} does not match D={dim}")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ModelError("covariance must be symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals[0] <= MIN_RELATIVE_EIGENVALUE * eigvals[-1]:
            raise ModelError(
                f"covariance is singular or nearly so (eigenvalue ratio "
                f"{eigvals[0] / eigvals[-1]:.3e})"
            )
        if eigvals[-1] / eigvals[0] > MAX_CONDITION:
            raise ModelError(
                f"covariance condition number {eigvals[-1] / eigvals[0]:.3e} "
                f"exceeds {MAX_CONDITION:.0e}"
            )
        diffs = cent[:, None, :] - cent[None, :, :]
        off = ~np.eye(cent.shape[0], dtype=bool)
        if np.min(np.linalg.norm(diffs[off], axis=-1)) == 0.0:
            raise ModelError("centroids must be pairwise distinct")
        object.__setattr__(self, "centroids", cent)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @property
    def num_classes(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def is_diagonal(self) -> bool:
        return bool(np.allclose(self.covariance, np.diag(np.diag(self.covariance))))


def build_default_gmm(dim: int = 50) -> GmmModel:
    """Binary benchmark model: antipodal polynomial centroids, diagonal ramp covariance.

    mu_1(d) = (1 - (d-1)/D)^2, mu_2 = -mu_1, C = diag{1 + d/D}, d = 1..D.
    The covariance eigenbasis is the identity and the per-dimension DG weights
    W_d are already in decreasing order.
    """
    if dim < 1:
        raise ModelError(f"dim must be positive, got {dim}")
    d = np.arange(1, dim + 1, dtype=float)
    mu1 = (1.0 - (d - 1.0) / dim) ** 2
    cov = np.diag(1.0 + d / dim)
    return GmmModel(centroids=np.stack([mu1, -mu1]), covariance=cov)


def sample_views(model: GmmModel, label: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` i.i.d. feature vectors of class `label`, shape (count, D)."""
    if not 0 <= label < model.num_classes:
        raise ModelError(f"label {label} out of range for L={model.num_classes}")
    z = rng.standard_normal((count, model.dim))
    return model.centroids[label] + z @ model._chol.T


def mahalanobis_scores(y: np.ndarray, model: GmmModel) -> np.ndarray:
    """Squared Mahalanobis distance from y to every centroid.

    y may be a single vector (D,) or a batch (N, D); returns (L,) or (N, L).
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    yb = np.atleast_2d(y)
    if yb.shape[1] != model.dim:
        raise ModelError(f"feature dim {yb.shape[1]} does not match model D={model.dim}")
    # solve via the cached Cholesky factor: z(y) = ||L^-1 (y - mu)||^2
    diffs = yb[:, None, :] - model.centroids[None, :, :]
    flat = diffs.reshape(-1, model.dim)
    sol = np.linalg.solve(model._chol, flat.T)
    scores = np.sum(sol * sol, axis=0).reshape(yb.shape[0], model.num_classes)
    return scores[0] if single else scores


def mahalanobis_classify(y: np.ndarray, model: GmmModel) -> np.ndarray | int:
    """ML label under the shared-covariance mixture: argmin Mahalanobis distance.

    Ties resolve to the smallest label index.  Batched like mahalanobis_scores.
    """
    scores = mahalanobis_scores(y, model)
    return np.argmin(scores, axis=-1)


def closest_pair(model: GmmModel) -> LabelPair:
    """Class pair with minimum Mahalanobis separation; ties to the lexicographically smallest."""
    best = None
    best_val = np.inf
    # lexicographic iteration order makes the smallest pair win exact ties
    for a in range(model.num_classes):
        for b_ in range(a + 1, model.num_classes):
            diff = model.centroids[a] - model.centroids[b_]
            sol = np.linalg.solve(model._chol, diff)
            val = float(sol @ sol)
            if val < best_val:
                best_val = val
                best = LabelPair(a, b_)
    return best


def pairwise_dg(model: GmmModel, pair: LabelPair) -> float:
    """Full-space discriminant gain of a pair: (mu_a - mu_b)' C^-1 (mu_a - mu_b)."""
    diff = model.centroids[pair.first] - model.centroids[pair.second]
    sol = np.linalg.solve(model._chol, diff)
    return float(sol @ sol)


@dataclass(frozen=True)
class DgCurve:
    """Per-eigen-dimension DG diagnostics, sorted by weight.

    weights W_d = gamma_d^2 / lambda_d in nonincreasing order (ties keep the
    original eigen index order), with the matching eigenvalues, centroid-gap
    components gamma_d = (U' (mu_a - mu_b))_d, original indices, and the sorted
    eigenvector basis whose first S columns form the depth-S compression matrix.
    """

    weights: np.ndarray
    eigenvalues: np.ndarray
    gaps: np.ndarray
    order: np.ndarray | None = None
    basis: np.ndarray | None = None

    def __post_init__(self):
        if np.any(np.diff(self.weights) > 1e-12 * max(1.0, float(self.weights[0]))):
            raise ModelError("DG curve weights must be nonincreasing")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def compression_matrix(self, depth: int) -> np.ndarray:
        """(D, S) orthonormal matrix selecting the top-S DG eigen-dimensions."""
        if self.basis is None:
            raise ModelError("this curve carries no eigenbasis (loaded from CSV?)")
        if not 1 <= depth <= self.dim:
            raise ModelError(f"depth must be in 1..{self.dim}, got {depth}")
        return self.basis[:, :depth]


def eigen_dg(model: GmmModel, pair: LabelPair | None = None) -> DgCurve:
    """Decompose the closest-pair DG along the covariance eigenbasis.

    C = U diag(lambda) U'; gamma = U'(mu_a - mu_b); W_d = gamma_d^2 / lambda_d.
    Dimensions are sorted by W descending so that truncating to the first S
    keeps the largest discriminant mass.  sum(W) equals the full-space DG.
    """
    if pair is None:
        pair = closest_pair(model)
    lam, basis = np.linalg.eigh(model.covariance)
    diff = model.centroids[pair.first] - model.centroids[pair.second]
    gaps = basis.T @ diff
    weights = gaps**2 / lam
    # stable sort, descending weight, ties broken by original eigen index
    order = np.lexsort((np.arange(model.dim), -weights))
    return DgCurve(
        weights=weights[order],
        eigenvalues=lam[order],
        gaps=gaps[order],
        order=order,
        basis=basis[:, order],
    )


def model_to_json(model: GmmModel) -> str:
    """Serialize to the interchange schema {L, D, centroids, covariance}."""
    cov = model.covariance
    payload = {
        "L": model.num_classes,
        "D": model.dim,
        "centroids": model.centroids.tolist(),
        "covariance": np.diag(cov).tolist() if model.is_diagonal() else cov.tolist(),
    }
    return json.dumps(payload, indent=2)


def model_from_json(text: str) -> GmmModel:
    """Parse the interchange schema; `covariance` may be a full matrix or a diagonal."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model JSON is not valid JSON: {exc}") from exc
    try:
        cent = np.asarray(payload["centroids"], dtype=float)
        cov = np.asarray(payload["covariance"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"model JSON missing or malformed fields: {exc}") from exc
    model = GmmModel(centroids=cent, covariance=cov)
    declared_l = payload.get("L")
    declared_d = payload.get("D")
    if declared_l is not None and declared_l != model.num_classes:
        raise ModelError(f"declared L={declared_l} but centroids give {model.num_classes}")
    if declared_d is not None and declared_d != model.dim:
        raise ModelError(f"declared D={declared_d} but centroids give {model.dim}")
    return model
