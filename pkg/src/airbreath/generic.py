"""Breathing control for black-box classifiers.

When the classifier is not the mixture-model ML rule, the receive DG is not
available in closed form.  This module estimates empirical stand-ins from
Monte Carlo accuracy: a compression curve over the depth S (importance-ranked
feature masking, interference-free) and a spreading curve over the gain G
(full features plus calibrated fused noise), both mapped from accuracy to a
DG scale through the inverse Gaussian tail.  Their sum plays the role of the
closed-form surrogate for depth selection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .dg import BreathingDecision
from .gmm import GmmModel, ModelError, mahalanobis_classify, q_function

DEFAULT_BETA = 2.0


class DgMapError(ValueError):
    """Raised when an accuracy falls outside the accuracy->DG map's domain."""


class ClassifierOracle(Protocol):
    """Black-box multi-view classifier plus a labeled sample source."""

    num_classes: int
    feature_dim: int

    def sample_views(
        self, count: int, views: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return (labels (count,), features (count, views, D))."""
        ...

    def classify(self, features: np.ndarray) -> np.ndarray:
        """Predict labels for a batch of fused features (N, D)."""
        ...


class GmmOracle:
    """Reference oracle: the shared-covariance mixture with its ML rule."""

    def __init__(self, model: GmmModel):
        self.model = model
        self.num_classes = model.num_classes
        self.feature_dim = model.dim

    def sample_views(self, count, views, rng):
        labels = rng.integers(0, self.num_classes, count)
        z = rng.standard_normal((count, views, self.feature_dim))
        feats = self.model.centroids[labels][:, None, :] + z @ self.model._chol.T
        return labels, feats

    def classify(self, features):
        return mahalanobis_classify(features, self.model)


@dataclass(frozen=True)
class ImportanceProfile:
    """Per-dimension importance scores and the induced descending ranking."""

    scores: np.ndarray
    order: np.ndarray
    class_means: np.ndarray

    @property
    def dim(self) -> int:
        return self.scores.shape[0]

    def top(self, depth: int) -> np.ndarray:
        if not 1 <= depth <= self.dim:
            raise ModelError(f"depth must be in 1..{self.dim}, got {depth}")
        return self.order[:depth]


def feature_importance(labels: np.ndarray, features: np.ndarray, num_classes: int) -> ImportanceProfile:
    """Average absolute class-mean gap per dimension.

    I_d = mean over class pairs of |mean_l1(d) - mean_l2(d)|, estimated from a
    labeled batch (features may be (N, D) or (N, views, D); views are pooled).
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 3:
        feats = feats.reshape(feats.shape[0], -1, feats.shape[-1]).mean(axis=1)
    labels = np.asarray(labels)
    if num_classes < 2:
        raise ModelError(f"need at least 2 classes, got {num_classes}")
    dim = feats.shape[1]
    means = np.zeros((num_classes, dim))
    for cls in range(num_classes):
        mask = labels == cls
        if not np.any(mask):
            raise ModelError(f"class {cls} has no samples in the importance batch")
        means[cls] = feats[mask].mean(axis=0)
    total = np.zeros(dim)
    pairs = 0
    for a in range(num_classes):
        for b in range(a + 1, num_classes):
            total += np.abs(means[a] - means[b])
            pairs += 1
    scores = total / pairs
    order = np.lexsort((np.arange(dim), -scores))
    return ImportanceProfile(scores=scores, order=order, class_means=means)


def inverse_q(p: float, *, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Invert the Gaussian tail: find x with Q(x) = p, p in (0, 1).

    Newton iteration on Q (derivative is the negative normal pdf) with a
    bisection safeguard; converges to |Q(x) - p| <= tol.
    """
    if not 0.0 < p < 1.0:
        raise DgMapError(f"inverse_q domain is (0, 1), got {p}")
    lo, hi = -40.0, 40.0  # Q spans (0,1) far inside this bracket
    x = 0.0
    for _ in range(max_iter):
        err = float(q_function(x)) - p
        if abs(err) <= tol:
            return x
        if err > 0:
            lo = x  # Q too big -> x too small
        else:
            hi = x
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        step = err / pdf if pdf > 0 else np.inf
        x_new = x + step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        x = x_new
    raise DgMapError(f"inverse_q failed to converge for p={p}")


def default_alpha(num_classes: int) -> float:
    """alpha = 1/(L-1) makes the map invert the union-bound accuracy shape."""
    if num_classes < 2:
        raise ModelError(f"need at least 2 classes, got {num_classes}")
    return 1.0 / (num_classes - 1)


def accuracy_to_dg(accuracy: float, alpha: float, beta: float = DEFAULT_BETA) -> float:
    """Map empirical accuracy to the DG scale: beta * Qinv(alpha * (1 - A)).

    The argument alpha*(1-A) must lie strictly inside (0, 1); saturated
    accuracy (A = 1) has no finite image and raises.
    """
    if alpha <= 0 or beta <= 0:
        raise DgMapError(f"alpha and beta must be positive, got {alpha}, {beta}")
    u = alpha * (1.0 - accuracy)
    if not 0.0 < u < 1.0:
        raise DgMapError(
            f"accuracy {accuracy} maps to tail mass {u}, outside (0, 1); "
            "lower the SIR, reduce views, or add trials to avoid saturation"
        )
    return beta * inverse_q(u)


def _dg_stderr(accuracy: float, trials: int, alpha: float, beta: float) -> float:
    # delta method: d(dg)/dA = alpha * beta / pdf(Qinv(alpha (1-A)))
    se_acc = np.sqrt(max(accuracy * (1.0 - accuracy), 1.0 / trials) / trials)
    x = inverse_q(alpha * (1.0 - accuracy))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return float(alpha * beta * se_acc / pdf)


def isotonic_nondecreasing(values: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto nondecreasing sequences (unweighted)."""
    vals = np.asarray(values, dtype=float).copy()
    n = vals.shape[0]
    level = vals.copy()
    weight = np.ones(n)
    blocks = 0
    starts = np.zeros(n, dtype=int)
    for i in range(n):
        cur_level = vals[i]
        cur_weight = 1.0
        cur_start = i
        while blocks > 0 and level[blocks - 1] >= cur_level:
            blocks -= 1
            cur_level = (
                level[blocks] * weight[blocks] + cur_level * cur_weight
            ) / (weight[blocks] + cur_weight)
            cur_weight += weight[blocks]
            cur_start = starts[blocks]
        level[blocks] = cur_level
        weight[blocks] = cur_weight
        starts[blocks] = cur_start
        blocks += 1
    out = np.empty(n)
    ends = np.append(starts[1:blocks], n)
    for b in range(blocks):
        out[starts[b] : ends[b]] = level[b]
    return out


@dataclass(frozen=True)
class DgTable:
    """Monte Carlo DG estimates over a grid, isotonic-smoothed, with raw stderr."""

    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        if not (self.grid.shape == self.values.shape == self.stderr.shape):
            raise ModelError("DG table columns must share one length")
        if np.any(np.diff(self.grid) <= 0):
            raise ModelError("DG table grid must be strictly increasing")

    def interpolate(self, at: float) -> float:
        if not self.grid[0] <= at <= self.grid[-1]:
            raise ModelError(f"value {at} outside table grid [{self.grid[0]}, {self.grid[-1]}]")
        return float(np.interp(at, self.grid, self.values))


@dataclass(frozen=True)
class DgTables:
    """The pair of estimated curves driving generic depth selection."""

    compression: DgTable  # indexed by depth S
    spreading: DgTable  # indexed by spread gain G
    dim: int
    alpha: float
    beta: float


def estimate_compression_dg_curve(
    oracle: ClassifierOracle,
    profile: ImportanceProfile,
    depth_grid,
    trials: int,
    rng: np.random.Generator,
    *,
    views: int = 1,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
) -> DgTable:
    """Accuracy of importance-masked, interference-free fused features, on the DG scale.

    All but the top-S important dimensions are zeroed before classification.
    One sample batch is shared by every grid point (common random numbers).
    """
    grid = np.asarray(sorted(int(s) for s in depth_grid), dtype=int)
    if grid[0] < 1 or grid[-1] > profile.dim:
        raise ModelError(f"depth grid must lie in 1..{profile.dim}")
    alpha = default_alpha(oracle.num_classes) if alpha is None else alpha
    labels, feats = oracle.sample_views(trials, views, rng)
    fused = feats.mean(axis=1)
    raw = np.empty(grid.shape[0])
    err = np.empty(grid.shape[0])
    for i, s in enumerate(grid):
        masked = np.zeros_like(fused)
        keep = profile.top(int(s))
        masked[:, keep] = fused[:, keep]
        acc = float(np.mean(oracle.classify(masked) == labels))
        raw[i] = accuracy_to_dg(acc, alpha, beta)
        err[i] = _dg_stderr(acc, trials, alpha, beta)
    return DgTable(grid=grid.astype(float), values=isotonic_nondecreasing(raw), stderr=err)


def estimate_spread_dg_curve(
    oracle: ClassifierOracle,
    active_count: int,
    gamma_sen: float,
    norm_var: float,
    gain_grid,
    trials: int,
    rng: np.random.Generator,
    *,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
) -> DgTable:
    """Accuracy of full features under calibrated fused interference, on the DG scale.

    Per grid point G the fused feature gets i.i.d. noise of per-dimension
    variance sigma_nor^2 / (|K|^2 G gamma_sen), matching the despread residual
    the real chain would leave.  One batch and one noise draw are shared
    across the grid (common random numbers).
    """
    grid = np.asarray(sorted(int(g) for g in gain_grid), dtype=int)
    if grid[0] < 1:
        raise ModelError("spread gains must be >= 1")
    if active_count < 1 or gamma_sen <= 0 or norm_var <= 0:
        raise ModelError("need active_count >= 1, gamma_sen > 0, norm_var > 0")
    alpha = default_alpha(oracle.num_classes) if alpha is None else alpha
    labels, feats = oracle.sample_views(trials, active_count, rng)
    fused = feats.mean(axis=1)
    noise = rng.standard_normal(fused.shape)
    raw = np.empty(grid.shape[0])
    err = np.empty(grid.shape[0])
    for i, g in enumerate(grid):
        var = norm_var / (active_count**2 * int(g) * gamma_sen)
        acc = float(np.mean(oracle.classify(fused + np.sqrt(var) * noise) == labels))
        raw[i] = accuracy_to_dg(acc, alpha, beta)
        err[i] = _dg_stderr(acc, trials, alpha, beta)
    return DgTable(grid=grid.astype(float), values=isotonic_nondecreasing(raw), stderr=err)


def spread_gain_grid(dim: int) -> list[int]:
    """G values worth tabulating: a geometric ladder plus every reachable floor(D/S)."""
    grid = {dim}
    g = 1
    while g < dim:
        grid.add(g)
        g *= 2
    grid.update(dim // s for s in range(1, dim + 1))
    return sorted(grid)


def combined_surrogate(tables: DgTables, depth: int) -> float:
    """Depth objective: compression term at S plus spreading term at G = floor(D/S)."""
    if not 1 <= depth <= tables.dim:
        raise ModelError(f"depth must be in 1..{tables.dim}, got {depth}")
    gain = tables.dim // depth
    return tables.compression.interpolate(float(depth)) + tables.spreading.interpolate(float(gain))


def _is_unimodal(seq: np.ndarray) -> bool:
    peak = int(np.argmax(seq))
    rising = np.all(np.diff(seq[: peak + 1]) >= 0)
    falling = np.all(np.diff(seq[peak:]) <= 0)
    return bool(rising and falling)


def optimal_depth_generic(tables: DgTables) -> BreathingDecision:
    """Argmax of the combined surrogate over integer depths.

    The integer sequence is checked for unimodality (an O(D) guard); if it
    holds, ternary search finds an argmax in O(log D) evaluations, otherwise a
    full scan decides.  Ties resolve to the smallest depth under the scan.
    """
    dim = tables.dim
    seq = np.array([combined_surrogate(tables, s) for s in range(1, dim + 1)])
    if not _is_unimodal(seq):
        depth = int(np.argmax(seq)) + 1
        return BreathingDecision(
            depth=depth, spread_gain=dim // depth, phi_value=float(seq[depth - 1]), branch="scan"
        )
    lo, hi = 0, dim - 1
    while hi - lo > 2:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if seq[m1] < seq[m2]:
            lo = m1 + 1
        elif seq[m1] > seq[m2]:
            hi = m2 - 1
        else:
            lo, hi = m1, m2
            break
    window = seq[lo : hi + 1]
    depth = lo + int(np.argmax(window)) + 1
    return BreathingDecision(
        depth=depth, spread_gain=dim // depth, phi_value=float(seq[depth - 1]), branch="ternary"
    )


# ---------------------------------------------------------------------------
# csv interface

TABLE_HEADERS = {
    "compression": ("S", "dg_estimate", "stderr"),
    "spreading": ("G", "dg_estimate", "stderr"),
}
IMPORTANCE_HEADER = ("d", "importance")


def table_to_csv(table: DgTable, kind: str, path) -> None:
    header = TABLE_HEADERS[kind]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for g, v, e in zip(table.grid, table.values, table.stderr):
            writer.writerow([int(g), repr(float(v)), repr(float(e))])


def table_from_csv(path, kind: str) -> DgTable:
    header = TABLE_HEADERS[kind]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != header:
            raise ModelError(f"unexpected {kind} table header in {path}")
        rows = [[float(cell) for cell in row] for row in reader]
    arr = np.asarray(rows, dtype=float)
    return DgTable(grid=arr[:, 0], values=arr[:, 1], stderr=arr[:, 2])


def importance_to_csv(profile: ImportanceProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(IMPORTANCE_HEADER)
        for d in range(profile.dim):
            writer.writerow([d + 1, repr(float(profile.scores[d]))])
