"""Receive discriminant gain analysis and breathing-depth optimization.

The receive DG measures closest-pair separability after compression to S
dimensions and transmission with spread gain G.  Compression concentrates
discriminant mass while spreading dilutes interference; since chips are
capped by S*G <= D, the two trade off through the breathing depth S.  The
closed forms here, their continuous relaxation, and the root-finding
optimizer are the decision core of the system.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .gmm import DgCurve, GmmModel, LabelPair, ModelError
from .phy import fit_normalization


class SurrogateError(ValueError):
    """Raised for invalid surrogate parameters or optimizer inputs."""


@dataclass(frozen=True)
class SurrogateParams:
    """Channel-side constants entering the receive DG.

    active_count: |K|, sensors actually transmitting.
    gamma_sen: receive signal-to-interference ratio P0 / P_I (linear).
    norm_var: transmit normalization variance sigma_nor^2, conventionally the
        full-space value so the surrogate is a function of S alone.
    lam_min: smallest covariance eigenvalue over all D dimensions.
    """

    active_count: int
    gamma_sen: float
    norm_var: float
    lam_min: float

    def __post_init__(self):
        if self.active_count < 1:
            raise SurrogateError(f"active_count must be >= 1, got {self.active_count}")
        if self.gamma_sen <= 0:
            raise SurrogateError(f"gamma_sen must be positive, got {self.gamma_sen}")
        if self.norm_var <= 0:
            raise SurrogateError(f"norm_var must be positive, got {self.norm_var}")
        if self.lam_min <= 0:
            raise SurrogateError(f"lam_min must be positive, got {self.lam_min}")

    @property
    def sigma_hat_sq(self) -> float:
        """Interference variance referred to one active sensor: sigma^2/(|K| gamma)."""
        return self.norm_var / (self.active_count * self.gamma_sen)

    def sigma_tilde_sq(self, dim: int) -> float:
        """Relaxation constant sigma~^2 = sigma^2 / (D |K| lam_min gamma) for G ~ D/S."""
        return self.sigma_hat_sq / (dim * self.lam_min)


def surrogate_params_for(
    model: GmmModel,
    curve: DgCurve,
    active_count: int,
    gamma_sen: float,
) -> SurrogateParams:
    """Bundle the decision-time constants for a model: full-space norm stats, min eigenvalue."""
    if curve.basis is None:
        raise SurrogateError("curve must carry its eigenbasis to fit normalization")
    stats = fit_normalization(model, curve.basis)
    return SurrogateParams(
        active_count=active_count,
        gamma_sen=gamma_sen,
        norm_var=stats.std**2,
        lam_min=float(curve.eigenvalues.min()),
    )


# ---------------------------------------------------------------------------
# closed forms


def receive_covariance(
    model: GmmModel, matrix: np.ndarray, params: SurrogateParams, spread_gain: int
) -> np.ndarray:
    """Fused-feature covariance: P'CP/|K| + sigma^2/(G |K|^2 gamma) I."""
    if spread_gain < 1:
        raise SurrogateError(f"spread gain must be >= 1, got {spread_gain}")
    m = params.active_count
    noise = params.norm_var / (spread_gain * m**2 * params.gamma_sen)
    proj = matrix.T @ model.covariance @ matrix
    return proj / m + noise * np.eye(matrix.shape[1])


def receive_dg_general(
    model: GmmModel,
    pair: LabelPair,
    matrix: np.ndarray,
    params: SurrogateParams,
    spread_gain: int,
) -> float:
    """Receive DG for an arbitrary full-column-rank compression matrix.

    G(S, G) = d' Chat^-1 d with d = P'(mu_a - mu_b).  Solved via Cholesky;
    an ill-conditioned Chat raises rather than returning noise.
    """
    chat = receive_covariance(model, matrix, params, spread_gain)
    diff = matrix.T @ (model.centroids[pair.first] - model.centroids[pair.second])
    try:
        chol = np.linalg.cholesky(chat)
    except np.linalg.LinAlgError as exc:
        raise SurrogateError(f"received covariance is not positive definite: {exc}") from exc
    cond = np.linalg.cond(chat)
    if cond > 1e12:
        raise SurrogateError(f"received covariance condition number {cond:.3e} too large")
    sol = np.linalg.solve(chol, diff)
    return float(sol @ sol)


def receive_dg_diagonal(
    curve: DgCurve, depth: int, spread_gain: int, params: SurrogateParams
) -> float:
    """Eigen-compression receive DG: |K| sum_{d<=S} W_d / (sigma_hat^2/(G lam_d) + 1)."""
    if not 1 <= depth <= curve.dim:
        raise SurrogateError(f"depth must be in 1..{curve.dim}, got {depth}")
    if spread_gain < 1:
        raise SurrogateError(f"spread gain must be >= 1, got {spread_gain}")
    w = curve.weights[:depth]
    lam = curve.eigenvalues[:depth]
    return params.active_count * float(
        np.sum(w / (params.sigma_hat_sq / (spread_gain * lam) + 1.0))
    )


def phi_lower_bound(
    curve: DgCurve, depth: int, spread_gain: int, params: SurrogateParams
) -> float:
    """Lower bound phi^: replace every eigenvalue by lam_min in the denominator."""
    if not 1 <= depth <= curve.dim:
        raise SurrogateError(f"depth must be in 1..{curve.dim}, got {depth}")
    if spread_gain < 1:
        raise SurrogateError(f"spread gain must be >= 1, got {spread_gain}")
    total = float(np.sum(curve.weights[:depth]))
    return params.active_count * total / (
        params.sigma_hat_sq / (spread_gain * params.lam_min) + 1.0
    )


class DgIncrement(NamedTuple):
    """One-step depth increment split into its two competing causes."""

    compression: float  # gain from the added feature dimension, >= 0
    spreading: float  # loss from the shorter chip sequence, <= 0


def incremental_dg_decomposition(
    curve: DgCurve, depth: int, params: SurrogateParams
) -> DgIncrement:
    """Split Ghat(S+1, G_{S+1}) - Ghat(S, G_S) at G_S = floor(D/S).

    compression = Ghat(S+1, G_{S+1}) - Ghat(S, G_{S+1});
    spreading   = Ghat(S, G_{S+1}) - Ghat(S, G_S).
    The two terms telescope to the total increment exactly.
    """
    if not 1 <= depth <= curve.dim - 1:
        raise SurrogateError(f"depth must be in 1..{curve.dim - 1}, got {depth}")
    g_now = curve.dim // depth
    g_next = curve.dim // (depth + 1)
    mid = receive_dg_diagonal(curve, depth, g_next, params)
    comp = receive_dg_diagonal(curve, depth + 1, g_next, params) - mid
    spread_ = mid - receive_dg_diagonal(curve, depth, g_now, params)
    return DgIncrement(compression=comp, spreading=spread_)


# ---------------------------------------------------------------------------
# continuous relaxation

# piece d of the relaxed weight profile lives on [d-1, d] and interpolates
# W_d down to W_{d+1} with a half cosine, so g is continuous, differentiable,
# nonincreasing, and each unit piece integrates to (W_d + W_{d+1})/2.


def _pieces(curve: DgCurve):
    w = np.append(curve.weights, curve.weights[-1])  # W_{D+1} := W_D
    amp = (w[:-1] - w[1:]) / 2.0
    mid = (w[:-1] + w[1:]) / 2.0
    knots = np.concatenate([[0.0], np.cumsum(mid)])  # psi at integers 0..D
    return amp, mid, knots


def _eval_g(x, amp, mid, dim):
    x = np.asarray(x, dtype=float)
    k = np.clip(np.floor(x).astype(int), 0, dim - 1)
    t = x - k
    return amp[k] * np.cos(np.pi * t) + mid[k]


def _eval_psi(x, amp, mid, knots, dim):
    x = np.asarray(x, dtype=float)
    k = np.clip(np.floor(x).astype(int), 0, dim - 1)
    t = x - k
    return knots[k] + mid[k] * t + amp[k] * np.sin(np.pi * t) / np.pi


def psi_integral(curve: DgCurve, x) -> np.ndarray:
    """Antiderivative psi(x) = int_0^x g(t) dt, closed form per cosine piece."""
    amp, mid, knots = _pieces(curve)
    out = _eval_psi(_check_domain(x, curve.dim), amp, mid, knots, curve.dim)
    return out


def relaxed_weight(curve: DgCurve, x) -> np.ndarray:
    """The continuous weight profile g(x) itself (psi's derivative)."""
    amp, mid, _ = _pieces(curve)
    return _eval_g(_check_domain(x, curve.dim), amp, mid, curve.dim)


def _check_domain(x, dim):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > dim):
        raise SurrogateError(f"surrogate domain is [0, {dim}]")
    return arr


def phi_tilde(curve: DgCurve, x, params: SurrogateParams) -> np.ndarray:
    """Continuous surrogate phi~(x) = |K| psi(x) / (sigma~^2 x + 1), x in [1, D]."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 1):
        raise SurrogateError("phi~ is defined for x >= 1")
    st2 = params.sigma_tilde_sq(curve.dim)
    return params.active_count * psi_integral(curve, arr) / (st2 * arr + 1.0)


@dataclass(frozen=True)
class BreathingDecision:
    """Optimizer output: chosen depth, induced spread gain, and diagnostics."""

    depth: int
    spread_gain: int
    phi_value: float
    branch: str  # closed form: "root", "endpoint", "flat"; table search: "ternary", "scan"
    x_root: float | None = None


def optimal_breathing_depth(
    curve: DgCurve,
    params: SurrogateParams,
    *,
    x_tol: float = 1e-6,
    zeta_rtol: float = 1e-9,
) -> BreathingDecision:
    """Maximize phi~ over integer depths via the monotone stationarity function.

    zeta(x) = psi'(x)(sigma~^2 x + 1) - sigma~^2 psi(x) is nonincreasing
    (psi is concave), so phi~ is unimodal: bisection brackets the stationary
    point and the floor/ceil with the larger phi~ is the exact integer argmax.
    Without an interior sign change the better endpoint wins; a zeta flat at
    both ends means a flat phi~, where the full dimension is kept.
    """
    dim = curve.dim
    amp, mid, knots = _pieces(curve)
    st2 = params.sigma_tilde_sq(dim)

    def psi_(x):
        return float(_eval_psi(np.asarray(x, float), amp, mid, knots, dim))

    def zeta(x):
        return float(_eval_g(np.asarray(x, float), amp, mid, dim)) * (st2 * x + 1.0) - st2 * psi_(x)

    def phi(s):
        return params.active_count * psi_(s) / (st2 * s + 1.0)

    def decision(depth, branch, x_root=None):
        return BreathingDecision(
            depth=depth,
            spread_gain=dim // depth,
            phi_value=phi(depth),
            branch=branch,
            x_root=x_root,
        )

    if dim == 1:
        return decision(1, "endpoint")

    z_lo = zeta(1.0)
    z_hi = zeta(float(dim))
    flat_tol = 1e-12 * max(1.0, float(curve.weights[0]))
    if abs(z_lo) <= flat_tol and abs(z_hi) <= flat_tol:
        return decision(dim, "flat")
    if z_lo <= 0.0 or z_hi >= 0.0:
        # no interior sign change: phi~ is one-sided, best endpoint wins
        best = 1 if phi(1) >= phi(dim) else dim
        return decision(best, "endpoint")

    lo, hi = 1.0, float(dim)
    target = zeta_rtol * abs(z_lo)
    while hi - lo > x_tol:
        x = 0.5 * (lo + hi)
        zx = zeta(x)
        if abs(zx) <= target:
            lo = hi = x
            break
        if zx > 0.0:
            lo = x
        else:
            hi = x
    x_root = 0.5 * (lo + hi)
    floor_s = max(1, int(np.floor(x_root)))
    ceil_s = min(dim, int(np.ceil(x_root)))
    depth = floor_s if phi(floor_s) >= phi(ceil_s) else ceil_s
    return decision(depth, "root", x_root=x_root)


def brute_force_depth(
    evaluate: Callable[[int, int], float],
    dim: int,
    *,
    full_grid: bool = False,
) -> tuple[int, int]:
    """Exhaustive (S, G) search against an arbitrary objective.

    Default candidates are the depth schedule (S, floor(D/S)); the full grid
    enumerates every S*G <= D.  Ties keep the smallest (S, G) encountered.
    """
    if dim < 1:
        raise SurrogateError(f"dim must be >= 1, got {dim}")
    best = None
    best_val = -np.inf
    for s in range(1, dim + 1):
        gains = range(1, dim // s + 1) if full_grid else (dim // s,)
        for g in gains:
            val = float(evaluate(s, g))
            if val > best_val:
                best_val = val
                best = (s, g)
    return best


# ---------------------------------------------------------------------------
# csv interface

CURVE_HEADER = ("d", "weight", "eigenvalue", "gap")


def curve_to_csv(curve: DgCurve, path) -> None:
    """Write the sorted per-dimension diagnostics (d, W_d, lambda_d, gamma_d)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for i in range(curve.dim):
            writer.writerow(
                [
                    i + 1,
                    repr(float(curve.weights[i])),
                    repr(float(curve.eigenvalues[i])),
                    repr(float(curve.gaps[i])),
                ]
            )


def curve_from_csv(path) -> DgCurve:
    """Load diagnostics written by curve_to_csv; the eigenbasis is not recoverable."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CURVE_HEADER:
            raise ModelError(f"unexpected DG curve header {header}")
        rows = [[float(cell) for cell in row] for row in reader]
    if not rows:
        raise ModelError("DG curve CSV has no rows")
    arr = np.asarray(rows, dtype=float)
    if np.any(arr[:, 0].astype(int) != np.arange(1, arr.shape[0] + 1)):
        raise ModelError("DG curve CSV rows must be d = 1..D in order")
    return DgCurve(weights=arr[:, 1], eigenvalues=arr[:, 2], gaps=arr[:, 3])
