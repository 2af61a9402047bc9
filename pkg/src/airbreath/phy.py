"""Over-the-air transceiver chain with spread-spectrum interference suppression.

Per round, each active sensor compresses its feature vector, normalizes it to
unit average power, spreads every entry over G binary chips, and transmits
with truncated channel inversion so the fused analog superposition arrives
coherently.  The receiver despreads, rescales, and hands the fused feature to
the classifier.  Interference is modeled per chip as real Gaussian noise of
power P_I on the signal dimension; channel noise is neglected
(interference-limited regime).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .gmm import GmmModel

THRESHOLD_BRACKET = (1e-8, 50.0)


class PowerPolicyError(ValueError):
    """Raised for infeasible transmit-power configurations."""


def exp_integral_e1(x):
    """Exponential integral E1(x) = int_x^inf exp(-t)/t dt, x > 0.

    E1(1) ~= 0.2193839.  Average transmit power under truncated channel
    inversion with threshold h_th is P0 * E1(h_th).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise PowerPolicyError("E1 is evaluated only for x > 0 here")
    return special.exp1(x)


def activation_probability(h_threshold: float) -> float:
    """P[|h|^2 >= h_th] = exp(-h_th) for unit-mean Rayleigh fading."""
    if h_threshold < 0:
        raise PowerPolicyError(f"threshold must be nonnegative, got {h_threshold}")
    return float(np.exp(-h_threshold))


def solve_threshold(p0: float, p_max: float) -> float:
    """Invert the average-power budget: find h_th with P0 * E1(h_th) = P_max.

    Plain bisection over the fixed bracket.  A budget looser on the whole
    bracket clamps to the lower edge (activation ~= 1); a budget tighter than
    the upper edge is infeasible.
    """
    if p0 <= 0 or p_max <= 0:
        raise PowerPolicyError(f"p0 and p_max must be positive, got {p0}, {p_max}")
    lo, hi = THRESHOLD_BRACKET
    f = lambda h: p0 * float(exp_integral_e1(h)) - p_max
    if f(lo) <= 0:
        return lo
    if f(hi) > 0:
        raise PowerPolicyError(
            f"power budget {p_max} is below P0*E1({hi}) -- no feasible threshold"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PowerPolicy:
    """Truncated-channel-inversion policy: transmit scale P0 and fading threshold.

    Sensors with |h|^2 below the threshold stay silent; the rest invert their
    channel so every active signal lands with amplitude sqrt(P0).  Average
    transmit power per sensor is P0 * E1(h_th) and must fit the budget p_max.
    """

    p0: float
    h_threshold: float
    p_max: float | None = None

    def __post_init__(self):
        if self.p0 <= 0:
            raise PowerPolicyError(f"p0 must be positive, got {self.p0}")
        if self.h_threshold <= 0:
            raise PowerPolicyError(
                f"threshold must be positive, got {self.h_threshold} "
                "(a zero threshold makes average inversion power infinite)"
            )
        if self.p_max is not None:
            budget = self.p0 * float(exp_integral_e1(self.h_threshold))
            if budget > self.p_max * (1 + 1e-9):
                raise PowerPolicyError(
                    f"average power P0*E1(h_th) = {budget:.6g} exceeds p_max = {self.p_max}"
                )

    @property
    def activation(self) -> float:
        return activation_probability(self.h_threshold)

    @property
    def average_power(self) -> float:
        return self.p0 * float(exp_integral_e1(self.h_threshold))

    @classmethod
    def from_activation(cls, p0: float, p_act: float, p_max: float | None = None) -> "PowerPolicy":
        """Pick the threshold giving a target activation probability (0 < p_act < 1)."""
        if not 0.0 < p_act < 1.0:
            raise PowerPolicyError(
                f"activation probability must be in (0, 1), got {p_act} "
                "(p_act = 1 needs h_th = 0, which has unbounded average power)"
            )
        return cls(p0=p0, h_threshold=float(-np.log(p_act)), p_max=p_max)

    @classmethod
    def from_power_budget(cls, p0: float, p_max: float) -> "PowerPolicy":
        return cls(p0=p0, h_threshold=solve_threshold(p0, p_max), p_max=p_max)


@dataclass(frozen=True)
class ChannelRound:
    """One round of i.i.d. Rayleigh fades and the induced active set."""

    fades: np.ndarray  # complex (K,)
    active: np.ndarray  # bool (K,)

    @property
    def active_count(self) -> int:
        return int(np.count_nonzero(self.active))

    def precoders(self, policy: PowerPolicy) -> np.ndarray:
        """Truncated channel inversion p_k = sqrt(P0) h_k* / |h_k|^2 (0 when silent)."""
        gains = np.abs(self.fades) ** 2
        p = np.zeros_like(self.fades)
        idx = self.active
        p[idx] = np.sqrt(policy.p0) * np.conj(self.fades[idx]) / gains[idx]
        return p


def draw_round(num_sensors: int, policy: PowerPolicy, rng: np.random.Generator) -> ChannelRound:
    """Sample CN(0,1) fades for each sensor; active iff |h|^2 >= h_th."""
    h = (rng.standard_normal(num_sensors) + 1j * rng.standard_normal(num_sensors)) / np.sqrt(2.0)
    return ChannelRound(fades=h, active=np.abs(h) ** 2 >= policy.h_threshold)


@dataclass(frozen=True)
class NormalizationStats:
    """Scalar affine normalization shared by all sensors for a given compression."""

    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError(f"normalization std must be positive, got {self.std}")


def compress(x: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Project features onto the compression subspace: x_hat = P' x (batched on leading axes)."""
    return np.asarray(x, dtype=float) @ matrix


def fit_normalization(model: GmmModel, matrix: np.ndarray) -> NormalizationStats:
    """Mixture statistics of the compressed feature, reduced to scalars.

    mean is the average compressed-centroid entry over classes and dimensions;
    the variance is the per-entry mixture variance about that scalar mean,
    averaged over dimensions, so that (1/S) E||x_hat_nor||^2 = 1 exactly.
    """
    proj = model.centroids @ matrix  # (L, S)
    mean = float(proj.mean())
    within = np.einsum("ds,de,es->s", matrix, model.covariance, matrix)
    var = float(np.mean(((proj - mean) ** 2).mean(axis=0) + within))
    return NormalizationStats(mean=mean, std=float(np.sqrt(var)))


def normalize(x_hat: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return (np.asarray(x_hat, dtype=float) - stats.mean) / stats.std


def draw_pn(spread_gain: int, rng: np.random.Generator) -> np.ndarray:
    """Fair-coin pseudo-noise chips in {-1, +1}, shared by all sensors in a round."""
    if spread_gain < 1:
        raise ValueError(f"spread gain must be >= 1, got {spread_gain}")
    return rng.integers(0, 2, spread_gain).astype(float) * 2.0 - 1.0


def spread(x_nor: np.ndarray, chips: np.ndarray) -> np.ndarray:
    """Modulate every normalized entry onto the chip sequence: (S,) x (G,) -> (S, G)."""
    return np.outer(np.asarray(x_nor, dtype=float), chips)


def aircomp_round(
    symbols: np.ndarray,
    round_: ChannelRound,
    policy: PowerPolicy,
    interference_power: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Superpose precoded sensor transmissions plus per-chip interference.

    symbols is (K, S, G); silent sensors contribute nothing.  With truncated
    inversion every active coefficient p_k h_k equals sqrt(P0) up to float
    rounding, so the received real signal is sqrt(P0) * sum_active symbols + Z,
    Z ~ N(0, P_I) i.i.d. per chip.
    """
    if interference_power < 0:
        raise ValueError(f"interference power must be nonnegative, got {interference_power}")
    symbols = np.asarray(symbols, dtype=float)
    k, s, g = symbols.shape
    if round_.fades.shape[0] != k:
        raise ValueError(f"round has {round_.fades.shape[0]} sensors, symbols have {k}")
    coeff = (round_.precoders(policy) * round_.fades).real  # sqrt(P0) on active, 0 elsewhere
    received = np.tensordot(coeff, symbols, axes=(0, 0))
    if interference_power > 0:
        received = received + np.sqrt(interference_power) * rng.standard_normal((s, g))
    return received


def despread(received: np.ndarray, chips: np.ndarray) -> np.ndarray:
    """Correlate with the chip sequence: (1/G) Y f; the signal term survives exactly."""
    g = chips.shape[0]
    return received @ chips / g


def denormalize_receive(
    despread_out: np.ndarray,
    stats: NormalizationStats,
    active_count: int,
    policy: PowerPolicy,
) -> np.ndarray:
    """Undo power scaling and normalization: y_hat = sigma/(|K| sqrt(P0)) ybar + mu.

    The result is the average of the active sensors' compressed features plus
    residual interference of variance sigma^2/(G |K|^2 gamma_sen) per entry.
    """
    if active_count < 1:
        raise ValueError("denormalization needs at least one active sensor")
    scale = stats.std / (active_count * np.sqrt(policy.p0))
    return scale * np.asarray(despread_out, dtype=float) + stats.mean


def reconstruct(y_hat: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Lift the fused compressed feature back to full dimension: y_cnn = P y_hat."""
    return matrix @ np.asarray(y_hat, dtype=float)


def despread_noise_variance(
    stats: NormalizationStats,
    spread_gain: int,
    active_count: int,
    gamma_sen: float,
) -> float:
    """Residual interference variance per fused-feature entry after the full chain.

    Equals sigma_nor^2 / (G |K|^2 gamma_sen) with gamma_sen = P0 / P_I; this is
    the closed form the receive covariance and the simulator both use.
    """
    if spread_gain < 1 or active_count < 1:
        raise ValueError("spread gain and active count must be >= 1")
    if gamma_sen <= 0:
        raise ValueError(f"gamma_sen must be positive, got {gamma_sen}")
    return stats.std**2 / (spread_gain * active_count**2 * gamma_sen)
