"""Monte Carlo harness: experiment configs, schemes, sweeps, and result CSVs.

The chip-level chain in ``phy`` is the reference implementation and is what
``run_round`` executes.  Sweeps use an exact shortcut: for a fixed chip
sequence f in {-1,+1}^G the despread interference (1/G) Z f is distributed as
N(0, P_I/G I) exactly, so the post-despread feature can be simulated directly
from one D-dimensional Gaussian draw per round.  That keeps every scheme and
every depth on common random numbers (identical labels, fades, activity,
views, interference, and fallback guesses) and makes paired comparisons
exact in distribution, not approximate.

Per-round randomness comes from counter-based substreams, consumed in a fixed
order: label, fades, views, interference, guess.  Scheme choices never touch
that stream, so adding or reordering schemes cannot perturb the channel.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import csv
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .dg import (
    SurrogateParams,
    brute_force_depth,
    optimal_breathing_depth,
    phi_tilde,
    receive_dg_diagonal,
    surrogate_params_for,
)
from .gmm import DgCurve, GmmModel, build_default_gmm, closest_pair, eigen_dg, model_from_json
from .phy import (
    ChannelRound,
    NormalizationStats,
    PowerPolicy,
    aircomp_round,
    compress,
    denormalize_receive,
    despread,
    draw_pn,
    draw_round,
    fit_normalization,
    normalize,
    spread,
)

ROUND_BLOCK = 16384  # cap on rounds materialized at once

SCHEME_KINDS = ("airbreath", "brute_force", "no_airbreathing", "fixed_bd", "random_airbreathing")

RESULTS_HEADER = (
    "experiment",
    "scheme",
    "axis",
    "axis_value",
    "accuracy",
    "ci_low",
    "ci_high",
    "mean_depth",
    "outage_rate",
    "seed",
)

TRADEOFF_HEADER = RESULTS_HEADER + ("receive_dg", "surrogate")


class ConfigError(ValueError):
    """Raised for invalid experiment configurations."""


@dataclass(frozen=True)
class SchemeSpec:
    """A depth/gain selection policy to run against the shared channel draws."""

    kind: str
    depth: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigError(f"unknown scheme {self.kind!r}, expected one of {SCHEME_KINDS}")
        if self.kind == "fixed_bd":
            if self.depth is None or self.depth < 1:
                raise ConfigError("fixed_bd needs a positive depth, e.g. fixed_bd:2")
        elif self.depth is not None:
            raise ConfigError(f"scheme {self.kind} takes no depth argument")

    @property
    def name(self) -> str:
        if self.kind == "fixed_bd":
            return f"fixed_bd({self.depth})"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "SchemeSpec":
        text = text.strip()
        if ":" in text:
            kind, _, arg = text.partition(":")
            kind = kind.strip()
            if kind != "fixed_bd":
                raise ConfigError(f"only fixed_bd takes an argument, got {text!r}")
            try:
                depth = int(arg)
            except ValueError as exc:
                raise ConfigError(f"bad fixed_bd depth in {text!r}") from exc
            return cls(kind="fixed_bd", depth=depth)
        return cls(kind=text)


AXES = ("sir_db", "sensors", "activation", "depth")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; loadable from an INI file."""

    experiment: str = "sweep_sir"
    seed: int = 20260816
    rounds: int = 5000
    axis: str = "sir_db"
    grid: tuple[float, ...] = tuple(float(v) for v in range(-20, 21, 5))
    schemes: tuple[SchemeSpec, ...] = (
        SchemeSpec("airbreath"),
        SchemeSpec("no_airbreathing"),
        SchemeSpec("brute_force"),
        SchemeSpec("random_airbreathing"),
    )
    sensors: int = 8
    activation: float | None = 0.5
    h_threshold: float | None = None
    p0: float = 1.0
    p_max: float | None = None
    sir_db: float = -14.0
    model_dim: int = 50
    model_json: str | None = None
    out_dir: str | None = None
    threads: int = 1
    calibration_rounds: int = 500

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown axis {self.axis!r}, expected one of {AXES}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be positive, got {self.rounds}")
        if self.calibration_rounds < 1:
            raise ConfigError(f"calibration_rounds must be positive, got {self.calibration_rounds}")
        if self.sensors < 1:
            raise ConfigError(f"sensors must be >= 1, got {self.sensors}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        names = [s.name for s in self.schemes]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate schemes in {names}")
        if len(self.grid) == 0:
            raise ConfigError("axis grid must be nonempty")
        if (self.activation is None) == (self.h_threshold is None):
            raise ConfigError("give exactly one of activation or h_threshold")
        if self.p0 <= 0:
            raise ConfigError(f"p0 must be positive, got {self.p0}")
        if self.axis == "sensors":
            bad = [v for v in self.grid if v != int(v) or v < 1]
            if bad:
                raise ConfigError(f"sensor grid must be positive integers, got {bad}")
        if self.axis == "activation":
            bad = [v for v in self.grid if not 0 < v < 1]
            if bad:
                raise ConfigError(f"activation grid values must lie in (0, 1), got {bad}")
        if self.axis == "depth":
            bad = [v for v in self.grid if v != int(v) or v < 1]
            if bad:
                raise ConfigError(f"depth grid must be positive integers, got {bad}")

    @property
    def experiment_id(self) -> int:
        # stable integer lane for the substream key, derived from the name
        return zlib.crc32(self.experiment.encode()) & 0xFFFFFFFF

    def load_model(self) -> GmmModel:
        if self.model_json is not None:
            with open(self.model_json) as fh:
                return model_from_json(fh.read())
        return build_default_gmm(self.model_dim)

    def policy_for(self, activation: float | None = None) -> PowerPolicy:
        if activation is not None:
            return PowerPolicy.from_activation(self.p0, activation, p_max=self.p_max)
        if self.h_threshold is not None:
            return PowerPolicy(p0=self.p0, h_threshold=self.h_threshold, p_max=self.p_max)
        return PowerPolicy.from_activation(self.p0, self.activation, p_max=self.p_max)


def _parse_grid(text: str) -> tuple[float, ...]:
    parts = [p for chunk in text.split(",") for p in chunk.split()]
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}") from exc


def load_config(path) -> ExperimentConfig:
    """Read an INI experiment file; unknown keys raise rather than pass silently."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    known = {
        "experiment": {"name", "seed", "rounds", "axis", "grid", "schemes", "threads", "calibration_rounds"},
        "channel": {"sensors", "activation", "h_threshold", "p0", "p_max", "sir_db"},
        "model": {"dim", "json"},
        "output": {"directory"},
    }
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
        extra = set(parser[section]) - known[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    kwargs = {}
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    if "name" in exp:
        kwargs["experiment"] = exp["name"]
    for key, cast in (("seed", int), ("rounds", int), ("threads", int), ("calibration_rounds", int)):
        if key in exp:
            kwargs[key] = cast(exp[key])
    if "axis" in exp:
        kwargs["axis"] = exp["axis"]
    if "grid" in exp:
        kwargs["grid"] = _parse_grid(exp["grid"])
    if "schemes" in exp:
        kwargs["schemes"] = tuple(SchemeSpec.parse(s) for s in exp["schemes"].split(",") if s.strip())
    chan = parser["channel"] if parser.has_section("channel") else {}
    if "sensors" in chan:
        kwargs["sensors"] = int(chan["sensors"])
    if "activation" in chan:
        kwargs["activation"] = float(chan["activation"])
    if "h_threshold" in chan:
        kwargs["h_threshold"] = float(chan["h_threshold"])
        kwargs.setdefault("activation", None)
    if "activation" in chan and "h_threshold" in chan:
        raise ConfigError("give exactly one of activation or h_threshold")
    for key, cast in (("p0", float), ("p_max", float), ("sir_db", float)):
        if key in chan:
            kwargs[key] = cast(chan[key])
    model = parser["model"] if parser.has_section("model") else {}
    if "dim" in model and "json" in model:
        raise ConfigError("give at most one of model dim or model json")
    if "dim" in model:
        kwargs["model_dim"] = int(model["dim"])
    if "json" in model:
        kwargs["model_json"] = model["json"]
    out = parser["output"] if parser.has_section("output") else {}
    if "directory" in out:
        kwargs["out_dir"] = out["directory"]
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def sir_to_gamma(sir_db: float) -> float:
    return float(10.0 ** (sir_db / 10.0))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval; always brackets the point estimate."""
    if trials < 1:
        raise ValueError("wilson_interval needs at least one trial")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class AccuracyReport:
    """One CSV row: a scheme's accuracy at one axis point."""

    experiment: str
    scheme: str
    axis: str
    axis_value: float
    accuracy: float
    ci_low: float
    ci_high: float
    mean_depth: float
    outage_rate: float
    seed: int

    def row(self) -> list:
        return [
            self.experiment,
            self.scheme,
            self.axis,
            repr(float(self.axis_value)),
            repr(float(self.accuracy)),
            repr(float(self.ci_low)),
            repr(float(self.ci_high)),
            repr(float(self.mean_depth)),
            repr(float(self.outage_rate)),
            self.seed,
        ]


@dataclass
class SweepResult:
    """Reports plus per-round correctness kept for paired comparisons."""

    config: ExperimentConfig
    reports: list[AccuracyReport]
    correctness: dict[tuple[float, str], np.ndarray] = field(default_factory=dict)
    depths: dict[tuple[float, str], np.ndarray] = field(default_factory=dict)

    def report(self, axis_value: float, scheme: str) -> AccuracyReport:
        for rep in self.reports:
            if rep.scheme == scheme and rep.axis_value == axis_value:
                return rep
        raise KeyError(f"no report for scheme={scheme} at {axis_value}")


def write_results_csv(path, reports, header=RESULTS_HEADER, extras=None) -> None:
    """Write reports in a canonical order; extras maps report index -> extra cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, rep in enumerate(reports):
            row = rep.row()
            if extras is not None:
                row.extend(repr(float(v)) for v in extras[i])
            writer.writerow(row)


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [dict(row) for row in reader]


@dataclass(frozen=True)
class RoundResult:
    true_label: int
    predicted: int
    depth: int
    spread_gain: int
    active_count: int
    outage: bool


class PointEngine:
    """Shared channel draws and scheme decisions for one axis point.

    Holds the resolved model, policy, and interference level, plus caches of
    per-activity depth decisions.  Both the chip-level reference round and the
    vectorized sweep batches consume the identical per-round substreams.
    """

    def __init__(self, config: ExperimentConfig, point_index: int, axis_value: float):
        self.config = config
        self.point_index = point_index
        self.axis_value = axis_value
        self.model = config.load_model()
        self.pair = closest_pair(self.model)
        self.curve: DgCurve = eigen_dg(self.model, self.pair)
        sensors = config.sensors
        sir_db = config.sir_db
        activation = None
        if config.axis == "sensors":
            sensors = int(axis_value)
        elif config.axis == "sir_db":
            sir_db = axis_value
        elif config.axis == "activation":
            activation = axis_value
        self.sensors = sensors
        self.gamma_sen = sir_to_gamma(sir_db)
        self.policy = config.policy_for(activation)
        self.inter_power = config.p0 / self.gamma_sen
        dim = self.model.dim
        basis = self.curve.basis
        self.centroids_eig = self.model.centroids @ basis
        # per-depth normalization stats under the eigenbasis prefix
        stats = [fit_normalization(self.model, basis[:, : s + 1]) for s in range(dim)]
        self.stats_by_depth = stats
        self.norm_var_by_depth = np.array([st.std**2 for st in stats])
        self._decision_cache: dict[tuple[str, int], tuple[int, int]] = {}
        self._params_cache: dict[int, SurrogateParams] = {}
        self._calibration_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.model.dim

    def round_stream(self, round_index: int) -> np.random.Generator:
        return rngmod.substream(
            self.config.seed,
            experiment=self.config.experiment_id,
            point=self.point_index,
            round_index=round_index,
            purpose=rngmod.COMMON,
        )

    def decision_stream(self, round_index: int) -> np.random.Generator:
        return rngmod.substream(
            self.config.seed,
            experiment=self.config.experiment_id,
            point=self.point_index,
            round_index=round_index,
            purpose=rngmod.DECISION,
        )

    def common_draws(self, round_index: int):
        """One round's channel state, in the documented consumption order."""
        gen = self.round_stream(round_index)
        label = int(gen.integers(0, self.model.num_classes))
        round_ = draw_round(self.sensors, self.policy, gen)
        views = self.model.centroids[label] + gen.standard_normal(
            (self.sensors, self.dim)
        ) @ self.model._chol.T
        eps = gen.standard_normal(self.dim)
        guess = int(gen.integers(0, self.model.num_classes))
        return label, round_, views, eps, guess

    def surrogate_params(self, active_count: int) -> SurrogateParams:
        params = self._params_cache.get(active_count)
        if params is None:
            params = surrogate_params_for(self.model, self.curve, active_count, self.gamma_sen)
            self._params_cache[active_count] = params
        return params

    def _calibration_batch(self, active_count: int):
        """One shared batch per activity level; every candidate depth reuses it."""
        cached = self._calibration_cache.get(active_count)
        if cached is not None:
            return cached
        rounds = self.config.calibration_rounds
        gen = rngmod.substream(
            self.config.seed,
            experiment=self.config.experiment_id,
            point=self.point_index,
            round_index=active_count,
            purpose=rngmod.CALIBRATION,
        )
        labels = gen.integers(0, self.model.num_classes, rounds)
        z = gen.standard_normal((rounds, active_count, self.dim))
        views = self.model.centroids[labels][:, None, :] + z @ self.model._chol.T
        eps = gen.standard_normal((rounds, self.dim))
        fused_eig = views.mean(axis=1) @ self.curve.basis
        batch = (labels, fused_eig, eps)
        self._calibration_cache[active_count] = batch
        return batch

    def _calibration_accuracy(self, active_count: int, depth: int, gain: int) -> float:
        labels, fused_eig, eps = self._calibration_batch(active_count)
        nv = self.norm_var_by_depth[depth - 1] / (gain * active_count**2 * self.gamma_sen)
        received = fused_eig[:, :depth] + np.sqrt(nv) * eps[:, :depth]
        chat = self.curve.eigenvalues[:depth] / active_count + nv
        diffs = received[:, None, :] - self.centroids_eig[None, :, :depth]
        scores = np.einsum("nls,s->nl", diffs**2, 1.0 / chat)
        return float(np.mean(np.argmin(scores, axis=1) == labels))

    def decide(self, scheme: SchemeSpec, active_count: int) -> tuple[int, int]:
        """(depth, gain) for a transmitting round; cached per activity level."""
        if active_count < 1:
            raise ValueError("decide is only defined for transmitting rounds")
        key = (scheme.name, active_count)
        cached = self._decision_cache.get(key)
        if cached is not None:
            return cached
        dim = self.dim
        if scheme.kind == "no_airbreathing":
            decision = (dim, 1)
        elif scheme.kind == "fixed_bd":
            if scheme.depth > dim:
                raise ConfigError(f"fixed_bd depth {scheme.depth} exceeds model dim {dim}")
            decision = (scheme.depth, dim // scheme.depth)
        elif scheme.kind == "airbreath":
            choice = optimal_breathing_depth(self.curve, self.surrogate_params(active_count))
            decision = (choice.depth, choice.spread_gain)
        elif scheme.kind == "brute_force":
            decision = brute_force_depth(
                lambda s, g: self._calibration_accuracy(active_count, s, g), dim
            )
        else:
            raise ValueError(f"decide() does not handle scheme {scheme.kind}")
        self._decision_cache[key] = decision
        return decision

    def random_depth(self, perm: np.ndarray, active_count: int) -> int:
        """Best depth along a random nested feature order, by the exact diagonal DG.

        Only diagonal-covariance models keep the received covariance diagonal
        under coordinate selection, which this closed-form scan relies on.
        """
        if not self.model.is_diagonal():
            raise ConfigError("random_airbreathing requires a diagonal-covariance model")
        dim = self.dim
        cvar = np.diag(self.model.covariance)[perm]
        cents = self.model.centroids[:, perm]
        gap = (self.model.centroids[self.pair.first] - self.model.centroids[self.pair.second])[perm]
        weights = gap**2 / cvar
        depths = np.arange(1, dim + 1)
        # nested normalization stats along the permutation
        cum_mean = np.cumsum(cents.mean(axis=0)) / depths
        cum_sq = np.cumsum((cents**2).mean(axis=0) + cvar)
        norm_var = cum_sq / depths - cum_mean**2
        gains = dim // depths
        sig = norm_var / (active_count * self.gamma_sen)  # sigma_hat^2 per depth
        denom = sig[:, None] / (gains[:, None] * cvar[None, :]) + 1.0
        terms = weights[None, :] / denom
        mask = np.arange(dim)[None, :] < depths[:, None]
        totals = active_count * np.sum(terms * mask, axis=1)
        return int(np.argmax(totals)) + 1

    # -- chip-level reference ------------------------------------------------

    def run_round_chips(self, scheme: SchemeSpec, round_index: int) -> RoundResult:
        """Execute one full transmit round through the chip-level chain."""
        label, round_, views, eps, guess = self.common_draws(round_index)
        m = round_.active_count
        if m == 0:
            return RoundResult(label, guess, 0, 0, 0, True)
        if scheme.kind == "random_airbreathing":
            perm = self.decision_stream(round_index).permutation(self.dim)
            depth = self.random_depth(perm, m)
            gain = self.dim // depth
            matrix = np.zeros((self.dim, depth))
            matrix[perm[:depth], np.arange(depth)] = 1.0
            stats = fit_normalization(self.model, matrix)
            chat = np.diag(self.model.covariance)[perm[:depth]] / m + stats.std**2 / (
                gain * m**2 * self.gamma_sen
            )
            cents = self.model.centroids[:, perm[:depth]]
        else:
            depth, gain = self.decide(scheme, m)
            matrix = self.curve.compression_matrix(depth)
            stats = self.stats_by_depth[depth - 1]
            chat = self.curve.eigenvalues[:depth] / m + stats.std**2 / (
                gain * m**2 * self.gamma_sen
            )
            cents = self.centroids_eig[:, :depth]
        chip_gen = rngmod.substream(
            self.config.seed,
            experiment=self.config.experiment_id,
            point=self.point_index,
            round_index=round_index,
            purpose=rngmod.CHIPS,
        )
        chips = draw_pn(gain, chip_gen)
        symbols = np.stack(
            [spread(normalize(compress(v, matrix), stats), chips) for v in views]
        )
        received = aircomp_round(symbols, round_, self.policy, self.inter_power, chip_gen)
        y_hat = denormalize_receive(despread(received, chips), stats, m, self.policy)
        diffs = y_hat[None, :] - cents
        pred = int(np.argmin(np.sum(diffs**2 / chat, axis=1)))
        return RoundResult(label, pred, depth, gain, m, False)

    # -- vectorized sweep path -------------------------------------------------

    def _draw_block(self, start: int, count: int):
        dim = self.dim
        k = self.sensors
        labels = np.empty(count, dtype=int)
        actives = np.empty((count, k), dtype=bool)
        fused = np.empty((count, dim))
        eps = np.empty((count, dim))
        guesses = np.empty(count, dtype=int)
        chol_t = self.model._chol.T
        for i in range(count):
            gen = self.round_stream(start + i)
            label = int(gen.integers(0, self.model.num_classes))
            labels[i] = label
            round_ = draw_round(k, self.policy, gen)
            views = self.model.centroids[label] + gen.standard_normal((k, dim)) @ chol_t
            actives[i] = round_.active
            if round_.active_count > 0:
                fused[i] = views[round_.active].mean(axis=0)
            else:
                fused[i] = 0.0
            eps[i] = gen.standard_normal(dim)
            guesses[i] = gen.integers(0, self.model.num_classes)
        return labels, actives, fused, eps, guesses

    def run_batch(self, schemes, rounds: int):
        """Correctness and depth per round for each scheme, on shared draws."""
        correct = {s.name: np.zeros(rounds, dtype=bool) for s in schemes}
        depths = {s.name: np.zeros(rounds, dtype=int) for s in schemes}
        random_schemes = [s for s in schemes if s.kind == "random_airbreathing"]
        for start in range(0, rounds, ROUND_BLOCK):
            count = min(ROUND_BLOCK, rounds - start)
            labels, actives, fused, eps, guesses = self._draw_block(start, count)
            ms = actives.sum(axis=1)
            outage = ms == 0
            fused_eig = fused @ self.curve.basis
            for spec in schemes:
                corr = correct[spec.name]
                dep = depths[spec.name]
                corr[start : start + count][outage] = guesses[outage] == labels[outage]
                if spec.kind == "random_airbreathing":
                    continue
                groups: dict[tuple[int, int, int], list[int]] = {}
                for i in range(count):
                    if outage[i]:
                        continue
                    m = int(ms[i])
                    s, g = self.decide(spec, m)
                    groups.setdefault((m, s, g), []).append(i)
                    dep[start + i] = s
                for (m, s, g), idx_list in groups.items():
                    idx = np.asarray(idx_list)
                    nv = self.norm_var_by_depth[s - 1] / (g * m**2 * self.gamma_sen)
                    received = fused_eig[idx, :s] + np.sqrt(nv) * eps[idx, :s]
                    chat = self.curve.eigenvalues[:s] / m + nv
                    diffs = received[:, None, :] - self.centroids_eig[None, :, :s]
                    scores = np.einsum("nls,s->nl", diffs**2, 1.0 / chat)
                    corr[start + idx] = np.argmin(scores, axis=1) == labels[idx]
            for spec in random_schemes:
                corr = correct[spec.name]
                dep = depths[spec.name]
                cvar = np.diag(self.model.covariance)
                for i in range(count):
                    if outage[i]:
                        continue
                    m = int(ms[i])
                    perm = self.decision_stream(start + i).permutation(self.dim)
                    s = self.random_depth(perm, m)
                    g = self.dim // s
                    dep[start + i] = s
                    sel = perm[:s]
                    matrix_stats = self._selection_stats(sel)
                    nv = matrix_stats.std**2 / (g * m**2 * self.gamma_sen)
                    received = fused[i, sel] + np.sqrt(nv) * eps[i, :s]
                    chat = cvar[sel] / m + nv
                    diffs = received[None, :] - self.model.centroids[:, sel]
                    pred = int(np.argmin(np.sum(diffs**2 / chat, axis=1)))
                    corr[start + i] = pred == labels[i]
        return correct, depths

    def _selection_stats(self, sel: np.ndarray) -> NormalizationStats:
        cents = self.model.centroids[:, sel]
        mean = float(cents.mean())
        within = np.diag(self.model.covariance)[sel]
        var = float(np.mean(((cents - mean) ** 2).mean(axis=0) + within))
        return NormalizationStats(mean=mean, std=float(np.sqrt(var)))


def _point_reports(config: ExperimentConfig, point_index: int, axis_value: float):
    engine = PointEngine(config, point_index, axis_value)
    rounds = config.rounds
    correct, depths = engine.run_batch(config.schemes, rounds)
    # outage is scheme-independent: depth 0 marks non-transmitting rounds
    reports = []
    corr_out = {}
    dep_out = {}
    for spec in config.schemes:
        corr = correct[spec.name]
        dep = depths[spec.name]
        transmitting = dep > 0
        successes = int(corr.sum())
        ci_low, ci_high = wilson_interval(successes, rounds)
        mean_depth = float(dep[transmitting].mean()) if transmitting.any() else float("nan")
        reports.append(
            AccuracyReport(
                experiment=config.experiment,
                scheme=spec.name,
                axis=config.axis,
                axis_value=float(axis_value),
                accuracy=successes / rounds,
                ci_low=ci_low,
                ci_high=ci_high,
                mean_depth=mean_depth,
                outage_rate=float(1.0 - transmitting.mean()),
                seed=config.seed,
            )
        )
        corr_out[(float(axis_value), spec.name)] = corr
        dep_out[(float(axis_value), spec.name)] = dep
    return reports, corr_out, dep_out


def run_round(config: ExperimentConfig, scheme: SchemeSpec, round_index: int, point_index: int = 0) -> RoundResult:
    """Chip-level reference for a single round of a sweep point."""
    if point_index >= len(config.grid):
        raise ConfigError(f"point_index {point_index} outside grid of size {len(config.grid)}")
    engine = PointEngine(config, point_index, config.grid[point_index])
    return engine.run_round_chips(scheme, round_index)


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Run every scheme over the axis grid on common random numbers."""
    if config.axis == "depth":
        raise ConfigError("use tradeoff_scan for the depth axis")
    points = list(enumerate(config.grid))
    if config.threads > 1 and len(points) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as pool:
            futures = [pool.submit(_point_reports, config, i, v) for i, v in points]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_point_reports(config, i, v) for i, v in points]
    result = SweepResult(config=config, reports=[])
    for reports, corr, dep in outcomes:
        result.reports.extend(reports)
        result.correctness.update(corr)
        result.depths.update(dep)
    return result


def tradeoff_scan(config: ExperimentConfig) -> tuple[SweepResult, list[tuple[float, float]]]:
    """Accuracy versus forced depth on one shared draw set, plus DG columns.

    Every depth reuses the channel draws of point 0, so the resulting curve is
    a paired comparison across depths.  The extra columns carry the exact
    receive DG and the relaxed surrogate at a representative activity level
    (the mean number of active sensors, rounded, at least 1).
    """
    if config.axis != "depth":
        raise ConfigError("tradeoff_scan needs axis = depth")
    engine = PointEngine(config, 0, config.grid[0])
    result = SweepResult(config=config, reports=[])
    extras = []
    m_rep = max(1, round(engine.sensors * engine.policy.activation))
    params = engine.surrogate_params(m_rep)
    rounds = config.rounds
    specs = [SchemeSpec("fixed_bd", depth=int(v)) for v in config.grid]
    correct, depths = engine.run_batch(specs, rounds)
    for spec, value in zip(specs, config.grid):
        depth = int(value)
        corr = correct[spec.name]
        dep = depths[spec.name]
        transmitting = dep > 0
        successes = int(corr.sum())
        ci_low, ci_high = wilson_interval(successes, rounds)
        result.reports.append(
            AccuracyReport(
                experiment=config.experiment,
                scheme="depth_scan",
                axis="depth",
                axis_value=float(depth),
                accuracy=successes / rounds,
                ci_low=ci_low,
                ci_high=ci_high,
                mean_depth=float(depth),
                outage_rate=float(1.0 - transmitting.mean()),
                seed=config.seed,
            )
        )
        result.correctness[(float(depth), "depth_scan")] = corr
        result.depths[(float(depth), "depth_scan")] = dep
        gain = engine.dim // depth
        dg = receive_dg_diagonal(engine.curve, depth, gain, params)
        surro = phi_tilde(engine.curve, float(depth), params)
        extras.append((dg, surro))
    return result, extras
