"""Command line front end for the breathing simulator.

Subcommands write canonical CSVs plus a JSON figure spec describing how the
results are meant to be drawn, so plotting tools need no knowledge of the
simulator.  Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import rng as rngmod
from .dg import (
    SurrogateParams,
    incremental_dg_decomposition,
    optimal_breathing_depth,
    phi_tilde,
    receive_dg_diagonal,
    receive_dg_general,
    relaxed_weight,
    surrogate_params_for,
)
from .generic import (
    DgTables,
    GmmOracle,
    combined_surrogate,
    estimate_compression_dg_curve,
    estimate_spread_dg_curve,
    feature_importance,
    importance_to_csv,
    optimal_depth_generic,
    spread_gain_grid,
    table_to_csv,
)
from .gmm import ModelError, closest_pair, eigen_dg
from .harness import (
    ConfigError,
    ExperimentConfig,
    SchemeSpec,
    load_config,
    run_sweep,
    sir_to_gamma,
    tradeoff_scan,
    wilson_interval,
    write_results_csv,
    PointEngine,
    RESULTS_HEADER,
    TRADEOFF_HEADER,
)
from .phy import ChannelRound, PowerPolicy, PowerPolicyError, fit_normalization

OUT_ENV = "AIRBREATH_OUT"

SCHEME_LABELS = {
    "airbreath": "surrogate-optimal breathing",
    "brute_force": "brute-force calibrated depth",
    "no_airbreathing": "no compression (S = D, G = 1)",
    "random_airbreathing": "random feature order",
    "depth_scan": "forced depth",
}


def scheme_label(name: str) -> str:
    if name.startswith("fixed_bd(") and name.endswith(")"):
        return f"fixed depth S = {name[9:-1]}"
    return SCHEME_LABELS.get(name, name)


AXIS_LABELS = {
    "sir_db": "sensing SIR (dB)",
    "sensors": "number of sensors K",
    "activation": "activation probability",
    "depth": "breathing depth S",
}


def _figure_spec(title, panels) -> dict:
    return {"version": 1, "title": title, "panels": panels}


def _series(schemes):
    return [
        {
            "match": {"scheme": name},
            "y": "accuracy",
            "band": ["ci_low", "ci_high"],
            "label": scheme_label(name),
        }
        for name in schemes
    ]


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment file; flags override it")
    common.add_argument("--seed", type=int, help="master seed for every substream")
    common.add_argument("--rounds", type=int, help="Monte Carlo rounds per grid point")
    common.add_argument("--sir-db", type=float, dest="sir_db", help="sensing SIR in dB")
    common.add_argument("--sensors", type=int, help="number of sensors K")
    common.add_argument("--pact", type=float, help="activation probability target")
    common.add_argument("--h-threshold", type=float, dest="h_threshold", help="channel gain threshold")
    common.add_argument("--threads", type=int, help="worker threads across grid points")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    return common


DEFAULTS = {
    "tradeoff": dict(
        experiment="tradeoff",
        axis="depth",
        grid=tuple(float(s) for s in range(1, 51)),
        schemes=(SchemeSpec("airbreath"),),
        sensors=1,
        activation=0.9,
        sir_db=-3.0,
        rounds=5000,
    ),
    "sweep_sir": dict(
        experiment="sweep_sir",
        axis="sir_db",
        grid=tuple(float(v) for v in range(-20, 21, 5)),
        schemes=(
            SchemeSpec("airbreath"),
            SchemeSpec("no_airbreathing"),
            SchemeSpec("brute_force"),
            SchemeSpec("random_airbreathing"),
        ),
        sensors=8,
        activation=0.5,
        rounds=5000,
    ),
    "sweep_sensors": dict(
        experiment="sweep_sensors",
        axis="sensors",
        grid=tuple(float(v) for v in range(2, 21, 2)),
        schemes=(
            SchemeSpec("airbreath"),
            SchemeSpec("fixed_bd", depth=2),
            SchemeSpec("fixed_bd", depth=25),
        ),
        activation=0.9,
        sir_db=-14.0,
        rounds=5000,
    ),
    "sweep_activation": dict(
        experiment="sweep_activation",
        axis="activation",
        grid=tuple(round(0.1 * v, 1) for v in range(1, 10)),
        schemes=(
            SchemeSpec("airbreath"),
            SchemeSpec("fixed_bd", depth=2),
            SchemeSpec("fixed_bd", depth=25),
        ),
        sensors=18,
        sir_db=-14.0,
        rounds=5000,
    ),
    "optimal_depth": dict(
        experiment="optimal_depth",
        axis="sir_db",
        grid=(-14.0,),
        schemes=(SchemeSpec("airbreath"),),
        sensors=8,
        activation=0.5,
        sir_db=-14.0,
    ),
    "cnn_curves": dict(
        experiment="cnn_curves",
        axis="sir_db",
        grid=(-3.0,),
        schemes=(SchemeSpec("airbreath"),),
        sensors=1,
        activation=0.9,
        sir_db=-3.0,
    ),
    "validate": dict(experiment="validate", schemes=(SchemeSpec("airbreath"),)),
}


def build_config(name: str, args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
        config = dataclasses.replace(config, experiment=name)
    else:
        config = ExperimentConfig(**DEFAULTS[name])
    overrides = {}
    for key in ("seed", "rounds", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "sir_db", None) is not None:
        overrides["sir_db"] = args.sir_db
    if getattr(args, "sensors", None) is not None:
        overrides["sensors"] = args.sensors
    if getattr(args, "pact", None) is not None:
        overrides["activation"] = args.pact
        overrides["h_threshold"] = None
    if getattr(args, "h_threshold", None) is not None:
        overrides["h_threshold"] = args.h_threshold
        overrides["activation"] = None
    if getattr(args, "pact", None) is not None and getattr(args, "h_threshold", None) is not None:
        raise ConfigError("give at most one of --pact and --h-threshold")
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    return dataclasses.replace(config, **overrides)


def out_dir(config: ExperimentConfig) -> str:
    path = config.out_dir or os.environ.get(OUT_ENV) or "."
    os.makedirs(path, exist_ok=True)
    return path


def cmd_tradeoff(args) -> int:
    config = build_config("tradeoff", args)
    result, extras = tradeoff_scan(config)
    path = os.path.join(out_dir(config), "tradeoff.csv")
    write_results_csv(path, result.reports, header=TRADEOFF_HEADER, extras=extras)
    best = max(result.reports, key=lambda r: (r.accuracy, -r.axis_value))
    spec = _figure_spec(
        "accuracy and receive DG versus breathing depth",
        [
            {
                "csv": os.path.basename(path),
                "title": "accuracy versus depth",
                "x": {"column": "axis_value", "label": AXIS_LABELS["depth"]},
                "y": {"label": "classification accuracy"},
                "series": _series(["depth_scan"]),
            },
            {
                "csv": os.path.basename(path),
                "title": "receive DG and surrogate versus depth",
                "x": {"column": "axis_value", "label": AXIS_LABELS["depth"]},
                "y": {"label": "discriminant gain"},
                "series": [
                    {"match": {"scheme": "depth_scan"}, "y": "receive_dg", "label": "exact receive DG"},
                    {"match": {"scheme": "depth_scan"}, "y": "surrogate", "label": "relaxed surrogate"},
                ],
            },
        ],
    )
    _write_json(os.path.join(out_dir(config), "tradeoff.figure.json"), spec)
    print(f"wrote {path} ({len(result.reports)} depths)")
    print(
        f"best measured depth S = {int(best.axis_value)} "
        f"(accuracy {best.accuracy:.4f}, CI [{best.ci_low:.4f}, {best.ci_high:.4f}])"
    )
    return 0


def _run_named_sweep(name: str, args, csv_name: str, x_label: str) -> int:
    config = build_config(name, args)
    result = run_sweep(config)
    path = os.path.join(out_dir(config), csv_name)
    write_results_csv(path, result.reports)
    spec = _figure_spec(
        f"accuracy versus {x_label}",
        [
            {
                "csv": os.path.basename(path),
                "title": f"accuracy versus {x_label}",
                "x": {"column": "axis_value", "label": x_label},
                "y": {"label": "classification accuracy"},
                "series": _series([s.name for s in config.schemes]),
            }
        ],
    )
    _write_json(os.path.join(out_dir(config), csv_name.replace(".csv", ".figure.json")), spec)
    print(f"wrote {path} ({len(config.grid)} points x {len(config.schemes)} schemes)")
    for spec_ in config.schemes:
        accs = [r.accuracy for r in result.reports if r.scheme == spec_.name]
        print(f"  {spec_.name}: accuracy {min(accs):.4f} .. {max(accs):.4f}")
    return 0


def cmd_sweep_sir(args) -> int:
    return _run_named_sweep("sweep_sir", args, "sweep_sir.csv", AXIS_LABELS["sir_db"])


def cmd_sweep_sensors(args) -> int:
    return _run_named_sweep("sweep_sensors", args, "sweep_sensors.csv", AXIS_LABELS["sensors"])


def cmd_sweep_activation(args) -> int:
    return _run_named_sweep(
        "sweep_activation", args, "sweep_activation.csv", AXIS_LABELS["activation"]
    )


def cmd_optimal_depth(args) -> int:
    config = build_config("optimal_depth", args)
    engine = PointEngine(config, 0, config.grid[0])
    if args.active_count is not None:
        m = args.active_count
        if m < 1:
            raise ConfigError(f"--active-count must be >= 1, got {m}")
    else:
        m = max(1, round(engine.sensors * engine.policy.activation))
    params = engine.surrogate_params(m)
    choice = optimal_breathing_depth(engine.curve, params)
    dg = receive_dg_diagonal(engine.curve, choice.depth, choice.spread_gain, params)
    print(f"sensors K = {engine.sensors}, active |K| = {m}, activation {engine.policy.activation:.4f}")
    print(f"sensing SIR = {10 * np.log10(engine.gamma_sen):.2f} dB")
    print(f"optimal depth S* = {choice.depth}, spread gain G = {choice.spread_gain}")
    print(f"surrogate value {choice.phi_value:.6f} ({choice.branch} branch)")
    print(f"exact receive DG at the choice: {dg:.6f}")
    return 0


def cmd_cnn_curves(args) -> int:
    config = build_config("cnn_curves", args)
    model = config.load_model()
    oracle = GmmOracle(model)
    dim = model.dim
    active = args.active_count if args.active_count is not None else 1
    if active < 1:
        raise ConfigError(f"--active-count must be >= 1, got {active}")
    gamma = sir_to_gamma(config.sir_db)
    norm_var = fit_normalization(model, np.eye(dim)).std ** 2
    gen = rngmod.substream(config.seed, experiment=config.experiment_id, purpose=rngmod.CALIBRATION)
    labels, feats = oracle.sample_views(args.importance_trials, active, gen)
    profile = feature_importance(labels, feats, model.num_classes)
    depth_grid = sorted(set(list(range(1, 11)) + [12, 16, 20, 25, 30, 40, dim]))
    gain_grid = spread_gain_grid(dim)
    comp = estimate_compression_dg_curve(
        oracle, profile, depth_grid, args.comp_trials, gen, views=active
    )
    spread_curve = estimate_spread_dg_curve(
        oracle, active, gamma, norm_var, gain_grid, args.trials, gen
    )
    tables = DgTables(
        compression=comp, spreading=spread_curve, dim=dim, alpha=1.0 / (model.num_classes - 1), beta=2.0
    )
    out = out_dir(config)
    comp_path = os.path.join(out, "cnn_compression.csv")
    spread_path = os.path.join(out, "cnn_spreading.csv")
    imp_path = os.path.join(out, "cnn_importance.csv")
    table_to_csv(comp, "compression", comp_path)
    table_to_csv(spread_curve, "spreading", spread_path)
    importance_to_csv(profile, imp_path)
    generic_choice = optimal_depth_generic(tables)
    depth = generic_choice.depth
    curve = eigen_dg(model)
    closed = optimal_breathing_depth(curve, surrogate_params_for(model, curve, active, gamma))
    spec = _figure_spec(
        "estimated DG curves for a black-box classifier",
        [
            {
                "csv": os.path.basename(comp_path),
                "title": "compression DG estimate",
                "x": {"column": "S", "label": "kept dimensions S"},
                "y": {"label": "DG estimate"},
                "series": [{"y": "dg_estimate", "band_stderr": "stderr", "label": "compression curve"}],
            },
            {
                "csv": os.path.basename(spread_path),
                "title": "spreading DG estimate",
                "x": {"column": "G", "label": "spread gain G"},
                "y": {"label": "DG estimate"},
                "series": [{"y": "dg_estimate", "band_stderr": "stderr", "label": "spreading curve"}],
            },
            {
                "csv": os.path.basename(imp_path),
                "title": "feature importance profile",
                "x": {"column": "d", "label": "feature dimension d"},
                "y": {"label": "importance score"},
                "series": [{"y": "importance", "label": "importance profile"}],
            },
        ],
    )
    _write_json(os.path.join(out, "cnn_curves.figure.json"), spec)
    print(f"wrote {comp_path}, {spread_path}, {imp_path}")
    print(f"combined-surrogate optimal depth S* = {depth} (G = {dim // depth})")
    print(f"closed-form mixture reference: S* = {closed.depth} (G = {closed.spread_gain})")
    return 0


def _check(checks, name, ok):
    checks.append((name, bool(ok)))
    print(f"{'PASS' if ok else 'FAIL'}  {name}")


def cmd_validate(args) -> int:
    config = build_config("validate", args)
    seed = config.seed
    checks = []
    model = config.load_model()
    curve = eigen_dg(model)
    gen = rngmod.substream(seed, experiment=config.experiment_id, purpose=rngmod.CALIBRATION)

    stats = fit_normalization(model, curve.basis[:, :7])
    proj = model.centroids @ curve.basis[:, :7]
    within = np.einsum("ds,de,es->s", curve.basis[:, :7], model.covariance, curve.basis[:, :7])
    power = float(np.mean(((proj - stats.mean) ** 2).mean(axis=0) + within)) / stats.std**2
    _check(checks, "normalized transmit power is exactly 1", abs(power - 1.0) < 1e-12)

    policy = PowerPolicy.from_activation(1.0, 0.6)
    h = (gen.standard_normal(64) + 1j * gen.standard_normal(64)) / np.sqrt(2)
    round_ = ChannelRound(fades=h, active=np.abs(h) ** 2 >= policy.h_threshold)
    coeff = (round_.precoders(policy) * h).real[round_.active]
    _check(
        checks,
        "active precoder coefficients invert the channel to sqrt(P0)",
        np.all(np.abs(coeff - np.sqrt(policy.p0)) <= 4 * np.finfo(float).eps),
    )

    params = SurrogateParams(active_count=3, gamma_sen=0.25, norm_var=stats.std**2, lam_min=float(curve.eigenvalues.min()))
    dim = curve.dim
    ok = True
    for s in range(1, dim):
        inc = incremental_dg_decomposition(curve, s, params)
        lhs = receive_dg_diagonal(curve, s + 1, dim // (s + 1), params)
        rhs = receive_dg_diagonal(curve, s, dim // s, params)
        ok &= abs((inc.compression + inc.spreading) - (lhs - rhs)) < 1e-9
        ok &= inc.compression >= -1e-12 and inc.spreading <= 1e-12
    _check(checks, "DG increment decomposition telescopes with the proven signs", ok)

    matrix = curve.compression_matrix(9)
    g_diag = receive_dg_diagonal(curve, 9, dim // 9, params)
    g_gen = receive_dg_general(model, closest_pair(model), matrix, params, dim // 9)
    _check(
        checks,
        "general and diagonal receive DG agree on the eigenbasis",
        abs(g_diag - g_gen) < 1e-9 * max(1, g_gen),
    )

    ok = all(
        abs(relaxed_weight(curve, float(d - 1)) - curve.weights[d - 1]) < 1e-12
        for d in range(1, dim + 1)
    ) and abs(relaxed_weight(curve, float(dim)) - curve.weights[-1]) < 1e-12
    _check(checks, "relaxed weight curve interpolates the eigen weights at the knots", ok)

    values = [phi_tilde(curve, float(s), params) for s in range(1, dim + 1)]
    choice = optimal_breathing_depth(curve, params)
    best = max(values)
    _check(
        checks,
        "breathing optimizer matches the integer surrogate scan",
        abs(values[choice.depth - 1] - best) <= 1e-9 * max(1.0, abs(best)),
    )

    lo, hi = wilson_interval(37, 100)
    _check(checks, "confidence interval brackets the point estimate", lo <= 0.37 <= hi)

    failures = [name for name, ok_ in checks if not ok_]
    if failures:
        print(f"{len(failures)} of {len(checks)} checks failed")
        return 3
    print(f"all {len(checks)} checks passed")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airbreath",
        description="feature-compression breathing against interference, over the air",
    )
    common = _base_parser()
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("tradeoff", parents=[common], help="accuracy and DG versus forced depth")
    sub.set_defaults(func=cmd_tradeoff)

    sub = subs.add_parser("sweep-sir", parents=[common], help="scheme comparison over sensing SIR")
    sub.set_defaults(func=cmd_sweep_sir)

    sub = subs.add_parser("sweep-sensors", parents=[common], help="scheme comparison over sensor count")
    sub.set_defaults(func=cmd_sweep_sensors)

    sub = subs.add_parser(
        "sweep-activation", parents=[common], help="scheme comparison over activation probability"
    )
    sub.set_defaults(func=cmd_sweep_activation)

    sub = subs.add_parser("optimal-depth", parents=[common], help="print the surrogate-optimal depth")
    sub.add_argument("--active-count", type=int, help="active sensors to plan for")
    sub.set_defaults(func=cmd_optimal_depth)

    sub = subs.add_parser(
        "cnn-curves", parents=[common], help="estimate DG curves for a black-box classifier"
    )
    sub.add_argument("--active-count", type=int, help="fused views per sample (default 1)")
    sub.add_argument("--trials", type=int, default=2000, help="spreading-curve trials per gain")
    sub.add_argument("--comp-trials", type=int, default=8000, help="compression-curve trials per depth")
    sub.add_argument(
        "--importance-trials", type=int, default=4000, help="labeled samples for the importance ranking"
    )
    sub.set_defaults(func=cmd_cnn_curves)

    sub = subs.add_parser("validate", parents=[common], help="run fast internal consistency checks")
    sub.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PowerPolicyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
