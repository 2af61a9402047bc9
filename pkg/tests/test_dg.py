"""Receive-DG closed forms, the continuous surrogate, and the depth optimizer.

Frozen constants were computed by independent means before the tests: the
hand curve by pencil (two dimensions, rational arithmetic), psi values by
adaptive quadrature of the piecewise-cosine weight profile, optimizer targets
by a dense integer scan of the surrogate built from those quadrature pieces.
"""

import numpy as np
import pytest

from airbreath.dg import (
    BreathingDecision,
    SurrogateError,
    SurrogateParams,
    brute_force_depth,
    curve_from_csv,
    curve_to_csv,
    incremental_dg_decomposition,
    optimal_breathing_depth,
    phi_lower_bound,
    phi_tilde,
    psi_integral,
    receive_covariance,
    receive_dg_diagonal,
    receive_dg_general,
    relaxed_weight,
    surrogate_params_for,
)
from airbreath.gmm import DgCurve, GmmModel, LabelPair, ModelError, build_default_gmm, closest_pair, eigen_dg
from airbreath.phy import fit_normalization

# hand curve: W = (4, 2), lambda = (2, 1), gaps = (sqrt 8, sqrt 2)
# cosine pieces: amp = (1, 0), mid = (3, 2), knots = (0, 3, 5)
HAND_WEIGHTS = np.array([4.0, 2.0])
HAND_EIGS = np.array([2.0, 1.0])
HAND_GAPS = np.sqrt(np.array([8.0, 2.0]))

# quad(g, [0, x]) with the half-cosine profile above, abs err < 1e-8
PSI_HALF = 1.8183098861837907
PSI_13 = 3.6
PSI_19 = 4.8

# m = 4, gamma = 0.5, sigma_nor^2 = 2, S = 2, G = 3: 4 * (24/7 + 3/2) = 138/7
HAND_DG = 19.714285714285715
# x = 1.5: 4 * psi(1.5) / (0.5 * 1.5 + 1) = 16/1.75
HAND_PHI_TILDE = 9.142857142857142

# default 50-dim model: full-space normalization variance and smallest eigenvalue
DEFAULT_NORM_VAR = 1.720133328
DEFAULT_LAM_MIN = 1.02
# dense scan of the surrogate (psi from quadrature-validated pieces):
# (sir_db, active_count) -> integer argmax
SCAN_TARGETS = [(-3.0, 2, 16), (7.0, 1, 24), (-14.0, 4, 8)]


def hand_curve():
    return DgCurve(weights=HAND_WEIGHTS.copy(), eigenvalues=HAND_EIGS.copy(), gaps=HAND_GAPS.copy())


def hand_params():
    return SurrogateParams(active_count=4, gamma_sen=0.5, norm_var=2.0, lam_min=1.0)


def _random_curve(gen, dim):
    lam = gen.uniform(0.3, 3.0, dim)
    gaps = gen.normal(0.0, 1.5, dim)
    gaps[np.abs(gaps) < 0.05] = 0.05
    weights = gaps**2 / lam
    order = np.lexsort((np.arange(dim), -weights))
    return DgCurve(weights=weights[order], eigenvalues=lam[order], gaps=gaps[order])


def _random_params(gen, curve):
    return SurrogateParams(
        active_count=int(gen.integers(1, 20)),
        gamma_sen=float(10.0 ** gen.uniform(-2.0, 2.0)),
        norm_var=float(gen.uniform(0.2, 5.0)),
        lam_min=float(curve.eigenvalues.min()),
    )


def _random_model(gen, dim, classes):
    centroids = gen.normal(0.0, 2.0, (classes, dim))
    a = gen.normal(0.0, 1.0, (dim, dim))
    return GmmModel(centroids=centroids, covariance=a @ a.T + dim * np.eye(dim))


_gen = np.random.Generator(np.random.Philox(20260816 + 2))
EQUIV_ARGS = [(int(_gen.integers(2, 30)), int(_gen.integers(2, 5)), i) for i in range(12)]
MONO_ARGS = [(int(_gen.integers(2, 60)), i) for i in range(16)]
OPT_ARGS = [(int(_gen.integers(2, 80)), i) for i in range(40)]
DECOMP_ARGS = [(int(_gen.integers(3, 60)), i) for i in range(12)]


def test_params_validation():
    with pytest.raises(SurrogateError):
        SurrogateParams(active_count=0, gamma_sen=1.0, norm_var=1.0, lam_min=1.0)
    with pytest.raises(SurrogateError):
        SurrogateParams(active_count=1, gamma_sen=0.0, norm_var=1.0, lam_min=1.0)
    with pytest.raises(SurrogateError):
        SurrogateParams(active_count=1, gamma_sen=1.0, norm_var=-1.0, lam_min=1.0)
    with pytest.raises(SurrogateError):
        SurrogateParams(active_count=1, gamma_sen=1.0, norm_var=1.0, lam_min=0.0)


def test_params_noise_constants():
    params = hand_params()
    assert params.sigma_hat_sq == pytest.approx(2.0 / (4 * 0.5), abs=1e-15)
    assert params.sigma_tilde_sq(2) == pytest.approx(1.0 / 2.0, abs=1e-15)


def test_receive_covariance_hand():
    model = GmmModel(centroids=np.array([[1.0, 0.0], [-1.0, 0.0]]), covariance=np.diag([2.0, 1.0]))
    cov = receive_covariance(model, np.eye(2), hand_params(), spread_gain=3)
    noise = 2.0 / (3 * 16 * 0.5)
    assert np.allclose(cov, np.diag([2.0 / 4 + noise, 1.0 / 4 + noise]), atol=1e-15)


def test_receive_dg_diagonal_hand():
    assert receive_dg_diagonal(hand_curve(), 2, 3, hand_params()) == pytest.approx(HAND_DG, abs=1e-12)


def test_receive_dg_diagonal_domain():
    with pytest.raises(SurrogateError):
        receive_dg_diagonal(hand_curve(), 0, 1, hand_params())
    with pytest.raises(SurrogateError):
        receive_dg_diagonal(hand_curve(), 3, 1, hand_params())
    with pytest.raises(SurrogateError):
        receive_dg_diagonal(hand_curve(), 1, 0, hand_params())


@pytest.mark.parametrize("dim,classes,tag", EQUIV_ARGS)
def test_general_matches_diagonal_on_eigenbasis(dim, classes, tag):
    """The arbitrary-matrix DG and the eigen closed form agree on eigen compression."""
    gen = np.random.Generator(np.random.Philox(900 + tag))
    model = _random_model(gen, dim, classes)
    pair = closest_pair(model)
    curve = eigen_dg(model, pair)
    params = _random_params(gen, curve)
    for depth in {1, dim // 2 or 1, dim}:
        gain = max(1, dim // depth)
        general = receive_dg_general(model, pair, curve.compression_matrix(depth), params, gain)
        diagonal = receive_dg_diagonal(curve, depth, gain, params)
        assert general == pytest.approx(diagonal, rel=1e-8)


def test_general_matches_explicit_inverse():
    # oracle: d' Chat^-1 d with an explicit matrix inverse instead of Cholesky
    gen = np.random.Generator(np.random.Philox(901))
    model = _random_model(gen, 8, 3)
    pair = closest_pair(model)
    matrix, _ = np.linalg.qr(gen.normal(0.0, 1.0, (8, 5)))
    params = SurrogateParams(active_count=3, gamma_sen=1.3, norm_var=1.1, lam_min=0.7)
    chat = receive_covariance(model, matrix, params, 4)
    diff = matrix.T @ (model.centroids[pair.first] - model.centroids[pair.second])
    oracle = float(diff @ np.linalg.inv(chat) @ diff)
    assert receive_dg_general(model, pair, matrix, params, 4) == pytest.approx(oracle, rel=1e-10)


def test_general_rejects_rank_deficient_compression():
    # with the noise ridge driven to ~1e-13 the projected covariance is singular
    model = GmmModel(centroids=np.array([[1.0, 0.0], [-1.0, 0.0]]), covariance=np.eye(2))
    matrix = np.array([[1.0, 1.0], [1.0, 1.0]])
    params = SurrogateParams(active_count=1, gamma_sen=1e10, norm_var=1.0, lam_min=1.0)
    with pytest.raises(SurrogateError):
        receive_dg_general(model, LabelPair(0, 1), matrix, params, 1000)


@pytest.mark.parametrize("dim,tag", MONO_ARGS)
def test_dg_monotone_in_gain_and_depth(dim, tag):
    """More spreading or more kept dimensions never loses DG (slack >= -1e-9)."""
    gen = np.random.Generator(np.random.Philox(910 + tag))
    curve = _random_curve(gen, dim)
    params = _random_params(gen, curve)
    gains = [1, 2, 4, 8]
    for s in range(1, dim + 1):
        vals = [receive_dg_diagonal(curve, s, g, params) for g in gains]
        assert np.all(np.diff(vals) >= -1e-9)
    for g in gains:
        vals = [receive_dg_diagonal(curve, s, g, params) for s in range(1, dim + 1)]
        assert np.all(np.diff(vals) >= -1e-9)


@pytest.mark.parametrize("dim,tag", MONO_ARGS)
def test_lower_bound_below_dg(dim, tag):
    gen = np.random.Generator(np.random.Philox(920 + tag))
    curve = _random_curve(gen, dim)
    params = _random_params(gen, curve)
    for s in (1, dim):
        for g in (1, max(1, dim // s)):
            bound = phi_lower_bound(curve, s, g, params)
            exact = receive_dg_diagonal(curve, s, g, params)
            assert bound <= exact + 1e-9 * abs(exact)


def test_lower_bound_tight_for_white_covariance():
    curve = DgCurve(weights=np.array([3.0, 2.0]), eigenvalues=np.array([1.0, 1.0]), gaps=np.sqrt([3.0, 2.0]))
    params = SurrogateParams(active_count=2, gamma_sen=1.0, norm_var=1.0, lam_min=1.0)
    for s, g in ((1, 2), (2, 1)):
        assert phi_lower_bound(curve, s, g, params) == pytest.approx(
            receive_dg_diagonal(curve, s, g, params), rel=1e-12
        )


def test_relaxed_weight_hits_sorted_weights_at_piece_starts():
    curve = hand_curve()
    assert relaxed_weight(curve, 0.0) == pytest.approx(4.0, abs=1e-15)
    assert relaxed_weight(curve, 1.0) == pytest.approx(2.0, abs=1e-15)
    assert relaxed_weight(curve, 2.0) == pytest.approx(2.0, abs=1e-15)


def test_relaxed_weight_continuous_and_nonincreasing():
    gen = np.random.Generator(np.random.Philox(930))
    curve = _random_curve(gen, 12)
    xs = np.linspace(0.0, 12.0, 4001)
    g = relaxed_weight(curve, xs)
    assert np.all(np.diff(g) <= 1e-12)
    step = np.abs(np.diff(g)).max()
    assert step < curve.weights[0] * 0.01  # no jumps at the integer seams


@pytest.mark.parametrize("x,expected", [(0.5, PSI_HALF), (1.3, PSI_13), (1.9, PSI_19)])
def test_psi_matches_quadrature(x, expected):
    assert float(psi_integral(hand_curve(), x)) == pytest.approx(expected, abs=1e-8)


def test_psi_at_integers_accumulates_trapezoids():
    # psi(d) = sum of (W_k + W_{k+1}) / 2 over pieces, with W_{D+1} = W_D
    curve = hand_curve()
    assert float(psi_integral(curve, 0.0)) == 0.0
    assert float(psi_integral(curve, 1.0)) == pytest.approx(3.0, abs=1e-15)
    assert float(psi_integral(curve, 2.0)) == pytest.approx(5.0, abs=1e-15)


def test_psi_derivative_is_relaxed_weight():
    gen = np.random.Generator(np.random.Philox(931))
    curve = _random_curve(gen, 9)
    xs = gen.uniform(0.1, 8.9, 50)
    h = 1e-6
    deriv = (psi_integral(curve, xs + h) - psi_integral(curve, xs - h)) / (2 * h)
    assert np.allclose(deriv, relaxed_weight(curve, xs), atol=1e-5)


def test_surrogate_domain_checks():
    curve = hand_curve()
    with pytest.raises(SurrogateError):
        psi_integral(curve, -0.1)
    with pytest.raises(SurrogateError):
        relaxed_weight(curve, 2.1)
    with pytest.raises(SurrogateError):
        phi_tilde(curve, 0.5, hand_params())


def test_phi_tilde_hand_value():
    assert float(phi_tilde(hand_curve(), 1.5, hand_params())) == pytest.approx(HAND_PHI_TILDE, abs=1e-12)


@pytest.mark.parametrize("sir_db,active,expected", SCAN_TARGETS)
def test_optimizer_matches_dense_scan_on_default_model(sir_db, active, expected):
    model = build_default_gmm(50)
    curve = eigen_dg(model)
    params = SurrogateParams(
        active_count=active,
        gamma_sen=10.0 ** (sir_db / 10.0),
        norm_var=DEFAULT_NORM_VAR,
        lam_min=DEFAULT_LAM_MIN,
    )
    decision = optimal_breathing_depth(curve, params)
    assert decision.depth == expected
    assert decision.spread_gain == 50 // expected


@pytest.mark.parametrize("dim,tag", OPT_ARGS)
def test_optimizer_exact_integer_argmax(dim, tag):
    """The returned depth maximizes phi~ over every integer in 1..D."""
    gen = np.random.Generator(np.random.Philox(940 + tag))
    curve = _random_curve(gen, dim)
    params = _random_params(gen, curve)
    decision = optimal_breathing_depth(curve, params)
    values = phi_tilde(curve, np.arange(1, dim + 1), params)
    assert decision.phi_value == pytest.approx(float(values.max()), rel=1e-12)
    assert float(values[decision.depth - 1]) == pytest.approx(float(values.max()), rel=1e-12)


def test_optimizer_flat_weights_keep_full_dimension():
    # equal weights make phi~ strictly increasing, so the endpoint branch picks D
    curve = DgCurve(weights=np.full(6, 2.0), eigenvalues=np.ones(6), gaps=np.full(6, np.sqrt(2.0)))
    params = SurrogateParams(active_count=1, gamma_sen=1.0, norm_var=1.0, lam_min=1.0)
    decision = optimal_breathing_depth(curve, params)
    assert decision.depth == 6
    assert decision.branch == "endpoint"


def test_optimizer_strong_interference_prefers_shallow():
    curve = hand_curve()
    params = SurrogateParams(active_count=1, gamma_sen=1e-4, norm_var=2.0, lam_min=1.0)
    assert optimal_breathing_depth(curve, params).depth == 1


def test_optimizer_reports_root_bracket():
    model = build_default_gmm(50)
    curve = eigen_dg(model)
    params = SurrogateParams(active_count=2, gamma_sen=0.5, norm_var=DEFAULT_NORM_VAR, lam_min=1.02)
    decision = optimal_breathing_depth(curve, params)
    assert decision.branch == "root"
    assert abs(decision.x_root - decision.depth) <= 1.0


@pytest.mark.parametrize("dim,tag", DECOMP_ARGS)
def test_decomposition_telescopes_with_signed_parts(dim, tag):
    """compression + spreading equals the raw DG increment; signs are fixed."""
    gen = np.random.Generator(np.random.Philox(950 + tag))
    curve = _random_curve(gen, dim)
    params = _random_params(gen, curve)
    for depth in range(1, dim):
        inc = incremental_dg_decomposition(curve, depth, params)
        total = receive_dg_diagonal(curve, depth + 1, dim // (depth + 1), params) - receive_dg_diagonal(
            curve, depth, dim // depth, params
        )
        assert inc.compression + inc.spreading == pytest.approx(total, abs=1e-12 * max(1.0, abs(total)))
        assert inc.compression >= 0.0
        assert inc.spreading <= 1e-15


def test_brute_force_full_grid_matches_exhaustive():
    values = {}

    def objective(s, g):
        values[(s, g)] = np.sin(0.7 * s) + 0.3 * np.cos(1.3 * g)
        return values[(s, g)]

    best = brute_force_depth(objective, 12, full_grid=True)
    oracle = [(s, g) for s in range(1, 13) for g in range(1, 12 // s + 1)]
    target = max(oracle, key=lambda sg: np.sin(0.7 * sg[0]) + 0.3 * np.cos(1.3 * sg[1]))
    assert best == target


def test_brute_force_defaults_to_depth_schedule():
    seen = []
    brute_force_depth(lambda s, g: -float(s) + 0.0 * g if not seen.append((s, g)) else 0.0, 6)
    assert seen == [(s, 6 // s) for s in range(1, 7)]


def test_brute_force_tie_keeps_first_candidate():
    assert brute_force_depth(lambda s, g: 1.0, 5) == (1, 5)


def test_surrogate_params_for_reads_model_constants():
    model = build_default_gmm(20)
    curve = eigen_dg(model)
    params = surrogate_params_for(model, curve, 3, 0.8)
    stats = fit_normalization(model, curve.basis)
    assert params.norm_var == pytest.approx(stats.std**2, abs=1e-15)
    assert params.lam_min == pytest.approx(float(curve.eigenvalues.min()), abs=1e-15)
    bare = DgCurve(weights=curve.weights, eigenvalues=curve.eigenvalues, gaps=curve.gaps)
    with pytest.raises(SurrogateError):
        surrogate_params_for(model, bare, 3, 0.8)


def test_curve_csv_round_trip(tmp_path):
    model = build_default_gmm(15)
    curve = eigen_dg(model)
    path = tmp_path / "curve.csv"
    curve_to_csv(curve, path)
    loaded = curve_from_csv(path)
    assert np.array_equal(loaded.weights, curve.weights)
    assert np.array_equal(loaded.eigenvalues, curve.eigenvalues)
    assert np.array_equal(loaded.gaps, curve.gaps)
    assert loaded.basis is None


def test_curve_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ModelError):
        curve_from_csv(path)


def test_curve_csv_rejects_reordered_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("d,weight,eigenvalue,gap\n2,1.0,1.0,1.0\n1,2.0,1.0,1.4\n")
    with pytest.raises(ModelError):
        curve_from_csv(path)
