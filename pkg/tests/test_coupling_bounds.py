import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings

from config import settings
from coupling_bounds import (bound_contraction, bound_necessary_complete, bound_necessary_maxdeg,
                             bound_necessary_pinv, bound_sufficient_2norm, bound_sufficient_infnorm,
                             bound_tree_tight, compute_bound_report, empirical_threshold, existence_oracle,
                             multi_start_fixed_points, r_infinity_bracket, sampled_weighted_pinv_norm,
                             solve_fixed_point)
from dynamics import default_initial_phases, default_step, integrate, rhs_full, rhs_grounded
from errors import GraphError, NumericalError, ThresholdSearchError
from graph_core import generate_graph, laplacian, random_connected_graph
from models import SimulationConfig
from observables import order_parameter_derivative_sign
from spectral import grounding_projection, spectrum
from strategies import connected_graphs

K2_OMEGA = np.array([1.0, -1.0])
P3_OMEGA = np.array([1.0, 0.0, -1.0])
ALL_BOUNDS = (bound_necessary_maxdeg, bound_necessary_pinv, bound_sufficient_2norm, bound_contraction,
              bound_sufficient_infnorm)


def test_two_oscillator_bounds(k2):
    assert bound_necessary_maxdeg(k2, K2_OMEGA) == pytest.approx(2.0)
    assert bound_necessary_pinv(k2, K2_OMEGA) == pytest.approx(2.0)
    assert bound_tree_tight(k2, K2_OMEGA) == pytest.approx(2.0)
    assert bound_sufficient_2norm(k2, K2_OMEGA) == pytest.approx(2.0)
    assert bound_contraction(k2, K2_OMEGA) == pytest.approx(math.pi ** 2 / 4 * math.sqrt(2))
    assert bound_contraction(k2, K2_OMEGA) == pytest.approx(3.4894, abs=1e-4)


@pytest.mark.parametrize("bound", ALL_BOUNDS)
def test_zero_frequencies_give_zero_bounds(bound):
    assert bound(generate_graph("cycle", 5), np.zeros(5)) == 0.0


def test_bounds_ignore_frequency_mean(p3):
    for bound in (bound_necessary_maxdeg, bound_necessary_pinv, bound_sufficient_2norm, bound_contraction):
        assert bound(p3, P3_OMEGA + 7.0) == pytest.approx(bound(p3, P3_OMEGA))


@pytest.mark.parametrize("n", [3, 4, 8])
def test_maxdeg_bound_on_complete_graph(n):
    omega = np.zeros(n)
    omega[:2] = [1.0, -1.0]
    assert bound_necessary_maxdeg(generate_graph("complete", n), omega) == pytest.approx(n / (n - 1))


def test_2norm_bound_independent_of_n_on_complete_graphs():
    sigma = 0.7
    for n in (4, 16, 64):
        omega = sigma * np.resize([1.0, -1.0], n)
        assert np.linalg.norm(omega) == pytest.approx(math.sqrt(n) * sigma)
        assert bound_sufficient_2norm(generate_graph("complete", n), omega) == pytest.approx(2 * sigma)


def test_path_graph_bounds(p3):
    assert bound_tree_tight(p3, P3_OMEGA) == pytest.approx(3.0)
    assert bound_necessary_pinv(p3, P3_OMEGA) == pytest.approx(3.0)
    assert bound_necessary_maxdeg(p3, P3_OMEGA) == pytest.approx(1.5)
    assert bound_sufficient_2norm(p3, P3_OMEGA) == pytest.approx(2 * math.sqrt(6))
    assert bound_contraction(p3, P3_OMEGA) == pytest.approx(math.pi ** 2 / 4 * 9 * math.sqrt(2))


def test_star_tree_bound_zero_frequencies():
    assert bound_tree_tight(generate_graph("star", 3), np.zeros(3)) == 0.0


def test_tree_bound_rejects_cycles(k3):
    with pytest.raises(GraphError):
        bound_tree_tight(k3, P3_OMEGA)


def test_complete_closed_form_matches_pinv_bound():
    rng = np.random.default_rng(3)
    for n in (2, 3, 5, 9):
        g = generate_graph("complete", n)
        omega = rng.normal(size=n)
        assert bound_necessary_complete(g, omega) == pytest.approx(bound_necessary_pinv(g, omega), rel=1e-10)
    with pytest.raises(GraphError):
        bound_necessary_complete(generate_graph("path", 4), np.arange(4.0))


@hyp_settings(max_examples=60)
@given(connected_graphs(min_n=3))
def test_tree_bound_equals_pinv_bound_on_trees(g):
    omega = np.cos(np.arange(g.n_vertices, dtype=float))
    if g.is_tree:
        assert bound_tree_tight(g, omega) == pytest.approx(bound_necessary_pinv(g, omega), rel=1e-9)
    assert bound_sufficient_2norm(g, omega) <= bound_contraction(g, omega) * (1 + 1e-12)


def test_bound_report(p3):
    report = compute_bound_report(p3, P3_OMEGA, samples=50, rng=np.random.default_rng(1))
    assert report.is_tree
    assert report.k_tree_tight == pytest.approx(3.0)
    assert report.k_necessary == pytest.approx(3.0)
    assert report.lambda2 == pytest.approx(1.0)
    assert report.lambda_max == pytest.approx(3.0)
    assert report.classification()["k_tree_tight"] == "necessary and sufficient"
    assert report.ordering_consistent
    assert set(report.to_dict()) >= {"k_necessary_pinv", "k_sufficient_infnorm_estimate", "omega_mean"}

    cyclic = compute_bound_report(generate_graph("cycle", 4), np.array([1.0, 0, -1, 0]), samples=10)
    assert cyclic.k_tree_tight is None
    assert "k_tree_tight" not in cyclic.classification()


def test_bound_report_flags_sufficient_bound_below_necessary_bound():
    g = generate_graph("complete", 10)
    omega = np.zeros(10)
    omega[:2] = [1.0, -1.0]
    report = compute_bound_report(g, omega, samples=10, rng=np.random.default_rng(0))
    assert report.k_necessary == pytest.approx(10 / 9)
    assert report.k_sufficient_2norm == pytest.approx(2 * math.sqrt(2) / math.sqrt(10))
    assert not report.ordering_consistent
    kinds = report.classification()
    assert kinds["k_sufficient_2norm"] == "inconsistent (below necessary bound)"
    assert kinds["k_contraction"] == "sufficient (unique)"
    # K = 1 clears the 2-norm value but no synchronized state exists there
    assert not existence_oracle(g, omega, 1.0).exists


def test_infnorm_estimate_is_seeded(k3):
    first = bound_sufficient_infnorm(k3, P3_OMEGA, samples=30, rng=np.random.default_rng(5))
    second = bound_sufficient_infnorm(k3, P3_OMEGA, samples=30, rng=np.random.default_rng(5))
    assert first == second
    assert first > 0


def test_weighted_pinv_norm_scales_like_one_over_n():
    sizes = np.array([4, 8, 16, 32, 64])
    norms = [sampled_weighted_pinv_norm(generate_graph("complete", int(n)), samples=20,
                                        rng=np.random.default_rng(int(n))) for n in sizes]
    slope = np.polyfit(np.log(sizes), np.log(norms), 1)[0]
    assert -1.15 <= slope <= -0.85


def test_r_infinity_bracket():
    lower, upper = r_infinity_bracket()
    assert lower == pytest.approx(math.sqrt(16 - math.pi ** 2) / 4)
    assert upper == pytest.approx(math.sqrt(3) / 2)
    assert lower < upper
    assert r_infinity_bracket(at_kl=False) == (lower, 1.0)


def test_fixed_point_zero_frequencies(k3):
    result = solve_fixed_point(k3, np.zeros(3), 1.0)
    assert result.converged
    assert result.iterations == 1
    np.testing.assert_array_equal(result.theta_star, np.zeros(3))


def test_fixed_point_two_oscillators(k2):
    result = solve_fixed_point(k2, K2_OMEGA, 4.0)
    assert result.converged
    assert result.status == "converged"
    assert result.residual <= 1e-9
    assert result.phi_star[0] == pytest.approx(-math.pi / 6, abs=1e-8)
    np.testing.assert_allclose(result.theta_star, [math.pi / 12, -math.pi / 12], atol=1e-8)
    assert result.certified_stable
    assert result.certified_unique


def test_fixed_point_below_threshold_reports_failure(k2):
    result = solve_fixed_point(k2, K2_OMEGA, 1.9)
    assert not result.converged
    assert result.status in ("oscillating", "diverging")
    assert result.clamped
    assert not result.certified_stable


def test_fixed_point_uncertified_below_contraction(p3):
    result = solve_fixed_point(p3, P3_OMEGA, 5.0)
    assert result.converged
    assert not result.certified_unique
    np.testing.assert_allclose(rhs_full(p3, P3_OMEGA, 5.0, result.theta_star), 0.0, atol=1e-9)
    np.testing.assert_allclose(np.sin(result.phi_star), [-0.6, -0.6], atol=1e-9)


def test_grounded_fixed_point_two_oscillators(k2):
    omega = np.array([-1.0, 1.0])
    result = solve_fixed_point(k2, omega, 4.0)
    v = grounding_projection(2)
    assert result.phi_star[0] == pytest.approx(math.asin(0.5), abs=1e-9)
    assert np.linalg.norm(rhs_grounded(k2, omega, 4.0, v.ground(result.theta_star), v)) <= 1e-10


def test_certified_stable_fixed_point_attracts_nearby_states():
    g = generate_graph("cycle", 5)
    omega = np.array([0.4, -0.1, 0.3, -0.5, -0.1])
    coupling = 20.0
    result = solve_fixed_point(g, omega, coupling)
    assert result.certified_stable and result.certified_unique

    v = grounding_projection(5)
    rng = np.random.default_rng(3)
    cfg = SimulationConfig(coupling=coupling, step=0.01, t_end=10.0, record_every=100)
    for _ in range(5):
        kick = v.lift(rng.normal(size=4))
        kick *= 1e-3 / np.linalg.norm(kick)
        final = integrate(g, omega, cfg, result.theta_star + kick).phases[-1]
        assert np.linalg.norm(v.ground(final - result.theta_star)) <= 1e-6


def test_fixed_point_result_serializes(k2):
    payload = solve_fixed_point(k2, K2_OMEGA, 4.0).to_dict()
    assert payload["status"] == "converged"
    assert len(payload["theta_star"]) == 2


def test_existence_oracle(k2):
    above = existence_oracle(k2, K2_OMEGA, 4.0)
    below = existence_oracle(k2, K2_OMEGA, 1.0)
    assert (above.exists, above.method) == (True, "picard")
    assert (below.exists, below.method) == (False, "simulation")


def test_two_oscillator_threshold(k2):
    search = empirical_threshold(k2, K2_OMEGA, 1.0, 4.0, tol_k=1e-3, n_jobs=1)
    assert search.k_hat == pytest.approx(2.0, rel=0.02)
    lo, hi = search.bracket
    assert hi - lo <= 1e-3
    table = search.probe_table()
    assert list(table.columns) == ["coupling", "exists", "method"]
    assert table["coupling"].is_monotonic_increasing
    assert len(table) == len(search.probes) >= settings.THRESHOLD_GRID_POINTS


def test_path_threshold_matches_tree_bound(p3):
    search = empirical_threshold(p3, P3_OMEGA, 2.0, 5.0, tol_k=1e-3, n_jobs=1)
    assert search.k_hat == pytest.approx(bound_tree_tight(p3, P3_OMEGA), rel=0.02)


def test_threshold_zero_frequencies(k3):
    assert empirical_threshold(k3, np.full(3, 0.4), 1.0, 2.0, n_jobs=1).k_hat == 0.0


def test_threshold_rejects_bad_brackets(k2):
    with pytest.raises(ThresholdSearchError) as excinfo:
        empirical_threshold(k2, K2_OMEGA, 3.0, 5.0, n_jobs=1)
    assert len(excinfo.value.probes) == settings.THRESHOLD_GRID_POINTS
    assert excinfo.value.probes["exists"].all()

    with pytest.raises(ThresholdSearchError):
        empirical_threshold(k2, K2_OMEGA, 0.5, 1.5, n_jobs=1)
    with pytest.raises(NumericalError):
        empirical_threshold(k2, K2_OMEGA, 2.0, 1.0, n_jobs=1)


def test_multi_start_agrees_above_contraction():
    rng = np.random.default_rng(11)
    for _ in range(10):
        g = random_connected_graph(int(rng.integers(3, 9)), 0.5, rng)
        omega = rng.normal(0.0, 0.5, size=g.n_vertices)
        omega -= omega.mean()
        coupling = 1.01 * bound_contraction(g, omega)
        results = multi_start_fixed_points(g, omega, coupling, starts=20, rng=rng, n_jobs=1)
        assert all(r.converged and r.certified_stable and r.certified_unique for r in results)
        reference = results[0].theta_star
        for r in results[1:]:
            np.testing.assert_allclose(r.theta_star, reference, atol=1e-8)


def test_growth_flag_holds_away_from_equilibrium():
    rng = np.random.default_rng(12)
    for _ in range(10):
        n = int(rng.integers(3, 9))
        g = random_connected_graph(n, 0.5, rng)
        omega = rng.normal(0.0, 0.5, size=n)
        omega -= omega.mean()
        coupling = 1.01 * bound_contraction(g, omega)
        step = default_step(coupling, n, spectrum(laplacian(g)).lambda_max)
        cfg = SimulationConfig(coupling=coupling, step=step, t_end=400 * step, record_every=4)
        trace = integrate(g, omega, cfg, default_initial_phases(n, rng))
        for theta in trace.phases:
            speed = np.linalg.norm(rhs_full(g, omega, coupling, theta))
            if speed > 2 * np.linalg.norm(omega):
                assert order_parameter_derivative_sign(g, omega, coupling, theta)


@pytest.mark.slow
def test_bound_sandwich_on_random_graphs(monkeypatch):
    monkeypatch.setattr(settings, "ORACLE_T_END_MAX", 80.0)
    rng = np.random.default_rng(2024)
    violations = []
    for i in range(25):
        n = int(rng.integers(3, 8))
        g = random_connected_graph(n, 0.5, rng)
        omega = rng.normal(0.0, 0.5, size=n)
        omega -= omega.mean()
        necessary = max(bound_necessary_maxdeg(g, omega), bound_necessary_pinv(g, omega))
        sufficient = bound_sufficient_2norm(g, omega)
        contraction = bound_contraction(g, omega)
        tol_k = 0.005 * necessary
        search = empirical_threshold(g, omega, 0.5 * necessary, 1.01 * contraction, tol_k=tol_k, n_jobs=1)
        if not (necessary - tol_k <= search.k_hat <= sufficient + tol_k and sufficient <= contraction):
            violations.append((i, necessary, search.k_hat, sufficient, contraction))
    assert violations == []
