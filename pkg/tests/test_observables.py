import math

import numpy as np
import pytest
from hypothesis import assume, given, settings as hyp_settings

from coupling_bounds import solve_fixed_point
from dynamics import default_initial_phases, integrate, rhs_full
from graph_core import generate_graph, random_connected_graph
from models import SimulationConfig
from observables import (asymptotic_r_bound, attach_observables, detect_sync, disagreement, edge_velocity_residual,
                         estimate_decay_rate, laplacian_form_r2, lyapunov_u1, lyapunov_u2, observable_table,
                         order_parameter_classic, order_parameter_derivative_sign, order_parameter_general,
                         order_parameter_sample, r2_derivative)
from strategies import graphs_with_phases

ROOTS_OF_UNITY = np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3])


@pytest.mark.parametrize("c, psi", [(0.7, 0.7), (4.0, 4.0 - 2 * math.pi), (-math.pi, math.pi)])
def test_classic_order_parameter_synchronized(c, psi):
    R, angle = order_parameter_classic(np.full(5, c))
    assert R == pytest.approx(1.0)
    assert angle == pytest.approx(psi)


@pytest.mark.parametrize("theta", [ROOTS_OF_UNITY, np.array([0.0, math.pi])])
def test_classic_order_parameter_incoherent(theta):
    R, psi = order_parameter_classic(theta)
    assert R < 1e-12
    assert psi == 0.0
    assert order_parameter_sample(generate_graph("complete", len(theta)), theta).degenerate


def test_general_order_parameter_examples(k3):
    assert order_parameter_general(k3, np.full(3, 1.3)) == pytest.approx(1.0)
    assert order_parameter_general(k3, ROOTS_OF_UNITY) == pytest.approx(0.0, abs=1e-15)
    assert order_parameter_general(generate_graph("cycle", 6), np.full(6, -2.0)) == pytest.approx(1.0)


def test_order_parameters_agree_on_complete_graphs():
    rng = np.random.default_rng(4)
    worst = 0.0
    for n in range(2, 11):
        g = generate_graph("complete", n)
        for _ in range(1000):
            theta = rng.uniform(-math.pi, math.pi, size=n)
            R, _ = order_parameter_classic(theta)
            worst = max(worst, abs(order_parameter_general(g, theta) - R * R))
    assert worst <= 1e-12


@given(graphs_with_phases())
def test_order_parameter_identities(case):
    g, theta = case
    r2 = order_parameter_general(g, theta)
    n = g.n_vertices
    assert r2 <= 1.0 + 1e-12
    assert laplacian_form_r2(g, theta) == pytest.approx(r2, abs=1e-12)
    assert lyapunov_u1(g, theta) == pytest.approx(1.0 - r2, abs=1e-12)
    assert disagreement(g, theta) == pytest.approx(n * n * (1.0 - r2), abs=1e-9)


def test_disagreement_examples(k2):
    assert disagreement(k2, [0.5, 0.5]) == 0.0
    # |1 - (-1)|^2 on the single edge
    assert disagreement(k2, [0.0, math.pi]) == pytest.approx(4.0)


@pytest.mark.parametrize("theta, expected", [
    (np.full(3, 0.4), 0.0),
    (ROOTS_OF_UNITY, 1.0),
])
def test_lyapunov_u1_on_k3(k3, theta, expected):
    assert lyapunov_u1(k3, theta) == pytest.approx(expected, abs=1e-15)


def test_lyapunov_u1_two_oscillators(k2):
    assert lyapunov_u1(k2, [0.0, math.pi / 2]) == pytest.approx(0.5)


def test_lyapunov_u2_examples():
    assert lyapunov_u2(np.full(4, 2.5)) == 0.0
    assert lyapunov_u2([1.0, -1.0]) == pytest.approx(4.0)


@pytest.mark.parametrize("n", [3, 5, 8])
def test_lyapunov_functions_agree_for_small_angles_on_complete_graphs(n, rng):
    g = generate_graph("complete", n)
    for scale in (1e-1, 1e-2, 1e-3):
        theta = scale * rng.uniform(-1.0, 1.0, size=n)
        phi = g.incidence.T @ theta
        gap = abs(n * n * lyapunov_u1(g, theta) - lyapunov_u2(theta))
        # 4 sin^2(x/2) = x^2 - x^4/12 + ...
        assert gap <= np.sum(phi ** 4) / 12 + 1e-15


def test_lyapunov_functions_decrease_for_identical_frequencies():
    rng = np.random.default_rng(17)
    violations = 0
    for _ in range(20):
        n = int(rng.integers(3, 21))
        g = random_connected_graph(n, float(rng.uniform(0.15, 0.6)), rng)
        cfg = SimulationConfig(coupling=float(rng.uniform(0.5, 3.0)), step=0.01, t_end=10.0, record_every=5)
        trace = attach_observables(integrate(g, np.full(n, 0.3), cfg, default_initial_phases(n, rng)))
        for column in ("U1", "U2"):
            violations += int(np.sum(np.diff(trace.observables[column].to_numpy()) > 1e-9))
    assert violations == 0


def test_derivative_sign_examples(k2):
    omega = np.array([1.0, -1.0])
    assert order_parameter_derivative_sign(k2, np.zeros(2), 1.0, [0.3, -0.2])
    assert not order_parameter_derivative_sign(k2, omega, 1.0, [0.4, 0.4])
    # equilibrium of K = 4 sits on the boundary of the growth region
    assert not order_parameter_derivative_sign(k2, omega, 4.0, [math.pi / 12, -math.pi / 12])


def test_derivative_sign_uses_centered_frequencies(k3):
    theta = np.array([0.5, 0.0, -0.5])
    base = order_parameter_derivative_sign(k3, np.array([0.2, 0.0, -0.2]), 2.0, theta)
    shifted = order_parameter_derivative_sign(k3, np.array([5.2, 5.0, 4.8]), 2.0, theta)
    assert base == shifted


@hyp_settings(max_examples=75)
@given(graphs_with_phases())
def test_growth_flag_implies_increasing_order_parameter(case):
    g, theta = case
    omega = np.sin(np.arange(g.n_vertices, dtype=float))
    omega -= omega.mean()
    assume(np.any(np.abs(g.incidence.T @ theta) > 1e-3))
    if order_parameter_derivative_sign(g, omega, 2.0, theta):
        assert r2_derivative(g, omega, 2.0, theta) > 0.0


@hyp_settings(max_examples=50)
@given(graphs_with_phases())
def test_r2_derivative_matches_finite_difference(case):
    g, theta = case
    omega = np.linspace(-1.0, 1.0, g.n_vertices)
    velocity = rhs_full(g, omega, 1.5, theta)
    eps = 1e-6
    numeric = (order_parameter_general(g, theta + eps * velocity)
               - order_parameter_general(g, theta - eps * velocity)) / (2 * eps)
    assert r2_derivative(g, omega, 1.5, theta) == pytest.approx(numeric, abs=1e-6)


def test_asymptotic_bound_examples(k2):
    assert asymptotic_r_bound(k2, np.zeros(2), 1.0) == 1.0
    # ||Omega||^2 = K^2 lambda_2: no information
    assert asymptotic_r_bound(k2, [1.0, -1.0], 1.0) is None
    values = [asymptotic_r_bound(k2, [1.0, -1.0], k) for k in (2.0, 4.0, 8.0, 100.0)]
    assert values == sorted(values)
    assert values[-1] == pytest.approx(1.0, abs=1e-4)


def test_asymptotic_bound_lambda2_form_can_fail_off_complete_graphs(p3):
    omega = 0.1 * np.array([1.0, -2.0, 1.0])
    result = solve_fixed_point(p3, omega, 5.0)
    assert result.converged
    r = math.sqrt(order_parameter_general(p3, result.theta_star))
    assert r > asymptotic_r_bound(p3, omega, 5.0)
    assert r <= asymptotic_r_bound(p3, omega, 5.0, use_lambda_max=True) + 1e-12


def test_asymptotic_bound_holds_on_complete_graph_equilibrium():
    g = generate_graph("complete", 6)
    omega = np.array([0.5, -0.3, 0.2, -0.6, 0.1, 0.1])
    result = solve_fixed_point(g, omega, 2.5)
    assert result.converged
    r = math.sqrt(order_parameter_general(g, result.theta_star))
    assert r <= asymptotic_r_bound(g, omega, 2.5) + 1e-12


def test_observable_table_matches_scalar_functions(k3):
    cfg = SimulationConfig(coupling=1.0, step=0.05, t_end=2.0, record_every=4)
    trace = integrate(k3, [0.2, 0.0, -0.2], cfg, [1.0, -0.5, 0.2])
    table = observable_table(trace)
    assert list(table.columns) == ["R", "psi", "r2", "U1", "U2"]
    assert len(table) == len(trace)
    for i in (0, len(trace) - 1):
        theta = trace.phases[i]
        R, psi = order_parameter_classic(theta)
        assert table["R"][i] == pytest.approx(R)
        assert table["psi"][i] == pytest.approx(psi)
        assert table["r2"][i] == pytest.approx(order_parameter_general(k3, theta))
        assert table["U1"][i] == pytest.approx(lyapunov_u1(k3, theta))
        assert table["U2"][i] == pytest.approx(lyapunov_u2(theta))


def test_attached_observables_appear_in_trace_frame(p3):
    cfg = SimulationConfig(coupling=1.0, step=0.1, t_end=1.0, record_every=2)
    trace = attach_observables(integrate(p3, np.zeros(3), cfg, [0.1, 0.0, -0.1]))
    frame = trace.to_frame()
    assert list(frame.columns) == ["t", "theta_0", "theta_1", "theta_2", "R", "psi", "r2", "U1", "U2"]


def test_detect_sync_identical_frequencies(k3):
    cfg = SimulationConfig(coupling=1.0, step=0.01, t_end=50.0, record_every=10)
    trace = integrate(k3, np.zeros(3), cfg, [0.5, -0.3, 0.1])
    verdict = detect_sync(trace)
    assert verdict.synchronized
    assert verdict.residual <= 1e-8
    assert verdict.rate_estimate == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("coupling", [1.0, 1.9])
def test_detect_sync_running_solution(k2, coupling):
    cfg = SimulationConfig(coupling=coupling, step=0.01, t_end=50.0, record_every=10)
    trace = integrate(k2, [1.0, -1.0], cfg, [0.0, 0.0])
    verdict = detect_sync(trace)
    assert not verdict.synchronized
    assert verdict.rate_estimate is None


def test_detect_sync_rejects_short_trace(k2):
    cfg = SimulationConfig(coupling=1.0, step=0.1, t_end=1.0)
    trace = integrate(k2, np.zeros(2), cfg, [0.1, -0.1])
    with pytest.raises(ValueError):
        detect_sync(trace)


def test_edge_velocity_residual_uses_model_field(p3):
    cfg = SimulationConfig(coupling=3.0, step=0.01, t_end=30.0, record_every=10)
    trace = integrate(p3, np.zeros(3), cfg, [2.0, 0.0, -2.0], model="linearized")
    assert edge_velocity_residual(trace, start=len(trace) - 10) < 1e-8
    assert edge_velocity_residual(trace) > 1.0


def test_estimate_decay_rate_on_exponential():
    times = np.linspace(0.0, 20.0, 2001)
    direction = np.array([1.0, -2.0, 1.0])
    phases = np.exp(-2.0 * times)[:, None] * direction
    assert estimate_decay_rate(times, phases) == pytest.approx(2.0, rel=1e-3)
    assert estimate_decay_rate(times, np.zeros((len(times), 3))) is None


@pytest.mark.slow
@pytest.mark.parametrize("n", [3, 10, 50])
def test_identical_frequency_rate_beats_fiedler_bound(n):
    g = generate_graph("complete", n)
    coupling = 1.0
    failures = []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        cfg = SimulationConfig(coupling=coupling, step=0.01, t_end=30.0, record_every=10)
        verdict = detect_sync(integrate(g, np.zeros(n), cfg, default_initial_phases(n, rng)))
        if not verdict.synchronized or verdict.rate_estimate < 0.95 * 2 * coupling / math.pi:
            failures.append((seed, verdict))
    assert failures == []
