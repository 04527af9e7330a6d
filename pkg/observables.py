"""Order parameters, Lyapunov functions and synchronization detection."""
from __future__ import annotations

import logging
import math

import numpy as np
import pandas as pd

from config import settings
from dynamics import rhs_full, rhs_linearized
from graph_core import OrientedGraph, laplacian
from models import OrderParameterSample, SimulationTrace, SyncVerdict
from spectral import spectrum

logger = logging.getLogger("Observables")

DEGENERATE_R = 1e-12


def _canonical_angle(angle: float) -> float:
    # np.angle returns [-pi, pi]; keep the (-pi, pi] branch
    return math.pi if angle <= -math.pi else float(angle)


def order_parameter_classic(theta) -> tuple[float, float]:
    """
    Kuramoto's centroid R e^{j psi} = (1/N) sum_i e^{j theta_i}.
    psi is 0 when R is (numerically) zero.
    """
    z = np.mean(np.exp(1j * np.asarray(theta, dtype=float)))
    R = float(abs(z))
    if R <= DEGENERATE_R:
        return R, 0.0
    return R, _canonical_angle(float(np.angle(z)))


def order_parameter_general(g: OrientedGraph, theta) -> float:
    """r^2 = (N^2 - 2e + 2 * 1^T cos(B^T theta)) / N^2."""
    n, e = g.n_vertices, g.n_edges
    phi = g.incidence.T @ np.asarray(theta, dtype=float)
    return float((n * n - 2 * e + 2 * np.sum(np.cos(phi))) / (n * n))


def order_parameter_sample(g: OrientedGraph, theta) -> OrderParameterSample:
    R, psi = order_parameter_classic(theta)
    r2 = order_parameter_general(g, theta)
    return OrderParameterSample(R=R, psi=psi, r_general=math.sqrt(max(r2, 0.0)), degenerate=R <= DEGENERATE_R)


def laplacian_form_r2(g: OrientedGraph, theta) -> float:
    """r^2 = 1 - (cos^T L cos + sin^T L sin) / N^2, the Laplacian quadratic form of e^{j theta}."""
    theta = np.asarray(theta, dtype=float)
    lap = laplacian(g)
    c, s = np.cos(theta), np.sin(theta)
    n = g.n_vertices
    return float(1.0 - (c @ lap @ c + s @ lap @ s) / (n * n))


def disagreement(g: OrientedGraph, theta) -> float:
    """
    Sum over edges of |e^{j theta_u} - e^{j theta_v}|^2, each undirected edge
    counted once; equals N^2 (1 - r^2).
    """
    z = np.exp(1j * np.asarray(theta, dtype=float))
    edges = np.asarray(g.edges)
    return float(np.sum(np.abs(z[edges[:, 0]] - z[edges[:, 1]]) ** 2))


def lyapunov_u1(g: OrientedGraph, theta) -> float:
    """U_1 = 1 - r^2 = 4 ||sin(B^T theta / 2)||^2 / N^2."""
    phi = g.incidence.T @ np.asarray(theta, dtype=float)
    n = g.n_vertices
    return float(4.0 * np.sum(np.sin(phi / 2.0) ** 2) / (n * n))


def lyapunov_u2(theta) -> float:
    """U_2 = theta^T L_c theta with L_c = N I - 1 1^T, i.e. N ||theta - mean(theta)||^2."""
    theta = np.asarray(theta, dtype=float)
    centered = theta - theta.mean()
    return float(len(theta) * centered @ centered)


def _centered_omega_norm(omega) -> float:
    omega = np.asarray(omega, dtype=float)
    return float(np.linalg.norm(omega - omega.mean()))


def order_parameter_derivative_sign(g: OrientedGraph, omega, coupling: float, theta) -> bool:
    """
    True when ||B sin(B^T theta)||_2 > (N/K) ||Omega||_2, which guarantees
    d(r^2)/dt > 0. False means the sign is not determined by this test.
    """
    b = g.incidence
    coupling_term = b @ np.sin(b.T @ np.asarray(theta, dtype=float))
    return bool(np.linalg.norm(coupling_term) > g.n_vertices / coupling * _centered_omega_norm(omega))


def r2_derivative(g: OrientedGraph, omega, coupling: float, theta) -> float:
    """Exact d(r^2)/dt = (2/N^2) [ (K/N) ||B s||^2 - omega^T B s ],  s = sin(B^T theta)."""
    b = g.incidence
    n = g.n_vertices
    bs = b @ np.sin(b.T @ np.asarray(theta, dtype=float))
    return float(2.0 / (n * n) * (coupling / n * bs @ bs - np.asarray(omega, dtype=float) @ bs))


def asymptotic_r_bound(g: OrientedGraph, omega, coupling: float,
                       use_lambda_max: bool = False, lambdas: tuple[float, float] | None = None) -> float | None:
    """
    Upper bound sqrt(1 - ||Omega||^2 / (K^2 lambda)) on the asymptotic order
    parameter, with lambda = lambda_2(L) by default.

    The lambda_2 form is exact on graphs with lambda_2 = lambda_max (complete
    graphs); `use_lambda_max=True` gives the form that holds at every
    synchronized equilibrium of any graph.

    Returns:
        The bound, or None when ||Omega||^2 >= K^2 lambda (no information).
    """
    if lambdas is None:
        spec = spectrum(laplacian(g))
        lambdas = (spec.lambda2, spec.lambda_max)
    lam = lambdas[1] if use_lambda_max else lambdas[0]
    ratio = _centered_omega_norm(omega) ** 2 / (coupling * coupling * lam)
    if ratio >= 1.0:
        return None
    return math.sqrt(1.0 - ratio)


def observable_table(trace: SimulationTrace) -> pd.DataFrame:
    """Per-sample R, psi, r2, U1, U2 for a trace."""
    g = trace.graph
    n = g.n_vertices
    phases = trace.phases
    z = np.mean(np.exp(1j * phases), axis=1)
    R = np.abs(z)
    psi = np.where(R > DEGENERATE_R, np.angle(z), 0.0)
    psi = np.where(psi <= -np.pi, np.pi, psi)
    phi = phases @ g.incidence
    r2 = (n * n - 2 * g.n_edges + 2 * np.cos(phi).sum(axis=1)) / (n * n)
    u1 = 4.0 * (np.sin(phi / 2.0) ** 2).sum(axis=1) / (n * n)
    centered = phases - phases.mean(axis=1, keepdims=True)
    u2 = n * (centered ** 2).sum(axis=1)
    return pd.DataFrame({"R": R, "psi": psi, "r2": r2, "U1": u1, "U2": u2})


def attach_observables(trace: SimulationTrace) -> SimulationTrace:
    trace.observables = observable_table(trace)
    return trace


def edge_velocity_residual(trace: SimulationTrace, start: int = 0) -> float:
    """max over samples[start:] of ||d/dt (B^T theta)||_inf, evaluated from the vector field."""
    g = trace.graph
    field = rhs_linearized if trace.model == "linearized" else rhs_full
    residual = 0.0
    for theta in trace.phases[start:]:
        phi_dot = g.incidence.T @ field(g, trace.omega, trace.coupling, theta)
        residual = max(residual, float(np.max(np.abs(phi_dot), initial=0.0)))
    return residual


def estimate_decay_rate(times: np.ndarray, phases: np.ndarray) -> float | None:
    """
    Least-squares exponential rate of ||V^T (theta(t) - theta(t_end))||
    over the middle of its decay window (RATE_FIT_LOW..RATE_FIT_HIGH).
    """
    centered = phases - phases.mean(axis=1, keepdims=True)
    dist = np.linalg.norm(centered - centered[-1], axis=1)
    peak = float(dist.max(initial=0.0))
    if peak <= 1e-12:
        return None

    above = np.nonzero(dist > settings.RATE_FIT_FLOOR * peak)[0]
    last = int(above.max())
    lo = int(settings.RATE_FIT_LOW * (last + 1))
    hi = int(math.ceil(settings.RATE_FIT_HIGH * (last + 1)))
    window = np.arange(lo, hi)
    window = window[dist[window] > settings.RATE_FIT_FLOOR * peak]
    if len(window) < 3:
        return None

    slope, _ = np.polyfit(times[window], np.log(dist[window]), 1)
    return float(-slope)


def detect_sync(trace: SimulationTrace, tail_fraction: float | None = None,
                residual_tol: float | None = None) -> SyncVerdict:
    """
    Synchronized iff the edge phase velocities stay below `residual_tol` over
    the tail of the trace.

    Raises:
        ValueError: if the tail holds fewer than SYNC_MIN_TAIL_SAMPLES samples.
    """
    tail_fraction = settings.SYNC_TAIL_FRACTION if tail_fraction is None else tail_fraction
    residual_tol = settings.SYNC_RESIDUAL_TOL if residual_tol is None else residual_tol

    n_samples = len(trace)
    n_tail = int(math.ceil(tail_fraction * n_samples))
    if n_tail < settings.SYNC_MIN_TAIL_SAMPLES:
        raise ValueError(f"trace too short: {n_tail} tail samples, need {settings.SYNC_MIN_TAIL_SAMPLES}")

    residual = edge_velocity_residual(trace, start=n_samples - n_tail)
    synchronized = residual <= residual_tol
    rate = estimate_decay_rate(trace.times, trace.phases) if synchronized else None

    logger.info(f"Sync verdict: synchronized={synchronized}, residual={residual:.3e}, rate={rate}")
    return SyncVerdict(synchronized=synchronized, residual=residual, rate_estimate=rate)
