"""
Critical-coupling bounds, the Picard fixed-point solver and the empirical
threshold search.

All bounds are evaluated on the centered frequencies Omega = omega - <omega> 1.
"""
from __future__ import annotations

import logging
import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
import scipy.linalg
from joblib import Parallel, delayed

from config import settings
from dynamics import default_initial_phases, default_record_every, default_step, default_t_end, integrate
from errors import GraphError, ThresholdSearchError
from graph_core import OrientedGraph, laplacian, sinc_values
from models import (CERTIFIED_SUFFICIENT_BOUNDS, BoundReport, FixedPointResult, SimulationConfig,
                    ThresholdProbe, ThresholdSearch)
from observables import detect_sync
from spectral import grounding_projection, pseudoinverse, spectrum, weighted_pseudoinverse

logger = logging.getLogger("CouplingBounds")


def _centered(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    return omega - omega.mean()


@lru_cache(maxsize=128)
def _spectral_data(g: OrientedGraph) -> tuple[float, float, np.ndarray]:
    lap = laplacian(g)
    spec = spectrum(lap)
    return spec.lambda2, spec.lambda_max, pseudoinverse(lap)


def bound_necessary_maxdeg(g: OrientedGraph, omega) -> float:
    """N ||Omega||_inf / d_max: below this no fixed point exists."""
    return g.n_vertices * float(np.max(np.abs(_centered(omega)))) / g.d_max


def bound_necessary_pinv(g: OrientedGraph, omega) -> float:
    """
    N ||B^T L^# Omega||_inf / ||B^T L^# B||_inf.

    From B^T L^# B sin(B^T theta) = B^T L^# N Omega / K and ||sin||_inf <= 1.
    B^T L^# B is the projector onto range(B^T): the identity on trees, and
    B^T B / N on complete graphs.
    """
    b = g.incidence
    _, _, pinv = _spectral_data(g)
    numerator = float(np.max(np.abs(b.T @ pinv @ _centered(omega))))
    projector_norm = float(np.max(np.abs(b.T @ pinv @ b).sum(axis=1)))
    return g.n_vertices * numerator / projector_norm


def bound_necessary_complete(g: OrientedGraph, omega) -> float:
    """Closed form ||B^T omega||_inf N / (2 (N - 1)) on the complete graph."""
    if not g.is_complete:
        raise GraphError("closed-form complete-graph bound needs a complete graph")
    n = g.n_vertices
    return float(np.max(np.abs(g.incidence.T @ _centered(omega)))) * n / (2 * (n - 1))


def bound_tree_tight(g: OrientedGraph, omega) -> float:
    """
    N ||B^T L^# Omega||_inf on a tree, where it is necessary and sufficient:
    sin(B^T theta*) = B^T L^# N Omega / K has a solution iff K reaches this value.
    """
    if not g.is_tree:
        raise GraphError(f"tight bound needs a tree, got e={g.n_edges} for N={g.n_vertices}")
    _, _, pinv = _spectral_data(g)
    return g.n_vertices * float(np.max(np.abs(g.incidence.T @ pinv @ _centered(omega))))


def bound_sufficient_2norm(g: OrientedGraph, omega) -> float:
    """2 sqrt(N) ||Omega||_2 / lambda_2: a stable fixed point with |theta_i| < pi/4 exists above it."""
    lambda2, _, _ = _spectral_data(g)
    return 2.0 * math.sqrt(g.n_vertices) * float(np.linalg.norm(_centered(omega))) / lambda2


def bound_contraction(g: OrientedGraph, omega) -> float:
    """(pi^2/4) N lambda_max ||Omega||_2 / lambda_2^2: the Picard map contracts above it."""
    lambda2, lambda_max, _ = _spectral_data(g)
    return (math.pi ** 2 / 4.0) * g.n_vertices * lambda_max * float(np.linalg.norm(_centered(omega))) / lambda2 ** 2


def sampled_weighted_pinv_norm(g: OrientedGraph, samples: int | None = None,
                               rng: np.random.Generator | None = None) -> float:
    """Sampled max of ||L_W(B^T theta)^#||_inf over theta uniform in (-pi/4, pi/4)^N."""
    samples = settings.INFNORM_SAMPLES if samples is None else samples
    rng = np.random.default_rng(0) if rng is None else rng
    b = g.incidence
    best = 0.0
    for _ in range(samples):
        theta = default_initial_phases(g.n_vertices, rng)
        pinv = weighted_pseudoinverse(g, b.T @ theta)
        best = max(best, float(np.max(np.abs(pinv).sum(axis=1))))
    return best


def bound_sufficient_infnorm(g: OrientedGraph, omega, samples: int | None = None,
                             rng: np.random.Generator | None = None) -> float:
    """
    (4/pi) N M ||Omega||_inf with M a sampled estimate of
    max ||L_W^#||_inf over the stability box. An estimate, not a certificate.
    """
    omega_inf = float(np.max(np.abs(_centered(omega))))
    if omega_inf == 0.0:
        return 0.0
    m_hat = sampled_weighted_pinv_norm(g, samples, rng)
    return 4.0 / math.pi * g.n_vertices * m_hat * omega_inf


def compute_bound_report(g: OrientedGraph, omega, samples: int | None = None,
                         rng: np.random.Generator | None = None) -> BoundReport:
    lambda2, lambda_max, _ = _spectral_data(g)
    report = BoundReport(
        k_necessary_maxdeg=bound_necessary_maxdeg(g, omega),
        k_necessary_pinv=bound_necessary_pinv(g, omega),
        k_tree_tight=bound_tree_tight(g, omega) if g.is_tree else None,
        k_sufficient_2norm=bound_sufficient_2norm(g, omega),
        k_sufficient_infnorm_estimate=bound_sufficient_infnorm(g, omega, samples, rng),
        k_contraction=bound_contraction(g, omega),
        lambda2=lambda2,
        lambda_max=lambda_max,
        omega_mean=float(np.mean(omega)),
    )
    contradicted = [name for name in CERTIFIED_SUFFICIENT_BOUNDS if report.below_necessary(name)]
    if contradicted:
        below = ", ".join(f"{name}={getattr(report, name):.6g}" for name in contradicted)
        logger.warning(f"Bound ordering violated on {g}: necessary={report.k_necessary:.6g} exceeds {below}")
        report = replace(report, ordering_consistent=False)
    logger.info(f"Bounds for {g}: necessary={report.k_necessary:.6g}, "
                f"sufficient={report.k_sufficient_2norm:.6g}, contraction={report.k_contraction:.6g}")
    return report


def r_infinity_bracket(at_kl: bool = True) -> tuple[float, float]:
    """
    Bracket for the asymptotic order parameter of a stable fixed point in
    (-pi/4, pi/4)^N. The upper value sqrt(3)/2 applies at K_L only.
    """
    lower = math.sqrt(16.0 - math.pi ** 2) / 4.0
    upper = math.sqrt(3.0) / 2.0 if at_kl else 1.0
    return lower, upper


def solve_fixed_point(g: OrientedGraph, omega, coupling: float, theta0_bar=None,
                      tol: float | None = None, max_iter: int | None = None) -> FixedPointResult:
    """
    Picard iteration on the grounded fixed-point equation

        x_{k+1} = (V^T B W(B^T V x_k) B^T V)^{-1} (N/K) V^T Omega,

    with W the sinc weights. Phase differences leaving (-pi, pi) are clamped
    to +-(pi - PICARD_CLAMP_MARGIN) and the run is flagged.

    Converged means the step fell below `tol` and the grounded dynamics
    residual below 10 * tol, with no clamping.
    """
    tol = settings.PICARD_TOL if tol is None else tol
    max_iter = settings.PICARD_MAX_ITER if max_iter is None else max_iter
    n = g.n_vertices
    v = grounding_projection(n)
    bv = g.incidence.T @ v.v
    omega_bar = v.v.T @ _centered(omega)
    target = (n / coupling) * omega_bar
    limit = math.pi - settings.PICARD_CLAMP_MARGIN

    def grounded_residual(x: np.ndarray) -> float:
        return float(np.linalg.norm(omega_bar - (coupling / n) * (bv.T @ np.sin(bv @ x))))

    x = np.zeros(n - 1) if theta0_bar is None else np.array(theta0_bar, dtype=float)
    clamped = False
    steps: list[float] = []
    residual = grounded_residual(x)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        phi = bv @ x
        if np.any(np.abs(phi) > limit):
            if not clamped:
                logger.warning(f"Picard iterate left (-pi, pi) at iteration {iterations} (K={coupling}); clamping")
            clamped = True
            phi = np.clip(phi, -limit, limit)
        w = sinc_values(phi)
        try:
            x_new = scipy.linalg.solve(bv.T @ (w[:, None] * bv), target, assume_a="pos")
        except (np.linalg.LinAlgError, ValueError) as e:
            logger.warning(f"Picard linear solve failed at iteration {iterations}: {e}")
            break
        if not np.all(np.isfinite(x_new)):
            break
        step = float(np.max(np.abs(x_new - x)))
        steps.append(step)
        x = x_new
        residual = grounded_residual(x)
        logger.debug(f"Picard iteration {iterations}: step={step:.3e}, residual={residual:.3e}")
        if step <= tol and residual <= 10 * tol:
            converged = not clamped
            break

    if converged:
        status = "converged"
    elif clamped or not steps or not np.all(np.isfinite(x)) or steps[-1] > steps[0]:
        status = "diverging"
    else:
        status = "oscillating"

    theta_star = v.lift(x)
    phi_star = g.incidence.T @ theta_star
    stable = False
    if converged and np.all(np.abs(phi_star) < math.pi / 2):
        jacobian = bv.T @ (np.cos(phi_star)[:, None] * bv)
        stable = bool(np.linalg.eigvalsh(jacobian).min() > 0)

    unique = coupling >= bound_contraction(g, omega)
    if not converged:
        logger.info(f"Picard solver did not converge at K={coupling}: {status} after {iterations} iterations")

    return FixedPointResult(
        theta_star=theta_star,
        phi_star=phi_star,
        residual=residual,
        iterations=iterations,
        converged=converged,
        status=status,
        clamped=clamped,
        certified_stable=stable,
        certified_unique=bool(unique),
    )


def multi_start_fixed_points(g: OrientedGraph, omega, coupling: float, starts: int,
                             rng: np.random.Generator, n_jobs: int | None = None) -> list[FixedPointResult]:
    """Picard runs from random grounded starts V^T theta0, theta0 uniform in (-pi/4, pi/4)^N."""
    v = grounding_projection(g.n_vertices)
    initial = [v.ground(default_initial_phases(g.n_vertices, rng)) for _ in range(starts)]
    n_jobs = settings.CONCURRENCY_LIMIT if n_jobs is None else n_jobs
    return Parallel(n_jobs=n_jobs)(
        delayed(solve_fixed_point)(g, omega, coupling, x0) for x0 in initial
    )


def existence_oracle(g: OrientedGraph, omega, coupling: float) -> ThresholdProbe:
    """
    Does a synchronized fixed point exist at this coupling?
    Picard convergence is taken as proof; otherwise the dynamics are simulated
    from theta = 0 and checked for synchronization.
    """
    result = solve_fixed_point(g, omega, coupling)
    if result.converged:
        return ThresholdProbe(coupling=float(coupling), exists=True, method="picard")

    lambda2, lambda_max, _ = _spectral_data(g)
    n = g.n_vertices
    t_end = min(default_t_end(coupling, n, lambda2), settings.ORACLE_T_END_MAX)
    step = default_step(coupling, n, lambda_max)
    cfg = SimulationConfig(coupling=coupling, step=step, t_end=t_end,
                           record_every=default_record_every(int(round(t_end / step))))
    trace = integrate(g, _centered(omega), cfg, np.zeros(g.n_vertices))
    verdict = detect_sync(trace)
    return ThresholdProbe(coupling=float(coupling), exists=verdict.synchronized, method="simulation")


def empirical_threshold(g: OrientedGraph, omega, k_lo: float, k_hi: float,
                        tol_k: float | None = None, n_jobs: int | None = None) -> ThresholdSearch:
    """
    Smallest coupling with a synchronized fixed point, by bisection on the
    existence oracle.

    A grid of THRESHOLD_GRID_POINTS probes over [k_lo, k_hi] is evaluated
    concurrently first; the oracle must read False...False True...True on it.
    The flip interval is then bisected down to `tol_k`.

    Raises:
        ThresholdSearchError: if the oracle holds at k_lo, fails at k_hi, or
            is not monotone on the grid. The probe table is attached.
    """
    tol_k = settings.THRESHOLD_TOL_K if tol_k is None else tol_k
    n_jobs = settings.CONCURRENCY_LIMIT if n_jobs is None else n_jobs

    if not np.any(_centered(omega)):
        logger.info("Identical frequencies: every K > 0 synchronizes")
        return ThresholdSearch(k_hat=0.0, bracket=(0.0, 0.0), probes=[])
    if not 0 < k_lo < k_hi:
        raise ThresholdSearchError(f"invalid coupling interval [{k_lo}, {k_hi}]")

    grid = np.linspace(k_lo, k_hi, max(settings.THRESHOLD_GRID_POINTS, 2))
    probes: list[ThresholdProbe] = Parallel(n_jobs=n_jobs)(
        delayed(existence_oracle)(g, omega, k) for k in grid
    )
    flags = [p.exists for p in probes]
    search = ThresholdSearch(k_hat=float("nan"), bracket=(k_lo, k_hi), probes=list(probes))

    if flags[0]:
        raise ThresholdSearchError(f"oracle already succeeds at k_lo={k_lo}", search.probe_table())
    if not flags[-1]:
        raise ThresholdSearchError(f"oracle fails at k_hi={k_hi}", search.probe_table())
    flip = flags.index(True)
    if not all(flags[flip:]):
        logger.warning(f"Existence oracle is not monotone over [{k_lo}, {k_hi}]")
        raise ThresholdSearchError("existence oracle is not monotone over the coupling grid", search.probe_table())

    lo, hi = float(grid[flip - 1]), float(grid[flip])
    while hi - lo > tol_k:
        mid = 0.5 * (lo + hi)
        probe = existence_oracle(g, omega, mid)
        probes.append(probe)
        if probe.exists:
            hi = mid
        else:
            lo = mid

    k_hat = 0.5 * (lo + hi)
    logger.info(f"Empirical threshold K={k_hat:.6g} in [{lo:.6g}, {hi:.6g}] after {len(probes)} probes")
    return ThresholdSearch(k_hat=k_hat, bracket=(lo, hi), probes=probes)
