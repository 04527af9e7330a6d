"""
Right-hand sides of the graph Kuramoto model and a fixed-step RK4 integrator.

    full:        theta' = omega - (K/N) B sin(B^T theta)
    grounded:    x' = V^T omega - (K/N) V^T B sin(B^T V x),  x = V^T theta
    linearized:  theta' = omega - (K/N) L theta
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from config import settings
from errors import IntegrationError
from graph_core import OrientedGraph, laplacian
from models import FrequencyVector, GroundingProjection, PhaseState, SimulationConfig, SimulationTrace
from spectral import grounding_projection

logger = logging.getLogger("Dynamics")

MODELS = ("full", "grounded", "linearized")


def _vector(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name}: expected shape ({n},), got {arr.shape}")
    return arr


def rhs_full(g: OrientedGraph, omega, coupling: float, theta) -> np.ndarray:
    n = g.n_vertices
    omega = _vector(omega, n, "omega")
    theta = _vector(theta, n, "theta")
    b = g.incidence
    return omega - (coupling / n) * (b @ np.sin(b.T @ theta))


def center_frequencies(omega) -> tuple[FrequencyVector, float]:
    """Returns (Omega, <omega>) with Omega = omega - <omega> 1."""
    omega = np.asarray(omega, dtype=float)
    mean = float(np.mean(omega))
    return FrequencyVector(omega - mean), mean


def rhs_grounded(g: OrientedGraph, omega, coupling: float, theta_bar, v: GroundingProjection) -> np.ndarray:
    n = g.n_vertices
    if v.n != n:
        raise ValueError(f"grounding basis is for N={v.n}, graph has N={n}")
    omega = _vector(omega, n, "omega")
    theta_bar = _vector(theta_bar, n - 1, "theta_bar")
    bv = g.incidence.T @ v.v
    return v.v.T @ omega - (coupling / n) * (bv.T @ np.sin(bv @ theta_bar))


def rhs_linearized(g: OrientedGraph, omega, coupling: float, theta) -> np.ndarray:
    """Small-angle (consensus / continuous-time Vicsek) model."""
    n = g.n_vertices
    omega = _vector(omega, n, "omega")
    theta = _vector(theta, n, "theta")
    return omega - (coupling / n) * (laplacian(g) @ theta)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _vector_field(g: OrientedGraph, omega: np.ndarray, coupling: float, model: str,
                  v: GroundingProjection | None) -> Callable[[np.ndarray], np.ndarray]:
    n = g.n_vertices
    gain = coupling / n
    b = np.array(g.incidence)
    if model == "full":
        bt = b.T.copy()
        return lambda x: omega - gain * (b @ np.sin(bt @ x))
    if model == "grounded":
        bv = b.T @ v.v
        vbt = bv.T.copy()
        omega_bar = v.v.T @ omega
        return lambda x: omega_bar - gain * (vbt @ np.sin(bv @ x))
    if model == "linearized":
        lap = laplacian(g)
        return lambda x: omega - gain * (lap @ x)
    raise ValueError(f"unknown model '{model}', expected one of {MODELS}")


def integrate(g: OrientedGraph, omega, cfg: SimulationConfig, theta0,
              grounded: bool = False, model: str | None = None) -> SimulationTrace:
    """
    Integrates the chosen model with fixed-step RK4.

    Args:
        g: connected oriented graph.
        omega: natural frequencies (N-vector).
        cfg: coupling, step, horizon and recording stride.
        theta0: initial phases (array or PhaseState; a PhaseState supplies the start time).
        grounded: integrate the (N-1)-dimensional grounded system instead of the full one.
        model: explicit model name ("full", "grounded", "linearized"); overrides `grounded`.

    Returns:
        SimulationTrace sampled every `record_every` steps plus the final step.
        Grounded runs are lifted back with V, so stored phases are mean-zero.

    Raises:
        IntegrationError: if the state becomes non-finite.
    """
    model = model or ("grounded" if grounded else "full")
    n = g.n_vertices
    omega = _vector(omega, n, "omega")
    t0 = float(theta0.time) if isinstance(theta0, PhaseState) else 0.0
    theta0 = _vector(theta0, n, "theta0")

    v = grounding_projection(n) if model == "grounded" else None
    f = _vector_field(g, omega, cfg.coupling, model, v)
    x = v.ground(theta0) if v is not None else theta0.copy()

    h = cfg.step
    n_steps = cfg.n_steps
    stride = int(cfg.record_every)
    logger.info(f"Integrating {model} model: N={n}, K={cfg.coupling}, h={h}, steps={n_steps}")

    times = [t0]
    samples = [x.copy()]
    for k in range(1, n_steps + 1):
        x = rk4_step(f, x, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"state became non-finite at step {k} (t={t0 + k * h:.6g})")
        if k % stride == 0 or k == n_steps:
            times.append(t0 + k * h)
            samples.append(x.copy())

    phases = np.vstack(samples)
    if v is not None:
        phases = phases @ v.v.T

    logger.debug(f"Integration finished at t={times[-1]:.6g} with {len(times)} samples")
    return SimulationTrace(
        times=np.asarray(times),
        phases=phases,
        graph=g,
        omega=omega,
        coupling=cfg.coupling,
        model=model,
    )


def default_initial_phases(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from (-pi/4, pi/4)^N."""
    return rng.uniform(-np.pi / 4, np.pi / 4, size=n)


def default_t_end(coupling: float, n: int, lambda2: float) -> float:
    """Several slow time constants N / (K lambda_2) of the synchronization rate."""
    return settings.T_END_TIME_CONSTANTS / coupling * n / lambda2


def default_step(coupling: float, n: int, lambda_max: float) -> float:
    """DEFAULT_STEP, capped so that h (K/N) lambda_max <= 1."""
    return min(settings.DEFAULT_STEP, n / (coupling * lambda_max))


def default_record_every(n_steps: int) -> int:
    # at least ~100 samples so the sync tail is long enough
    return max(1, min(settings.RECORD_EVERY, n_steps // 100))
