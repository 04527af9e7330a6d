"""
Experiment orchestration: input loading, simulation runs, sweeps, threshold
searches, and CSV / JSON / joblib emission.
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Sequence

import joblib
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import settings
from coupling_bounds import (bound_contraction, bound_necessary_maxdeg, bound_necessary_pinv,
                             bound_sufficient_2norm, bound_tree_tight, compute_bound_report,
                             empirical_threshold)
from dynamics import (center_frequencies, default_initial_phases, default_record_every, default_step,
                      default_t_end, integrate)
from errors import ConfigError
from graph_core import OrientedGraph, generate_graph, laplacian, read_edge_list
from models import BoundReport, SimulationConfig, SimulationTrace, SyncVerdict, ThresholdSearch
from observables import (asymptotic_r_bound, attach_observables, detect_sync, order_parameter_classic,
                         order_parameter_general)
from spectral import fiedler_rate_bound, spectrum

logger = logging.getLogger("Pipeline")


def load_graph(source: str) -> OrientedGraph:
    """`gen:<name>:<N>` for a named generator, anything else is an edge-list path."""
    if source.startswith("gen:"):
        parts = source.split(":")
        if len(parts) != 3:
            raise ConfigError(f"graph generator must look like gen:<name>:<N>, got '{source}'")
        try:
            n = int(parts[2])
        except ValueError:
            raise ConfigError(f"graph size must be an integer, got '{parts[2]}'") from None
        return generate_graph(parts[1], n)
    return read_edge_list(source)


def omega_is_random(source: str) -> bool:
    return source.startswith("normal:")


def load_omega(source: str, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """
    Natural frequencies from `zero`, `normal:<sigma>` (seeded), an inline
    comma-separated vector, or a file of numbers.
    """
    source = source.strip()
    if source == "zero":
        return np.zeros(n)

    if omega_is_random(source):
        if rng is None:
            raise ConfigError("random frequencies need a seeded generator")
        try:
            sigma = float(source.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad sigma in '{source}'") from None
        if sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {sigma}")
        return rng.normal(0.0, sigma, size=n)

    try:
        values = np.array([float(x) for x in source.split(",") if x.strip()])
    except ValueError:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"omega source '{source}' is neither a vector nor an existing file") from None
        values = np.loadtxt(path, comments="#", delimiter=None, ndmin=1).reshape(-1)

    if values.shape != (n,):
        raise ConfigError(f"omega has {values.size} entries, graph has {n} vertices")
    return values


def simulate(g: OrientedGraph, omega, coupling: float, theta0, step: float | None = None,
             t_end: float | None = None, record_every: int | None = None,
             model: str = "full") -> tuple[SimulationTrace, SyncVerdict]:
    """Integrates in the frame rotating at <omega>, attaches observables and judges synchronization."""
    if not coupling > 0:
        raise ConfigError(f"coupling K must be positive, got {coupling}")
    Omega, mean = center_frequencies(omega)
    spec = spectrum(laplacian(g))
    if t_end is None:
        t_end = default_t_end(coupling, g.n_vertices, spec.lambda2)
    if step is None:
        step = default_step(coupling, g.n_vertices, spec.lambda_max)
    if record_every is None:
        record_every = default_record_every(int(round(t_end / step)))
    cfg = SimulationConfig(coupling=coupling, step=step, t_end=t_end, record_every=record_every)
    trace = attach_observables(integrate(g, np.asarray(Omega), cfg, theta0, model=model))
    trace.omega_mean = mean
    return trace, detect_sync(trace)


def simulation_summary(g: OrientedGraph, omega, coupling: float, trace: SimulationTrace,
                       verdict: SyncVerdict, report: BoundReport | None = None) -> dict[str, Any]:
    final = trace.phases[-1]
    R, psi = order_parameter_classic(final)
    spec = spectrum(laplacian(g))
    lambdas = (spec.lambda2, spec.lambda_max)
    summary = {
        "n_vertices": g.n_vertices,
        "n_edges": g.n_edges,
        "coupling": coupling,
        "omega_mean": float(np.mean(omega)),
        "t_end": float(trace.times[-1]),
        "samples": len(trace),
        "frame": "rotating",
        "synchronized": verdict.synchronized,
        "verdict": verdict.to_dict(),
        "r_final": math.sqrt(max(order_parameter_general(g, final), 0.0)),
        "R_final": R,
        "psi_final": psi,
        "rate_bound": fiedler_rate_bound(g, coupling, spec.lambda2),
        "r_bound_lambda2": asymptotic_r_bound(g, omega, coupling, lambdas=lambdas),
        "r_bound_lambda_max": asymptotic_r_bound(g, omega, coupling, use_lambda_max=True, lambdas=lambdas),
    }
    if report is not None:
        summary["bounds"] = report.to_dict()
        summary["bounds_consistent"] = report.ordering_consistent
        # a 2-norm bound contradicted by a necessary bound certifies nothing
        summary["above_sufficient_2norm"] = bool(coupling >= report.k_sufficient_2norm
                                                  and not report.below_necessary("k_sufficient_2norm"))
        summary["below_necessary"] = bool(coupling < report.k_necessary)
    return summary


def _instance_bounds(g: OrientedGraph, omega: np.ndarray) -> dict[str, float | None]:
    return {
        "k_necessary_maxdeg": bound_necessary_maxdeg(g, omega),
        "k_necessary_pinv": bound_necessary_pinv(g, omega),
        "k_tree_tight": bound_tree_tight(g, omega) if g.is_tree else None,
        "k_sufficient_2norm": bound_sufficient_2norm(g, omega),
        "k_contraction": bound_contraction(g, omega),
    }


def _sweep_row(g: OrientedGraph, omega: np.ndarray, theta0: np.ndarray, coupling: float,
               seed: int, replicate: int, step: float | None, t_end: float | None,
               record_every: int | None, lambdas: tuple[float, float],
               bounds: dict[str, float | None]) -> dict[str, Any]:
    trace, verdict = simulate(g, omega, coupling, theta0, step, t_end, record_every)
    final = trace.phases[-1]
    row = {
        "K": coupling,
        "seed": seed,
        "replicate": replicate,
        "r_final": math.sqrt(max(order_parameter_general(g, final), 0.0)),
        "R_final": order_parameter_classic(final)[0],
        "synchronized": verdict.synchronized,
        "residual": verdict.residual,
        "rate_estimate": verdict.rate_estimate,
        "rate_bound": fiedler_rate_bound(g, coupling, lambdas[0]),
        "r_bound_lambda2": asymptotic_r_bound(g, omega, coupling, lambdas=lambdas),
        "r_bound_lambda_max": asymptotic_r_bound(g, omega, coupling, use_lambda_max=True, lambdas=lambdas),
    }
    row.update(bounds)
    return row


def run_sweep(g: OrientedGraph, omega_source: str, couplings: Sequence[float], seed: int,
              replicates: int = 1, step: float | None = None, t_end: float | None = None,
              record_every: int | None = None, n_jobs: int | None = None) -> pd.DataFrame:
    """
    One row per (K, replicate). Replicate r draws its frequencies and initial
    phases from default_rng([seed, r]), so each replicate sees the same
    instance at every K. Rows come back sorted by (K, replicate).
    """
    spec = spectrum(laplacian(g))
    lambdas = (spec.lambda2, spec.lambda_max)
    n_jobs = settings.CONCURRENCY_LIMIT if n_jobs is None else n_jobs

    instances = []
    for r in range(replicates):
        rng = np.random.default_rng([seed, r])
        omega = load_omega(omega_source, g.n_vertices, rng)
        theta0 = default_initial_phases(g.n_vertices, rng)
        instances.append((r, omega, theta0, _instance_bounds(g, omega)))

    logger.info(f"Sweeping {len(couplings)} couplings x {replicates} replicates on {g} with n_jobs={n_jobs}")
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_row)(g, omega, theta0, float(k), seed, r, step, t_end, record_every, lambdas, bounds)
        for k in couplings
        for r, omega, theta0, bounds in instances
    )
    df = pd.DataFrame(rows)
    return df.sort_values(["K", "replicate"], kind="stable").reset_index(drop=True)


def default_threshold_bracket(g: OrientedGraph, omega) -> tuple[float, float]:
    """[0.5 * max necessary bound, 1.01 * contraction bound]."""
    lo = 0.5 * max(bound_necessary_maxdeg(g, omega), bound_necessary_pinv(g, omega))
    hi = 1.01 * bound_contraction(g, omega)
    return lo, hi


def run_threshold(g: OrientedGraph, omega, k_range: tuple[float, float] | None = None,
                  tol_k: float | None = None, n_jobs: int | None = None) -> ThresholdSearch:
    Omega, _ = center_frequencies(omega)
    k_lo, k_hi = k_range if k_range is not None else default_threshold_bracket(g, Omega)
    return empirical_threshold(g, np.asarray(Omega), k_lo, k_hi, tol_k=tol_k, n_jobs=n_jobs)


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def write_json(payload: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def save_trace_binary(trace: SimulationTrace, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump(trace, path)
    return path


def load_trace_binary(path: str | Path) -> SimulationTrace:
    return joblib.load(path)


def bound_report_table(report: BoundReport) -> pd.DataFrame:
    kinds = report.classification()
    rows = [{"bound": name, "value": value, "kind": kinds.get(name, "")}
            for name, value in report.to_dict().items() if value is not None and name != "ordering_consistent"]
    return pd.DataFrame(rows, columns=["bound", "value", "kind"])


def bound_report_for(g: OrientedGraph, omega, samples: int | None, seed: int) -> BoundReport:
    Omega, mean = center_frequencies(omega)
    report = compute_bound_report(g, np.asarray(Omega), samples=samples, rng=np.random.default_rng(seed))
    # omega_mean refers to the raw, uncentered input
    return BoundReport(**{**report.to_dict(), "omega_mean": mean})
