"""
Command-line front end.

    python cli.py simulate  --graph gen:complete:3 --omega zero --k 1 --seed 0
    python cli.py bounds    --graph gen:path:3 --omega 1,0,-1
    python cli.py fixedpoint --graph gen:complete:2 --omega 1,-1 --k 4
    python cli.py threshold --graph gen:complete:2 --omega 1,-1 --k 1:4
    python cli.py spectrum  --graph edges.txt --format csv
    python cli.py sweep     --graph gen:complete:10 --omega normal:0.5 --k 0.5:3:11 --seed 7

Options can also come from a flat key=value file (`--config run.env`);
command-line flags win over file values.

Simulation traces are written in the frame rotating at the mean frequency;
`--frame lab` adds the rotation back.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from config import settings
from coupling_bounds import solve_fixed_point
from dynamics import MODELS, center_frequencies, default_initial_phases
from errors import ConfigError, ConvergenceError, NumericalError
from graph_core import laplacian
from pipeline import (bound_report_for, bound_report_table, load_graph, load_omega, omega_is_random,
                      run_sweep, run_threshold, save_trace_binary, simulate, simulation_summary,
                      write_csv, write_json)
from spectral import pseudoinverse, spectrum

logger = logging.getLogger("CLI")

COMMANDS = ("simulate", "bounds", "fixedpoint", "threshold", "spectrum", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
FRAMES = ("rotating", "lab")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: graph and frequency sources, couplings, integration and output options."""
    command: str
    graph: str
    omega: str = "zero"
    k: str | None = None
    seed: int | None = None
    out: str = settings.OUTPUT_DIR
    h: float | None = None
    t_end: float | None = None
    record_every: int | None = None
    replicates: int = 1
    tol_k: float = settings.THRESHOLD_TOL_K
    samples: int = settings.INFNORM_SAMPLES
    model: str = "full"
    format: str = "json"
    binary: bool = False
    frame: str = "rotating"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}'")
        if not self.graph:
            raise ConfigError("a graph source is required (--graph <path|gen:name:N>)")
        if omega_is_random(self.omega) and self.seed is None:
            raise ConfigError("--seed is mandatory when omega is random")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got '{self.model}'")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got '{self.format}'")
        if self.frame not in FRAMES:
            raise ConfigError(f"frame must be one of {FRAMES}, got '{self.frame}'")
        if self.h is not None and self.h <= 0:
            raise ConfigError(f"step h must be positive, got {self.h}")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError(f"record_every must be at least 1, got {self.record_every}")
        if self.replicates < 1 or self.samples < 1 or self.tol_k <= 0:
            raise ConfigError("tol_k must be positive and replicates, samples at least 1")
        if self.t_end is not None and self.t_end <= 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")

    @property
    def effective_seed(self) -> int:
        return 0 if self.seed is None else self.seed

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> ExperimentConfig:
        """Builds a config from string values (config file or argparse); empty strings mean unset."""
        kwargs: dict[str, Any] = {}
        for f in fields(cls):
            raw = values.get(f.name)
            if raw is None or raw == "":
                continue
            kwargs[f.name] = _coerce(f.name, raw)
        if "command" not in kwargs or "graph" not in kwargs:
            raise ConfigError("config needs at least 'command' and 'graph'")
        return cls(**kwargs)

    def to_lines(self) -> str:
        """Flat key=value text with every default made explicit."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={'' if value is None else _render(value)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def couplings(self) -> list[float]:
        """`val` -> [val]; `lo:hi:steps` -> evenly spaced grid."""
        if self.k is None:
            raise ConfigError(f"'{self.command}' needs --k")
        parts = self.k.split(":")
        try:
            if len(parts) == 1:
                values = [float(parts[0])]
            elif len(parts) == 3:
                values = np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
            else:
                raise ValueError
        except ValueError:
            raise ConfigError(f"--k must be <val> or <lo:hi:steps>, got '{self.k}'") from None
        if not values or min(values) <= 0:
            raise ConfigError(f"couplings must be positive, got '{self.k}'")
        return values

    def coupling_range(self) -> tuple[float, float] | None:
        """`lo:hi` (or `lo:hi:steps`) as a bracket for the threshold search."""
        if self.k is None:
            return None
        parts = self.k.split(":")
        try:
            lo, hi = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            raise ConfigError(f"threshold needs --k <lo:hi>, got '{self.k}'") from None
        if not 0 < lo < hi:
            raise ConfigError(f"threshold bracket must satisfy 0 < lo < hi, got '{self.k}'")
        return lo, hi


_INT_FIELDS = {"seed", "record_every", "replicates", "samples"}
_FLOAT_FIELDS = {"h", "t_end", "tol_k"}


def _coerce(name: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"'{name}' expects a number, got '{raw}'") from None
    if name == "binary":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict[str, str | None]:
    return dict(dotenv_values(stream=io.StringIO(text)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphsync", description="Kuramoto synchronization on graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file with default options")
        p.add_argument("--graph", help="edge-list path or gen:<complete|path|cycle|star>:<N>")
        p.add_argument("--omega", help="frequency file, inline vector a,b,..., normal:<sigma> or zero")
        p.add_argument("--k", help="coupling <val>, grid <lo:hi:steps>, or bracket <lo:hi>")
        p.add_argument("--seed", help="unsigned 64-bit seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--h", help="RK4 step")
        p.add_argument("--t-end", dest="t_end", help="integration horizon")
        p.add_argument("--record-every", dest="record_every", help="recording stride in steps")
        p.add_argument("--replicates", help="sweep replicates per coupling")
        p.add_argument("--tol-k", dest="tol_k", help="threshold bisection tolerance")
        p.add_argument("--samples", help="samples for the infinity-norm estimate")
        p.add_argument("--model", choices=MODELS, help="dynamics model for simulate")
        p.add_argument("--format", choices=("json", "csv"), help="spectrum/bounds output format")
        p.add_argument("--binary", action="store_const", const="true", help="also dump the trace with joblib")
        p.add_argument("--frame", choices=FRAMES, help="trace phases in the frame rotating at <omega> or the lab frame")
        p.add_argument("--jobs", type=int, default=None, help="worker limit for sweeps and probes")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8")))
    for key, value in vars(args).items():
        if key in ("config", "jobs") or value is None:
            continue
        values[key] = value
    return ExperimentConfig.from_mapping(values)


def _instance(cfg: ExperimentConfig):
    g = load_graph(cfg.graph)
    rng = np.random.default_rng(cfg.effective_seed)
    omega = load_omega(cfg.omega, g.n_vertices, rng)
    return g, omega, rng


def cmd_simulate(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    couplings = cfg.couplings()
    if len(couplings) != 1:
        raise ConfigError("simulate takes a single coupling value")
    coupling = couplings[0]
    g, omega, rng = _instance(cfg)
    theta0 = default_initial_phases(g.n_vertices, rng)

    trace, verdict = simulate(g, omega, coupling, theta0, cfg.h, cfg.t_end, cfg.record_every, cfg.model)
    report = bound_report_for(g, omega, cfg.samples, cfg.effective_seed)
    summary = simulation_summary(g, omega, coupling, trace, verdict, report)
    summary.update({"frame": cfg.frame, "seed": cfg.effective_seed, "config": cfg.to_dict()})

    out = Path(cfg.out)
    write_csv(trace.to_frame(lab_frame=cfg.frame == "lab"), out / "trace.csv")
    write_json(summary, out / "summary.json")
    if cfg.binary:
        save_trace_binary(trace, out / "trace.joblib")
    print(json.dumps({"synchronized": verdict.synchronized, "r_final": summary["r_final"]}))
    return EXIT_OK


def cmd_bounds(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    g, omega, _ = _instance(cfg)
    report = bound_report_for(g, omega, cfg.samples, cfg.effective_seed)
    table = bound_report_table(report)
    out = Path(cfg.out)
    write_json({"bounds": report.to_dict(), "classification": report.classification(),
                "seed": cfg.effective_seed, "config": cfg.to_dict()}, out / "bounds.json")
    if cfg.format == "csv":
        write_csv(table, out / "bounds.csv")
    print(table.to_string(index=False, float_format=lambda x: f"{x:.10g}"))
    return EXIT_OK


def cmd_fixedpoint(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    couplings = cfg.couplings()
    if len(couplings) != 1:
        raise ConfigError("fixedpoint takes a single coupling value")
    g, omega, _ = _instance(cfg)
    Omega, mean = center_frequencies(omega)
    result = solve_fixed_point(g, np.asarray(Omega), couplings[0])
    payload = {**result.to_dict(), "coupling": couplings[0], "omega_mean": mean,
               "seed": cfg.effective_seed, "config": cfg.to_dict()}
    write_json(payload, Path(cfg.out) / "fixedpoint.json")
    print(json.dumps({"converged": result.converged, "status": result.status,
                      "certified_stable": result.certified_stable, "certified_unique": result.certified_unique}))
    if not result.converged:
        raise ConvergenceError(f"no fixed point found at K={couplings[0]}: {result.status}")
    return EXIT_OK


def cmd_threshold(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    g, omega, _ = _instance(cfg)
    search = run_threshold(g, omega, cfg.coupling_range(), tol_k=cfg.tol_k, n_jobs=n_jobs)
    out = Path(cfg.out)
    write_csv(search.probe_table(), out / "probes.csv")
    write_json({"k_hat": search.k_hat, "bracket": list(search.bracket), "probes": len(search.probes),
                "omega_mean": float(np.mean(omega)), "seed": cfg.effective_seed, "config": cfg.to_dict()},
               out / "threshold.json")
    print(json.dumps({"k_hat": search.k_hat}))
    return EXIT_OK


def cmd_spectrum(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    g = load_graph(cfg.graph)
    lap = laplacian(g)
    spec = spectrum(lap)
    pinv_norm = float(np.max(np.abs(pseudoinverse(lap)).sum(axis=1)))
    out = Path(cfg.out)
    if cfg.format == "csv":
        df = pd.DataFrame({"index": np.arange(len(spec.eigenvalues)), "eigenvalue": spec.eigenvalues})
        write_csv(df, out / "spectrum.csv")
        write_csv(pd.DataFrame([{"lambda2": spec.lambda2, "lambda_max": spec.lambda_max,
                                 "pinv_inf_norm": pinv_norm}]), out / "spectrum_summary.csv")
    payload = {"eigenvalues": spec.eigenvalues.tolist(), "lambda2": spec.lambda2,
               "lambda_max": spec.lambda_max, "pinv_inf_norm": pinv_norm}
    write_json(payload, out / "spectrum.json")
    print(json.dumps(payload))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, n_jobs: int | None = None) -> int:
    g = load_graph(cfg.graph)
    df = run_sweep(g, cfg.omega, cfg.couplings(), cfg.effective_seed, cfg.replicates,
                   cfg.h, cfg.t_end, cfg.record_every, n_jobs=n_jobs)
    write_csv(df, Path(cfg.out) / "sweep.csv")
    print(json.dumps({"rows": len(df), "synchronized": int(df["synchronized"].sum())}))
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "fixedpoint": cmd_fixedpoint,
    "threshold": cmd_threshold,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return HANDLERS[cfg.command](cfg, n_jobs=args.jobs)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
