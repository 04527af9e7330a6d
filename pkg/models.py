from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from errors import ConfigError

if TYPE_CHECKING:
    from graph_core import OrientedGraph


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain finite values only")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PhaseDifferences:
    """Edge phase differences phi = B^T theta, one entry per edge (radians)."""
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phi", _frozen_array(self.phi, "phi"))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.phi, dtype=dtype)

    def __len__(self) -> int:
        return len(self.phi)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Strictly positive edge weights."""
    weights: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.weights, "weights")
        if np.any(arr <= 0):
            raise ValueError("edge weights must be strictly positive")
        object.__setattr__(self, "weights", arr)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.weights, dtype=dtype)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """
    Oscillator phases at a given model time.
    Phases are kept unwrapped; `wrapped()` gives the torus representative.
    """
    theta: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta, "theta"))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.theta, dtype=dtype)

    def __len__(self) -> int:
        return len(self.theta)

    def wrapped(self) -> PhaseState:
        # maps into (-pi, pi]
        wrapped = -np.mod(-self.theta + np.pi, 2 * np.pi) + np.pi
        return PhaseState(wrapped, self.time)


@dataclass(frozen=True, eq=False)
class FrequencyVector:
    """Natural frequencies in rad/s."""
    omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", _frozen_array(self.omega, "omega"))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.omega, dtype=dtype)

    def __len__(self) -> int:
        return len(self.omega)

    @property
    def mean(self) -> float:
        return float(np.mean(self.omega))

    @property
    def is_centered(self) -> bool:
        return abs(self.mean) <= 1e-12


@dataclass(frozen=True)
class SimulationConfig:
    coupling: float
    step: float
    t_end: float
    record_every: int = 1

    def __post_init__(self):
        if not (self.coupling > 0 and math.isfinite(self.coupling)):
            raise ConfigError(f"coupling K must be positive, got {self.coupling}")
        if not self.step > 0:
            raise ConfigError(f"step h must be positive, got {self.step}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.step > self.t_end:
            raise ConfigError(f"step h={self.step} exceeds t_end={self.t_end}")
        if int(self.record_every) < 1:
            raise ConfigError(f"record_every must be a positive integer, got {self.record_every}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.step)))


@dataclass
class SimulationTrace:
    """
    Time-indexed phases of one integration run.
    `phases` has one row per recorded sample; grounded runs are stored lifted
    back to mean-zero phases. Runs integrated with centered frequencies live
    in the frame rotating at `omega_mean`; `lab_frame_phases` undoes that.
    """
    times: np.ndarray
    phases: np.ndarray
    graph: OrientedGraph
    omega: np.ndarray
    coupling: float
    model: str = "full"
    observables: pd.DataFrame | None = None
    omega_mean: float = 0.0

    def __post_init__(self):
        if len(self.times) != len(self.phases):
            raise ValueError(f"times ({len(self.times)}) and phases ({len(self.phases)}) differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def states(self) -> list[PhaseState]:
        return [PhaseState(theta, float(t)) for t, theta in zip(self.times, self.phases)]

    @property
    def final_state(self) -> PhaseState:
        return PhaseState(self.phases[-1], float(self.times[-1]))

    def _frame_offset(self) -> np.ndarray:
        return self.omega_mean * (self.times - self.times[0])

    def lab_frame_phases(self) -> np.ndarray:
        """theta_omega(t) = theta_Omega(t) + <omega> (t - t0)."""
        return self.phases + self._frame_offset()[:, None]

    def to_frame(self, lab_frame: bool = False) -> pd.DataFrame:
        """
        Trace as a table: t, theta_0..theta_{N-1}, then any observable columns.
        With `lab_frame` the phases and psi are rotated back by <omega> (t - t0);
        the other observables only depend on phase differences.
        """
        n = self.phases.shape[1]
        phases = self.lab_frame_phases() if lab_frame else self.phases
        df = pd.DataFrame(phases, columns=[f"theta_{i}" for i in range(n)])
        df.insert(0, "t", self.times)
        if self.observables is not None:
            obs = self.observables.reset_index(drop=True)
            if lab_frame and "psi" in obs:
                obs = obs.copy()
                shifted = np.angle(np.exp(1j * (obs["psi"].to_numpy() + self._frame_offset())))
                shifted = np.where(shifted <= -np.pi, np.pi, shifted)
                obs["psi"] = np.where(obs["R"].to_numpy() > 1e-12, shifted, 0.0)
            df = pd.concat([df, obs], axis=1)
        return df


@dataclass(frozen=True, eq=False)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lambda2: float
    lambda_max: float
    is_connected: bool


@dataclass(frozen=True, eq=False)
class GroundingProjection:
    """Orthonormal basis V of the complement of span{1}: V^T V = I, V V^T = I - 11^T/N."""
    v: np.ndarray

    def __post_init__(self):
        if self.v.ndim != 2 or self.v.shape[1] != self.v.shape[0] - 1:
            raise ValueError(f"grounding basis must be N x (N-1), got {self.v.shape}")

    @property
    def n(self) -> int:
        return self.v.shape[0]

    def ground(self, theta) -> np.ndarray:
        return self.v.T @ np.asarray(theta, dtype=float)

    def lift(self, theta_bar) -> np.ndarray:
        return self.v @ np.asarray(theta_bar, dtype=float)


@dataclass(frozen=True)
class OrderParameterSample:
    R: float
    psi: float
    r_general: float
    degenerate: bool = False


@dataclass(frozen=True)
class SyncVerdict:
    synchronized: bool
    residual: float
    rate_estimate: float | None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


SUFFICIENT_BOUNDS = ("k_sufficient_2norm", "k_sufficient_infnorm_estimate", "k_contraction")
# certified bounds that must dominate every necessary bound
CERTIFIED_SUFFICIENT_BOUNDS = ("k_sufficient_2norm", "k_contraction")
ORDERING_RTOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    """All critical-coupling bounds for one (graph, omega) instance."""
    k_necessary_maxdeg: float
    k_necessary_pinv: float
    k_tree_tight: float | None
    k_sufficient_2norm: float
    k_sufficient_infnorm_estimate: float
    k_contraction: float
    lambda2: float
    lambda_max: float
    omega_mean: float = 0.0
    ordering_consistent: bool = True

    @property
    def is_tree(self) -> bool:
        return self.k_tree_tight is not None

    @property
    def k_necessary(self) -> float:
        return max(self.k_necessary_maxdeg, self.k_necessary_pinv)

    def below_necessary(self, name: str) -> bool:
        """True when the named sufficient bound sits below the largest necessary bound."""
        return getattr(self, name) < self.k_necessary * (1.0 - ORDERING_RTOL)

    def classification(self) -> dict[str, str]:
        """
        Kind of every bound. A sufficient bound that falls below a necessary
        one is contradicted on this instance and reported as such.
        """
        kinds = {
            "k_necessary_maxdeg": "necessary",
            "k_necessary_pinv": "necessary",
            "k_sufficient_2norm": "sufficient",
            "k_sufficient_infnorm_estimate": "sufficient (sampled estimate)",
            "k_contraction": "sufficient (unique)",
        }
        for name in SUFFICIENT_BOUNDS:
            if self.below_necessary(name):
                kinds[name] = "inconsistent (below necessary bound)"
        if self.is_tree:
            kinds["k_tree_tight"] = "necessary and sufficient"
        return kinds

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    theta_star: np.ndarray
    phi_star: np.ndarray
    residual: float
    iterations: int
    converged: bool
    status: str
    clamped: bool
    certified_stable: bool
    certified_unique: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta_star": self.theta_star.tolist(),
            "phi_star": self.phi_star.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "clamped": self.clamped,
            "certified_stable": self.certified_stable,
            "certified_unique": self.certified_unique,
        }


@dataclass(frozen=True)
class ThresholdProbe:
    coupling: float
    exists: bool
    method: str


@dataclass(frozen=True)
class ThresholdSearch:
    k_hat: float
    bracket: tuple[float, float]
    probes: list[ThresholdProbe] = field(default_factory=list)

    def probe_table(self) -> pd.DataFrame:
        df = pd.DataFrame([asdict(p) for p in self.probes], columns=["coupling", "exists", "method"])
        return df.sort_values("coupling", kind="stable").reset_index(drop=True)
