"""Laplacian spectra, the Laplacian pseudoinverse and the grounding basis V."""
from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from config import settings
from errors import SpectralError
from graph_core import OrientedGraph, sinc_weights, weighted_laplacian
from models import GroundingProjection, LaplacianSpectrum

logger = logging.getLogger("Spectral")


def _check_symmetric(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {mat.shape}")
    scale = max(1.0, float(np.abs(mat).max(initial=0.0)))
    if not np.allclose(mat, mat.T, rtol=0.0, atol=settings.SYMMETRY_TOL * scale):
        raise SpectralError("matrix is not symmetric")
    return mat


def spectrum(lap: np.ndarray) -> LaplacianSpectrum:
    """
    Full ascending spectrum of a symmetric PSD Laplacian.
    Eigenvalues below EIGEN_RTOL * lambda_max count as zero when deciding
    connectivity.
    """
    lap = _check_symmetric(lap)
    eigenvalues, eigenvectors = scipy.linalg.eigh(lap)
    lambda_max = float(eigenvalues[-1])
    lambda2 = float(eigenvalues[1]) if len(eigenvalues) > 1 else 0.0
    n_zero = int(np.sum(eigenvalues <= settings.EIGEN_RTOL * max(lambda_max, 1.0)))
    return LaplacianSpectrum(
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        lambda2=lambda2,
        lambda_max=lambda_max,
        is_connected=n_zero == 1,
    )


def pseudoinverse(lap: np.ndarray) -> np.ndarray:
    """
    Moore-Penrose pseudoinverse of a connected-graph Laplacian via its
    eigendecomposition: L^# = sum over nonzero eigenpairs of v v^T / lambda.

    Raises:
        SpectralError: if the kernel is not exactly span{1} (disconnected graph).
    """
    spec = spectrum(lap)
    tol = settings.EIGEN_RTOL * max(spec.lambda_max, 1.0)
    keep = spec.eigenvalues > tol
    n_zero = int(np.sum(~keep))
    if n_zero != 1:
        raise SpectralError(f"Laplacian kernel has dimension {n_zero}; graph must be connected")
    vecs = spec.eigenvectors[:, keep]
    pinv = (vecs / spec.eigenvalues[keep]) @ vecs.T
    return 0.5 * (pinv + pinv.T)


def grounding_projection(n: int) -> GroundingProjection:
    """
    Orthonormal basis of the complement of span{1_N}, from the Householder
    reflector H that swaps 1_N/sqrt(N) and e_1: V = H[:, 1:].
    """
    if n < 2:
        raise ValueError(f"grounding needs n >= 2, got {n}")
    u = np.full(n, 1.0 / np.sqrt(n))
    u[0] -= 1.0
    h = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    return GroundingProjection(h[:, 1:].copy())


def weighted_pseudoinverse(g: OrientedGraph, phi) -> np.ndarray:
    """L_W(phi)^# with sinc edge weights."""
    return pseudoinverse(weighted_laplacian(g, sinc_weights(phi)))


def fiedler_rate_bound(g: OrientedGraph, coupling: float, lambda2: float) -> float:
    """Worst-case convergence rate (2K / (pi N)) lambda_2 for identical frequencies."""
    return 2.0 * coupling * lambda2 / (np.pi * g.n_vertices)
