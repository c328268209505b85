"""Dense symmetric eigen-decomposition, matrix norms and Gauss-Hermite rules.

Matrices are plain float64 ``numpy`` arrays in row-major order. Everything in
this module is a pure function over immutable inputs; nothing here keeps
state, so all of it is safe to call concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Spectrum",
    "QuadratureRule",
    "sym_eig",
    "gauss_hermite",
    "matrix_norms",
    "symmetrize",
]

# Relative off-diagonal asymmetry beyond which input is suspect / rejected.
ASYM_WARN = 1e-6
ASYM_ERROR = 1e-3


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric matrix, sorted descending."""

    eigenvalues: np.ndarray
    trace: float
    source_label: str = ""

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "eigenvalues", ev)
        if ev.ndim != 1:
            raise ValueError("eigenvalues must be a 1-d array")
        if np.any(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be sorted in descending order")

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.n else 0.0


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights for the physicists' weight exp(-z^2).

    The raw weights sum to sqrt(pi); divide by sqrt(pi) (or substitute
    z = x/sqrt(2)) to integrate against a standard normal density.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int = field(default=0)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.size != weights.size:
            raise ValueError("node and weight counts differ")
        if self.order == 0:
            object.__setattr__(self, "order", nodes.size)

    def gaussian_expectation(self, f) -> float:
        """E[f(Z)] for Z ~ N(0, 1)."""
        z = np.sqrt(2.0) * self.nodes
        return float(self.weights @ f(z)) / np.sqrt(np.pi)


def _check_finite(m: np.ndarray) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose, policing asymmetry.

    Relative asymmetry above 1e-6 triggers a warning, above 1e-3 an error;
    kernels assembled in this package are symmetric to round-off, so larger
    skew means the caller passed the wrong matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    _check_finite(m)
    scale = np.max(np.abs(m))
    if scale > 0:
        asym = np.max(np.abs(m - m.T)) / scale
        if asym > ASYM_ERROR:
            raise ValueError(f"matrix asymmetry {asym:.3e} exceeds {ASYM_ERROR:.0e}")
        if asym > ASYM_WARN:
            warnings.warn(
                f"matrix asymmetry {asym:.3e} exceeds {ASYM_WARN:.0e}; symmetrizing",
                RuntimeWarning,
                stacklevel=2,
            )
    return 0.5 * (m + m.T)


def sym_eig(m: np.ndarray, label: str = "") -> tuple[Spectrum, np.ndarray]:
    """Eigen-decompose a symmetric matrix.

    Returns ``(spectrum, Q)`` with eigenvalues descending and the columns of
    ``Q`` holding the matching orthonormal eigenvectors, so that
    ``Q @ diag(eigenvalues) @ Q.T`` reconstructs the symmetrized input.
    """
    s = symmetrize(m)
    eigvals, eigvecs = np.linalg.eigh(s)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    return Spectrum(eigvals, float(np.trace(s)), label), eigvecs


def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule of the given order (>= 1).

    Exact for polynomials of degree <= 2*order - 1 against exp(-z^2).
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return QuadratureRule(nodes, weights, order)


def matrix_norms(m: np.ndarray) -> tuple[float, float]:
    """Frobenius norm and spectral 2-norm of a (near-)symmetric matrix.

    The 2-norm is the largest eigenvalue magnitude of the symmetrized
    matrix, which equals the true operator norm for symmetric input.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    _check_finite(m)
    fro = float(np.linalg.norm(m))
    if fro == 0.0:
        return 0.0, 0.0
    eigvals = np.linalg.eigvalsh(0.5 * (m + m.T))
    return fro, float(np.max(np.abs(eigvals)))
