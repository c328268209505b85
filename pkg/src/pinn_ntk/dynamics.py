"""Fixed-kernel (linearized) training dynamics and kernel regression.

Under gradient flow on the unweighted square losses, the stacked model
outputs at the training points obey a linear ODE driven by the kernel; with
the kernel frozen at its initial value the solution is available in closed
form through the eigendecomposition, so each eigenmode of the error relaxes
as exp(-lambda_i t). These tools predict that trajectory and expose per-mode
rates for comparison against real gradient-descent runs (discrete steps map
to t = learning_rate * step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Spectrum, sym_eig
from .ntk import NtkMatrix

__all__ = [
    "LinearizedState",
    "evolve",
    "mode_decay",
    "average_rate",
    "kernel_regression_predict",
]

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class LinearizedState:
    """Eigensystem of a frozen kernel plus targets and initial outputs."""

    spectrum: Spectrum
    eigenvectors: np.ndarray
    targets: np.ndarray
    initial_outputs: np.ndarray

    def __post_init__(self):
        n = self.spectrum.n
        if self.eigenvectors.shape != (n, n):
            raise ValueError("eigenvector matrix shape mismatch")
        if self.targets.shape != (n,) or self.initial_outputs.shape != (n,):
            raise ValueError("targets/initial outputs must match the kernel size")


def linearized_state(
    kernel, targets: np.ndarray, initial_outputs: np.ndarray | None = None
) -> LinearizedState:
    """Build the frozen-kernel state from a kernel matrix (or NtkMatrix)."""
    mat = kernel.assembled if isinstance(kernel, NtkMatrix) else np.asarray(kernel)
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if initial_outputs is None:
        initial_outputs = np.zeros_like(targets)
    else:
        initial_outputs = np.asarray(initial_outputs, dtype=np.float64).ravel()
    spectrum, q = sym_eig(mat, label="linearized")
    return LinearizedState(spectrum, q, targets, initial_outputs)


def evolve(state: LinearizedState, t: float) -> np.ndarray:
    """Stacked outputs at continuous time t >= 0.

    targets + Q exp(-Lambda t) Q^T (initial - targets), the exact solution
    of the constant-kernel flow.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    gap = state.initial_outputs - state.targets
    coeffs = state.eigenvectors.T @ gap
    decayed = np.exp(-state.spectrum.eigenvalues * t) * coeffs
    return state.targets + state.eigenvectors @ decayed


def mode_decay(state: LinearizedState) -> np.ndarray:
    """Rows of (eigenvalue, |projected target|, per-unit-time decay factor)."""
    projected = np.abs(state.eigenvectors.T @ state.targets)
    rates = np.exp(-state.spectrum.eigenvalues)
    return np.stack([state.spectrum.eigenvalues, projected, rates], axis=1)


def average_rate(spectrum: Spectrum) -> float:
    """Mean eigenvalue: trace / n."""
    if spectrum.n == 0:
        raise ValueError("empty spectrum has no average rate")
    return spectrum.trace / spectrum.n


def kernel_regression_predict(
    k_train: np.ndarray,
    k_test: np.ndarray,
    targets: np.ndarray,
    ridge: float = 0.0,
) -> np.ndarray:
    """K_test (K_train + ridge I)^-1 targets via the eigendecomposition.

    With ridge = 0 the inverse is a pseudo-inverse that drops eigenvalues
    below 1e-10 of the largest; training kernels here are routinely
    rank-deficient, so plain inversion would amplify noise unboundedly.
    """
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    targets = np.asarray(targets, dtype=np.float64).ravel()
    k_test = np.atleast_2d(np.asarray(k_test, dtype=np.float64))
    spectrum, q = sym_eig(k_train, label="regression")
    lam = spectrum.eigenvalues
    if ridge > 0:
        inv = 1.0 / (lam + ridge)
    else:
        cutoff = PINV_RTOL * max(float(lam[0]), 0.0)
        keep = lam > cutoff
        if not np.any(keep):
            raise ValueError("kernel is numerically zero; no regression possible")
        inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    coef = q @ (inv * (q.T @ targets))
    return k_test @ coef
