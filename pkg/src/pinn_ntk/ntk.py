"""Tangent-kernel assembly, block spectra and drift tracking.

The kernel of a trained model is the Gram matrix of per-point parameter
gradients: boundary-style groups contribute rows of du/dtheta composed with
the group operator, the residual group rows of d(Lu)/dtheta. Blocks are
indexed by group name in the problem's fixed group order, and the assembled
matrix is their concatenation, symmetrized to round-off.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import network
from .network import MlpParams
from .numerics import Spectrum, matrix_norms, sym_eig
from .problems import Batch, PdeProblem

__all__ = [
    "JacobianBlock",
    "NtkMatrix",
    "assemble",
    "diagonal_block_traces",
    "block_spectra",
    "relative_change",
    "param_relative_change",
    "weighted_kernel",
    "spectra_to_csv",
    "drift_to_csv",
]

PSD_TOL = 1e-8


@dataclass(frozen=True)
class JacobianBlock:
    """Per-point gradient rows of one data group, aligned with flat ordering."""

    group_label: str
    rows: np.ndarray

    @property
    def n_points(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class NtkMatrix:
    """Assembled kernel with named blocks and the Jacobians that built it."""

    group_order: tuple[str, ...]
    sizes: dict[str, int]
    assembled: np.ndarray
    jacobians: dict[str, JacobianBlock] | None = None

    def without_jacobians(self) -> "NtkMatrix":
        """Slim copy for long-lived snapshots (drops the gradient rows)."""
        return NtkMatrix(self.group_order, self.sizes, self.assembled, None)

    def _slice(self, group: str) -> slice:
        start = 0
        for g in self.group_order:
            n = self.sizes[g]
            if g == group:
                return slice(start, start + n)
            start += n
        raise KeyError(group)

    def block(self, row_group: str, col_group: str) -> np.ndarray:
        return self.assembled[self._slice(row_group), self._slice(col_group)]

    def diagonal_traces(self) -> dict[str, float]:
        return {
            g: float(np.trace(self.block(g, g))) for g in self.group_order
        }

    @property
    def trace(self) -> float:
        return float(np.trace(self.assembled))


def assemble(params: MlpParams, problem: PdeProblem, batch: Batch) -> NtkMatrix:
    """Build the full block kernel for one parameter state and batch.

    Verifies on the way out that the result is an honest Gram matrix:
    symmetric, with positive semi-definite diagonal blocks (smallest
    eigenvalue above -1e-8 times the block trace).
    """
    if not batch.groups:
        raise ValueError("cannot assemble a kernel from an empty batch")
    jacobians: dict[str, JacobianBlock] = {}
    stacked = []
    for g in problem.groups:
        gb = batch.groups[g.name]
        rows = network.gradient_rows(params, gb.points, g.operator.terms)
        jacobians[g.name] = JacobianBlock(g.name, rows)
        stacked.append(rows)
    j = np.concatenate(stacked, axis=0)
    k = j @ j.T
    k = 0.5 * (k + k.T)
    sizes = {name: block.n_points for name, block in jacobians.items()}
    mat = NtkMatrix(problem.group_names, sizes, k, jacobians)
    for name in mat.group_order:
        block = mat.block(name, name)
        min_eig = float(np.linalg.eigvalsh(block)[0])
        tr = float(np.trace(block))
        if min_eig < -PSD_TOL * max(tr, 1.0):
            raise ValueError(
                f"diagonal block {name!r} lost positive semi-definiteness "
                f"(min eigenvalue {min_eig:.3e}, trace {tr:.3e})"
            )
    return mat


def diagonal_block_traces(
    params: MlpParams, problem: PdeProblem, batch: Batch
) -> dict[str, float]:
    """Per-group diagonal-block traces without forming any Gram matrix.

    The trace of a block is the summed squared norm of its gradient rows,
    which is all the adaptive weight update needs.
    """
    out = {}
    for g in problem.groups:
        rows = network.gradient_rows(
            params, batch.groups[g.name].points, g.operator.terms
        )
        out[g.name] = float(np.einsum("ij,ij->", rows, rows))
    return out


def block_spectra(k: NtkMatrix) -> tuple[Spectrum, dict[str, Spectrum]]:
    """Descending eigenvalues of the full kernel and of each diagonal block."""
    full, _ = sym_eig(k.assembled, label="full")
    blocks = {
        g: sym_eig(k.block(g, g), label=g)[0] for g in k.group_order
    }
    return full, blocks


def relative_change(current: NtkMatrix, reference: NtkMatrix) -> float:
    """Spectral-norm drift ||K - K_ref||_2 / ||K_ref||_2."""
    if current.group_order != reference.group_order or current.sizes != reference.sizes:
        raise ValueError("kernels built from different group layouts")
    _, norm_ref = matrix_norms(reference.assembled)
    if norm_ref == 0.0:
        raise ValueError("reference kernel is zero")
    _, norm_diff = matrix_norms(current.assembled - reference.assembled)
    return norm_diff / norm_ref


def param_relative_change(current: MlpParams, reference: MlpParams) -> float:
    """Euclidean drift ||theta - theta_ref||_2 / ||theta_ref||_2 on flat views."""
    if current.arch != reference.arch:
        raise ValueError("parameters come from different architectures")
    ref = reference.flat
    return float(np.linalg.norm(current.flat - ref) / np.linalg.norm(ref))


def weighted_kernel(
    k: NtkMatrix, weights: dict[str, float], sizes: dict[str, int] | None = None
) -> np.ndarray:
    """Symmetrized weight-scaled kernel (D K + K D)/2 with D = diag(w_g/N_g).

    The scaling a weighted loss induces on the kernel is one-sided and can
    break positive semi-definiteness; callers should inspect the returned
    matrix's eigenvalues and treat negative ones as a stability warning.
    """
    if sizes is None:
        sizes = {g: 1 for g in k.group_order}
    d = np.concatenate(
        [np.full(k.sizes[g], weights[g] / sizes[g]) for g in k.group_order]
    )
    dk = d[:, None] * k.assembled
    return 0.5 * (dk + dk.T)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def spectra_to_csv(path, snapshots) -> None:
    """Write (iteration, block, rank, eigenvalue) rows.

    ``snapshots`` is an iterable of (iteration, full_spectrum, block_spectra)
    triples as produced by :func:`block_spectra`.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "block", "rank", "eigenvalue"])
        for iteration, full, blocks in snapshots:
            for label, spectrum in [("full", full), *sorted(blocks.items())]:
                for rank, ev in enumerate(spectrum.eigenvalues):
                    writer.writerow([iteration, label, rank, repr(float(ev))])


def drift_to_csv(path, rows) -> None:
    """Write (iteration, param_drift, kernel_drift) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "param_drift", "kernel_drift"])
        for iteration, param_drift, kernel_drift in rows:
            writer.writerow([iteration, repr(float(param_drift)), repr(float(kernel_drift))])
