"""Infinite-width limits for the one-hidden-layer tanh network.

At unit-normal initialization the first-layer pre-activations at two inputs
x, x' are jointly Gaussian with covariance ``input_cov``; pushing tanh and
its derivatives through that Gaussian gives closed forms (up to a Gaussian
expectation) for

* the init covariance of the output u and of its second derivative u_xx,
* the limiting tangent-kernel blocks coupling boundary rows (u) and
  residual rows (u_xx),

all evaluated here by Gauss-Hermite quadrature. A Monte-Carlo oracle over
finite-width initializations is included so every limit can be checked
against what actual networks do.

All functions are pure; quadrature rules are cached per order.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np

from . import network
from .network import ArchSpec
from .numerics import gauss_hermite

__all__ = [
    "input_cov",
    "output_cov",
    "deriv_cov",
    "uxx_cov",
    "ntk_uu",
    "ntk_ur",
    "ntk_rr",
    "ntk_uu_depth",
    "limit_blocks_on_grid",
    "McKernelEstimate",
    "mc_kernel_oracle",
    "limit_comparison_csv",
]

DEFAULT_ORDER = 60

UXX_TERMS = ((1.0, 0, 2),)


def _tanh_k(z: np.ndarray, k: int) -> np.ndarray:
    """k-th derivative of tanh evaluated via t = tanh(z)."""
    t = np.tanh(z)
    if k == 0:
        return t
    if k == 1:
        return 1.0 - t * t
    if k == 2:
        return -2.0 * t * (1.0 - t * t)
    if k == 3:
        t2 = t * t
        return -2.0 + (8.0 - 6.0 * t2) * t2
    raise ValueError(f"unsupported derivative order {k}")


@functools.lru_cache(maxsize=None)
def _pair_nodes(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensorized nodes/weights for independent standard-normal pairs."""
    rule = gauss_hermite(order)
    z = np.sqrt(2.0) * rule.nodes
    u = np.repeat(z, order)
    v = np.tile(z, order)
    w = np.outer(rule.weights, rule.weights).ravel() / np.pi
    return u, v, w


def _normal_pair_expectation(f, order: int = DEFAULT_ORDER) -> float:
    """E[f(w, b)] for independent w, b ~ N(0, 1)."""
    u, v, w = _pair_nodes(order)
    return float(w @ f(u, v))


def _correlated_expectation(f, lam: np.ndarray, order: int = DEFAULT_ORDER) -> float:
    """E[f(u, v)] for (u, v) ~ N(0, lam) with a 2x2 covariance lam.

    Transforms independent nodes through the symmetric square root of lam,
    which stays well-defined at exact rank deficiency (x = x') and spreads
    each target variable over both node axes. That keeps the arguments fed
    to the bounded tanh derivatives small, which empirically buys about
    three digits over a triangular (Cholesky-style) transform near the
    equal-input corner.
    """
    if lam[0, 0] <= 0.0 or lam[1, 1] <= 0.0:
        raise ValueError("degenerate covariance with a non-positive diagonal")
    rho = lam[0, 1] / np.sqrt(lam[0, 0] * lam[1, 1])
    if abs(rho) > 1.0 + 1e-12:
        raise ValueError(f"covariance is not positive semi-definite (rho={rho})")
    evals, q = np.linalg.eigh(lam)
    root = (q * np.sqrt(np.maximum(evals, 0.0))) @ q.T
    z1, z2, w = _pair_nodes(order)
    u = root[0, 0] * z1 + root[0, 1] * z2
    v = root[1, 0] * z1 + root[1, 1] * z2
    return float(w @ f(u, v))


def input_cov(x, xp) -> float:
    """Covariance of first-layer pre-activations: <x, x'> + 1."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    xp = np.atleast_1d(np.asarray(xp, dtype=np.float64))
    if x.shape != xp.shape:
        raise ValueError("inputs must share a dimension")
    return float(x @ xp + 1.0)


def _lam(cxx: float, cxy: float, cyy: float) -> np.ndarray:
    return np.array([[cxx, cxy], [cxy, cyy]])


def _first_layer_lam(x: float, xp: float) -> np.ndarray:
    return _lam(input_cov(x, x), input_cov(x, xp), input_cov(xp, xp))


def output_cov(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """Init covariance of the network output: E[tanh(u) tanh(v)] + 1."""
    lam = _first_layer_lam(x, xp)
    return _correlated_expectation(lambda u, v: np.tanh(u) * np.tanh(v), lam, order) + 1.0


def deriv_cov(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """E[tanh'(u) tanh'(v)] over the same first-layer Gaussian pair."""
    lam = _first_layer_lam(x, xp)
    return _correlated_expectation(
        lambda u, v: _tanh_k(u, 1) * _tanh_k(v, 1), lam, order
    )


def uxx_cov(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """Init covariance of u_xx: E[w^4 tanh''(w x + b) tanh''(w x' + b)]."""
    return _normal_pair_expectation(
        lambda w, b: w**4 * _tanh_k(w * x + b, 2) * _tanh_k(w * xp + b, 2), order
    )


def ntk_uu(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """Limiting boundary-boundary kernel entry.

    Four contributions, one per parameter group of the one-hidden-layer
    network: first-layer weights E[tanh' tanh'] x x', output weights
    E[tanh tanh], first-layer biases E[tanh' tanh'], and the output bias 1.
    """
    lam = _first_layer_lam(x, xp)
    e_dd = _correlated_expectation(
        lambda u, v: _tanh_k(u, 1) * _tanh_k(v, 1), lam, order
    )
    e_ss = _correlated_expectation(lambda u, v: np.tanh(u) * np.tanh(v), lam, order)
    return e_dd * x * xp + e_ss + e_dd + 1.0


def ntk_rr(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """Limiting residual-residual kernel entry for the operator d2/dx2.

    Sum of the first-layer-weight part (four cross terms mixing second and
    third activation derivatives with w^2..w^4 moments), the output-weight
    part E[w^4 tanh'' tanh''] and the first-layer-bias part
    E[w^4 tanh''' tanh'''].
    """

    def exp(fn):
        return _normal_pair_expectation(fn, order)

    e4_33 = exp(lambda w, b: w**4 * _tanh_k(w * x + b, 3) * _tanh_k(w * xp + b, 3))
    e3_32 = exp(lambda w, b: w**3 * _tanh_k(w * x + b, 3) * _tanh_k(w * xp + b, 2))
    e3_23 = exp(lambda w, b: w**3 * _tanh_k(w * x + b, 2) * _tanh_k(w * xp + b, 3))
    e2_22 = exp(lambda w, b: w**2 * _tanh_k(w * x + b, 2) * _tanh_k(w * xp + b, 2))
    e4_22 = exp(lambda w, b: w**4 * _tanh_k(w * x + b, 2) * _tanh_k(w * xp + b, 2))
    a = e4_33 * x * xp + 2.0 * e3_32 * x + 2.0 * e3_23 * xp + 4.0 * e2_22
    return a + e4_22 + e4_33


def ntk_ur(x: float, xp: float, order: int = DEFAULT_ORDER) -> float:
    """Limiting boundary-residual kernel entry (u row at x, u_xx row at x').

    Not symmetric in its arguments; the transposed block is ntk_ur(xp, x).
    """

    def exp(fn):
        return _normal_pair_expectation(fn, order)

    e2_13 = exp(lambda w, b: w**2 * _tanh_k(w * x + b, 1) * _tanh_k(w * xp + b, 3))
    e1_12 = exp(lambda w, b: w * _tanh_k(w * x + b, 1) * _tanh_k(w * xp + b, 2))
    e2_02 = exp(lambda w, b: w**2 * np.tanh(w * x + b) * _tanh_k(w * xp + b, 2))
    a = e2_13 * x * xp + 2.0 * e1_12 * x
    return a + e2_02 + e2_13


def ntk_uu_depth(
    x: float, xp: float, depth: int = 1, order: int = DEFAULT_ORDER
) -> float:
    """Depth-general limiting kernel of plain outputs via the layer recursion.

    Tracks the Gaussian-process covariance triple at (x,x), (x,x'), (x',x')
    through the hidden layers and sums covariance-times-derivative-product
    terms over layers. With depth=1 this must agree with :func:`ntk_uu`,
    which is used as a cross-check in the tests.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    pairs = [(x, x), (x, xp), (xp, xp)]
    cov = [input_cov(a, b) for a, b in pairs]
    covs = [tuple(cov)]  # covs[h] holds the level-h triple
    dots = [None]  # derivative expectations, level h >= 1
    for _ in range(depth):
        lam = _lam(*cov)
        e_ss = [
            _correlated_expectation(
                lambda u, v: np.tanh(u) * np.tanh(v),
                _lam(cov[i], cov[j], cov[k]),
                order,
            )
            for i, j, k in ((0, 0, 0), (0, 1, 2), (2, 2, 2))
        ]
        dots.append(
            _correlated_expectation(
                lambda u, v: _tanh_k(u, 1) * _tanh_k(v, 1), lam, order
            )
        )
        cov = [e + 1.0 for e in e_ss]
        covs.append(tuple(cov))
    total = 0.0
    for h in range(1, depth + 2):
        term = covs[h - 1][1]
        for hp in range(h, depth + 1):
            term *= dots[hp]
        total += term
    return total


def limit_blocks_on_grid(
    xs: np.ndarray, order: int = DEFAULT_ORDER
) -> dict[str, np.ndarray]:
    """Dense limiting blocks uu, ur, rr over a 1-d grid of inputs."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    n = xs.size
    uu = np.empty((n, n))
    ur = np.empty((n, n))
    rr = np.empty((n, n))
    for i, xi in enumerate(xs):
        for j, xj in enumerate(xs):
            if j >= i:
                uu[i, j] = ntk_uu(xi, xj, order)
                rr[i, j] = ntk_rr(xi, xj, order)
            else:
                uu[i, j] = uu[j, i]
                rr[i, j] = rr[j, i]
            ur[i, j] = ntk_ur(xi, xj, order)
    return {"uu": uu, "ur": ur, "rr": rr}


# ---------------------------------------------------------------------------
# Finite-width Monte-Carlo oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McKernelEstimate:
    """Entrywise mean and standard error of init-kernel blocks over seeds."""

    labels: tuple[str, ...]
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    num_inits: int


def mc_kernel_oracle(
    arch: ArchSpec,
    points: np.ndarray,
    num_inits: int,
    seed: int,
    operators: dict[str, tuple] | None = None,
) -> McKernelEstimate:
    """Sample init kernels over independent initializations.

    Returns entrywise sample means and standard errors for each block
    ``"ab"`` built from the gradient rows of operators ``a`` (rows) and
    ``b`` (columns). Defaults to plain values ``u`` and the second
    derivative ``r``, the blocks the limiting formulas above describe.
    """
    if num_inits < 2:
        raise ValueError("need at least two initializations for a standard error")
    if arch.parameterization != "ntk":
        raise ValueError("the limit only exists under the width-scaled parameterization")
    if operators is None:
        operators = {"u": network.IDENTITY_TERMS, "r": UXX_TERMS}
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != arch.input_dim:
        points = points.reshape(-1, arch.input_dim)
    labels = tuple(operators)
    pair_labels = tuple(a + b for a in labels for b in labels)
    acc = {lbl: 0.0 for lbl in pair_labels}
    acc_sq = {lbl: 0.0 for lbl in pair_labels}
    rng = np.random.default_rng(seed)
    for _ in range(num_inits):
        params = network.init_params(arch, int(rng.integers(0, 2**63 - 1)))
        rows = {
            lbl: network.gradient_rows(params, points, terms)
            for lbl, terms in operators.items()
        }
        for a in labels:
            for b in labels:
                block = rows[a] @ rows[b].T
                acc[a + b] = acc[a + b] + block
                acc_sq[a + b] = acc_sq[a + b] + block * block
    mean, stderr = {}, {}
    for lbl in pair_labels:
        m = acc[lbl] / num_inits
        var = (acc_sq[lbl] / num_inits - m * m) * num_inits / (num_inits - 1)
        mean[lbl] = m
        stderr[lbl] = np.sqrt(np.maximum(var, 0.0) / num_inits)
    return McKernelEstimate(pair_labels, mean, stderr, num_inits)


def limit_comparison_csv(path, rows) -> None:
    """Write (width, block, i, j, empirical, stderr, limit, deviation) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["width", "block", "i", "j", "empirical_mean", "stderr", "limit", "deviation"]
        )
        for width, block, i, j, emp, se, lim in rows:
            writer.writerow(
                [width, block, i, j, repr(float(emp)), repr(float(se)), repr(float(lim)), repr(float(emp - lim))]
            )
