"""Fully-connected scalar networks with exact derivative machinery.

Two parameterizations are supported: width-scaled layers with unit-normal
initialization (``ntk``), where each layer beyond the first multiplies its
weight matrix by 1/sqrt(fan_in) in the forward pass, and plain ``glorot``
layers with uniform weight initialization, zero biases and no forward
scaling.

Input derivatives are propagated as per-coordinate jets: every neuron
carries (value, du/dx_c, d2u/dx_c^2) for each requested coordinate ``c``,
updated exactly through each affine/activation step. Mixed partials are out
of scope; the operators used here are sums of pure per-coordinate
derivatives. Parameter gradients of any linear combination of output jet
components are obtained by reverse accumulation through the jet forward
pass, so kernel entries built from them are exact to round-off.

Parameter flattening is canonical and fixed: layer-0 weights in row-major
order, layer-0 biases, layer-1 weights, and so on. Checkpoints are ``.npz``
archives with keys ``input_dim``, ``hidden``, ``activation``,
``parameterization`` and ``flat`` (the flattened parameter vector).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ArchSpec",
    "MlpParams",
    "Jet2",
    "IDENTITY_TERMS",
    "init_params",
    "forward",
    "forward_batch",
    "forward_jet",
    "jet_batch",
    "operator_values",
    "param_gradient",
    "param_gradient_of_operator",
    "gradient_rows",
    "gradient_accumulate",
    "save_params",
    "load_params",
]

# One operator term: (coefficient, coordinate index, derivative order 0|1|2).
Term = tuple[float, int, int]

IDENTITY_TERMS: tuple[Term, ...] = ((1.0, 0, 0),)

ACTIVATIONS = ("tanh",)
PARAMETERIZATIONS = ("ntk", "glorot")


@dataclass(frozen=True)
class ArchSpec:
    """Shape and flavor of a scalar-output fully-connected network."""

    input_dim: int
    hidden: tuple[int, ...]
    activation: str = "tanh"
    parameterization: str = "ntk"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if len(self.hidden) < 1 or any(w < 1 for w in self.hidden):
            raise ValueError("need at least one hidden layer of width >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unsupported parameterization {self.parameterization!r}")

    @property
    def depth(self) -> int:
        return len(self.hidden)

    @property
    def dims(self) -> tuple[int, ...]:
        """Layer widths from input to (scalar) output."""
        return (self.input_dim, *self.hidden, 1)

    def layer_scale(self, h: int) -> float:
        """Forward multiplier of layer h's weight matrix."""
        if self.parameterization == "ntk" and h >= 1:
            return 1.0 / np.sqrt(self.dims[h])
        return 1.0

    @property
    def num_params(self) -> int:
        dims = self.dims
        return sum(dims[h + 1] * dims[h] + dims[h + 1] for h in range(len(dims) - 1))


@dataclass(frozen=True)
class MlpParams:
    """All weights and biases of one network, immutable during evaluation."""

    arch: ArchSpec
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.arch.dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count mismatch with architecture")
        for h, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[h + 1], dims[h]) or b.shape != (dims[h + 1],):
                raise ValueError(f"layer {h} parameter shape mismatch")

    @property
    def num_params(self) -> int:
        return self.arch.num_params

    @property
    def flat(self) -> np.ndarray:
        """Canonical flattened parameter vector (see module docstring)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, flat: np.ndarray) -> "MlpParams":
        """Rebuild parameters from a flat vector in canonical order."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.num_params,):
            raise ValueError("flat vector length mismatch")
        dims = self.arch.dims
        ws, bs, k = [], [], 0
        for h in range(len(dims) - 1):
            nw = dims[h + 1] * dims[h]
            ws.append(flat[k : k + nw].reshape(dims[h + 1], dims[h]).copy())
            k += nw
            bs.append(flat[k : k + dims[h + 1]].copy())
            k += dims[h + 1]
        return MlpParams(self.arch, tuple(ws), tuple(bs))


@dataclass(frozen=True)
class Jet2:
    """Value of u with first and second derivative along one coordinate."""

    value: float
    d1: float
    d2: float


def init_params(arch: ArchSpec, seed: int) -> MlpParams:
    """Draw parameters for the given architecture.

    ``ntk``: every weight and bias i.i.d. standard normal (the 1/sqrt(width)
    factors live in the forward pass). ``glorot``: weights uniform in
    +-sqrt(6/(fan_in+fan_out)), biases zero.
    """
    rng = np.random.default_rng(seed)
    dims = arch.dims
    ws, bs = [], []
    for h in range(len(dims) - 1):
        fan_in, fan_out = dims[h], dims[h + 1]
        if arch.parameterization == "ntk":
            ws.append(rng.standard_normal((fan_out, fan_in)))
            bs.append(rng.standard_normal(fan_out))
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            bs.append(np.zeros(fan_out))
    return MlpParams(arch, tuple(ws), tuple(bs))


# ---------------------------------------------------------------------------
# tanh and its derivatives, all written in terms of t = tanh(z) so that no
# exponential of a large argument is ever formed.
# ---------------------------------------------------------------------------


def _tanh_d1(t: np.ndarray) -> np.ndarray:
    return 1.0 - t * t


def _tanh_d2(t: np.ndarray) -> np.ndarray:
    return -2.0 * t * (1.0 - t * t)


def _tanh_d3(t: np.ndarray) -> np.ndarray:
    t2 = t * t
    return -2.0 + (8.0 - 6.0 * t2) * t2


# ---------------------------------------------------------------------------
# Jet forward/backward engine. Jets are arrays of shape (C, n, width) with
# channel 0 the value and channels (1+2i, 2+2i) the first/second derivative
# along coords[i]. Channel-wise 2-d matmuls keep the value channel on the
# same code path regardless of how many coordinates are propagated.
# ---------------------------------------------------------------------------


def _validate_terms(terms, input_dim: int) -> tuple[Term, ...]:
    terms = tuple(getattr(terms, "terms", terms))
    if not terms:
        raise ValueError("operator needs at least one term")
    out = []
    for coeff, coord, order in terms:
        if order not in (0, 1, 2):
            raise ValueError(f"unsupported derivative order {order}")
        if not 0 <= coord < input_dim:
            raise ValueError(f"coordinate {coord} out of range for dim {input_dim}")
        out.append((float(coeff), int(coord), int(order)))
    return tuple(out)


def _term_coords(terms: Sequence[Term]) -> tuple[int, ...]:
    return tuple(sorted({c for _, c, order in terms if order > 0}))


def _input_jets(X: np.ndarray, coords: tuple[int, ...]) -> np.ndarray:
    n, d0 = X.shape
    jets = np.zeros((1 + 2 * len(coords), n, d0))
    jets[0] = X
    for i, c in enumerate(coords):
        jets[1 + 2 * i, :, c] = 1.0
    return jets


def _affine(jets: np.ndarray, w: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    out = np.empty((jets.shape[0], jets.shape[1], w.shape[0]))
    for c in range(jets.shape[0]):
        np.matmul(jets[c], w.T, out=out[c])
    if scale != 1.0:
        out *= scale
    out[0] += b
    return out


def _activate(pre: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty_like(pre)
    out[0] = t
    s1 = _tanh_d1(t)
    s2 = _tanh_d2(t)
    for i in range((pre.shape[0] - 1) // 2):
        z1, z2 = pre[1 + 2 * i], pre[2 + 2 * i]
        out[1 + 2 * i] = s1 * z1
        out[2 + 2 * i] = s2 * z1 * z1 + s1 * z2
    return out


def _activation_backward(
    g_act: np.ndarray, pre: np.ndarray, t: np.ndarray
) -> np.ndarray:
    s1 = _tanh_d1(t)
    s2 = _tanh_d2(t)
    s3 = _tanh_d3(t)
    g_pre = np.empty_like(g_act)
    gv = g_act[0] * s1
    for i in range((g_act.shape[0] - 1) // 2):
        z1, z2 = pre[1 + 2 * i], pre[2 + 2 * i]
        g1, g2 = g_act[1 + 2 * i], g_act[2 + 2 * i]
        gv += g1 * s2 * z1 + g2 * (s3 * z1 * z1 + s2 * z2)
        g_pre[1 + 2 * i] = g1 * s1 + g2 * 2.0 * s2 * z1
        g_pre[2 + 2 * i] = g2 * s1
    g_pre[0] = gv
    return g_pre


class _Tape:
    """Intermediates of one jet forward pass, kept for reverse accumulation."""

    __slots__ = ("coords", "inputs", "pre", "act_t", "out")

    def __init__(self, coords, inputs, pre, act_t, out):
        self.coords = coords
        self.inputs = inputs  # jet input to each affine layer
        self.pre = pre  # pre-activation jets feeding each tanh
        self.act_t = act_t  # cached tanh of the value channel
        self.out = out  # output jets, shape (C, n)


def _forward_jets(
    params: MlpParams, X: np.ndarray, coords: tuple[int, ...], keep_tape: bool
) -> _Tape:
    arch = params.arch
    jets = _input_jets(X, coords)
    inputs, pres, ts = [], [], []
    for h in range(arch.depth + 1):
        if keep_tape:
            inputs.append(jets)
        pre = _affine(jets, params.weights[h], params.biases[h], arch.layer_scale(h))
        if h < arch.depth:
            t = np.tanh(pre[0])
            if keep_tape:
                pres.append(pre)
                ts.append(t)
            jets = _activate(pre, t)
        else:
            jets = pre
    return _Tape(coords, inputs, pres, ts, jets[:, :, 0])


def _output_adjoint(
    terms: Sequence[Term],
    coords: tuple[int, ...],
    n: int,
    point_weights: np.ndarray | None,
) -> np.ndarray:
    adj = np.zeros((1 + 2 * len(coords), n))
    w = np.ones(n) if point_weights is None else np.asarray(point_weights, dtype=np.float64)
    for coeff, coord, order in terms:
        channel = 0 if order == 0 else 2 * coords.index(coord) + order
        adj[channel] += coeff * w
    return adj


def _backward(
    params: MlpParams, tape: _Tape, out_adj: np.ndarray, per_point: bool
) -> np.ndarray:
    arch = params.arch
    n = out_adj.shape[1]
    gw: list[np.ndarray] = [None] * (arch.depth + 1)
    gb: list[np.ndarray] = [None] * (arch.depth + 1)
    g_pre = out_adj[:, :, None]
    for h in reversed(range(arch.depth + 1)):
        a_in = tape.inputs[h]
        scale = arch.layer_scale(h)
        if per_point:
            gw[h] = scale * np.einsum("cni,cnj->nij", g_pre, a_in)
            gb[h] = g_pre[0].copy()
        else:
            acc = g_pre[0].T @ a_in[0]
            for c in range(1, g_pre.shape[0]):
                acc += g_pre[c].T @ a_in[c]
            gw[h] = scale * acc
            gb[h] = g_pre[0].sum(axis=0)
        if h > 0:
            g_act = np.empty_like(a_in)
            w = params.weights[h]
            for c in range(g_pre.shape[0]):
                np.matmul(g_pre[c], w, out=g_act[c])
            if scale != 1.0:
                g_act *= scale
            g_pre = _activation_backward(g_act, tape.pre[h - 1], tape.act_t[h - 1])
    if per_point:
        parts = []
        for h in range(arch.depth + 1):
            parts.append(gw[h].reshape(n, -1))
            parts.append(gb[h])
        return np.concatenate(parts, axis=1)
    return np.concatenate(
        [np.concatenate([gw[h].ravel(), gb[h]]) for h in range(arch.depth + 1)]
    )


def _as_points(params: MlpParams, x) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if X.shape[1] != params.arch.input_dim:
        raise ValueError(
            f"point dimension {X.shape[1]} != input_dim {params.arch.input_dim}"
        )
    return X


# ---------------------------------------------------------------------------
# Public evaluation API
# ---------------------------------------------------------------------------


def forward_batch(params: MlpParams, X: np.ndarray) -> np.ndarray:
    """Network values u(x) for a batch of points, shape (n,)."""
    tape = _forward_jets(params, _as_points(params, X), (), keep_tape=False)
    return tape.out[0]


def forward(params: MlpParams, x) -> float:
    """Network value u(x) at a single point."""
    return float(forward_batch(params, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def jet_batch(
    params: MlpParams, X: np.ndarray, coord: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched (u, du/dx_c, d2u/dx_c^2) along one coordinate."""
    X = _as_points(params, X)
    if not 0 <= coord < params.arch.input_dim:
        raise ValueError(f"coordinate {coord} out of range")
    tape = _forward_jets(params, X, (coord,), keep_tape=False)
    return tape.out[0], tape.out[1], tape.out[2]


def forward_jet(params: MlpParams, x, coord: int) -> Jet2:
    """Exact (value, d1, d2) of u along one input coordinate at one point."""
    v, d1, d2 = jet_batch(params, np.atleast_2d(np.asarray(x, dtype=np.float64)), coord)
    return Jet2(float(v[0]), float(d1[0]), float(d2[0]))


def operator_values(params: MlpParams, X: np.ndarray, terms) -> np.ndarray:
    """(L u)(x) for the operator described by ``terms``, shape (n,)."""
    X = _as_points(params, X)
    terms = _validate_terms(terms, params.arch.input_dim)
    coords = _term_coords(terms)
    tape = _forward_jets(params, X, coords, keep_tape=False)
    out = np.zeros(X.shape[0])
    for coeff, coord, order in terms:
        channel = 0 if order == 0 else 2 * coords.index(coord) + order
        out += coeff * tape.out[channel]
    return out


def gradient_rows(params: MlpParams, X: np.ndarray, terms=IDENTITY_TERMS) -> np.ndarray:
    """Per-point parameter gradients of (L u)(x), stacked as an (n, P) array.

    Rows follow the canonical flat parameter ordering, so row Grams of this
    matrix are exact tangent-kernel blocks.
    """
    X = _as_points(params, X)
    terms = _validate_terms(terms, params.arch.input_dim)
    coords = _term_coords(terms)
    tape = _forward_jets(params, X, coords, keep_tape=True)
    adj = _output_adjoint(terms, coords, X.shape[0], None)
    return _backward(params, tape, adj, per_point=True)


def gradient_accumulate(
    params: MlpParams, X: np.ndarray, terms, point_weights: np.ndarray
) -> np.ndarray:
    """Flat gradient of sum_n w_n (L u)(x_n) in one reverse pass."""
    X = _as_points(params, X)
    terms = _validate_terms(terms, params.arch.input_dim)
    coords = _term_coords(terms)
    tape = _forward_jets(params, X, coords, keep_tape=True)
    adj = _output_adjoint(terms, coords, X.shape[0], point_weights)
    return _backward(params, tape, adj, per_point=False)


def param_gradient(params: MlpParams, x) -> np.ndarray:
    """Exact du/dtheta at one point, flat ordering."""
    X = _as_points(params, x)
    tape = _forward_jets(params, X, (), keep_tape=True)
    adj = _output_adjoint(IDENTITY_TERMS, (), 1, None)
    return _backward(params, tape, adj, per_point=False)


def param_gradient_of_operator(params: MlpParams, x, terms) -> np.ndarray:
    """Exact d(L u)/dtheta at one point, flat ordering."""
    X = _as_points(params, x)
    vterms = _validate_terms(terms, params.arch.input_dim)
    coords = _term_coords(vterms)
    tape = _forward_jets(params, X, coords, keep_tape=True)
    adj = _output_adjoint(vterms, coords, 1, None)
    return _backward(params, tape, adj, per_point=False)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_params(params: MlpParams, path) -> None:
    """Write an .npz checkpoint (architecture fields + flat parameter vector)."""
    np.savez(
        path,
        input_dim=params.arch.input_dim,
        hidden=np.asarray(params.arch.hidden, dtype=np.int64),
        activation=params.arch.activation,
        parameterization=params.arch.parameterization,
        flat=params.flat,
    )


def load_params(path) -> MlpParams:
    """Read a checkpoint written by :func:`save_params`."""
    with np.load(path, allow_pickle=False) as data:
        arch = ArchSpec(
            input_dim=int(data["input_dim"]),
            hidden=tuple(int(w) for w in data["hidden"]),
            activation=str(data["activation"]),
            parameterization=str(data["parameterization"]),
        )
        flat = np.asarray(data["flat"], dtype=np.float64)
    dims = arch.dims
    ws, bs, k = [], [], 0
    for h in range(len(dims) - 1):
        nw = dims[h + 1] * dims[h]
        ws.append(flat[k : k + nw].reshape(dims[h + 1], dims[h]))
        k += nw
        bs.append(flat[k : k + dims[h + 1]])
        k += dims[h + 1]
    return MlpParams(arch, tuple(ws), tuple(bs))
