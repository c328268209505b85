"""Linear PDE problems, sampling regions, residuals and error metrics.

A problem bundles an axis-aligned box domain with a list of constraint
groups, each carrying its own linear operator, target function, sampling
region and weight symbol. The PDE residual itself is stored as the last
group (named ``residual``) with the differential operator and the forcing as
its target, which lets kernels, losses and samplers treat every data group
uniformly.

Problems and batches are immutable values; all sampling goes through an
explicit seeded generator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import network
from .network import MlpParams

__all__ = [
    "LinearOperator",
    "Region",
    "Interior",
    "Faces",
    "Points",
    "ConstraintGroup",
    "ExactSolution",
    "PdeProblem",
    "Batch",
    "GroupBatch",
    "apply_operator",
    "residual",
    "residual_batch",
    "poisson1d",
    "wave1d",
    "sample_batch",
    "relative_l2_error",
    "batch_to_csv",
]

RESIDUAL = "residual"


@dataclass(frozen=True)
class LinearOperator:
    """Sum of pure per-coordinate derivative terms (coeff, coord, order)."""

    terms: tuple[tuple[float, int, int], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("operator needs at least one term")
        clean = []
        for coeff, coord, order in self.terms:
            if order not in (0, 1, 2):
                raise ValueError(f"unsupported derivative order {order}")
            clean.append((float(coeff), int(coord), int(order)))
        object.__setattr__(self, "terms", tuple(clean))

    @staticmethod
    def identity() -> "LinearOperator":
        return LinearOperator(((1.0, 0, 0),))

    @staticmethod
    def derivative(coord: int, order: int, coeff: float = 1.0) -> "LinearOperator":
        return LinearOperator(((coeff, coord, order),))

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.terms + other.terms)

    def __rmul__(self, scalar: float) -> "LinearOperator":
        return LinearOperator(tuple((scalar * c, i, o) for c, i, o in self.terms))

    @property
    def max_order(self) -> int:
        return max(order for _, _, order in self.terms)


# ---------------------------------------------------------------------------
# Sampling regions
# ---------------------------------------------------------------------------


class Region:
    """Common interface: deterministic grids, seeded uniform draws, membership."""

    def sample_grid(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _axis_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


@dataclass(frozen=True)
class Interior(Region):
    """The closed box itself; grids include the box endpoints."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.lo.size

    def sample_grid(self, n: int) -> np.ndarray:
        if self.dim == 1:
            return _axis_grid(self.lo[0], self.hi[0], n)[:, None]
        # Product grid with ~n^(1/d) nodes per axis, truncated to n points.
        k = int(np.ceil(n ** (1.0 / self.dim)))
        axes = [_axis_grid(self.lo[d], self.hi[d], k) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return pts[:n]

    def sample_random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)


@dataclass(frozen=True)
class Faces(Region):
    """Union of axis-aligned box faces, sampled uniformly by face measure.

    Each face is (dim index, side) with side 0 for the low face and 1 for
    the high face. Grid sampling splits the request across faces as evenly
    as possible and equispaces along each face.
    """

    lo: np.ndarray
    hi: np.ndarray
    faces: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if not self.faces:
            raise ValueError("need at least one face")

    @property
    def dim(self) -> int:
        return self.lo.size

    def _face_points(self, dim_idx: int, side: int, free: np.ndarray) -> np.ndarray:
        pts = np.empty((free.shape[0], self.dim))
        value = self.hi[dim_idx] if side else self.lo[dim_idx]
        other = [d for d in range(self.dim) if d != dim_idx]
        pts[:, dim_idx] = value
        for j, d in enumerate(other):
            pts[:, d] = free[:, j]
        return pts

    def sample_grid(self, n: int) -> np.ndarray:
        counts = np.full(len(self.faces), n // len(self.faces))
        counts[: n % len(self.faces)] += 1
        blocks = []
        for (dim_idx, side), cnt in zip(self.faces, counts):
            if cnt == 0:
                continue
            other = [d for d in range(self.dim) if d != dim_idx]
            if not other:
                free = np.zeros((cnt, 0))
            else:
                # Faces here are at most 1-d (2-d domains); equispace along it.
                free = _axis_grid(self.lo[other[0]], self.hi[other[0]], cnt)[:, None]
            blocks.append(self._face_points(dim_idx, side, free))
        return np.concatenate(blocks, axis=0)

    def sample_random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        # Faces of a box in the same dimension have equal relevance per unit
        # measure; with the unit-box problems here all faces have measure 1.
        choice = rng.integers(0, len(self.faces), size=n)
        pts = np.empty((n, self.dim))
        for k, (dim_idx, side) in enumerate(self.faces):
            mask = choice == k
            cnt = int(mask.sum())
            other = [d for d in range(self.dim) if d != dim_idx]
            if other:
                free = rng.uniform(
                    self.lo[other], self.hi[other], size=(cnt, len(other))
                )
            else:
                free = np.zeros((cnt, 0))
            pts[mask] = self._face_points(dim_idx, side, free)
        return pts

    def contains(self, points: np.ndarray) -> np.ndarray:
        inside = np.all((points >= self.lo) & (points <= self.hi), axis=1)
        on_any = np.zeros(points.shape[0], dtype=bool)
        for dim_idx, side in self.faces:
            value = self.hi[dim_idx] if side else self.lo[dim_idx]
            on_any |= points[:, dim_idx] == value
        return inside & on_any


@dataclass(frozen=True)
class Points(Region):
    """Explicit finite point set (e.g. the two endpoints of an interval)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample_grid(self, n: int) -> np.ndarray:
        reps = -(-n // self.points.shape[0])
        return np.tile(self.points, (reps, 1))[:n]

    def sample_random(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(0, self.points.shape[0], size=n)
        return self.points[idx]

    def contains(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(points.shape[0], dtype=bool)
        for p in self.points:
            out |= np.all(points == p, axis=1)
        return out


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintGroup:
    """One data group: operator applied to u, target to match, where to sample."""

    name: str
    operator: LinearOperator
    target: Callable[[np.ndarray], np.ndarray]
    region: Region
    weight_symbol: str


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution with analytic per-coordinate jets."""

    value: Callable[[np.ndarray], np.ndarray]
    jet: Callable[[np.ndarray, int], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class PdeProblem:
    """Domain box plus ordered data groups; the last group is the residual."""

    lo: np.ndarray
    hi: np.ndarray
    groups: tuple[ConstraintGroup, ...]
    exact: ExactSolution | None = None

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        names = [g.name for g in self.groups]
        if names.count(RESIDUAL) != 1 or names[-1] != RESIDUAL:
            raise ValueError("problems need exactly one trailing 'residual' group")
        if self.exact is not None:
            self._check_exact()

    def _check_exact(self, n: int = 100, tol: float = 1e-6) -> None:
        rng = np.random.default_rng(0)
        pts = rng.uniform(self.lo, self.hi, size=(n, self.dim))
        res = apply_operator(self.residual_operator, pts, self.exact.jet)
        res -= self.forcing(pts)
        worst = float(np.max(np.abs(res)))
        if worst > tol:
            raise ValueError(f"exact solution violates the PDE by {worst:.3e}")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.name for g in self.groups)

    @property
    def residual_group(self) -> ConstraintGroup:
        return self.groups[-1]

    @property
    def residual_operator(self) -> LinearOperator:
        return self.residual_group.operator

    @property
    def forcing(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.residual_group.target

    @property
    def constraint_groups(self) -> tuple[ConstraintGroup, ...]:
        return self.groups[:-1]

    def group(self, name: str) -> ConstraintGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)


@dataclass(frozen=True)
class GroupBatch:
    points: np.ndarray
    targets: np.ndarray


@dataclass(frozen=True)
class Batch:
    """Sampled points and target values, one entry per problem group."""

    groups: dict[str, GroupBatch] = field(default_factory=dict)

    def sizes(self) -> dict[str, int]:
        return {name: gb.points.shape[0] for name, gb in self.groups.items()}


def apply_operator(
    op: LinearOperator, points: np.ndarray, jet_fn
) -> np.ndarray:
    """Evaluate (L u)(x) from any jet provider.

    ``jet_fn(points, coord)`` must return (value, d1, d2) arrays along that
    coordinate, which both networks and analytic solutions provide.
    """
    points = np.atleast_2d(points)
    out = np.zeros(points.shape[0])
    jets: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def jet(coord: int):
        if coord not in jets:
            jets[coord] = jet_fn(points, coord)
        return jets[coord]

    for coeff, coord, order in op.terms:
        if order == 0:
            out += coeff * jet(min(coord, points.shape[1] - 1))[0]
        else:
            out += coeff * jet(coord)[order]
    return out


def _network_jets(params: MlpParams):
    def jet_fn(points: np.ndarray, coord: int):
        return network.jet_batch(params, points, coord)

    return jet_fn


def residual_batch(params: MlpParams, problem: PdeProblem, points: np.ndarray) -> np.ndarray:
    """(L u)(x) - f(x) at the given interior points."""
    points = np.atleast_2d(points)
    lu = network.operator_values(params, points, problem.residual_operator.terms)
    return lu - problem.forcing(points)


def residual(params: MlpParams, problem: PdeProblem, x) -> float:
    return float(residual_batch(params, problem, np.atleast_2d(x))[0])


def group_values(params: MlpParams, group: ConstraintGroup, points: np.ndarray) -> np.ndarray:
    """(L_g u)(x) for a group's operator (identity for plain value matching)."""
    return network.operator_values(params, points, group.operator.terms)


# ---------------------------------------------------------------------------
# Concrete problems
# ---------------------------------------------------------------------------


def poisson1d(a: float) -> PdeProblem:
    """u'' = f on [0,1] with u = sin(a pi x) fabricated as the solution.

    Boundary data are the two interval endpoints with homogeneous targets;
    the forcing is -(a pi)^2 sin(a pi x).
    """
    if a <= 0:
        raise ValueError("frequency multiplier must be positive")
    w = a * np.pi
    lo, hi = np.array([0.0]), np.array([1.0])

    def u(points):
        return np.sin(w * points[:, 0])

    def u_jet(points, coord):
        s = np.sin(w * points[:, 0])
        c = np.cos(w * points[:, 0])
        return s, w * c, -(w**2) * s

    def forcing(points):
        return -(w**2) * np.sin(w * points[:, 0])

    def zero(points):
        return np.zeros(points.shape[0])

    groups = (
        ConstraintGroup(
            "boundary",
            LinearOperator.identity(),
            zero,
            Points(np.array([[0.0], [1.0]])),
            "lambda_b",
        ),
        ConstraintGroup(
            RESIDUAL,
            LinearOperator.derivative(0, 2),
            forcing,
            Interior(lo, hi),
            "lambda_r",
        ),
    )
    return PdeProblem(lo, hi, groups, ExactSolution(u, u_jet))


def wave1d() -> PdeProblem:
    """u_tt - 4 u_xx = 0 on the unit square, coordinates (x, t).

    The Dirichlet group merges the two spatial boundaries with the initial
    displacement slice t=0 (three faces sampled jointly, uniformly by face
    measure); the initial velocity du/dt = 0 at t=0 is its own group. The
    exact solution is the superposition of two traveling-mode products.
    """
    lo, hi = np.array([0.0, 0.0]), np.array([1.0, 1.0])

    def u(points):
        x, t = points[:, 0], points[:, 1]
        return np.sin(np.pi * x) * np.cos(2 * np.pi * t) + 0.5 * np.sin(
            4 * np.pi * x
        ) * np.cos(8 * np.pi * t)

    def u_jet(points, coord):
        x, t = points[:, 0], points[:, 1]
        s1, c1 = np.sin(np.pi * x), np.cos(np.pi * x)
        s4, c4 = np.sin(4 * np.pi * x), np.cos(4 * np.pi * x)
        ct2, st2 = np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)
        ct8, st8 = np.cos(8 * np.pi * t), np.sin(8 * np.pi * t)
        v = s1 * ct2 + 0.5 * s4 * ct8
        if coord == 0:
            d1 = np.pi * c1 * ct2 + 2 * np.pi * c4 * ct8
            d2 = -(np.pi**2) * s1 * ct2 - 8 * np.pi**2 * s4 * ct8
        else:
            d1 = -2 * np.pi * s1 * st2 - 4 * np.pi * s4 * st8
            d2 = -4 * np.pi**2 * s1 * ct2 - 32 * np.pi**2 * s4 * ct8
        return v, d1, d2

    def zero(points):
        return np.zeros(points.shape[0])

    wave_op = LinearOperator(((1.0, 1, 2), (-4.0, 0, 2)))
    groups = (
        ConstraintGroup(
            "boundary",
            LinearOperator.identity(),
            u,
            Faces(lo, hi, ((0, 0), (0, 1), (1, 0))),
            "lambda_u",
        ),
        ConstraintGroup(
            "initial_velocity",
            LinearOperator.derivative(1, 1),
            zero,
            Faces(lo, hi, ((1, 0),)),
            "lambda_ut",
        ),
        ConstraintGroup(RESIDUAL, wave_op, zero, Interior(lo, hi), "lambda_r"),
    )
    return PdeProblem(lo, hi, groups, ExactSolution(u, u_jet))


# ---------------------------------------------------------------------------
# Sampling and metrics
# ---------------------------------------------------------------------------

STRATEGIES = ("fixed_uniform_grid", "uniform_random")


def sample_batch(
    problem: PdeProblem,
    sizes: dict[str, int],
    strategy: str = "fixed_uniform_grid",
    seed: int | np.random.Generator = 0,
) -> Batch:
    """Draw one batch for every group of the problem.

    Grid sampling is deterministic and includes region endpoints; random
    sampling is i.i.d. uniform over each region from a single seeded stream
    (group order fixed, so identical seeds give identical batches). Passing
    a generator instead of an integer draws from that stream in place,
    which is how a training loop gets a reproducible batch sequence.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    out: dict[str, GroupBatch] = {}
    for g in problem.groups:
        n = int(sizes[g.name])
        if n < 1:
            raise ValueError(f"group {g.name!r} needs a positive batch size")
        if strategy == "fixed_uniform_grid":
            pts = g.region.sample_grid(n)
        else:
            pts = g.region.sample_random(n, rng)
        out[g.name] = GroupBatch(pts, g.target(pts))
    return Batch(out)


def relative_l2_error(params, problem: PdeProblem, grid_size: int | None = None) -> float:
    """||u_pred - u_exact||_2 / ||u_exact||_2 on a dense evaluation grid.

    Defaults to 1000 points in one dimension and a 100x100 product grid in
    two. ``params`` may also be any callable mapping points to values.
    """
    if problem.exact is None:
        raise ValueError("problem has no exact solution to compare against")
    if grid_size is None:
        grid_size = 1000 if problem.dim == 1 else 100
    if problem.dim == 1:
        pts = np.linspace(problem.lo[0], problem.hi[0], grid_size)[:, None]
    else:
        axes = [
            np.linspace(problem.lo[d], problem.hi[d], grid_size)
            for d in range(problem.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
    predictor = params if callable(params) else (lambda X: network.forward_batch(params, X))
    pred = predictor(pts)
    exact = problem.exact.value(pts)
    return float(np.linalg.norm(pred - exact) / np.linalg.norm(exact))


def batch_to_csv(batch: Batch, path) -> None:
    """Dump a batch as CSV rows (group, coordinates..., target)."""
    dim = max(gb.points.shape[1] for gb in batch.groups.values())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", *[f"x{d}" for d in range(dim)], "target"])
        for name, gb in batch.groups.items():
            for p, t in zip(gb.points, gb.targets):
                writer.writerow([name, *[repr(v) for v in p], repr(float(t))])
