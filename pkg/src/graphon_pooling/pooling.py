"""Graphon pooling: building graphs of prescribed sizes from a graphon.

M1  regular integration   -- average of W over the cells of the uniform grid
M2  irregular integration -- average of W over the cells of a random grid
M3  irregular sampling    -- W evaluated at pairs of random points

Signals are carried from one layer to the next by averaging the two fine
values whose reference locations (interval midpoints for M1/M2, sample points
for M3) bracket each coarse location.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphon import (
    DEFAULT_TOL,
    EPS_PART,
    ClosedFormGraphon,
    Graphon,
    GraphonError,
    GraphonSignal,
    Partition,
    StepKernel,
    integrate_boxes,
)

METHODS = ("m1", "m2", "m3")
MAX_RETRIES = 100


class PoolingError(ValueError):
    pass


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox (counter-based) generator keyed by ``seed`` and a stream path."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(s) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _as_rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else make_rng(seed)


# ---------------------------------------------------------------------------
# Partitions and sample points
# ---------------------------------------------------------------------------


def regular_partition(n: int) -> Partition:
    return Partition.uniform(n)


def random_partition(n: int, seed) -> Partition:
    """Partition with n - 1 i.i.d. uniform interior breakpoints."""
    if int(n) != n or n < 1:
        raise GraphonError(f"n must be a positive integer, got {n!r}")
    rng = _as_rng(seed)
    for _ in range(MAX_RETRIES):
        interior = np.sort(rng.random(int(n) - 1))
        b = np.concatenate([[0.0], interior, [1.0]])
        if np.all(np.diff(b) >= EPS_PART):
            return Partition(b)
    raise PoolingError(f"could not draw a partition with gaps >= {EPS_PART:g} in {MAX_RETRIES} tries")


@dataclass(frozen=True, eq=False)
class SamplePoints:
    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float).reshape(-1)
        if p.size == 0:
            raise GraphonError("need at least one sample point")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise GraphonError("sample points must lie in [0, 1]")
        if np.any(np.diff(p) < EPS_PART):
            raise GraphonError(f"sample points must be sorted with gaps >= {EPS_PART:g}")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return isinstance(other, SamplePoints) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


def sample_points(n: int, seed) -> SamplePoints:
    if int(n) != n or n < 1:
        raise GraphonError(f"n must be a positive integer, got {n!r}")
    rng = _as_rng(seed)
    for _ in range(MAX_RETRIES):
        p = np.sort(rng.random(int(n)))
        if np.all(np.diff(p) >= EPS_PART):
            return SamplePoints(p)
    raise PoolingError(f"could not draw points with gaps >= {EPS_PART:g} in {MAX_RETRIES} tries")


# ---------------------------------------------------------------------------
# Pooling methods
# ---------------------------------------------------------------------------


def _cell_integrals(w: Graphon, partition: Partition, tol: float) -> np.ndarray:
    """Matrix of integrals of w over the cells I_i x I_j of the partition."""
    if isinstance(w, StepKernel):
        o = partition.overlaps(w.partition)
        vol = o @ w.values @ o.T
        return 0.5 * (vol + vol.T)
    if not isinstance(w, ClosedFormGraphon):
        raise TypeError(f"unsupported graphon type {type(w).__name__}")
    n = partition.n
    br = partition.breakpoints
    iu, ju = np.triu_indices(n)
    vals = integrate_boxes(w, br[iu], br[iu + 1], br[ju], br[ju + 1], tol)
    vol = np.empty((n, n))
    vol[iu, ju] = vals
    vol[ju, iu] = vals
    return vol


def pool_m2(w: Graphon, partition: Partition, tol: float = DEFAULT_TOL) -> np.ndarray:
    """A(i, j) = (1 / (mu_i mu_j)) * integral of w over I_i x I_j."""
    mu = partition.measures
    a = _cell_integrals(w, partition, tol) / np.outer(mu, mu)
    return np.clip(a, 0.0, 1.0) if not _is_signed(w) else a


def pool_m1(w: Graphon, n: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """M2 on the uniform partition: A(i, j) = n^2 * integral over cell (i, j)."""
    return pool_m2(w, regular_partition(n), tol)


def pool_m3(w: Graphon, points: SamplePoints, zero_diagonal: bool = False) -> np.ndarray:
    """A(i, j) = W(rho(i), rho(j)); the diagonal is kept unless asked otherwise."""
    p = points.points
    a = np.asarray(w(p[:, None], p[None, :]), dtype=float)
    a = np.triu(a) + np.triu(a, 1).T
    if zero_diagonal:
        np.fill_diagonal(a, 0.0)
    return a


def _is_signed(w) -> bool:
    from .graphon import StepGraphon

    return isinstance(w, StepKernel) and not isinstance(w, StepGraphon)


# ---------------------------------------------------------------------------
# Signal interpolation
# ---------------------------------------------------------------------------


def interpolation_matrix(fine_locs, coarse_locs, atol: float = 1e-12) -> np.ndarray:
    """Linear map (len(coarse) x len(fine)) realising the bracket-average rule.

    A coarse location strictly between fine locations t_i < s < t_{i+1} gets
    the average of the two fine values; one coinciding with a fine location
    gets that value; one outside [t_1, t_N] gets the nearest end value.
    """
    f = np.asarray(fine_locs, dtype=float)
    c = np.asarray(coarse_locs, dtype=float)
    p = np.zeros((c.size, f.size))
    hi = np.searchsorted(f, c, side="left")
    for j, (s, k) in enumerate(zip(c, hi)):
        if k < f.size and abs(f[k] - s) <= atol:
            p[j, k] = 1.0
        elif k > 0 and abs(f[k - 1] - s) <= atol:
            p[j, k - 1] = 1.0
        elif k == 0:
            p[j, 0] = 1.0
        elif k == f.size:
            p[j, -1] = 1.0
        else:
            p[j, k - 1] = p[j, k] = 0.5
    return p


def interpolate_signal_intervals(x_fine: GraphonSignal, p_coarse: Partition) -> GraphonSignal:
    if len(x_fine.partition) < 2:
        raise GraphonError("the fine signal needs at least two intervals")
    p = interpolation_matrix(x_fine.partition.midpoints, p_coarse.midpoints)
    return GraphonSignal(p_coarse, p @ x_fine.values)


def interpolate_signal_points(x_fine, pts_fine: SamplePoints, pts_coarse: SamplePoints) -> np.ndarray:
    x = np.asarray(x_fine, dtype=float).reshape(-1)
    if x.size != len(pts_fine):
        raise GraphonError(f"{x.size} values for {len(pts_fine)} sample points")
    if len(pts_fine) < 2:
        raise GraphonError("the fine signal needs at least two sample points")
    return interpolation_matrix(pts_fine.points, pts_coarse.points) @ x


# ---------------------------------------------------------------------------
# Multi-layer plans
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PoolingLayer:
    size: int
    adjacency: np.ndarray
    partition: Partition | None = None
    points: SamplePoints | None = None

    @property
    def locations(self) -> np.ndarray:
        """Reference locations used by the signal interpolation rule."""
        if self.points is not None:
            return self.points.points
        return self.partition.midpoints


@dataclass(eq=False)
class PoolingPlan:
    method: str
    layer_sizes: list[int]
    seed: int
    layers: list[PoolingLayer] = field(default_factory=list)
    graphon: dict | None = None

    def transfer_matrix(self, layer: int) -> np.ndarray:
        """Interpolation map from layer ``layer`` signals to layer ``layer + 1``."""
        return interpolation_matrix(self.layers[layer].locations, self.layers[layer + 1].locations)

    def to_dict(self, adjacency_files: Sequence[str] | None = None) -> dict:
        out = {"method": self.method, "layer_sizes": list(self.layer_sizes), "seed": int(self.seed),
               "graphon": self.graphon, "layers": []}
        for k, layer in enumerate(self.layers):
            entry = {"size": layer.size}
            if adjacency_files is not None:
                entry["adjacency"] = adjacency_files[k]
            else:
                entry["adjacency_values"] = layer.adjacency.tolist()
            if layer.partition is not None:
                entry["breakpoints"] = layer.partition.breakpoints.tolist()
            if layer.points is not None:
                entry["points"] = layer.points.points.tolist()
            out["layers"].append(entry)
        return out

    def save(self, directory) -> Path:
        """Write plan.json plus one adjacency CSV per layer into ``directory``."""
        from .io import write_csv, write_json

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        names = []
        for k, layer in enumerate(self.layers):
            name = f"layer{k}_adjacency.csv"
            write_csv(directory / name, layer.adjacency)
            names.append(name)
        path = directory / "plan.json"
        write_json(path, self.to_dict(names))
        return path

    @classmethod
    def load(cls, path) -> "PoolingPlan":
        from .io import read_csv, read_json

        path = Path(path)
        data = read_json(path)
        layers = []
        for entry in data["layers"]:
            if "adjacency" in entry:
                adj = read_csv(path.parent / entry["adjacency"])
            else:
                adj = np.array(entry["adjacency_values"], dtype=float)
            part = Partition(entry["breakpoints"]) if "breakpoints" in entry else None
            if part is not None and np.array_equal(part.breakpoints, np.arange(part.n + 1) / part.n):
                part = Partition.uniform(part.n)
            pts = SamplePoints(entry["points"]) if "points" in entry else None
            layers.append(PoolingLayer(int(entry["size"]), adj, part, pts))
        return cls(data["method"], [int(s) for s in data["layer_sizes"]], int(data["seed"]),
                   layers, data.get("graphon"))


def build_pooling_plan(w: Graphon, method: str, layer_sizes: Sequence[int], seed: int = 0,
                       tol: float = DEFAULT_TOL, zero_diagonal: bool = False) -> PoolingPlan:
    """Generate every layer's graph from ``w`` with the chosen method.

    Layer k draws its randomness from its own stream (seed, k), so layers can be
    regenerated independently and the whole plan is a pure function of its inputs.
    """
    method = method.lower()
    if method not in METHODS:
        raise PoolingError(f"method must be one of {METHODS}, got {method!r}")
    sizes = [int(s) for s in layer_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise PoolingError("layer sizes must be positive integers")
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise PoolingError(f"layer sizes must be strictly decreasing, got {sizes}")
    if method == "m1":
        for a, b in zip(sizes, sizes[1:]):
            if a % b:
                warnings.warn(
                    f"M1 layer size {b} does not divide {a}; consecutive partitions are not "
                    "refinements of each other",
                    stacklevel=2,
                )
    layers = []
    for k, n in enumerate(sizes):
        if method == "m1":
            part = regular_partition(n)
            layers.append(PoolingLayer(n, pool_m2(w, part, tol), partition=part))
        elif method == "m2":
            part = random_partition(n, make_rng(seed, k))
            layers.append(PoolingLayer(n, pool_m2(w, part, tol), partition=part))
        else:
            pts = sample_points(n, make_rng(seed, k))
            layers.append(PoolingLayer(n, pool_m3(w, pts, zero_diagonal), points=pts))
    spec = w.to_dict() if hasattr(w, "to_dict") else None
    return PoolingPlan(method, sizes, int(seed), layers, spec)
