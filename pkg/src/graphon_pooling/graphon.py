"""Graphons, partitions of [0,1] and piecewise-constant graphon signals.

Two graphon representations are supported:

ClosedFormGraphon
    One of the built-in smooth (or piecewise smooth) families, evaluated
    pointwise and integrated with composite Gauss-Legendre quadrature.
StepGraphon
    A symmetric block matrix over a partition of [0,1]; evaluation is a block
    lookup and integration is exact.

``StepKernel`` is the same block representation without the [0,1] range
restriction; differences of graphons live there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

EPS_PART = 1e-9
DEFAULT_TOL = 1e-10
GL_ORDER = 8
MAX_SUBDIVISION = 1 << 12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)


class GraphonError(ValueError):
    """Invalid graphon, partition or coordinate."""


def _check_unit(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise GraphonError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


@dataclass(frozen=True, eq=False)
class Partition:
    """Sorted breakpoints 0 = b_0 < b_1 < ... < b_n = 1."""

    breakpoints: np.ndarray
    regular: bool = False

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        if b.ndim != 1 or b.size < 2:
            raise GraphonError("a partition needs at least two breakpoints")
        if b[0] != 0.0 or b[-1] != 1.0:
            raise GraphonError("partition breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) < EPS_PART):
            raise GraphonError(
                f"partition intervals must be wider than {EPS_PART:g} (got min width "
                f"{np.diff(b).min():.3g})"
            )
        b.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)

    @classmethod
    def uniform(cls, n: int) -> "Partition":
        if int(n) != n or n < 1:
            raise GraphonError(f"number of intervals must be a positive integer, got {n!r}")
        n = int(n)
        return cls(np.arange(n + 1) / n, regular=True)

    def __len__(self) -> int:
        return self.breakpoints.size - 1

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints)

    def __hash__(self):
        return hash(self.breakpoints.tobytes())

    @property
    def n(self) -> int:
        return len(self)

    @property
    def measures(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def midpoints(self) -> np.ndarray:
        b = self.breakpoints
        return 0.5 * (b[:-1] + b[1:])

    def locate(self, x) -> np.ndarray:
        """0-based index of the interval containing each coordinate.

        Intervals are right-closed, (b_i, b_{i+1}], except that 0 belongs to
        the first one. On regular partitions this is exactly ceil(n x) - 1.
        """
        x = _check_unit(x)
        n = self.n
        if self.regular:
            idx = np.ceil(n * x).astype(np.int64) - 1
        else:
            idx = np.searchsorted(self.breakpoints, x, side="left") - 1
        return np.clip(idx, 0, n - 1)

    def is_refinement_of(self, other: "Partition", atol: float = 1e-12) -> bool:
        """True when every breakpoint of ``other`` is a breakpoint of self."""
        b = self.breakpoints
        pos = np.clip(np.searchsorted(b, other.breakpoints), 0, b.size - 1)
        lo = np.clip(pos - 1, 0, b.size - 1)
        dist = np.minimum(np.abs(b[pos] - other.breakpoints), np.abs(b[lo] - other.breakpoints))
        return bool(np.all(dist <= atol))

    def overlaps(self, other: "Partition") -> np.ndarray:
        """Matrix O with O[i, k] = |I_i ∩ J_k| (self intervals by other intervals)."""
        a, b = self.breakpoints, other.breakpoints
        lo = np.maximum(a[:-1, None], b[None, :-1])
        hi = np.minimum(a[1:, None], b[None, 1:])
        return np.clip(hi - lo, 0.0, None)

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist()}


def common_refinement(p: Partition, q: Partition, atol: float = 1e-12) -> Partition:
    """Partition whose breakpoints are the union of both breakpoint sets."""
    if p == q:
        return p
    merged = np.sort(np.concatenate([p.breakpoints, q.breakpoints]))
    keep = np.concatenate([[True], np.diff(merged) > atol])
    merged = merged[keep]
    merged[-1] = 1.0
    regular = False
    n = merged.size - 1
    if np.allclose(merged, np.arange(n + 1) / n, rtol=0.0, atol=atol):
        merged = np.arange(n + 1) / n
        regular = True
    return Partition(merged, regular=regular)


# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphonSignal:
    """Piecewise-constant function on [0,1], one value per partition interval."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != len(self.partition):
            raise GraphonError(
                f"signal has {v.size} values for a partition with {len(self.partition)} intervals"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return self.values[self.partition.locate(t)]

    def refine(self, partition: Partition) -> "GraphonSignal":
        """Same function expressed on a refinement of its partition."""
        if partition == self.partition:
            return self
        idx = self.partition.locate(partition.midpoints)
        return GraphonSignal(partition, self.values[idx])

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.partition.measures * self.values**2)))

    def inner(self, other: "GraphonSignal") -> float:
        if other.partition != self.partition:
            p = common_refinement(self.partition, other.partition)
            return self.refine(p).inner(other.refine(p))
        return float(np.sum(self.partition.measures * self.values * other.values))


def step_signal(x) -> GraphonSignal:
    """Lift a graph signal to the graphon signal t -> x(ceil(t N))."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise GraphonError("graph signal entries must be finite")
    return GraphonSignal(Partition.uniform(x.size), x)


# ---------------------------------------------------------------------------
# Graphons
# ---------------------------------------------------------------------------


def _exponential(x, y, beta):
    return np.exp(-beta * (x - y) ** 2)


def _bilinear(x, y):
    return x * y


def _polynomial(x, y):
    return 0.5 * (x**2 + y**2)


def _logmax(x, y):
    return np.log1p(np.maximum(x, y))


def _absolute(x, y):
    return np.abs(x - y)


# name -> (function, number of parameters, smooth across the diagonal)
FAMILIES: dict[str, tuple[Callable, int, bool]] = {
    "exponential": (_exponential, 1, True),
    "bilinear": (_bilinear, 0, True),
    "polynomial": (_polynomial, 0, True),
    "logmax": (_logmax, 0, False),
    "absolute": (_absolute, 0, False),
}


class Graphon:
    """Symmetric function [0,1]^2 -> [0,1]."""

    def __call__(self, x, y):
        x = _check_unit(x, "x")
        y = _check_unit(y, "y")
        return self._eval(x, y)

    def _eval(self, x, y):
        raise NotImplementedError

    def integrate_box(self, x_range, y_range, tol: float = DEFAULT_TOL) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ClosedFormGraphon(Graphon):
    family: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GraphonError(f"unknown graphon family {self.family!r}")
        params = tuple(float(p) for p in self.params)
        nparams = FAMILIES[self.family][1]
        if len(params) != nparams:
            raise GraphonError(f"family {self.family!r} takes {nparams} parameter(s), got {len(params)}")
        object.__setattr__(self, "params", params)

    @property
    def kinked(self) -> bool:
        """True when the family is not smooth across the diagonal x = y."""
        return not FAMILIES[self.family][2]

    def _eval(self, x, y):
        func = FAMILIES[self.family][0]
        return np.clip(func(x, y, *self.params), 0.0, 1.0)

    def integrate_box(self, x_range, y_range, tol: float = DEFAULT_TOL) -> float:
        (a, b), (c, d) = _check_box(x_range, y_range)
        return float(integrate_boxes(self, [a], [b], [c], [d], tol)[0])

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}


def exponential(beta: float = 2.3) -> ClosedFormGraphon:
    return ClosedFormGraphon("exponential", (beta,))


class StepKernel:
    """Symmetric block-constant kernel over a partition (values unrestricted)."""

    def __init__(self, partition: Partition, values):
        v = np.array(values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise GraphonError(f"block values must be a square matrix, got shape {v.shape}")
        if v.shape[0] != len(partition):
            raise GraphonError(
                f"{v.shape[0]}x{v.shape[0]} values do not match a partition with "
                f"{len(partition)} intervals"
            )
        if not np.all(np.isfinite(v)):
            raise GraphonError("block values must be finite")
        if not np.array_equal(v, v.T):
            raise GraphonError("block values must be symmetric")
        v.setflags(write=False)
        self.partition = partition
        self.values = v

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __call__(self, x, y):
        i = self.partition.locate(x)
        j = self.partition.locate(y)
        return self.values[i, j]

    def integrate_box(self, x_range, y_range, tol: float = DEFAULT_TOL) -> float:
        (a, b), (c, d) = _check_box(x_range, y_range)
        br = self.partition.breakpoints
        ox = np.clip(np.minimum(br[1:], b) - np.maximum(br[:-1], a), 0.0, None)
        oy = np.clip(np.minimum(br[1:], d) - np.maximum(br[:-1], c), 0.0, None)
        return float(ox @ self.values @ oy)

    def weighted(self) -> np.ndarray:
        """diag(sqrt mu) V diag(sqrt mu): the operator in an orthonormal step basis."""
        s = np.sqrt(self.partition.measures)
        return s[:, None] * self.values * s[None, :]

    def refine(self, partition: Partition) -> "StepKernel":
        if partition == self.partition:
            return self
        idx = self.partition.locate(partition.midpoints)
        return type(self)(partition, self.values[np.ix_(idx, idx)])

    def to_dict(self) -> dict:
        return {"breakpoints": self.partition.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict):
        return cls(Partition(data["breakpoints"]), data["values"])


class StepGraphon(StepKernel, Graphon):
    """Step graphon: a StepKernel with values in [0,1]."""

    def __init__(self, partition: Partition, values):
        super().__init__(partition, values)
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise GraphonError("graphon values must lie in [0, 1]")

    def __call__(self, x, y):
        return StepKernel.__call__(self, x, y)


def induced_graphon(adjacency) -> StepGraphon:
    """Step graphon W_G(x, y) = A(ceil(N x), ceil(N y)) on the regular N-partition."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphonError(f"adjacency must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=0.0):
        raise GraphonError("adjacency must be symmetric")
    return StepGraphon(Partition.uniform(a.shape[0]), a)


def constant_graphon(c: float) -> StepGraphon:
    return StepGraphon(Partition.uniform(1), [[c]])


def eval_graphon(w: Graphon, x, y):
    out = w(x, y)
    return float(out) if np.ndim(out) == 0 else out


def integrate_box(w: Graphon, x_range, y_range, tol: float = DEFAULT_TOL) -> float:
    if tol <= 0:
        raise GraphonError("tol must be positive")
    return w.integrate_box(x_range, y_range, tol)


def _check_box(x_range, y_range):
    (a, b), (c, d) = x_range, y_range
    for lo, hi, name in ((a, b, "x_range"), (c, d, "y_range")):
        if not (0.0 <= lo <= hi <= 1.0):
            raise GraphonError(f"{name} must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
    return (float(a), float(b)), (float(c), float(d))


# ---------------------------------------------------------------------------
# Quadrature for closed-form graphons
# ---------------------------------------------------------------------------


def _gl_tensor(func, a, b, c, d, m):
    """Composite tensor Gauss-Legendre over m x m uniform sub-cells of each box.

    a, b, c, d are arrays (one entry per box). Returns one estimate per box.
    """
    t = (np.arange(m)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)).reshape(-1) / m
    wq = np.tile(_GL_WEIGHTS, m) / (2.0 * m)
    hx = (b - a)[:, None]
    hy = (d - c)[:, None]
    xs = a[:, None] + hx * t[None, :]
    ys = c[:, None] + hy * t[None, :]
    vals = func(xs[:, :, None], ys[:, None, :])
    return np.einsum("bij,i,j->b", vals, wq, wq) * (hx[:, 0] * hy[:, 0])


def _gl_triangle_split(func, a, b, c, d, m):
    """Iterated Gauss-Legendre that never places a cell across the line y = x.

    The outer x-range is broken at c and d, and each inner y-range at x, so
    every integrand piece is smooth for families with a kink on the diagonal.
    """
    out = np.zeros(a.size)
    t = (np.arange(m)[:, None] + 0.5 * (_GL_NODES[None, :] + 1.0)).reshape(-1) / m
    wq = np.tile(_GL_WEIGHTS, m) / (2.0 * m)
    for k in range(a.size):
        cuts = sorted({a[k], b[k], *(v for v in (c[k], d[k]) if a[k] < v < b[k])})
        total = 0.0
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            if x1 <= x0:
                continue
            xs = x0 + (x1 - x0) * t
            # inner pieces [c, min(d, x)] and [max(c, x), d]
            lo1 = np.full_like(xs, c[k])
            hi1 = np.clip(xs, c[k], d[k])
            lo2 = hi1
            hi2 = np.full_like(xs, d[k])
            inner = np.zeros_like(xs)
            for lo, hi in ((lo1, hi1), (lo2, hi2)):
                h = hi - lo
                ys = lo[:, None] + h[:, None] * t[None, :]
                inner += (func(xs[:, None], ys) @ wq) * h
            total += (x1 - x0) * float(inner @ wq)
        out[k] = total
    return out


def integrate_boxes(w: ClosedFormGraphon, a, b, c, d, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Integrals of w over boxes [a_k, b_k] x [c_k, d_k].

    Each box is refined by doubling a uniform m x m subdivision until two
    successive composite Gauss-Legendre estimates agree to ``tol``. Boxes of
    kinked families that straddle the diagonal are split along it first.
    """
    a, b, c, d = (np.asarray(v, dtype=float).reshape(-1) for v in (a, b, c, d))
    func = w._eval
    out = np.empty(a.size)
    straddle = np.zeros(a.size, dtype=bool)
    if w.kinked:
        straddle = (np.maximum(a, c) < np.minimum(b, d))
    for mask, rule in ((~straddle, _gl_tensor), (straddle, _gl_triangle_split)):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        m = 1
        prev = rule(func, a[idx], b[idx], c[idx], d[idx], m)
        while True:
            m *= 2
            cur = rule(func, a[idx], b[idx], c[idx], d[idx], m)
            done = np.abs(cur - prev) <= tol
            out[idx[done]] = cur[done]
            idx, prev = idx[~done], cur[~done]
            if idx.size == 0:
                break
            if m >= MAX_SUBDIVISION:
                raise GraphonError(
                    f"quadrature did not reach tol={tol:g} after {m}x{m} subdivision"
                )
    return out


# ---------------------------------------------------------------------------
# Spec mini-language
# ---------------------------------------------------------------------------


def parse_graphon(spec: str) -> Graphon:
    """Build a graphon from ``exp:<beta>``, ``bilinear``, ``poly``, ``logmax``,
    ``absdiff``, ``const:<c>`` or ``step:<path>``."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name in ("exp", "exponential"):
        return exponential(float(arg) if arg else 2.3)
    if name == "bilinear":
        return ClosedFormGraphon("bilinear")
    if name in ("poly", "polynomial"):
        return ClosedFormGraphon("polynomial")
    if name == "logmax":
        return ClosedFormGraphon("logmax")
    if name in ("absdiff", "absolute", "abs"):
        return ClosedFormGraphon("absolute")
    if name in ("const", "constant"):
        return constant_graphon(float(arg))
    if name == "step":
        from . import io

        return io.load_graphon(arg)
    raise GraphonError(f"unknown graphon spec {spec!r}")


def graphon_from_dict(data: dict) -> Graphon:
    if "family" in data:
        return ClosedFormGraphon(data["family"], tuple(data.get("params", ())))
    return StepGraphon(Partition(data["breakpoints"]), data["values"])


def as_step(w: Graphon | StepKernel | Sequence) -> StepKernel:
    if isinstance(w, StepKernel):
        return w
    if isinstance(w, Graphon):
        raise GraphonError("a step graphon is required here")
    return induced_graphon(w)


__all__ = [
    "EPS_PART",
    "DEFAULT_TOL",
    "GraphonError",
    "Partition",
    "common_refinement",
    "GraphonSignal",
    "step_signal",
    "Graphon",
    "ClosedFormGraphon",
    "exponential",
    "StepKernel",
    "StepGraphon",
    "induced_graphon",
    "constant_graphon",
    "eval_graphon",
    "integrate_box",
    "integrate_boxes",
    "parse_graphon",
    "graphon_from_dict",
    "as_step",
]
