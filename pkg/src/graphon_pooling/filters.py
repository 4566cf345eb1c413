"""Polynomial convolutional filters on graphs and step graphons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .graphon import GraphonError, GraphonSignal, StepKernel, as_step, induced_graphon, step_signal

NORMALIZATIONS = ("raw", "graphon", "spectral")
DEFAULT_INTERVAL = (-1.0, 1.0)


@dataclass(frozen=True)
class PolyFilter:
    """h(t) = sum_k coeffs[k] t^k; the coefficient list length sets the degree."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.coeffs, dtype=float).reshape(-1))
        if not c:
            raise GraphonError("a filter needs at least one tap")
        if not all(np.isfinite(c)):
            raise GraphonError("filter taps must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def taps(self) -> int:
        return len(self.coeffs)

    def __call__(self, t):
        return P.polyval(np.asarray(t, dtype=float), self.coeffs)

    def derivative(self) -> "PolyFilter":
        d = P.polyder(self.coeffs) if self.taps > 1 else [0.0]
        return PolyFilter(tuple(d))

    def scaled(self, factor: float) -> "PolyFilter":
        return PolyFilter(tuple(factor * c for c in self.coeffs))

    def sup_norm(self, interval=DEFAULT_INTERVAL) -> float:
        """max |h(t)| over the interval (endpoints and interior critical points)."""
        a, b = interval
        cand = [a, b, *_real_roots_in(self.derivative().coeffs, a, b)]
        return float(np.max(np.abs(self(np.array(cand)))))


def flat_filter(scale: float = 1.0) -> PolyFilter:
    """scale * s(t^2) with the saturation s(u) = u - u^2 / 2.

    The response is flat at t = 0 (h'(0) = 0) and levels off at |t| = 1, where
    s'(1) = 0; on [-1, 1] its sup norm is scale / 2.
    """
    return PolyFilter((0.0, 0.0, scale, 0.0, -0.5 * scale))


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    matrix: np.ndarray
    normalization: str = "raw"

    def __post_init__(self):
        s = np.array(self.matrix, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise GraphonError(f"shift operator must be square, got shape {s.shape}")
        if not np.allclose(s, s.T, rtol=0.0, atol=1e-12):
            raise GraphonError("shift operator must be symmetric")
        if self.normalization not in NORMALIZATIONS:
            raise GraphonError(f"normalization must be one of {NORMALIZATIONS}")
        s.setflags(write=False)
        object.__setattr__(self, "matrix", s)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_adjacency(cls, adjacency, normalization: str = "raw") -> "ShiftOperator":
        a = np.asarray(adjacency, dtype=float)
        if normalization == "graphon":
            a = a / a.shape[0]
        elif normalization == "spectral":
            lam = np.max(np.abs(np.linalg.eigvalsh(a)))
            if lam > 0:
                a = a / lam
        elif normalization != "raw":
            raise GraphonError(f"normalization must be one of {NORMALIZATIONS}")
        return cls(a, normalization)


def _as_matrix(s) -> np.ndarray:
    return s.matrix if isinstance(s, ShiftOperator) else np.asarray(s, dtype=float)


def polynomial_apply(s: np.ndarray, coeffs, x: np.ndarray) -> np.ndarray:
    """sum_k coeffs[k] s^k x by Horner's rule; x may carry extra trailing columns."""
    y = coeffs[-1] * x
    for c in coeffs[-2::-1]:
        y = s @ y + c * x
    return y


def apply_graph_filter(s, f: PolyFilter, x) -> np.ndarray:
    m = _as_matrix(s)
    x = np.asarray(x, dtype=float)
    if x.shape[0] != m.shape[0]:
        raise GraphonError(f"signal length {x.shape[0]} does not match shift order {m.shape[0]}")
    return polynomial_apply(m, f.coeffs, x)


def graphon_shift_matrix(w: StepKernel) -> np.ndarray:
    """Action of T_W on step values: (T x)_v = sum_u W_uv mu_u x_u."""
    return w.values.T * w.partition.measures[None, :]


def apply_graphon_filter(w, f: PolyFilter, x: GraphonSignal) -> GraphonSignal:
    w = as_step(w)
    if x.partition != w.partition:
        from .graphon import common_refinement

        p = common_refinement(w.partition, x.partition)
        w, x = w.refine(p), x.refine(p)
    return GraphonSignal(w.partition, polynomial_apply(graphon_shift_matrix(w), f.coeffs, x.values))


def theorem1_residual(adjacency, f: PolyFilter, x) -> float:
    """Sup-norm gap between filtering on the induced graphon and filtering on
    the graph with the shift scaled by 1 / N, lifted to a step signal."""
    a = np.asarray(adjacency, dtype=float)
    x = np.asarray(x, dtype=float)
    graphon_side = apply_graphon_filter(induced_graphon(a), f, step_signal(x))
    graph_side = step_signal(apply_graph_filter(a / a.shape[0], f, x))
    return float(np.max(np.abs(graphon_side.values - graph_side.values)))


def frequency_response(f: PolyFilter, lambdas) -> np.ndarray:
    return f(np.asarray(lambdas, dtype=float))


def matrix_function(f: PolyFilter, m: np.ndarray) -> np.ndarray:
    """h(M) for a square matrix M."""
    return polynomial_apply(np.asarray(m, dtype=float), f.coeffs, np.eye(m.shape[0]))


def _real_roots_in(coeffs, a: float, b: float, imag_tol: float = 1e-9) -> list[float]:
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size < 2:
        return []
    roots = P.polyroots(c)
    real = roots[np.abs(roots.imag) <= imag_tol * np.maximum(1.0, np.abs(roots))].real
    return [float(r) for r in real if a <= r <= b]


def lipschitz_constant(f: PolyFilter, interval=DEFAULT_INTERVAL) -> float:
    """max |h'(t)| on [a, b], from the endpoints and the real roots of h''."""
    a, b = (float(v) for v in interval)
    if not a < b:
        raise GraphonError(f"interval must satisfy a < b, got {interval}")
    d1 = f.derivative()
    d2 = d1.derivative()
    cand = np.array([a, b, *_real_roots_in(d2.coeffs, a, b)])
    return float(np.max(np.abs(d1(cand))))
