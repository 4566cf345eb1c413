"""Distances and structural statistics for step graphons and kernels."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graphon import (
    GraphonError,
    GraphonSignal,
    Partition,
    StepKernel,
    as_step,
    common_refinement,
)

EXACT_CUT_MAX = 20
PERMUTATION_MAX = 8
MOTIF_MAX_VERTICES = 5
_CHUNK_BITS = 14


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class CutNormResult:
    value: float
    witness_row_set: tuple[int, ...]
    witness_col_set: tuple[int, ...]
    exact: bool
    sign: int = 1

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "witness_row_set": list(self.witness_row_set),
            "witness_col_set": list(self.witness_col_set),
            "method": "exact" if self.exact else "heuristic",
            "sign": self.sign,
        }


def common_refinement_diff(w1: StepKernel, w2: StepKernel) -> StepKernel:
    """Kernel w1 - w2 on the union of both partitions."""
    w1, w2 = as_step(w1), as_step(w2)
    p = common_refinement(w1.partition, w2.partition)
    return StepKernel(p, w1.refine(p).values - w2.refine(p).values)


def _mass_matrix(k: StepKernel) -> np.ndarray:
    mu = k.partition.measures
    return k.values * np.outer(mu, mu)


def _subset_bits(start: int, stop: int, n: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(float)


def cut_norm_exact(k) -> CutNormResult:
    """Exact cut norm of a step kernel by enumerating row sets.

    For a fixed row set S the best column set is read off the signs of the
    column sums, for both the kernel and its negation. Ties go to the smallest
    row-set bitmask.
    """
    k = as_step(k)
    n = k.n
    if n > EXACT_CUT_MAX:
        raise SizeError(
            f"exact cut norm is limited to {EXACT_CUT_MAX} blocks (got {n}); use cut_norm_heuristic"
        )
    m = _mass_matrix(k)
    best = (-1.0, 0, 1)
    total = 1 << n
    step = 1 << min(n, _CHUNK_BITS)
    for start in range(0, total, step):
        bits = _subset_bits(start, min(start + step, total), n)
        col = bits @ m
        pos = np.where(col > 0, col, 0.0).sum(axis=1)
        neg = -np.where(col < 0, col, 0.0).sum(axis=1)
        for vals, sign in ((pos, 1), (neg, -1)):
            i = int(np.argmax(vals))
            if vals[i] > best[0]:
                best = (float(vals[i]), start + i, sign)
    value, code, sign = best
    rows = tuple(int(i) for i in range(n) if (code >> i) & 1)
    col = m[list(rows)].sum(axis=0) if rows else np.zeros(n)
    cols = tuple(int(j) for j in np.flatnonzero(sign * col > 0))
    return CutNormResult(max(value, 0.0), rows, cols, True, sign)


def _alternate(m: np.ndarray, rows: np.ndarray, max_iter: int = 1000):
    """Alternating maximisation of 1_S^T m 1_T starting from a row indicator.

    Each half-step can only increase the objective, so the loop stops at a
    fixed point (or after ``max_iter`` sweeps on a tie cycle).
    """
    rows = rows.astype(float)
    for _ in range(max_iter):
        cols = (rows @ m > 0).astype(float)
        new_rows = (m @ cols > 0).astype(float)
        if np.array_equal(new_rows, rows):
            break
        rows = new_rows
    cols = (rows @ m > 0).astype(float)
    return float(rows @ m @ cols), rows, cols


def cut_norm_heuristic(k, restarts: int = 32, seed: int = 0, init_sets=None) -> CutNormResult:
    """Lower bound on the cut norm by alternating row/column sign optimisation.

    Starts from the full row set, every row set in ``init_sets`` (lists of block
    indices) and ``restarts`` random row sets, for the kernel and its negation.
    """
    from .pooling import make_rng

    k = as_step(k)
    n = k.n
    m = _mass_matrix(k)
    rng = make_rng(seed, 0xC07)
    starts = [np.ones(n)]
    for s in init_sets or ():
        v = np.zeros(n)
        v[list(s)] = 1.0
        starts.append(v)
    starts.extend((rng.random((restarts, n)) < 0.5).astype(float))
    best = (0.0, (), (), 1)
    for sign in (1, -1):
        sm = sign * m
        for start in starts:
            value, rows, cols = _alternate(sm, start)
            if value > best[0]:
                best = (value, tuple(np.flatnonzero(rows).tolist()), tuple(np.flatnonzero(cols).tolist()), sign)
    value, rows, cols, sign = best
    return CutNormResult(value, rows, cols, False, sign)


def cut_norm(k, exact_limit: int = EXACT_CUT_MAX, restarts: int = 32, seed: int = 0) -> CutNormResult:
    """Exact cut norm when the block count allows it, heuristic otherwise."""
    k = as_step(k)
    if k.n <= exact_limit:
        return cut_norm_exact(k)
    return cut_norm_heuristic(k, restarts=restarts, seed=seed)


def cut_value(k: StepKernel, rows, cols) -> float:
    """|integral of k over (union of row blocks) x (union of column blocks)|."""
    m = _mass_matrix(k)
    return abs(float(m[np.ix_(list(rows), list(cols))].sum())) if rows and cols else 0.0


def cut_distance_permutations(w1, w2) -> tuple[float, tuple[int, ...]]:
    """min over block relabelings pi of the exact cut norm of w1 - pi(w2).

    Both kernels must share one regular partition with at most 8 blocks (only
    then is a block relabeling measure preserving).
    """
    w1, w2 = as_step(w1), as_step(w2)
    if w1.partition != w2.partition or not w1.partition.regular:
        raise GraphonError("permutation search needs both kernels on the same regular partition")
    n = w1.n
    if n > PERMUTATION_MAX:
        raise SizeError(f"permutation search is limited to {PERMUTATION_MAX} blocks (got {n})")
    best = (np.inf, tuple(range(n)))
    for perm in itertools.permutations(range(n)):
        p = list(perm)
        diff = StepKernel(w1.partition, w1.values - w2.values[np.ix_(p, p)])
        value = cut_norm_exact(diff).value
        if value < best[0]:
            best = (value, perm)
    return best


def lp_norm(k, p: int = 2) -> float:
    k = as_step(k)
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    mu = k.partition.measures
    s = float(np.sum(np.abs(k.values) ** p * np.outer(mu, mu)))
    return s if p == 1 else float(np.sqrt(s))


def operator_norm(k) -> float:
    """Operator 2-norm of T_k (spectral norm of the measure-weighted matrix)."""
    k = as_step(k)
    return float(np.max(np.abs(np.linalg.eigvalsh(k.weighted())))) if k.n else 0.0


# ---------------------------------------------------------------------------
# Homomorphism densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Motif:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n_vertices < 1:
            raise GraphonError("a motif needs at least one vertex")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphonError("motifs may not have self-loops")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise GraphonError(f"edge ({u}, {v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphonError(f"duplicate edge {key}")
            seen.add(key)


MOTIFS = {
    "vertex": Motif(1, ()),
    "edge": Motif(2, ((0, 1),)),
    "path3": Motif(3, ((0, 1), (1, 2))),
    "triangle": Motif(3, ((0, 1), (1, 2), (0, 2))),
    "square": Motif(4, ((0, 1), (1, 2), (2, 3), (0, 3))),
}


def _check_motif(h: Motif):
    if h.n_vertices > MOTIF_MAX_VERTICES:
        raise SizeError(f"motifs are limited to {MOTIF_MAX_VERTICES} vertices (got {h.n_vertices})")


def hom_density_graph(h: Motif, adjacency) -> float:
    """Weighted homomorphism density by enumerating every vertex map V(H) -> V(G)."""
    _check_motif(h)
    a = np.asarray(adjacency, dtype=float)
    n = a.shape[0]
    k = h.n_vertices
    if k == 1:
        return 1.0
    total = 0.0
    # vertex 0's image fixed per chunk keeps memory at n^(k-1) maps
    rest = np.indices((n,) * (k - 1)).reshape(k - 1, -1)
    for first in range(n):
        maps = np.vstack([np.full(rest.shape[1], first), rest])
        weight = np.ones(maps.shape[1])
        for u, v in h.edges:
            weight *= a[maps[u], maps[v]]
        total += weight.sum()
    return float(total / n**k)


def hom_density_graphon(h: Motif, w) -> float:
    """t(H, W) for a step graphon: blockwise sum of edge products times block measures."""
    _check_motif(h)
    w = as_step(w)
    k = h.n_vertices
    mu = w.partition.measures
    letters = "abcde"[:k]
    operands, subs = [], []
    for u, v in h.edges:
        operands.append(w.values)
        subs.append(letters[u] + letters[v])
    for i in range(k):
        operands.append(mu)
        subs.append(letters[i])
    return float(np.einsum(",".join(subs) + "->", *operands))


# ---------------------------------------------------------------------------
# Spectrum
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Eigenpairs:
    eigenvalues: np.ndarray
    eigenfunctions: list[GraphonSignal]
    partition: Partition

    def matrix(self) -> np.ndarray:
        """Eigenfunction values as columns."""
        return np.column_stack([f.values for f in self.eigenfunctions])


def spectrum_graphon(w) -> Eigenpairs:
    """Eigenpairs of T_W restricted to step functions on w's partition.

    Eigenvalues are sorted by decreasing modulus; eigenfunctions have unit
    L2([0,1]) norm.
    """
    w = as_step(w)
    lam, u = np.linalg.eigh(w.weighted())
    order = np.argsort(-np.abs(lam), kind="stable")
    lam, u = lam[order], u[:, order]
    phi = u / np.sqrt(w.partition.measures)[:, None]
    funcs = [GraphonSignal(w.partition, phi[:, i]) for i in range(phi.shape[1])]
    return Eigenpairs(lam, funcs, w.partition)


def gphon_ft(x: GraphonSignal, eigenpairs: Eigenpairs) -> np.ndarray:
    """Coefficients <x, phi_j> in L2([0,1])."""
    p = eigenpairs.partition
    if x.partition != p:
        p = common_refinement(x.partition, p)
    xv = x.refine(p).values
    mu = p.measures
    return np.array([float(np.sum(mu * xv * f.refine(p).values)) for f in eigenpairs.eigenfunctions])
