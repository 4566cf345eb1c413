"""Numerical checks of the graphon pooling error bounds.

Quantities that involve the graphon W itself use a fine regular M1 grid as a
stand-in ("fine proxy"); all operators are then step kernels on a common
partition, so operator norms, Hilbert-Schmidt norms and filter responses are
finite-dimensional computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .filters import PolyFilter, flat_filter, lipschitz_constant, matrix_function
from .graphon import DEFAULT_TOL, Graphon, Partition, StepKernel, induced_graphon
from .metrics import (
    common_refinement_diff,
    cut_norm_exact,
    cut_norm_heuristic,
    lp_norm,
    operator_norm,
)
from .pooling import build_pooling_plan, make_rng, pool_m1

THEOREMS = ("1", "2", "3", "4", "5", "6", "lemma1")
IDENTITY_TOL = 1e-9
DEFAULT_FINE_N = 256
EXACT_LIMIT = 16


class PreconditionError(ValueError):
    pass


@dataclass
class BoundReport:
    theorem: str
    params: dict
    trials: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def n_pass(self) -> int:
        return sum(1 for t in self.trials if t.get("pass"))

    @property
    def n_fail(self) -> int:
        return len(self.trials) - self.n_pass

    @property
    def passed(self) -> bool:
        return bool(self.trials) and self.n_fail == 0

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "params": self.params, "trials": self.trials,
                "notes": self.notes, "n_pass": self.n_pass, "n_fail": self.n_fail,
                "passed": self.passed}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def fine_proxy(w: Graphon, fine_n: int, tol: float = DEFAULT_TOL):
    """Step stand-in for w: its M1 graph on the regular fine_n grid."""
    return induced_graphon(pool_m1(w, fine_n, tol))


def _refined(k: StepKernel, partition: Partition) -> StepKernel:
    return k.refine(partition)


def _cut(k: StepKernel, seed: int = 0, init_sets=None):
    if k.n <= EXACT_LIMIT:
        return cut_norm_exact(k)
    return cut_norm_heuristic(k, restarts=32, seed=seed, init_sets=init_sets)


def _lift(rows, coarse: Partition, fine: Partition) -> list[int]:
    owner = coarse.locate(fine.midpoints)
    return np.flatnonzero(np.isin(owner, list(rows))).tolist()


def _sym_spectral_norm(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))))


def _gamma(xi: StepKernel) -> float:
    op = operator_norm(xi)
    return lp_norm(xi, 2) / op if op > 0 else 1.0


def _random_flat_filter(rng, max_scale: float = 2.0) -> PolyFilter:
    scale = rng.uniform(0.25, max_scale) * rng.choice([-1.0, 1.0])
    return flat_filter(scale)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def check_theorem1(trials: int = 50, n_max: int = 30, k_max: int = 5, seed: int = 42) -> BoundReport:
    from .filters import theorem1_residual

    rep = BoundReport("1", {"trials": trials, "n_max": n_max, "k_max": k_max, "seed": seed,
                            "tolerance": IDENTITY_TOL})
    for t in range(trials):
        rng = make_rng(seed, 1, t)
        n = int(rng.integers(1, n_max + 1))
        a = rng.random((n, n))
        a = np.triu(a) + np.triu(a, 1).T
        k = int(rng.integers(1, k_max + 1))
        coeffs = rng.uniform(-1.0, 1.0, k)
        x = rng.standard_normal(n)
        r = theorem1_residual(a, PolyFilter(tuple(coeffs)), x)
        rep.trials.append({"trial": t, "n": n, "taps": k, "residual": r, "pass": r <= IDENTITY_TOL})
    rep.notes["max_residual"] = max((t["residual"] for t in rep.trials), default=0.0)
    return rep


def check_theorem2(w: Graphon, sizes=(4, 8, 16, 32), fine_n: int = 64, seed: int = 0,
                   tol: float = DEFAULT_TOL) -> BoundReport:
    """Cut-norm distance from the fine proxy to the M1 graphs of increasing size.

    Passes when the estimates do not increase with N and each is at most
    2 / sqrt(log N).
    """
    sizes = [int(s) for s in sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be increasing")
    if any(s < 2 for s in sizes):
        raise ValueError("N = 1 is excluded (log N = 0)")
    if any(fine_n % s for s in sizes):
        raise ValueError("fine_n must be a multiple of every size")
    rep = BoundReport("2", {"sizes": sizes, "fine_n": fine_n, "seed": seed,
                            "graphon": getattr(w, "to_dict", lambda: None)()})
    wf = fine_proxy(w, fine_n, tol)
    kernels = [common_refinement_diff(wf, induced_graphon(pool_m1(w, n, tol))) for n in sizes]
    first = [_cut(k, seed) for k in kernels]
    # every witness is valid for every kernel (same fine partition), so share them
    witnesses = [r.witness_row_set for r in first if r.witness_row_set]
    results = [_cut(k, seed, init_sets=witnesses) if k.n > EXACT_LIMIT else r
                for k, r in zip(kernels, first)]
    prev = np.inf
    for n, k, r in zip(sizes, kernels, results):
        bound = 2.0 / math.sqrt(math.log(n))
        ok = r.value <= bound and r.value <= prev + 1e-12
        rep.trials.append({"n": n, "cut_norm": r.value, "exact": r.exact, "bound": bound,
                           "bound_inf_to_1": 8.0 / math.sqrt(math.log(n)),
                           "inf_to_1_bracket": [r.value, 4.0 * r.value],
                           "l1_norm": lp_norm(k, 1), "monotone": r.value <= prev + 1e-12,
                           "pass": bool(ok)})
        prev = r.value
    return rep


def check_lemma1(w: Graphon, n: int, refine_factor: int = 4, fine_n: int | None = None,
                 seed: int = 0, tol: float = DEFAULT_TOL) -> BoundReport:
    """Compare ||W_H - W_G|| (H: M1 at refine_factor * n) with the proxy ||W - W_G||."""
    if not 1 <= refine_factor <= 4:
        raise ValueError("refine_factor must be between 1 and 4")
    m = refine_factor * n
    if fine_n is None:
        fine_n = m * max(1, -(-DEFAULT_FINE_N // m))
    if fine_n % m:
        raise ValueError("fine_n must be a multiple of refine_factor * n")
    wg = induced_graphon(pool_m1(w, n, tol))
    wh = induced_graphon(pool_m1(w, m, tol))
    wf = fine_proxy(w, fine_n, tol)
    kh = common_refinement_diff(wh, wg)
    rh = _cut(kh, seed)
    kf = common_refinement_diff(wf, wg)
    lifted = [_lift(rh.witness_row_set, kh.partition, kf.partition)] if rh.witness_row_set else []
    rf = _cut(kf, seed, init_sets=lifted)
    rep = BoundReport("lemma1", {"n": n, "refine_factor": refine_factor, "fine_n": fine_n, "seed": seed,
                                 "graphon": getattr(w, "to_dict", lambda: None)()})
    rep.trials.append({"cut_wh_minus_wg": rh.value, "cut_w_minus_wg": rf.value,
                       "gap": rf.value - rh.value, "pass": rh.value <= rf.value + 1e-9})
    return rep


def check_theorem3(w: Graphon, n_list=(16, 32), trials: int = 20, seed: int = 0,
                   fine_n: int = DEFAULT_FINE_N, min_n: int = 16, tol: float = DEFAULT_TOL,
                   filters=None) -> BoundReport:
    """||h(T_W) - h(T_{W_G})||_2 against gamma * C * sqrt(8 ||W - W_G||_cut).

    Each trial draws a flat-near-zero filter; the refined-partition variant of
    the bound (H at 4n) is reported alongside. Trials with n < min_n are
    reported but do not count towards the verdict.
    """
    rep = BoundReport("3", {"n_list": list(n_list), "trials": trials, "seed": seed, "fine_n": fine_n,
                            "min_n": min_n, "graphon": getattr(w, "to_dict", lambda: None)()})
    wf = fine_proxy(w, fine_n, tol)
    fine = wf.partition
    mf = wf.weighted()
    cache = {}
    for n in sorted(set(n_list)):
        wg = induced_graphon(pool_m1(w, n, tol))
        xi = common_refinement_diff(wf, wg)
        cut = _cut(xi, seed)
        entry = {"mg": _refined(wg, fine).weighted(), "gamma": _gamma(xi), "cut": cut.value,
                 "op_norm": operator_norm(xi), "hs_norm": lp_norm(xi, 2)}
        if fine_n % (4 * n) == 0:
            wh = induced_graphon(pool_m1(w, 4 * n, tol))
            entry["cut_h"] = _cut(common_refinement_diff(wh, wg), seed).value
        cache[n] = entry
    for t in range(trials):
        rng = make_rng(seed, 3, t)
        n = int(n_list[t % len(n_list)])
        h = filters[t] if filters is not None else _random_flat_filter(rng)
        c = lipschitz_constant(h)
        e = cache[n]
        lhs = _sym_spectral_norm(matrix_function(h, mf) - matrix_function(h, e["mg"]))
        rhs = e["gamma"] * c * math.sqrt(8.0 * e["cut"])
        rec = {"trial": t, "n": n, "coeffs": list(h.coeffs), "lipschitz": c, "gamma": e["gamma"],
               "cut_norm": e["cut"], "op_norm_xi": e["op_norm"], "lhs": lhs, "rhs": rhs,
               "slack": rhs - lhs, "counted": n >= min_n}
        if "cut_h" in e:
            rec["rhs_refined"] = e["gamma"] * c * math.sqrt(8.0 * e["cut_h"])
        rec["pass"] = bool(lhs <= rhs) if n >= min_n else True
        rep.trials.append(rec)
    return rep


def _relu(v):
    return np.maximum(v, 0.0)


def check_theorem4(w: Graphon, sizes=(64, 32, 16), trials: int = 10, seed: int = 0,
                   fine_n: int = DEFAULT_FINE_N, filters=None, signals=None,
                   tol: float = DEFAULT_TOL) -> BoundReport:
    """Gphon-NN cascade on T_W versus the cascade on the pooled layers T_{W_{G_l}}.

    Both cascades act on L2[0,1] (represented on the fine grid): layer l applies
    h_l to the current signal and then ReLU. Filters must satisfy |h_l| <= 1 on
    [-1, 1].
    """
    plan = build_pooling_plan(w, "m1", list(sizes), seed, tol)
    wf = fine_proxy(w, fine_n, tol)
    fine = wf.partition
    mu = fine.measures
    tf = wf.values * mu[None, :]
    layer_ops, gammas, cuts = [], [], []
    for layer in plan.layers:
        wg = induced_graphon(layer.adjacency)
        xi = common_refinement_diff(wf, wg)
        gammas.append(_gamma(xi))
        cuts.append(_cut(xi, seed).value)
        layer_ops.append(_refined(wg, fine).values * mu[None, :])
    rep = BoundReport("4", {"sizes": list(sizes), "trials": trials, "seed": seed, "fine_n": fine_n,
                            "graphon": getattr(w, "to_dict", lambda: None)()})
    rep.notes.update({"gamma_per_layer": gammas, "cut_per_layer": cuts})
    gamma = max(gammas)
    for t in range(trials):
        rng = make_rng(seed, 4, t)
        hs = filters[t] if filters is not None else [
            _random_flat_filter(rng, max_scale=2.0) for _ in plan.layers]
        for h in hs:
            if h.sup_norm() > 1.0 + 1e-12:
                raise PreconditionError(f"filter {h.coeffs} exceeds unit sup norm on [-1, 1]")
        x = signals[t] if signals is not None else rng.standard_normal(fine.n)
        x = np.asarray(x, dtype=float)
        ideal, pooled = x.copy(), x.copy()
        for h, tg in zip(hs, layer_ops):
            ideal = _relu(_poly(h, tf, ideal))
            pooled = _relu(_poly(h, tg, pooled))
        lhs = float(np.sqrt(np.sum(mu * (ideal - pooled) ** 2)))
        xnorm = float(np.sqrt(np.sum(mu * x**2)))
        c = max(lipschitz_constant(h) for h in hs)
        rhs = math.sqrt(8.0) * c * gamma * sum(math.sqrt(v) for v in cuts) * xnorm
        rep.trials.append({"trial": t, "lhs": lhs, "rhs": rhs, "lipschitz": c, "gamma": gamma,
                           "x_norm": xnorm, "slack": rhs - lhs, "pass": bool(lhs <= rhs)})
    return rep


def _poly(h: PolyFilter, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    from .filters import polynomial_apply

    return polynomial_apply(t, h.coeffs, x)


def check_theorem5(w: Graphon, eps: float = 0.05, n_pool: int = 8, trials: int = 10, seed: int = 0,
                   fine_n: int = 64, tol: float = DEFAULT_TOL) -> BoundReport:
    """Pool two noisy estimates of W with M1 and compare the pooled graphs."""
    if fine_n % n_pool:
        raise ValueError("fine_n must be a multiple of n_pool")
    a = pool_m1(w, fine_n, tol)
    wf = induced_graphon(a)
    rep = BoundReport("5", {"eps": eps, "n_pool": n_pool, "trials": trials, "seed": seed,
                            "fine_n": fine_n, "graphon": getattr(w, "to_dict", lambda: None)()})
    pre_bound = eps / n_pool**4
    for t in range(trials):
        rng = make_rng(seed, 5, t)
        hs, pre, pooled = [], [], []
        for _ in range(2):
            e = rng.uniform(-1.0, 1.0, (fine_n, fine_n))
            e = np.triu(e) + np.triu(e, 1).T
            rms = math.sqrt(float(np.mean(e**2)))
            e *= 0.999 * eps / rms if rms > 0 else 0.0
            g = induced_graphon(np.clip(a + e, 0.0, 1.0))
            hs.append(lp_norm(common_refinement_diff(wf, g), 2))
            h = induced_graphon(pool_m1(g, n_pool, tol))
            pc = _cut(common_refinement_diff(g, h), seed).value
            pre.append("satisfied" if 4.0 * pc <= pre_bound else
                       "violated" if pc > pre_bound else "undetermined")
            pooled.append(h)
        d = cut_norm_exact(common_refinement_diff(pooled[0], pooled[1])).value
        rep.trials.append({"trial": t, "hs_distance": hs, "within_eps": all(v <= eps for v in hs),
                           "precondition": pre, "cut_h1_h2": d, "bound": 32.0 * eps,
                           "pass": bool(d <= 32.0 * eps and all(v <= eps for v in hs))})
    return rep


def check_theorem6(w: Graphon, n: int = 16, drop_fraction: float = 0.1, trials: int = 10,
                   seed: int = 0, fine_n: int = DEFAULT_FINE_N, filter: PolyFilter | None = None,
                   include_drop_all: bool = True, tol: float = DEFAULT_TOL) -> BoundReport:
    """Edge dropping: triangle inequality on operator norms, plus the filter bound (reported).

    With ``include_drop_all`` the last trial removes every entry (diagonal
    included), so that T_0 = -T_{W_G}.
    """
    h = filter or flat_filter(1.0)
    c = lipschitz_constant(h)
    a = pool_m1(w, n, tol)
    wg = induced_graphon(a)
    wf = fine_proxy(w, fine_n, tol)
    fine = wf.partition
    xi = common_refinement_diff(wf, wg)
    base = operator_norm(xi)
    gamma = _gamma(xi)
    first_order = gamma * c * math.sqrt(8.0 * _cut(xi, seed).value)
    mf = wf.weighted()
    mg = _refined(wg, fine).weighted()
    rep = BoundReport("6", {"n": n, "drop_fraction": drop_fraction, "trials": trials, "seed": seed,
                            "fine_n": fine_n, "filter": list(h.coeffs),
                            "graphon": getattr(w, "to_dict", lambda: None)()})
    iu, ju = np.triu_indices(n, 1)
    for t in range(trials):
        rng = make_rng(seed, 6, t)
        a0 = np.zeros_like(a)
        drop_all = include_drop_all and t == trials - 1
        if drop_all or drop_fraction >= 1.0:
            a0 = -a.copy()
        else:
            m = int(round(drop_fraction * iu.size))
            pick = rng.choice(iu.size, size=m, replace=False)
            a0[iu[pick], ju[pick]] = -a[iu[pick], ju[pick]]
            a0[ju[pick], iu[pick]] = -a[ju[pick], iu[pick]]
        t0 = StepKernel(wg.partition, a0)
        dropped = StepKernel(wg.partition, a + a0)
        lhs = operator_norm(common_refinement_diff(wf, dropped))
        t0_norm = operator_norm(t0)
        rhs = base + t0_norm
        # filter bound, reported only
        m0 = _refined(t0, fine).weighted()
        comm = mg @ m0 - m0 @ mg
        denom = operator_norm(wg) * t0_norm
        delta = float(np.linalg.norm(comm, 2)) / denom if denom > 0 else 0.0
        lhs2 = _sym_spectral_norm(matrix_function(h, mf) - matrix_function(h, mg + m0))
        rhs2 = first_order + c * (1.0 + delta) * t0_norm
        rep.trials.append({"trial": t, "drop_all": bool(drop_all), "lhs": lhs, "rhs": rhs,
                           "op_norm_w_minus_wg": base, "op_norm_t0": t0_norm, "margin": rhs - lhs,
                           "filter_lhs": lhs2, "filter_rhs": rhs2, "delta": delta,
                           "filter_bound_holds": bool(lhs2 <= rhs2),
                           "pass": bool(lhs <= rhs + IDENTITY_TOL)})
    return rep


def run_check(theorem: str, w: Graphon, seed: int = 42, **kwargs) -> BoundReport:
    theorem = str(theorem).lower()
    if theorem == "1":
        return check_theorem1(seed=seed, **kwargs)
    if theorem == "2":
        return check_theorem2(w, seed=seed, **kwargs)
    if theorem == "3":
        return check_theorem3(w, seed=seed, **kwargs)
    if theorem == "4":
        return check_theorem4(w, seed=seed, **kwargs)
    if theorem == "5":
        return check_theorem5(w, seed=seed, **kwargs)
    if theorem == "6":
        return check_theorem6(w, seed=seed, **kwargs)
    if theorem == "lemma1":
        kwargs.setdefault("n", 4)
        return check_lemma1(w, seed=seed, **kwargs)
    raise ValueError(f"unknown check {theorem!r}; choose from {THEOREMS}")
