"""Command-line entry point: ``graphon-pool <subcommand> ...``.

Every subcommand that takes ``--out DIR`` writes its artifacts there together
with a ``manifest.json`` (artifact list plus a hash of the resolved config).
Errors are reported as one JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .filters import NORMALIZATIONS, PolyFilter, ShiftOperator, apply_graph_filter, apply_graphon_filter
from .graphon import Partition, StepKernel, induced_graphon, parse_graphon, step_signal
from .io import ParseError, load_kernel, matrix_to_csv, read_csv, save_weights, write_csv, write_json
from .metrics import (
    MOTIFS,
    SizeError,
    common_refinement_diff,
    cut_distance_permutations,
    cut_norm,
    cut_norm_exact,
    cut_norm_heuristic,
    hom_density_graph,
    hom_density_graphon,
    spectrum_graphon,
)
from .pooling import METHODS, build_pooling_plan

SEED_ENV = "GRAPHON_POOL_SEED"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        self.cause = exc
        super().__init__(f"{stage}: {exc}")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, artifacts) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    return path


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_step(args) -> StepKernel:
    """Kernel from ``--a`` (CSV adjacency or JSON kernel) or from ``--graphon`` pooled with M1."""
    if getattr(args, "a", None):
        path = Path(args.a)
        if path.suffix.lower() == ".json":
            return load_kernel(path)
        m = read_csv(path)
        return StepKernel(Partition.uniform(m.shape[0]), m)
    if getattr(args, "graphon", None):
        from .pooling import pool_m1

        return induced_graphon(pool_m1(parse_graphon(args.graphon), args.n))
    raise ValueError("need --a or --graphon")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_pool(args) -> int:
    w = parse_graphon(args.graphon)
    plan = build_pooling_plan(w, args.method, args.sizes, args.seed, args.tol, args.zero_diagonal)
    if args.out is None:
        if len(plan.layers) == 1:
            sys.stdout.write(matrix_to_csv(plan.layers[0].adjacency))
        else:
            _emit(plan.to_dict())
        return 0
    out = Path(args.out)
    plan_name = "plan.json"
    if out.suffix.lower() == ".json":
        out, plan_name = out.parent, out.name
    plan.save(out)
    if plan_name != "plan.json":
        (out / "plan.json").replace(out / plan_name)
    artifacts = [plan_name] + [f"layer{k}_adjacency.csv" for k in range(len(plan.layers))]
    config = {"graphon": args.graphon, "method": args.method, "sizes": args.sizes, "seed": args.seed,
              "tol": args.tol, "zero_diagonal": args.zero_diagonal}
    write_manifest(out, "pool", config, artifacts)
    return 0


def cmd_filter(args) -> int:
    a = read_csv(args.a)
    x = read_csv(args.x).reshape(-1)
    f = PolyFilter(tuple(args.coeffs))
    if args.graphon_filter:
        y = apply_graphon_filter(induced_graphon(a), f, step_signal(x)).values
    else:
        y = apply_graph_filter(ShiftOperator.from_adjacency(a, args.normalization), f, x)
    if args.out is None:
        sys.stdout.write(matrix_to_csv(y.reshape(-1, 1)))
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "output.csv", y.reshape(-1, 1))
    config = {"a": str(args.a), "x": str(args.x), "coeffs": list(f.coeffs),
              "normalization": args.normalization, "graphon_filter": args.graphon_filter}
    write_manifest(out, "filter", config, ["output.csv"])
    return 0


def cmd_cutnorm(args) -> int:
    k = _load_step(args)
    if args.b:
        other = load_kernel(args.b) if args.b.lower().endswith(".json") else _load_step(argparse.Namespace(a=args.b))
        if args.search_permutations:
            value, perm = cut_distance_permutations(k, other)
            result = {"value": value, "permutation": list(perm), "method": "exact+permutations"}
            return _finish_cut(args, result)
        k = common_refinement_diff(k, other)
    elif args.search_permutations:
        raise ValueError("--search-permutations needs a second kernel (--b)")
    if args.exact:
        res = cut_norm_exact(k)
    elif args.heuristic is not None:
        res = cut_norm_heuristic(k, restarts=args.heuristic, seed=args.seed)
    else:
        res = cut_norm(k, seed=args.seed)
    return _finish_cut(args, res.to_dict())


def _finish_cut(args, result: dict) -> int:
    if args.out is None:
        _emit(result)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "cutnorm.json", result)
    config = {"a": args.a, "b": args.b, "graphon": args.graphon, "n": args.n, "exact": args.exact,
              "heuristic": args.heuristic, "search_permutations": args.search_permutations,
              "seed": args.seed}
    write_manifest(out, "cutnorm", config, ["cutnorm.json"])
    return 0


def cmd_homdensity(args) -> int:
    k = _load_step(args)
    result = {}
    for name in args.motif:
        if name not in MOTIFS:
            raise ValueError(f"unknown motif {name!r}; choose from {sorted(MOTIFS)}")
        entry = {"graphon": hom_density_graphon(MOTIFS[name], k)}
        if k.partition.regular:
            entry["graph"] = hom_density_graph(MOTIFS[name], k.values)
        result[name] = entry
    if args.out is None:
        _emit(result)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "homdensity.json", result)
    config = {"a": args.a, "graphon": args.graphon, "n": args.n, "motif": args.motif}
    write_manifest(out, "homdensity", config, ["homdensity.json"])
    return 0


def cmd_spectrum(args) -> int:
    k = _load_step(args)
    eig = spectrum_graphon(k)
    top = eig.eigenvalues.size if args.top is None else min(args.top, eig.eigenvalues.size)
    result = {"eigenvalues": eig.eigenvalues[:top].tolist(),
              "breakpoints": eig.partition.breakpoints.tolist()}
    if args.out is None:
        _emit(result)
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "eigenvalues.json", result)
    write_csv(out / "eigenfunctions.csv", eig.matrix()[:, :top])
    config = {"a": args.a, "graphon": args.graphon, "n": args.n, "top": args.top}
    write_manifest(out, "spectrum", config, ["eigenvalues.json", "eigenfunctions.csv"])
    return 0


def cmd_verify(args) -> int:
    from .verify import run_check

    w = parse_graphon(args.graphon)
    kwargs = {}
    if args.trials is not None and args.theorem not in ("2", "lemma1"):
        kwargs["trials"] = args.trials
    report = run_check(args.theorem, w, seed=args.seed, **kwargs)
    data = report.to_dict()
    data["seed"] = args.seed
    summary = {"theorem": report.theorem, "passed": report.passed, "n_pass": report.n_pass,
               "n_fail": report.n_fail, "seed": args.seed}
    if args.out is None:
        _emit(data)
    else:
        out = Path(args.out)
        if out.suffix.lower() == ".json":
            out.parent.mkdir(parents=True, exist_ok=True)
            write_json(out, data)
        else:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "report.json", data)
            config = {"theorem": args.theorem, "graphon": args.graphon, "seed": args.seed,
                      "trials": args.trials}
            write_manifest(out, "verify", config, ["report.json"])
        _emit(summary)
    return 3 if args.strict and not report.passed else 0


# ---------------------------------------------------------------------------
# source localization
# ---------------------------------------------------------------------------


PRESETS = {
    "full": {"sizes": [100, 50, 25], "samples": [1000, 240, 200], "epochs": 300, "realizations": 8},
    "mini": {"sizes": [100, 50, 25], "samples": [500, 120, 100], "epochs": 60, "realizations": 3},
}


@dataclass
class ExperimentConfig:
    graphon: str = "exp:2.3"
    method: str = "m1"
    sizes: list[int] = field(default_factory=lambda: [100, 50, 25])
    features: list[int] = field(default_factory=lambda: [8, 8])
    taps: list[int] = field(default_factory=lambda: [5, 5])
    n_classes: int = 10
    t_max: int = 25
    samples: list[int] = field(default_factory=lambda: [500, 120, 100])
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 20
    epochs: int = 60
    seed: int = 0
    realizations: int = 1
    zero_diagonal: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if len(self.samples) != 3 or min(self.samples) < 1:
            raise ValueError("samples must list positive train, validation and test sizes")
        if len(self.sizes) != len(self.features) + 1 or len(self.taps) != len(self.features):
            raise ValueError("need one feature count and one tap count per pooling step")
        if self.realizations < 1:
            raise ValueError("realizations must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def run_sourceloc(cfg: ExperimentConfig, seed: int, out: Path | None = None) -> dict:
    """One realization: plan, dataset, training and test evaluation."""
    from .gnn import GnnConfig, TrainHyper, evaluate, make_diffusion_dataset, split_dataset, train

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc

    t0 = time.perf_counter()
    w = stage("graphon", lambda: parse_graphon(cfg.graphon))
    plan = stage("pooling", lambda: build_pooling_plan(w, cfg.method, cfg.sizes, seed,
                                                       zero_diagonal=cfg.zero_diagonal))
    n_train, n_val, n_test = cfg.samples
    data = stage("dataset", lambda: make_diffusion_dataset(
        plan.layers[0].adjacency, n_train + n_val + n_test, cfg.n_classes, cfg.t_max, seed))
    tr, va, te = split_dataset(data, cfg.samples)
    model = stage("model", lambda: GnnConfig.from_plan(plan, cfg.features, cfg.taps, cfg.n_classes,
                                                       seed=seed))
    model.fit_input_standardization(tr.x)
    hyper = TrainHyper(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.batch_size, cfg.epochs, seed)
    res = stage("training", lambda: train(model, tr, hyper, va))
    test_error = stage("evaluation", lambda: evaluate(model, res.best_weights, te))
    result = {"seed": seed, "method": cfg.method, "test_error": test_error,
              "final_test_error": evaluate(model, res.weights, te), "best_epoch": res.best_epoch,
              "model": model.describe()}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.jsonl").write_text(res.metrics_jsonl())
        write_json(out / "test_error.json", result)
        save_weights(out / "weights", res.best_weights)
        plan.save(out / "plan")
    result["runtime_s"] = time.perf_counter() - t0
    return result


def _run_one(payload):
    cfg_dict, seed, out = payload
    return run_sourceloc(ExperimentConfig.from_dict(cfg_dict), seed, Path(out) if out else None)


def summarize(results: list[dict], method: str) -> dict:
    errs = np.array([r["test_error"] for r in results]) * 100.0
    return {"method": method, "realizations": len(results), "seeds": [r["seed"] for r in results],
            "test_error_mean_pct": float(errs.mean()), "test_error_std_pct": float(errs.std()),
            "row": f"{method.upper()} | {errs.mean():.2f} ± {errs.std():.2f}"}


def cmd_sourceloc(args) -> int:
    base = dict(PRESETS[args.preset]) if args.preset else {}
    if args.config:
        from .io import read_json

        base.update(read_json(args.config))
    overrides = {"graphon": args.graphon, "method": args.method, "sizes": args.sizes,
                 "features": args.features, "taps": args.taps, "n_classes": args.classes,
                 "samples": args.samples, "lr": args.lr, "batch_size": args.batch_size,
                 "epochs": args.epochs, "realizations": args.realizations, "t_max": args.t_max}
    base.update({k: v for k, v in overrides.items() if v is not None})
    base["seed"] = args.seed
    n_layers = len(base.get("sizes", [100, 50, 25])) - 1
    base.setdefault("features", [8] * n_layers)
    base.setdefault("taps", [5] * n_layers)
    cfg = ExperimentConfig.from_dict(base)
    seeds = [cfg.seed + r for r in range(cfg.realizations)]
    if args.dry_run:
        plan = build_pooling_plan(parse_graphon(cfg.graphon), cfg.method, cfg.sizes, seeds[0],
                                  zero_diagonal=cfg.zero_diagonal)
        resolved = {"config": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict()), "seeds": seeds,
                    "plan": {"method": plan.method, "layer_sizes": plan.layer_sizes,
                             "seed": plan.seed, "graphon": plan.graphon}}
        if args.out:
            out = Path(args.out)
            plan.save(out / "plan")
            write_json(out / "resolved_config.json", resolved)
            write_manifest(out, "sourceloc", cfg.to_dict(), ["resolved_config.json", "plan/plan.json"])
        _emit(resolved)
        return 0
    out = Path(args.out) if args.out else None
    payloads = [(cfg.to_dict(), s, str(out / f"seed{s}") if out else None) for s in seeds]
    if args.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, payloads))
    else:
        results = [_run_one(p) for p in payloads]
    summary = summarize(results, cfg.method)
    summary["runs"] = [{k: r[k] for k in ("seed", "test_error", "best_epoch", "runtime_s")} for r in results]
    if out is not None:
        write_json(out / "summary.json", summary)
        with open(out / "summary.csv", "w") as fh:
            fh.write("method,realizations,test_error_mean_pct,test_error_std_pct\n")
            fh.write(f"{cfg.method},{len(results)},{summary['test_error_mean_pct']:.4f},"
                     f"{summary['test_error_std_pct']:.4f}\n")
        artifacts = ["summary.json", "summary.csv"]
        for s in seeds:
            artifacts += [f"seed{s}/{n}" for n in ("metrics.jsonl", "test_error.json", "weights.bin",
                                                   "weights.json", "plan/plan.json")]
        write_manifest(out, "sourceloc", cfg.to_dict(), artifacts)
    _emit(summary)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _kernel_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", "--graph", dest="a",
                   help="adjacency / kernel CSV on the regular grid, or a JSON kernel")
    p.add_argument("--graphon", help="graphon spec, pooled with M1 to --n blocks")
    p.add_argument("--n", type=int, default=16, help="grid size used with --graphon (default 16)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphon-pool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    seed = default_seed()

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, default=seed, help=f"seed (default ${SEED_ENV} or 0)")
        p.add_argument("--out", help="output directory")
        return p

    p = add("pool", cmd_pool, "pool a graphon into a graph sequence")
    p.add_argument("--graphon", required=True)
    p.add_argument("--method", choices=METHODS, default="m1")
    p.add_argument("--sizes", type=_int_list, required=True, help="comma-separated, decreasing")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--zero-diagonal", action="store_true", help="M3 only: drop self-loops")

    p = add("filter", cmd_filter, "apply a polynomial graph filter")
    p.add_argument("--a", "--shift", dest="a", required=True, help="adjacency CSV")
    p.add_argument("--x", "--signal", dest="x", required=True, help="signal CSV (one value per row)")
    p.add_argument("--coeffs", type=_float_list, required=True, help="h_0,h_1,...")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="raw")
    p.add_argument("--graphon-filter", action="store_true",
                   help="filter on the induced graphon instead of the graph")

    p = add("cutnorm", cmd_cutnorm, "cut norm of a step kernel")
    _kernel_source(p)
    p.add_argument("--b", help="second kernel; the cut norm of a - b is computed")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true")
    g.add_argument("--heuristic", type=int, metavar="RESTARTS")
    p.add_argument("--search-permutations", action="store_true",
                   help="minimize over block relabelings of --b (at most 8 blocks)")

    p = add("homdensity", cmd_homdensity, "homomorphism densities")
    _kernel_source(p)
    p.add_argument("--motif", nargs="+", default=["edge", "triangle", "path3"])

    p = add("spectrum", cmd_spectrum, "eigenpairs of the shift operator")
    _kernel_source(p)
    p.add_argument("--top", type=int)

    p = add("verify", cmd_verify, "numeric bound checks")
    p.add_argument("--theorem", required=True, choices=["1", "2", "3", "4", "5", "6", "lemma1"])
    p.add_argument("--graphon", default="exp:2.3")
    p.add_argument("--trials", type=int)
    p.add_argument("--strict", action="store_true", help="exit with status 3 when a trial fails")
    p.set_defaults(seed=int(os.environ.get(SEED_ENV) or 42))

    p = add("sourceloc", cmd_sourceloc, "source localization experiment")
    p.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--graphon")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--sizes", type=_int_list)
    p.add_argument("--features", type=_int_list)
    p.add_argument("--taps", type=_int_list)
    p.add_argument("--classes", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--samples", type=_int_list, help="train,val,test")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dry-run", action="store_true")
    return parser


def _error_payload(exc: Exception) -> dict:
    if isinstance(exc, StageError):
        inner = _error_payload(exc.cause)
        inner["stage"] = exc.stage
        return inner
    if isinstance(exc, ParseError):
        return exc.to_dict()
    kind = "size" if isinstance(exc, SizeError) else type(exc).__name__
    return {"error": kind, "message": str(exc)}


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ValueError as exc:
        sys.stderr.write(json.dumps(_error_payload(exc)) + "\n")
        return 2
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc), sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
