"""A dense GNN whose layers come from a graphon pooling plan.

Layer l maps signals on graph G_l (N_l nodes) to signals on G_{l+1}:

    Y = sum_k H_k S_l^k X + b      (per output/input feature pair)
    X' = relu(Y) P_l^T              (P_l: bracket-average interpolation)

and a single affine readout maps the flattened last-layer features to class
logits. Gradients are computed by hand; the pooling map is a fixed linear
operator so its adjoint is its transpose.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .filters import ShiftOperator
from .pooling import PoolingPlan, make_rng


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


@dataclass(eq=False)
class GnnConfig:
    shifts: list[np.ndarray]
    pools: list[np.ndarray]
    features: list[int]
    taps: list[int]
    n_classes: int
    seed: int = 0
    # scalar affine input standardization, fitted on training signals
    input_shift: float = 0.0
    input_scale: float = 1.0

    def __post_init__(self):
        L = len(self.shifts)
        if len(self.pools) != L or len(self.taps) != L or len(self.features) != L + 1:
            raise ValueError("shifts, pools and taps need one entry per layer; features one more")
        for l, (s, p) in enumerate(zip(self.shifts, self.pools)):
            if s.shape[0] != s.shape[1] or p.shape[1] != s.shape[0]:
                raise ValueError(f"layer {l}: shift {s.shape} and pooling map {p.shape} do not chain")
            if l + 1 < L and p.shape[0] != self.shifts[l + 1].shape[0]:
                raise ValueError(f"layer {l} output size {p.shape[0]} != next shift order")

    @property
    def n_layers(self) -> int:
        return len(self.shifts)

    @property
    def input_size(self) -> int:
        return self.shifts[0].shape[0]

    @property
    def readout_size(self) -> int:
        return self.pools[-1].shape[0] * self.features[-1]

    @classmethod
    def from_plan(cls, plan: PoolingPlan, features, taps, n_classes: int,
                  normalization: str = "spectral", seed: int = 0) -> "GnnConfig":
        L = len(plan.layers) - 1
        features = list(features)
        taps = list(taps) if np.ndim(taps) else [int(taps)] * L
        if len(features) == L:
            features = [1, *features]
        shifts = [ShiftOperator.from_adjacency(plan.layers[l].adjacency, normalization).matrix
                  for l in range(L)]
        pools = [plan.transfer_matrix(l) for l in range(L)]
        return cls(shifts, pools, features, taps, int(n_classes), int(seed))

    def fit_input_standardization(self, x) -> None:
        x = np.asarray(x, dtype=float)
        self.input_shift = float(x.mean())
        sd = float(x.std())
        self.input_scale = sd if sd > 0 else 1.0

    def parameter_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        for l in range(self.n_layers):
            shapes[f"h{l}"] = (self.features[l + 1], self.features[l], self.taps[l])
            shapes[f"b{l}"] = (self.features[l + 1],)
        shapes["readout_w"] = (self.readout_size, self.n_classes)
        shapes["readout_b"] = (self.n_classes,)
        return shapes

    def describe(self) -> dict:
        return {"layer_sizes": [s.shape[0] for s in self.shifts] + [self.pools[-1].shape[0]],
                "features": self.features, "taps": self.taps, "n_classes": self.n_classes,
                "seed": self.seed, "input_shift": self.input_shift, "input_scale": self.input_scale}


def init_weights(cfg: GnnConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    rng = make_rng(cfg.seed if seed is None else seed, 0x1417)
    weights = {}
    for name, shape in cfg.parameter_shapes().items():
        if name.startswith("b") or name == "readout_b":
            weights[name] = np.zeros(shape)
        elif name == "readout_w":
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights[name] = rng.uniform(-bound, bound, shape)
        else:
            bound = 1.0 / np.sqrt(shape[1] * shape[2])
            weights[name] = rng.uniform(-bound, bound, shape)
    return weights


def _filter_powers(s: np.ndarray, x: np.ndarray, taps: int) -> np.ndarray:
    """Stack [x, x S, x S^2, ...] along a new leading axis (x: batch x feat x N)."""
    z = np.empty((taps,) + x.shape)
    z[0] = x
    for k in range(1, taps):
        z[k] = z[k - 1] @ s
    return z


def forward(cfg: GnnConfig, weights, x, cache: bool = False):
    """Class logits for a batch of input signals (batch x N_0, or a single N_0 vector)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if x.shape[-1] != cfg.input_size:
        raise ValueError(f"input length {x.shape[-1]} != N_0 = {cfg.input_size}")
    h = ((x - cfg.input_shift) / cfg.input_scale).reshape(-1, 1, cfg.input_size)
    saved = []
    for l in range(cfg.n_layers):
        z = _filter_powers(cfg.shifts[l], h, cfg.taps[l])
        y = np.einsum("fgk,kbgn->bfn", weights[f"h{l}"], z) + weights[f"b{l}"][None, :, None]
        r = np.maximum(y, 0.0)
        h = r @ cfg.pools[l].T
        saved.append((z, y))
    flat = h.reshape(h.shape[0], -1)
    logits = flat @ weights["readout_w"] + weights["readout_b"]
    if single:
        logits = logits[0]
    return (logits, (saved, flat)) if cache else logits


def gnn_forward(cfg: GnnConfig, weights, x) -> np.ndarray:
    return forward(cfg, weights, x)


def backward(cfg: GnnConfig, weights, state, dlogits) -> dict[str, np.ndarray]:
    saved, flat = state
    dlogits = np.atleast_2d(dlogits)
    grads = {"readout_w": flat.T @ dlogits, "readout_b": dlogits.sum(axis=0)}
    dh = (dlogits @ weights["readout_w"].T).reshape(flat.shape[0], cfg.features[-1], -1)
    for l in reversed(range(cfg.n_layers)):
        z, y = saved[l]
        dy = (dh @ cfg.pools[l]) * (y > 0)
        grads[f"b{l}"] = dy.sum(axis=(0, 2))
        grads[f"h{l}"] = np.einsum("bfn,kbgn->fgk", dy, z)
        if l == 0:
            break
        dz = np.einsum("fgk,bfn->kbgn", weights[f"h{l}"], dy)
        s = cfg.shifts[l]
        acc = dz[-1]
        for k in range(cfg.taps[l] - 2, -1, -1):
            acc = acc @ s.T + dz[k]
        dh = acc
    return grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = logits.shape[0]
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target) -> np.ndarray:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return 2.0 * (pred - target) / pred.size


def loss_and_grads(cfg: GnnConfig, weights, x, labels):
    logits, state = forward(cfg, weights, x, cache=True)
    loss, dlogits = softmax_cross_entropy(np.atleast_2d(logits), labels)
    return loss, backward(cfg, weights, state, dlogits)


class Adam:
    """ADAM with bias-corrected moment estimates."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in sorted(params):
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            mhat = self.m[name] / c1
            vhat = self.v[name] / c2
            params[name] = params[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DiffusionDataset:
    x: np.ndarray
    labels: np.ndarray
    sources: np.ndarray
    times: np.ndarray
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "DiffusionDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return DiffusionDataset(self.x[idx], self.labels[idx], self.sources, self.times[idx],
                                self.seed, dict(self.metadata))


def make_diffusion_dataset(adjacency, n_samples: int, n_classes: int = 10, t_max: int = 25,
                           seed: int = 0) -> DiffusionDataset:
    """Samples (S~^t e_c, class of c) with S~ = S / |lambda_max|.

    The C source nodes are drawn once without replacement; each sample picks a
    source and a diffusion time t in {1, ..., t_max} uniformly.
    """
    s = np.asarray(adjacency, dtype=float)
    n = s.shape[0]
    if n_classes > n:
        raise ValueError(f"cannot pick {n_classes} sources from {n} nodes")
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    lam = float(np.max(np.abs(np.linalg.eigvalsh(s))))
    s_norm = s / lam if lam > 0 else s
    rng = make_rng(seed, 0xDA7A)
    sources = np.sort(rng.choice(n, size=n_classes, replace=False))
    labels = rng.integers(0, n_classes, size=n_samples)
    times = rng.integers(1, t_max + 1, size=n_samples)
    # trajectories[t - 1, :, c] = S~^t e_{source c}
    traj = np.empty((t_max, n, n_classes))
    cur = s_norm[:, sources]
    for t in range(t_max):
        traj[t] = cur
        cur = s_norm @ cur
    x = traj[times - 1, :, labels]
    meta = {"normalization": "spectral", "lambda_max": lam, "t_max": t_max, "n_classes": n_classes}
    return DiffusionDataset(x, labels, sources, times, seed, meta)


def split_dataset(data: DiffusionDataset, sizes) -> list[DiffusionDataset]:
    out, start = [], 0
    for size in sizes:
        out.append(data.subset(np.arange(start, start + size)))
        start += size
    return out


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainHyper:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 20
    epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


@dataclass(eq=False)
class TrainResult:
    weights: dict
    best_weights: dict
    best_epoch: int
    history: list[dict]

    def metrics_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.history)


def evaluate(cfg: GnnConfig, weights, data: DiffusionDataset, batch_size: int = 256) -> float:
    """Fraction of samples whose arg-max logit is not the label."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    wrong = 0
    for start in range(0, len(data), batch_size):
        logits = np.atleast_2d(forward(cfg, weights, data.x[start:start + batch_size]))
        wrong += int(np.sum(np.argmax(logits, axis=1) != data.labels[start:start + batch_size]))
    return wrong / len(data)


def train(cfg: GnnConfig, train_data: DiffusionDataset, hyper: TrainHyper,
          val_data: DiffusionDataset | None = None, weights=None, log=None) -> TrainResult:
    """Mini-batch ADAM on the cross-entropy loss.

    The shuffling order of epoch e is drawn from stream (seed, e), so runs are
    reproducible bit for bit. Keeps the weights with the lowest validation
    error (first such epoch on ties) next to the final ones.
    """
    params = {k: v.copy() for k, v in (weights or init_weights(cfg, hyper.seed)).items()}
    opt = Adam(hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    n = len(train_data)
    history = []
    best = (np.inf, 0, {k: v.copy() for k, v in params.items()})
    for epoch in range(1, hyper.epochs + 1):
        order = make_rng(hyper.seed, 0x5F1E, epoch).permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss, grads = loss_and_grads(cfg, params, train_data.x[idx], train_data.labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(epoch, "loss diverged to a non-finite value")
            opt.step(params, grads)
            total += loss * idx.size
        record = {"epoch": epoch, "train_loss": total / n}
        if val_data is not None and len(val_data):
            err = evaluate(cfg, params, val_data)
            record["val_error"] = err
            if err < best[0]:
                best = (err, epoch, {k: v.copy() for k, v in params.items()})
        history.append(record)
        if log is not None:
            log(record)
    if val_data is None or not len(val_data):
        best = (np.nan, hyper.epochs, {k: v.copy() for k, v in params.items()})
    return TrainResult(params, best[2], best[1], history)


def hyper_dict(h: TrainHyper) -> dict:
    return asdict(h)
