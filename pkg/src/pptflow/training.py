"""Loss, optimizer, schedule, metrics, the training loop, gradient checks."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NumericFailureError, ShapeMismatchError


@dataclass
class TrainConfig:
    lr_init: float = 5e-3
    weight_decay: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    lr_min: float = 0.0
    seed: int = 0
    target_mask: np.ndarray | None = None   # [C] of 0/1; None = all features
    patience: int = 20
    val_mse_goal: float | None = None       # stop once validation MSE dips below

    def __post_init__(self):
        if not self.lr_init > self.lr_min >= 0:
            raise ValueError(
                f"need lr_init > lr_min >= 0, got {self.lr_init}, {self.lr_min}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class MetricReport:
    mae: float
    mse: float
    rmse: float
    per_feature: dict
    horizon: int
    n: int


@dataclass
class TrainResult:
    log: list = field(default_factory=list)   # one dict per epoch
    best_state: dict | None = None
    best_epoch: int = -1
    best_val_mae: float = math.inf
    diverged: bool = False


def mse_loss(pred, target, mask=None):
    """Mean squared error over (optionally feature-masked) entries."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"mse_loss: prediction {pred.shape} vs target {target.shape}"
        )
    diff = ad.add(pred, ad.constant(-target))
    if mask is None:
        count = target.size
        sq = ad.mul(diff, diff)
    else:
        mask = np.asarray(mask, dtype=np.float64)
        count = float(mask.sum()) * target.size / target.shape[-1]
        sq = ad.mul(ad.mul(diff, diff), ad.constant(mask))
    return ad.mul(sq.sum(), 1.0 / count)


def cosine_lr(step, total_steps, lr_init, lr_min=0.0):
    """Cosine annealing from lr_init (step 0) to lr_min (final step)."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_init - lr_min) * (
        1.0 + math.cos(math.pi * step / total_steps)
    )


class AdamW:
    """Adam with decoupled weight decay (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, weight_decay=1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericFailureError(
                    "optimizer", f"non-finite gradient for parameter {p.name!r}"
                )
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= lr * (m_hat / (np.sqrt(v_hat) + self.eps))
            p.data -= lr * self.weight_decay * p.data


def compute_metrics(pred, target, mask=None, horizon=None):
    """MAE / MSE / RMSE over masked entries plus a per-feature breakdown."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(
            f"compute_metrics: {pred.shape} vs {target.shape}"
        )
    if pred.size == 0:
        raise ValueError("compute_metrics requires at least one sample")
    err = pred - target
    if mask is not None:
        sel = np.asarray(mask, dtype=bool)
        err_flat = err[..., sel].ravel()
    else:
        err_flat = err.ravel()
    mae = float(np.abs(err_flat).mean())
    mse = float((err_flat ** 2).mean())
    per_feature = {}
    for c in range(pred.shape[-1]):
        if mask is not None and not np.asarray(mask, dtype=bool)[c]:
            continue
        e = err[..., c].ravel()
        per_feature[c] = {
            "mae": float(np.abs(e).mean()),
            "mse": float((e ** 2).mean()),
            "rmse": float(np.sqrt((e ** 2).mean())),
        }
    return MetricReport(
        mae=mae, mse=mse, rmse=math.sqrt(mse),
        per_feature=per_feature,
        horizon=horizon if horizon is not None else pred.shape[-2],
        n=err_flat.size,
    )


def _batched(windows, batch_size):
    for start in range(0, len(windows), batch_size):
        chunk = windows[start:start + batch_size]
        x = np.stack([w.input for w in chunk])
        y = np.stack([w.target for w in chunk])
        yield x, y


def evaluate(model, windows, batch_size=32, mask=None):
    """Metric report over a window list (inference mode)."""
    preds, targets = [], []
    for x, y in _batched(windows, batch_size):
        preds.append(model.predict(x))
        targets.append(y)
    return compute_metrics(
        np.concatenate(preds), np.concatenate(targets),
        mask=mask, horizon=model.config.H,
    )


def train(model, train_windows, val_windows, cfg):
    """Minimize the masked MSE; keep the checkpoint with best validation MAE.

    Returns a TrainResult whose log holds one record per epoch:
    {epoch, lr, train_loss, val_mae, val_mse, val_rmse}.  On divergence the
    loop aborts and the last good parameter snapshot is preserved.
    """
    rng = np.random.default_rng(cfg.seed)
    optimizer = AdamW(model.parameters(), weight_decay=cfg.weight_decay)
    steps_per_epoch = max(1, math.ceil(len(train_windows) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    result = TrainResult()
    global_step = 0
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_windows))
        shuffled = [train_windows[i] for i in order]
        epoch_lr = cosine_lr(global_step, total_steps, cfg.lr_init, cfg.lr_min)
        losses = []
        diverged = False
        for x, y in _batched(shuffled, cfg.batch_size):
            lr = cosine_lr(global_step, total_steps, cfg.lr_init, cfg.lr_min)
            model.zero_grad()
            try:
                pred = model.forward(x, training=True)
                loss = mse_loss(pred, y, cfg.target_mask)
            except NumericFailureError:
                diverged = True
                break
            if not np.isfinite(loss.data):
                diverged = True
                break
            ad.backward(loss)
            optimizer.step(lr)
            losses.append(float(loss.data))
            global_step += 1
        if diverged:
            result.diverged = True
            break
        val = evaluate(model, val_windows, cfg.batch_size, cfg.target_mask)
        result.log.append({
            "epoch": epoch,
            "lr": epoch_lr,
            "train_loss": float(np.mean(losses)) if losses else math.nan,
            "val_mae": val.mae,
            "val_mse": val.mse,
            "val_rmse": val.rmse,
        })
        if val.mae < result.best_val_mae:
            result.best_val_mae = val.mae
            result.best_epoch = epoch
            result.best_state = copy.deepcopy(model.state_arrays())
            stale = 0
        else:
            stale += 1
        if cfg.val_mse_goal is not None and val.mse < cfg.val_mse_goal:
            break
        if stale > cfg.patience:
            break
    if result.best_state is not None:
        model.load_state_arrays(result.best_state)
    return result


def grad_check(model, x, target, mask=None, n_coords=200, step=1e-5, seed=0):
    """Worst relative error of analytic vs central-FD gradients.

    Samples ``n_coords`` scalar coordinates across all parameters.
    """
    rng = np.random.default_rng(seed)
    model.zero_grad()
    loss = mse_loss(model.forward(x, training=False), target, mask)
    ad.backward(loss)
    params = model.parameters()
    analytic = {p.name: p.grad.copy() for p in params}

    sizes = np.array([p.size for p in params])
    probs = sizes / sizes.sum()
    worst = 0.0
    for _ in range(n_coords):
        p = params[rng.choice(len(params), p=probs)]
        flat = rng.integers(p.size)
        idx = np.unravel_index(flat, p.data.shape)
        original = p.data[idx]
        p.data[idx] = original + step
        up = float(mse_loss(model.forward(x, training=False), target, mask).data)
        p.data[idx] = original - step
        down = float(mse_loss(model.forward(x, training=False), target, mask).data)
        p.data[idx] = original
        fd = (up - down) / (2.0 * step)
        rel = abs(analytic[p.name][idx] - fd) / (abs(fd) + 1e-8)
        worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# synthetic datasets for learnability and ablation studies
# ---------------------------------------------------------------------------


def two_sine_series(length, n_features=2, periods=(12, 24), seed=0):
    """Noiseless multi-channel sum of two sines with per-channel phases."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    series = np.zeros((length, n_features))
    for c in range(n_features):
        phase1, phase2 = rng.uniform(0, 2 * np.pi, size=2)
        series[:, c] = (
            np.sin(2 * np.pi * t / periods[0] + phase1)
            + 0.5 * np.sin(2 * np.pi * t / periods[1] + phase2)
        )
    return series


def cross_feature_series(length, lead=12, seed=0):
    """Two channels where channel 1 leads channel 0 by ``lead`` steps.

    Channel 0 mixes a periodic part with a smoothed random walk, so its
    future is not determined by its own past alone; channel 1 carries the
    same signal shifted ``lead`` steps into the future.  The periodic
    part's cycle length equals ``lead``, so a model that folds the series
    at the detected period sees the leading channel exactly one cycle
    ahead of the channel it must forecast.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length + lead)
    noise = rng.normal(0, 1.0, size=length + lead)
    kernel = np.ones(25) / 25.0
    smooth = np.convolve(noise, kernel, mode="same")
    base = np.sin(2 * np.pi * t / lead) + 2.0 * smooth
    series = np.zeros((length, 2))
    series[:, 0] = base[:length]
    series[:, 1] = base[lead:lead + length]
    return series
