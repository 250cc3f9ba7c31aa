"""Training loop over per-epoch bags, optimizers, and hyperparameter sweeps.

Protocol: bags are rebuilt every epoch from a fresh seeded shuffle, and the
optimizer takes exactly one step per bag. Validation never reads
instance-level labels; its signal is the same bag-level proportion loss,
computed over validation bags of the same size. Model selection
(validation_score) aggregates train + validation proportion losses over
the last few epochs.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bagging import BagPlan, make_bags
from .core import (
    DivergedLoss,
    EmptyDataset,
    InvalidArguments,
    KTooLarge,
    LabeledDataset,
    check_seed,
    derive_seed,
)
from .losses import LossParams
from .metrics import confusion, weighted_prf
from .model import (
    ARCHITECTURES,
    LOSS_KINDS,
    ModelParams,
    backward,
    forward_batch,
    init_params,
    predict_batch,
    proportion_grad,
)

OPTIMIZERS = ("sgd", "adaptive")

# gradient clipping default: DLLP can blow up, the bounded losses cannot
DLLP_CLIP_NORM = 10.0


@dataclass(frozen=True)
class TrainConfig:
    bag_size: int = 16
    epochs: int = 10
    learning_rate: float = 0.05
    alpha: float = 1.0
    lambda_: float = 0.0
    optimizer: str = "adaptive"
    seed: int = 0
    loss_kind: str = "tvstar"
    arch: str = "linear"
    hidden_dim: int = 16
    grad_clip: float | None = None  # None = clip at 10 for dllp, off otherwise

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArguments(f"epochs must be >= 1, got {self.epochs}")
        if self.bag_size < 1:
            raise InvalidArguments(f"bag_size must be >= 1, got {self.bag_size}")
        if not self.learning_rate > 0:
            raise InvalidArguments(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.alpha > 0:
            raise InvalidArguments(f"alpha must be > 0, got {self.alpha}")
        if self.lambda_ < 0:
            raise InvalidArguments(f"lambda must be >= 0, got {self.lambda_}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArguments(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidArguments(f"loss_kind must be one of {LOSS_KINDS}")
        if self.arch not in ARCHITECTURES:
            raise InvalidArguments(f"arch must be one of {ARCHITECTURES}")
        if self.hidden_dim < 1:
            raise InvalidArguments(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise InvalidArguments(f"grad_clip must be > 0 or None, got {self.grad_clip}")
        check_seed(self.seed)

    @property
    def resolved_grad_clip(self) -> float | None:
        if self.grad_clip is not None:
            return self.grad_clip
        return DLLP_CLIP_NORM if self.loss_kind == "dllp" else None

    def to_dict(self) -> dict:
        return {
            "bag_size": self.bag_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "alpha": self.alpha,
            "lambda": self.lambda_,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "loss_kind": self.loss_kind,
            "arch": self.arch,
            "hidden_dim": self.hidden_dim,
            "grad_clip": self.resolved_grad_clip,
        }


@dataclass(frozen=True, eq=False)
class TrainHistory:
    """Per-epoch mean train/validation proportion losses and wall-clock seconds.

    val_loss entries are NaN when no validation split was supplied.
    bag_losses keeps the raw per-bag training losses for auditing; it is not
    part of the CSV surface.
    """

    train_loss: tuple
    val_loss: tuple
    seconds: tuple
    bag_losses: tuple = field(default=(), repr=False)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


def history_to_csv(history: TrainHistory, path) -> None:
    """Write epoch,train_loss,val_loss,seconds with round-trip float formatting."""
    lines = ["epoch,train_loss,val_loss,seconds"]
    for i, (tr, vl, sec) in enumerate(
        zip(history.train_loss, history.val_loss, history.seconds)
    ):
        lines.append(f"{i},{tr!r},{vl!r},{sec!r}")
    Path(path).write_text("\n".join(lines) + "\n")


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, arrays: dict, grads: dict) -> None:
        for k, arr in arrays.items():
            arr -= self.lr * grads[k]


class _AdaptiveMoment:
    """Exponential moving first/second moments with bias correction.

    Decay 0.9/0.999, epsilon 1e-8: the de-facto standard adaptive update.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, arrays: dict, grads: dict) -> None:
        self.t += 1
        for k, arr in arrays.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(arr))
            v = self.v.setdefault(k, np.zeros_like(arr))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            arr -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return _Sgd(config.learning_rate)
    return _AdaptiveMoment(config.learning_rate)


def _clip_global_norm(grads: dict, max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _mean_bag_proportion_loss(
    params: ModelParams, dataset: LabeledDataset, config: TrainConfig, epoch_seed: int
) -> float:
    plan = BagPlan(config.bag_size, True, epoch_seed)
    losses = []
    for bag in make_bags(dataset, plan):
        x = dataset.features[list(bag.instance_indices)]
        _, probs = forward_batch(params, x)
        loss, _ = proportion_grad(
            bag.proportion.values, probs.mean(axis=0), config.alpha, config.loss_kind
        )
        losses.append(float(loss))
    return float(np.mean(losses))


def train(
    dataset: LabeledDataset,
    val: LabeledDataset | None,
    config: TrainConfig,
) -> tuple[ModelParams, TrainHistory]:
    """Run the bag-level training loop; deterministic given the config seed.

    Bags are rebuilt each epoch with a seed derived from (run seed, epoch),
    and parameters are updated once per bag. Raises DivergedLoss when
    parameter gradients become non-finite; an infinite recorded loss value
    alone (possible under dllp) is logged but not fatal.
    """
    if dataset.n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    have_val = val is not None and val.n > 0
    params = init_params(
        config.arch,
        dataset.dim,
        dataset.num_classes,
        config.hidden_dim,
        derive_seed(config.seed, "init"),
    )
    loss_params = LossParams(config.alpha, config.lambda_)
    opt = _make_optimizer(config)
    clip = config.resolved_grad_clip
    arrays = params._arrays()

    train_curve, val_curve, seconds, bag_curves = [], [], [], []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        plan = BagPlan(config.bag_size, True, derive_seed(config.seed, "bags", epoch))
        epoch_losses = []
        for bag_no, bag in enumerate(make_bags(dataset, plan)):
            x = dataset.features[list(bag.instance_indices)]
            result = backward(params, x, bag.proportion.values, loss_params, config.loss_kind)
            grads = result.grads
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergedLoss(
                    f"non-finite gradients at epoch {epoch}, bag {bag_no} "
                    f"(loss {result.loss!r})"
                )
            if clip is not None:
                _clip_global_norm(grads, clip)
            opt.step(arrays, grads)
            epoch_losses.append(result.proportion_loss)
        train_curve.append(float(np.mean(epoch_losses)))
        bag_curves.append(tuple(epoch_losses))
        if have_val:
            val_curve.append(
                _mean_bag_proportion_loss(
                    params, val, config, derive_seed(config.seed, "val-bags", epoch)
                )
            )
        else:
            val_curve.append(float("nan"))
        seconds.append(time.perf_counter() - t0)

    history = TrainHistory(
        tuple(train_curve), tuple(val_curve), tuple(seconds), tuple(bag_curves)
    )
    return params, history


def validation_score(history: TrainHistory, last_k: int = 3) -> float:
    """Mean of (train + validation) proportion losses over the final last_k epochs.

    A label-free model-selection signal: no test labels involved. NaN when
    the run had no validation split.
    """
    if last_k < 1:
        raise InvalidArguments(f"last_k must be >= 1, got {last_k}")
    if last_k > history.epochs:
        raise KTooLarge(f"last_k={last_k} exceeds {history.epochs} recorded epochs")
    tr = np.asarray(history.train_loss[-last_k:])
    vl = np.asarray(history.val_loss[-last_k:])
    return float(np.mean(tr + vl))


SWEEP_AXES = ("bag_size", "alpha", "lambda")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    seed: int
    w_precision: float
    w_recall: float
    w_f1: float


def _apply_axis(config: TrainConfig, axis: str, value) -> TrainConfig:
    if axis == "bag_size":
        return replace(config, bag_size=int(value))
    if axis == "alpha":
        return replace(config, alpha=float(value))
    if axis == "lambda":
        return replace(config, lambda_=float(value))
    raise InvalidArguments(f"axis must be one of {SWEEP_AXES}, got {axis!r}")


def _sweep_trial(args) -> SweepRow:
    dataset, val, test, config, axis, value, seed = args
    cfg = replace(_apply_axis(config, axis, value), seed=seed)
    params, _ = train(dataset, val, cfg)
    preds = predict_batch(params, test.features)
    wp, wr, wf = weighted_prf(confusion(test.labels, preds, test.num_classes))
    return SweepRow(axis, float(value), seed, wp, wr, wf)


def sweep(
    dataset: LabeledDataset,
    val: LabeledDataset | None,
    test: LabeledDataset,
    base_config: TrainConfig,
    axis: str,
    values,
    seeds=(0,),
    jobs: int = 1,
) -> list[SweepRow]:
    """One isolated training run per (axis value, seed); rows of test metrics.

    Trials share no mutable state, so they can fan out across processes;
    results are returned in deterministic (value, seed) order either way.
    """
    values = list(values)
    if not values:
        raise InvalidArguments("sweep needs at least one axis value")
    tasks = [
        (dataset, val, test, base_config, axis, value, int(seed))
        for value in values
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_trial, tasks))
    else:
        rows = [_sweep_trial(t) for t in tasks]
    return rows


def sweep_csv(rows, path) -> None:
    """Write sweep results as value,seed,w_p,w_r,w_f1 rows."""
    lines = ["value,seed,w_p,w_r,w_f1"]
    for r in rows:
        lines.append(f"{r.value!r},{r.seed},{r.w_precision!r},{r.w_recall!r},{r.w_f1!r}")
    Path(path).write_text("\n".join(lines) + "\n")


CONFIG_KEYS = {
    "bag_size": int,
    "epochs": int,
    "learning_rate": float,
    "alpha": float,
    "lambda": float,
    "optimizer": str,
    "seed": int,
    "loss_kind": str,
    "arch": str,
    "hidden_dim": int,
    "grad_clip": float,
}


def read_config_file(path) -> dict:
    """Parse a flat key = value config file; '#' starts a comment.

    Returns a dict keyed by TrainConfig field names (the file key "lambda"
    maps to the lambda_ field). Values given on the command line override
    whatever the file says.
    """
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArguments(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InvalidArguments(f"{path}:{lineno}: unknown key {key!r}")
        caster = CONFIG_KEYS[key]
        try:
            parsed = caster(value)
        except ValueError:
            raise InvalidArguments(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
        out["lambda_" if key == "lambda" else key] = parsed
    return out
