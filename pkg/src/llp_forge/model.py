"""Small differentiable softmax classifiers with exact backward passes.

Two architectures cover both training regimes: "linear" (the representation
sub-network is the identity, so the contrastive term sees raw inputs and has
no parameters to train) and "mlp1" (one tanh hidden layer whose activations
serve as the penultimate embeddings). The softmax is stabilized by max
subtraction, which changes bits but preserves values to ~1e-12; outputs sum
to 1 within that tolerance. Argmax ties break toward the lowest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    DimensionMismatch,
    EmptyBag,
    InvalidArguments,
    NonFiniteInput,
    SimplexVector,
    new_rng,
)
from .losses import (
    LossParams,
    kl_proportion_loss,
    ssc_gradient,
    ssc_loss,
    tv_star_gradient,
    tv_star_loss,
    _as_prob,
)

ARCHITECTURES = ("linear", "mlp1")
LOSS_KINDS = ("dllp", "tvstar", "combined")


@dataclass(eq=False)
class ModelParams:
    """Weights of a linear or one-hidden-layer softmax classifier.

    w_out is C x H (C x D for linear); w_hidden/b_hidden exist only for
    mlp1. Arrays are owned by the instance; the trainer is the single
    writer during optimization.
    """

    arch: str
    w_out: np.ndarray
    b_out: np.ndarray
    w_hidden: np.ndarray | None = None
    b_hidden: np.ndarray | None = None

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise InvalidArguments(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        if self.w_out.ndim != 2 or self.b_out.shape != (self.w_out.shape[0],):
            raise DimensionMismatch("w_out must be C x H with matching b_out")
        if self.w_out.shape[0] < 2:
            raise DimensionMismatch("need at least 2 output classes")
        if self.arch == "mlp1":
            if self.w_hidden is None or self.b_hidden is None:
                raise DimensionMismatch("mlp1 requires w_hidden and b_hidden")
            self.w_hidden = np.asarray(self.w_hidden, dtype=np.float64)
            self.b_hidden = np.asarray(self.b_hidden, dtype=np.float64)
            h = self.w_hidden.shape[0]
            if self.w_hidden.ndim != 2 or self.b_hidden.shape != (h,):
                raise DimensionMismatch("w_hidden must be H x D with matching b_hidden")
            if self.w_out.shape[1] != h:
                raise DimensionMismatch("w_out width must equal hidden size")
        elif self.w_hidden is not None or self.b_hidden is not None:
            raise DimensionMismatch("linear architecture takes no hidden weights")
        for arr in self._arrays().values():
            if not np.all(np.isfinite(arr)):
                raise NonFiniteInput("parameters must be finite")

    def _arrays(self) -> dict:
        out = {"w_out": self.w_out, "b_out": self.b_out}
        if self.arch == "mlp1":
            out["w_hidden"] = self.w_hidden
            out["b_hidden"] = self.b_hidden
        return out

    @property
    def num_classes(self) -> int:
        return int(self.w_out.shape[0])

    @property
    def in_dim(self) -> int:
        return int(self.w_hidden.shape[1] if self.arch == "mlp1" else self.w_out.shape[1])

    @property
    def embed_dim(self) -> int:
        return int(self.w_out.shape[1])

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            self.w_out.copy(),
            self.b_out.copy(),
            None if self.w_hidden is None else self.w_hidden.copy(),
            None if self.b_hidden is None else self.b_hidden.copy(),
        )


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Cached activations for one instance: embedding, class distribution, logits."""

    embedding: np.ndarray
    distribution: SimplexVector
    logits: np.ndarray


@dataclass(frozen=True, eq=False)
class BackwardResult:
    """Gradients keyed like ModelParams arrays, plus the per-bag loss values."""

    grads: dict
    loss: float
    proportion_loss: float
    rho_tilde: np.ndarray


def init_params(
    arch: str,
    in_dim: int,
    num_classes: int,
    hidden_dim: int = 16,
    seed: int = 0,
) -> ModelParams:
    """Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases zero."""
    if arch not in ARCHITECTURES:
        raise InvalidArguments(f"arch must be one of {ARCHITECTURES}, got {arch!r}")
    rng = new_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    if arch == "linear":
        return ModelParams(arch, uniform((num_classes, in_dim), in_dim), np.zeros(num_classes))
    return ModelParams(
        arch,
        uniform((num_classes, hidden_dim), hidden_dim),
        np.zeros(num_classes),
        uniform((hidden_dim, in_dim), in_dim),
        np.zeros(hidden_dim),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stabilized softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(params: ModelParams, x: np.ndarray):
    """Vectorized forward pass: (embeddings, class distributions) for n rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise DimensionMismatch(
            f"expected n x {params.in_dim} inputs, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("inputs must be finite")
    if params.arch == "mlp1":
        z = np.tanh(x @ params.w_hidden.T + params.b_hidden)
    else:
        z = x
    probs = softmax(z @ params.w_out.T + params.b_out)
    return z, probs


def forward(params: ModelParams, x) -> ForwardTrace:
    """Per-instance forward pass returning the embedding and class distribution."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    z, probs = forward_batch(params, x)
    logits = z[0] @ params.w_out.T + params.b_out
    return ForwardTrace(z[0], SimplexVector(probs[0]), logits)


def predict(params: ModelParams, x) -> int:
    """Argmax class of the forward distribution; ties go to the lowest index."""
    return int(np.argmax(forward(params, x).distribution.values))


def predict_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    _, probs = forward_batch(params, np.asarray(x, dtype=np.float64))
    return probs.argmax(axis=1)


def aggregate_predictions(traces) -> SimplexVector:
    """Mean of per-instance class distributions: the predicted bag proportion."""
    traces = list(traces)
    if not traces:
        raise EmptyBag("cannot aggregate an empty list of traces")
    c = traces[0].distribution.num_classes
    if any(t.distribution.num_classes != c for t in traces):
        raise DimensionMismatch("traces disagree on the number of classes")
    mean = np.mean([t.distribution.values for t in traces], axis=0)
    return SimplexVector(mean)


def proportion_grad(rho, rho_tilde, alpha: float, loss_kind: str):
    """Selected proportion loss and its gradient w.r.t. the prediction rho_tilde."""
    if loss_kind == "dllp":
        p = _as_prob(rho)
        q = _as_prob(rho_tilde)
        loss = kl_proportion_loss(p, q)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(p > 0, -p / q, 0.0)
        return loss, g
    loss = tv_star_loss(rho, rho_tilde, alpha)
    return loss, tv_star_gradient(rho, rho_tilde, alpha)


def backward(
    params: ModelParams,
    instances,
    rho,
    loss_params: LossParams,
    loss_kind: str = "combined",
) -> BackwardResult:
    """Exact gradient of the selected per-bag objective w.r.t. every parameter.

    The chain runs proportion loss -> mean aggregation (Jacobian I/|B|) ->
    softmax Jacobian -> affine layers. The contrastive gradient flows only
    into the representation parameters, so it vanishes identically for the
    linear architecture.
    """
    if loss_kind not in LOSS_KINDS:
        raise InvalidArguments(f"loss_kind must be one of {LOSS_KINDS}, got {loss_kind!r}")
    x = np.atleast_2d(np.asarray(instances, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise EmptyBag("cannot run backward on an empty bag")
    z, probs = forward_batch(params, x)
    rho_tilde = probs.mean(axis=0)

    prop_loss, g = proportion_grad(rho, rho_tilde, loss_params.alpha, loss_kind)
    total = float(prop_loss)
    use_ssc = loss_kind == "combined" and loss_params.lambda_ > 0
    # a diverged dllp gradient can carry infinities through the chain here;
    # the resulting non-finite parameter gradients are detected by the trainer
    with np.errstate(invalid="ignore", over="ignore"):
        dq = g / n
        # softmax Jacobian applied row-wise: diag(q) - q q^T
        dlogits = probs * dq - probs * (probs @ dq)[:, None]
        grads = {"w_out": dlogits.T @ z, "b_out": dlogits.sum(axis=0)}
        if params.arch == "mlp1":
            dz = dlogits @ params.w_out
            if use_ssc:
                total += loss_params.lambda_ * ssc_loss(z)
                dz = dz + loss_params.lambda_ * ssc_gradient(z)
            da = (1.0 - z * z) * dz
            grads["w_hidden"] = da.T @ x
            grads["b_hidden"] = da.sum(axis=0)
        elif use_ssc:
            # embeddings are the raw inputs: the term is a parameter-free constant
            total += loss_params.lambda_ * ssc_loss(z)
    return BackwardResult(grads, total, float(prop_loss), rho_tilde)


def save_checkpoint(params: ModelParams, path, train_config: dict | None = None) -> None:
    """Write a JSON checkpoint; floats use repr so reloads are bit-exact."""
    doc = {
        "format": "llp-forge-checkpoint",
        "arch": params.arch,
        "in_dim": params.in_dim,
        "embed_dim": params.embed_dim,
        "num_classes": params.num_classes,
        "weights": {k: v.tolist() for k, v in params._arrays().items()},
        "train_config": train_config,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, train_config dict or None)."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "llp-forge-checkpoint":
        raise InvalidArguments(f"{path}: not a model checkpoint")
    w = doc["weights"]
    params = ModelParams(
        doc["arch"],
        np.asarray(w["w_out"], dtype=np.float64),
        np.asarray(w["b_out"], dtype=np.float64),
        np.asarray(w["w_hidden"], dtype=np.float64) if "w_hidden" in w else None,
        np.asarray(w["b_hidden"], dtype=np.float64) if "b_hidden" in w else None,
    )
    return params, doc.get("train_config")
