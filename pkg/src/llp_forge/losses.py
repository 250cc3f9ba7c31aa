"""Proportion-level losses, the contrastive auxiliary loss, and their gradients.

All pairwise losses accept SimplexVector or plain arrays and broadcast over
leading axes, so a single call can score one pair or a million sampled pairs.
Plain arrays are deliberately not checked for simplex membership: derivative
probes and audits evaluate these functions at slightly off-simplex points.

Conventions fixed here:
  * natural logarithm everywhere;
  * KL uses 0*log(0/q) := 0 and p*log(p/0) := +inf, returned as an explicit
    infinity rather than an exception so sweeps can record divergence;
  * gradients of the proportion losses are taken w.r.t. the second
    (prediction-side) argument;
  * where a difference component is exactly 0 the tv-star gradient returns 0
    for that coordinate (a valid subgradient at alpha = 1, and the cap for
    the alpha < 1 singularity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DimensionMismatch,
    EmptyBag,
    InvalidArguments,
    NonFiniteInput,
    NonPositiveAlpha,
    SimplexVector,
    ZeroNormEmbedding,
)


@dataclass(frozen=True)
class LossParams:
    """Hyperparameters of the combined objective.

    alpha is the exponent inside the parametrized total-variation loss;
    lambda_ weights the contrastive auxiliary term.
    """

    alpha: float
    lambda_: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise NonPositiveAlpha(f"alpha must be > 0, got {self.alpha}")
        if not (np.isfinite(self.lambda_) and self.lambda_ >= 0):
            raise InvalidArguments(f"lambda must be >= 0, got {self.lambda_}")


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """Penultimate-layer embeddings for one bag, one row per instance."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise DimensionMismatch(f"embeddings must be 2-D, got ndim={rows.ndim}")
        if rows.shape[0] < 1:
            raise EmptyBag("embedding batch must contain at least one row")
        if rows.shape[1] < 1:
            raise DimensionMismatch("embedding width must be >= 1")
        if not np.all(np.isfinite(rows)):
            raise NonFiniteInput("embeddings must be finite")
        if np.any(np.linalg.norm(rows, axis=1) == 0.0):
            raise ZeroNormEmbedding("cosine similarity undefined for zero rows")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)


def _as_prob(x) -> np.ndarray:
    if isinstance(x, SimplexVector):
        return x.values
    return np.asarray(x, dtype=np.float64)


def _pair(rho, rho_tilde):
    p, q = _as_prob(rho), _as_prob(rho_tilde)
    if p.shape[-1] != q.shape[-1]:
        raise DimensionMismatch(
            f"class counts differ: {p.shape[-1]} vs {q.shape[-1]}"
        )
    try:
        np.broadcast_shapes(p.shape, q.shape)
    except ValueError as exc:
        raise DimensionMismatch(str(exc)) from None
    return p, q


def _check_alpha(alpha: float) -> float:
    if not (np.isfinite(alpha) and alpha > 0):
        raise NonPositiveAlpha(f"alpha must be > 0, got {alpha}")
    return float(alpha)


def kl_proportion_loss(rho, rho_tilde):
    """KL divergence sum_c rho^c * ln(rho^c / rho_tilde^c).

    Returns +inf when some rho_tilde^c = 0 < rho^c; the loss is not upper
    bounded. Not symmetric in its arguments.
    """
    p, q = _pair(rho, rho_tilde)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = p * np.log(p / q)
    terms = np.where(p > 0, terms, 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def tv_distance(rho, rho_tilde):
    """Total variation distance 0.5 * sum_c |rho^c - rho_tilde^c|, in [0, 1]."""
    p, q = _pair(rho, rho_tilde)
    out = 0.5 * np.abs(p - q).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def tv_star_loss(rho, rho_tilde, alpha: float):
    """Parametrized proportion loss 0.5 * (sum_c |rho^c - rho_tilde^c|^alpha)^(2/alpha).

    Symmetric, zero iff the arguments are equal, and bounded by 2 for
    alpha >= 1. At alpha = 1 it equals 2 * tv_distance**2.
    """
    alpha = _check_alpha(alpha)
    p, q = _pair(rho, rho_tilde)
    s = np.power(np.abs(p - q), alpha).sum(axis=-1)
    out = 0.5 * np.power(s, 2.0 / alpha)
    return float(out) if out.ndim == 0 else out


def tv_star_gradient(rho, rho_tilde, alpha: float):
    """Gradient of tv_star_loss w.r.t. the prediction-side argument rho_tilde.

    With d = rho_tilde - rho and S = sum_i |d_i|^alpha the i-th component is

        S^(2/alpha - 1) * |d_i|^(alpha - 1) * sign(d_i),

    evaluated in log space so extreme |d_i| neither overflow nor underflow.
    Components with d_i = 0 return 0 (subgradient choice).
    """
    alpha = _check_alpha(alpha)
    p, q = _pair(rho, rho_tilde)
    d = q - p
    absd = np.abs(d)
    mask = absd > 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logd = np.where(mask, np.log(np.where(mask, absd, 1.0)), -np.inf)
        # logsumexp of alpha*log|d_i| over the nonzero components
        a = alpha * logd
        amax = np.max(a, axis=-1, keepdims=True)
        amax_safe = np.where(np.isfinite(amax), amax, 0.0)
        log_s = np.squeeze(
            np.log(np.exp(a - amax_safe).sum(axis=-1, keepdims=True)) + amax_safe,
            axis=-1,
        )
        exponent = (2.0 / alpha - 1.0) * log_s[..., None] + (alpha - 1.0) * logd
        grad = np.where(mask, np.sign(d) * np.exp(exponent), 0.0)
    return grad


def ssc_loss(embeddings) -> float:
    """Self-supervised contrastive loss over one bag of embeddings.

    Mean over instances j of -log( e^{s_jj} / sum_k e^{s_jk} ) with s the
    cosine similarity. The numerator similarity s_jj is identically 1; the
    formula is kept literally, which makes the loss exactly 0 for a
    single-instance bag and >= 0 otherwise.
    """
    z = _embedding_rows(embeddings)
    s = _cosine_matrix(z)
    lse = _logsumexp_rows(s)
    return float(np.mean(lse - np.diagonal(s)))


def ssc_gradient(embeddings) -> np.ndarray:
    """Analytic gradient of ssc_loss w.r.t. the raw (unnormalized) embeddings.

    The diagonal similarity is constant in the embeddings, so only the
    off-diagonal softmax weights contribute.
    """
    z = _embedding_rows(embeddings)
    n = z.shape[0]
    norms = np.linalg.norm(z, axis=1)
    zh = z / norms[:, None]
    s = zh @ zh.T
    p = np.exp(s - _logsumexp_rows(s)[:, None])
    w = p / n
    np.fill_diagonal(w, 0.0)
    m = w + w.T
    g = (m @ zh - (m * s).sum(axis=1)[:, None] * zh) / norms[:, None]
    return g


def combined_loss(rho, rho_tilde, embeddings, params: LossParams) -> float:
    """Overall objective: tv_star_loss plus lambda times the contrastive term.

    With lambda = 0 the auxiliary term is disabled entirely and the
    embeddings are not touched.
    """
    prop = tv_star_loss(rho, rho_tilde, params.alpha)
    if np.ndim(prop) != 0:
        raise DimensionMismatch("combined_loss expects a single proportion pair")
    if params.lambda_ == 0:
        return float(prop)
    return float(prop) + params.lambda_ * ssc_loss(embeddings)


def _embedding_rows(embeddings) -> np.ndarray:
    if isinstance(embeddings, EmbeddingBatch):
        return embeddings.rows
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
        raise DimensionMismatch(f"expected a |B| x H matrix, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("embeddings must be finite")
    if np.any(np.linalg.norm(z, axis=1) == 0.0):
        raise ZeroNormEmbedding("cosine similarity undefined for zero rows")
    return z


def _cosine_matrix(z: np.ndarray) -> np.ndarray:
    zh = z / np.linalg.norm(z, axis=1)[:, None]
    return zh @ zh.T


def _logsumexp_rows(s: np.ndarray) -> np.ndarray:
    m = s.max(axis=1)
    return np.log(np.exp(s - m[:, None]).sum(axis=1)) + m
