"""Executable audits of the loss-family properties and the generalization bound.

The bound audit uses the threshold class f_t(x) = 1[x >= t] on X = [0, 1]
with the uniform measure: its VC dimension is exactly 1 and the population
aggregate E 1[f_t(x) = 1] = 1 - t is analytic, which removes one Monte
Carlo layer. The bound holds uniformly over the class, so checking it on a
finite threshold grid is a valid (weaker) audit. All randomized audits
sample the simplex uniformly, i.e. Dirichlet(1, ..., 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidArguments, NonPositiveAlpha, new_rng
from .losses import (
    LossParams,
    kl_proportion_loss,
    ssc_gradient,
    ssc_loss,
    tv_distance,
    tv_star_gradient,
    tv_star_loss,
)
from .model import backward, forward_batch, init_params, proportion_grad

PINSKER_SLACK = 1e-12


@dataclass(frozen=True)
class ThresholdHypothesis:
    """Binary classifier 1[x >= t] on [0, 1]; population aggregate is 1 - t."""

    t: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise InvalidArguments(f"threshold must lie in [0, 1], got {self.t}")

    @property
    def population_aggregate(self) -> float:
        return 1.0 - self.t

    def empirical_aggregate(self, xs: np.ndarray) -> float:
        xs = np.asarray(xs, dtype=np.float64)
        return float(np.mean(xs >= self.t))


@dataclass(frozen=True)
class BoundReport:
    trials: int
    violations: int
    mean_slack: float
    rhs: float

    def __post_init__(self):
        if self.violations > self.trials:
            raise InvalidArguments("violations cannot exceed trials")

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.trials

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "violations": self.violations,
            "violation_fraction": self.violation_fraction,
            "mean_slack": self.mean_slack,
            "rhs": self.rhs,
        }


def sample_simplex(rng: np.random.Generator, n: int, num_classes: int) -> np.ndarray:
    """n uniform draws from the probability simplex (Dirichlet with unit alphas)."""
    return rng.dirichlet(np.ones(num_classes), size=n)


def pinsker_audit(n_trials: int, num_classes: int = 2, seed: int = 0) -> int:
    """Count sampled pairs violating KL >= 2 * tv**2 beyond float slack.

    The inequality is a theorem, so the count is 0 for every seed; a
    nonzero return indicates an implementation bug.
    """
    if n_trials < 1:
        raise InvalidArguments(f"n_trials must be >= 1, got {n_trials}")
    rng = new_rng(seed)
    violations = 0
    chunk = 200_000
    remaining = n_trials
    while remaining > 0:
        n = min(chunk, remaining)
        p = sample_simplex(rng, n, num_classes)
        q = sample_simplex(rng, n, num_classes)
        kl = kl_proportion_loss(p, q)
        bound = 2.0 * tv_distance(p, q) ** 2
        violations += int(np.sum(kl < bound - PINSKER_SLACK))
        remaining -= n
    return violations


def theorem_rhs(vc_dim: int, m: int, delta: float, alpha: float) -> float:
    """Deviation term of the aggregate bound.

    kappa * ( sqrt(8 V ln(e m / V) / m) + sqrt(2 ln(4 / delta) / m) )
    with kappa = 2^(2/alpha - 1); natural logarithms.
    """
    if not (isinstance(vc_dim, (int, np.integer)) and vc_dim >= 1):
        raise InvalidArguments(f"vc_dim must be an integer >= 1, got {vc_dim}")
    if not m > vc_dim:
        raise InvalidArguments(f"m must exceed vc_dim, got m={m}, vc_dim={vc_dim}")
    if not 0.0 < delta < 1.0:
        raise InvalidArguments(f"delta must lie in (0, 1), got {delta}")
    if not alpha > 0:
        raise InvalidArguments(f"alpha must be > 0, got {alpha}")
    kappa = 2.0 ** (2.0 / alpha - 1.0)
    complexity = math.sqrt(8.0 * vc_dim * math.log(math.e * m / vc_dim) / m)
    confidence = math.sqrt(2.0 * math.log(4.0 / delta) / m)
    return kappa * (complexity + confidence)


def _binary_tv_star(p, q, alpha: float):
    """tv_star_loss on the two-component distributions (p, 1-p) vs (q, 1-q)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    pp = np.stack([p, 1.0 - p], axis=-1)
    qq = np.stack([np.broadcast_to(q, p.shape), 1.0 - np.broadcast_to(q, p.shape)], axis=-1)
    return tv_star_loss(pp, qq, alpha)


def theorem_mc_audit(
    m: int,
    delta: float,
    alpha: float,
    n_hypotheses: int = 200,
    n_trials: int = 1000,
    seed: int = 0,
    trial_log=None,
) -> BoundReport:
    """Monte-Carlo audit of the aggregate bound over a threshold grid.

    Per trial: draw m uniform points, compare the analytic-aggregate loss
    against the empirical-aggregate loss plus the deviation term for every
    grid threshold; the trial violates if any threshold exceeds the bound.
    The violation fraction must not exceed delta (and is ~0 in practice
    because the bound is loose). When trial_log is a path, a per-trial CSV
    (trial,min_slack,violated) is written there.
    """
    if n_hypotheses < 1 or n_trials < 1:
        raise InvalidArguments("n_hypotheses and n_trials must be >= 1")
    rhs_const = theorem_rhs(1, m, delta, alpha)
    target = ThresholdHypothesis(0.5)
    thresholds = np.linspace(0.0, 1.0, n_hypotheses)
    lhs = _binary_tv_star(1.0 - thresholds, target.population_aggregate, alpha)
    rng = new_rng(seed)
    violations = 0
    slacks = np.empty(n_trials)
    for trial in range(n_trials):
        xs = np.sort(rng.random(m))
        count_ge = m - np.searchsorted(xs, thresholds, side="left")
        rho_emp = count_ge / m
        rho0_emp = target.empirical_aggregate(xs)
        rhs = _binary_tv_star(rho_emp, rho0_emp, alpha) + rhs_const
        slack = float(np.min(rhs - lhs))
        slacks[trial] = slack
        if slack < 0:
            violations += 1
    if trial_log is not None:
        lines = ["trial,min_slack,violated"]
        lines += [f"{i},{float(s)!r},{int(s < 0)}" for i, s in enumerate(slacks)]
        Path(trial_log).write_text("\n".join(lines) + "\n")
    return BoundReport(n_trials, violations, float(slacks.mean()), rhs_const)


def _interior_pairs(rng, n: int, num_classes: int, margin: float = 1e-3):
    """Simplex pairs with components and componentwise gaps >= margin.

    Keeps perturbation probes (norm 1e-4) away from both the simplex
    boundary and the |p_i - q_i| = 0 kinks of the loss.
    """
    ps, qs = [], []
    have = 0
    while have < n:
        p = sample_simplex(rng, n, num_classes)
        q = sample_simplex(rng, n, num_classes)
        ok = (
            (p.min(axis=1) >= margin)
            & (q.min(axis=1) >= margin)
            & (np.abs(p - q).min(axis=1) >= margin)
        )
        p, q = p[ok], q[ok]
        ps.append(p)
        qs.append(q)
        have += p.shape[0]
    return np.vstack(ps)[:n], np.vstack(qs)[:n]


def _tangent_steps(rng, n: int, num_classes: int, eps: float) -> np.ndarray:
    """Random zero-sum directions of norm eps (stay on the simplex hyperplane)."""
    u = rng.standard_normal((n, num_classes))
    u -= u.mean(axis=1, keepdims=True)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * eps


def lipschitz_probe(
    alpha: float,
    n_pairs: int,
    seed: int = 0,
    num_classes: int = 3,
    eps: float = 1e-4,
) -> tuple[float, float]:
    """Empirical value and gradient slopes of the tv-star loss.

    Returns (max |dL| / |dp|, max |dgrad| / |dp|) over random interior pairs
    perturbed along the simplex by norm-eps steps. Both are finite for
    alpha >= 1; contrast kl_slope_sequence, which diverges.
    """
    if not alpha > 0:
        raise NonPositiveAlpha(f"alpha must be > 0, got {alpha}")
    if n_pairs < 1:
        raise InvalidArguments(f"n_pairs must be >= 1, got {n_pairs}")
    rng = new_rng(seed)
    p, q = _interior_pairs(rng, n_pairs, num_classes)
    u = _tangent_steps(rng, n_pairs, num_classes, eps)
    base = tv_star_loss(p, q, alpha)
    moved_first = tv_star_loss(p + u, q, alpha)
    moved_second = tv_star_loss(p, q + u, alpha)
    value_slope = np.maximum(np.abs(moved_first - base), np.abs(moved_second - base)) / eps
    g_base = tv_star_gradient(p, q, alpha)
    g_moved = tv_star_gradient(p, q + u, alpha)
    grad_slope = np.linalg.norm(g_moved - g_base, axis=1) / eps
    return float(value_slope.max()), float(grad_slope.max())


def kl_slope_sequence(qs=(1e-2, 1e-4, 1e-6), rho=(0.5, 0.5)) -> list[float]:
    """Finite-difference slopes of the KL loss as the prediction nears a vertex.

    With rho fixed and rho_tilde = (q, 1-q), the slope scales like 1/q, so
    the sequence grows without bound; this is the unbounded-Lipschitz
    counterpart to lipschitz_probe.
    """
    rho = np.asarray(rho, dtype=np.float64)
    slopes = []
    for q in qs:
        base = np.array([q, 1.0 - q])
        step = q / 2.0
        u = np.array([-1.0, 1.0]) / math.sqrt(2.0) * step
        slope = abs(kl_proportion_loss(rho, base + u) - kl_proportion_loss(rho, base)) / step
        slopes.append(float(slope))
    return slopes


def gradient_check(
    seed: int = 0,
    n_per_alpha: int = 50,
    alphas=(0.5, 1.0, 2.0, 3.5),
    step: float = 1e-6,
) -> dict:
    """Runtime finite-difference audit of every analytic gradient.

    Returns the maximum relative errors for the proportion-loss gradient,
    the contrastive gradient, and the end-to-end backward pass. Sampled
    points avoid the documented subgradient neighborhoods (component gaps
    below 1e-3).
    """
    rng = new_rng(seed)
    report = {"tv_star": 0.0, "ssc": 0.0, "backward": 0.0, "configs": 0}

    def rel_err(analytic, numeric):
        denom = max(float(np.linalg.norm(numeric)), 1e-12)
        return float(np.linalg.norm(analytic - numeric)) / denom

    for alpha in alphas:
        p, q = _interior_pairs(rng, n_per_alpha, num_classes=3)
        for i in range(n_per_alpha):
            fd = np.array(
                [
                    (
                        tv_star_loss(p[i], _bump(q[i], j, step), alpha)
                        - tv_star_loss(p[i], _bump(q[i], j, -step), alpha)
                    )
                    / (2 * step)
                    for j in range(3)
                ]
            )
            err = rel_err(tv_star_gradient(p[i], q[i], alpha), fd)
            report["tv_star"] = max(report["tv_star"], err)

    for _ in range(n_per_alpha):
        n, h = int(rng.integers(2, 7)), int(rng.integers(2, 9))
        z = rng.standard_normal((n, h))
        z *= (rng.uniform(0.5, 2.0, size=n) / np.linalg.norm(z, axis=1))[:, None]
        fd = np.zeros_like(z)
        for r in range(n):
            for c in range(h):
                fd[r, c] = (
                    ssc_loss(_bump2(z, r, c, step)) - ssc_loss(_bump2(z, r, c, -step))
                ) / (2 * step)
        report["ssc"] = max(report["ssc"], rel_err(ssc_gradient(z), fd))

    for alpha in alphas:
        for lam in (0.0, 0.5):
            for arch in ("linear", "mlp1"):
                err = _backward_fd_error(rng, arch, alpha, lam, step)
                if err is not None:
                    report["backward"] = max(report["backward"], err)
                    report["configs"] += 1
    return report


def _bump(vec, idx, step):
    out = np.array(vec, dtype=np.float64)
    out[idx] += step
    return out


def _bump2(mat, r, c, step):
    out = np.array(mat, dtype=np.float64)
    out[r, c] += step
    return out


def _backward_fd_error(rng, arch, alpha, lam, step, num_classes=2, dim=3, hidden=4):
    params = init_params(arch, dim, num_classes, hidden, seed=int(rng.integers(2**32)))
    for k, arr in params._arrays().items():
        arr += rng.standard_normal(arr.shape) * 0.5
    x = rng.standard_normal((6, dim))
    labels = rng.integers(0, num_classes, size=6)
    rho = np.bincount(labels, minlength=num_classes) / 6

    lp = LossParams(alpha, lam)

    def objective(p):
        z, probs = forward_batch(p, x)
        rho_tilde = probs.mean(axis=0)
        loss, _ = proportion_grad(rho, rho_tilde, alpha, "combined")
        if lam > 0 and arch == "mlp1":
            loss = loss + lam * ssc_loss(z)
        return float(loss)

    _, probs = forward_batch(params, x)
    if np.abs(probs.mean(axis=0) - rho).min() < 1e-3:
        return None  # subgradient neighborhood, skipped
    result = backward(params, x, rho, lp, "combined")
    worst = 0.0
    for key, arr in params._arrays().items():
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            up = objective(params)
            arr[idx] = orig - step
            down = objective(params)
            arr[idx] = orig
            fd[idx] = (up - down) / (2 * step)
            it.iternext()
        denom = max(float(np.linalg.norm(fd)), 1e-8)
        worst = max(worst, float(np.linalg.norm(result.grads[key] - fd)) / denom)
    return worst
