"""Optimal, heuristic and capped block weights, and the weight sensitivity constant.

For a block of size k that is active with probability p the optimal weight
``w`` is the unique nonnegative root of

    p / (1 - p) * w = E[(chi_k - w)_+]

The left side grows linearly from 0, the right side decreases from the chi
mean to 0, so a sign change always exists on ``[0, w_hi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import BlockPartition, ModelError, PriorModel1, PriorModel2
from .specfun import chi_mean, chi_tail_mean, chi_tail_prob, gammaincc_reg

__all__ = [
    "WeightSolverConfig",
    "WeightSolveError",
    "weight_residual",
    "solve_weight_scalar",
    "solve_model1",
    "solve_model2",
    "heuristic_weights",
    "robustness_constant",
]


class WeightSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightSolverConfig:
    root_tol: float = 1e-12
    max_bracket_doublings: int = 60
    max_iters: int = 200
    # Model 2 degenerate accuracies: alpha = 0 -> cap_factor * max finite lambda,
    # alpha = 1 -> lambda_min.
    cap_factor: float = 10.0
    lambda_min: float = 1e-8

    def __post_init__(self):
        if self.root_tol <= 0:
            raise ValueError("root_tol must be positive")
        if self.max_iters < 1 or self.max_bracket_doublings < 1:
            raise ValueError("iteration limits must be >= 1")


DEFAULT_CONFIG = WeightSolverConfig()


def weight_residual(w, p, k):
    """``p/(1-p) w - E[(chi_k - w)_+]``; zero at the optimal weight."""
    return p / (1.0 - p) * np.asarray(w, dtype=float) - chi_tail_mean(w, k)


def solve_weight_scalar(p: float, k: int, cfg: WeightSolverConfig = DEFAULT_CONFIG) -> float:
    """Optimal weight for one block of size ``k`` active with probability ``p``."""
    if not 0.0 < p < 1.0:
        raise ModelError(f"probability must lie strictly in (0, 1), got {p}")
    if k < 1 or int(k) != k:
        raise ModelError(f"block size must be a positive integer, got {k}")
    ratio = p / (1.0 - p)

    def g(w):
        return ratio * w - chi_tail_mean(w, k)

    hi = chi_mean(k)
    for _ in range(cfg.max_bracket_doublings):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise WeightSolveError(f"no bracket for p={p}, k={k}: g({hi}) = {g(hi)}")
    w = brentq(g, 0.0, hi, xtol=cfg.root_tol, rtol=4 * np.finfo(float).eps, maxiter=cfg.max_iters)
    # Newton polish; g'(w) = ratio + P(chi_k > w) > 0.
    for _ in range(2):
        step = g(w) / (ratio + chi_tail_prob(w, k))
        if not math.isfinite(step) or w - step < 0:
            break
        w -= step
    return float(w)


def solve_model1(
    prior: PriorModel1, partition: BlockPartition, cfg: WeightSolverConfig = DEFAULT_CONFIG
) -> np.ndarray:
    """Optimal per-block weights; blocks are solved independently."""
    if prior.q != partition.q:
        raise ModelError(f"prior has {prior.q} blocks, partition has {partition.q}")
    cache: dict[tuple[float, int], float] = {}
    out = np.empty(partition.q)
    for b, (p, k) in enumerate(zip(prior.p, partition.sizes)):
        key = (float(p), int(k))
        if key not in cache:
            cache[key] = solve_weight_scalar(*key, cfg)
        out[b] = cache[key]
    return out


def solve_model2(prior2: PriorModel2, k: int, cfg: WeightSolverConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Optimal per-set weights for equal block size ``k``.

    Sets with alpha = 1 get ``cfg.lambda_min``; sets with alpha = 0 get
    ``cfg.cap_factor`` times the largest regular weight (or times the chi
    mean if no regular set exists).
    """
    alphas = prior2.alphas
    lam = np.empty(alphas.size)
    regular = (alphas > 0) & (alphas < 1)
    for i in np.flatnonzero(regular):
        lam[i] = solve_weight_scalar(float(alphas[i]), k, cfg)
    lam[alphas >= 1] = cfg.lambda_min
    base = lam[regular].max() if regular.any() else chi_mean(k)
    lam[alphas <= 0] = cfg.cap_factor * base
    return lam


def heuristic_weights(probs, eps: float = 0.01) -> np.ndarray:
    """``1 / (p + eps)`` elementwise; works for block probabilities or set accuracies."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    probs = np.asarray(probs.p if isinstance(probs, PriorModel1) else probs, dtype=float)
    return 1.0 / (probs + eps)


def robustness_constant(k: int, p: float, cfg: WeightSolverConfig = DEFAULT_CONFIG, h: float | None = None) -> float:
    """Lipschitz constant bounding ``|w(p) - w(p')| <= c |p - p'|``.

    ``c = (sqrt2 h (Gamma(k/2) - G) + 2 G)^2 / (2 sqrt2 Gamma(k/2) G)`` with
    ``h`` the optimal weight at ``p`` and ``G = Gamma(k/2, h^2/2)`` the upper
    incomplete gamma. Both sides are divided by ``Gamma(k/2)^2`` so only the
    regularised ``Q = G / Gamma(k/2)`` is needed. Returns ``inf`` when ``Q``
    underflows.
    """
    if h is None:
        h = solve_weight_scalar(p, k, cfg)
    Q = gammaincc_reg(k / 2.0, h * h / 2.0)
    if Q <= 0.0:
        return math.inf
    num = math.sqrt(2.0) * h * (1.0 - Q) + 2.0 * Q
    return num * num / (2.0 * math.sqrt(2.0) * Q)
