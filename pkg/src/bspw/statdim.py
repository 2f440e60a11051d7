"""Statistical-dimension upper bounds and their Monte-Carlo counterpart.

Every bound here is a one-dimensional convex minimisation over a shared scale
``t >= 0`` of

    sum_b  pi_b (k_b + t^2 w_b^2) + (1 - pi_b) E[(chi_{k_b} - t w_b)_+^2]

where ``pi_b`` is the indicator of a fixed block support (the deterministic
bound) or the block activation probability (the expected bound). Block sizes
are real dimensions; a complex block of length k counts as 2k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import BlockPartition, ModelError, PriorModel1, PriorModel2, check_weights
from .specfun import chi_tail_mean, chi_tail_second_moment

__all__ = [
    "StatDimResult",
    "statdim_bound",
    "expected_bound_model1",
    "expected_bound_model2",
    "bound_objective",
    "empirical_statdim",
    "real_block_sizes",
]


@dataclass(frozen=True)
class StatDimResult:
    bound: float
    t_star: float
    per_block_terms: np.ndarray
    attained: bool = True


def real_block_sizes(partition: BlockPartition, is_complex: bool = False) -> np.ndarray:
    return partition.sizes * (2 if is_complex else 1)


def _terms(t, w, k, pi):
    tw = t * w
    return pi * (k + tw * tw) + (1.0 - pi) * chi_tail_second_moment(tw, k)


def _slope(t, w, k, pi):
    # d/dz E[(chi_k - z)_+^2] = -2 E[(chi_k - z)_+]
    tw = t * w
    return float(np.sum(2.0 * pi * tw * w - 2.0 * (1.0 - pi) * w * chi_tail_mean(tw, k)))


def _minimize(w, k, pi, tol=1e-14, max_doublings=200) -> StatDimResult:
    w = np.asarray(w, dtype=float)
    k = np.asarray(k, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.all(pi >= 1.0):
        return StatDimResult(float(np.sum(k)), 0.0, k.copy())
    if np.all(pi <= 0.0):
        # Every term decays to 0 as t -> inf; the infimum is not attained.
        return StatDimResult(0.0, math.inf, np.zeros_like(k), attained=False)
    hi = 1.0 / np.max(w)
    for _ in range(max_doublings):
        if _slope(hi, w, k, pi) > 0:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("could not bracket the minimising scale")
    t = brentq(_slope, 0.0, hi, args=(w, k, pi), xtol=tol, rtol=4 * np.finfo(float).eps)
    terms = np.asarray(_terms(t, w, k, pi), dtype=float)
    return StatDimResult(float(terms.sum()), float(t), terms)


def bound_objective(t, w, k, pi) -> float:
    """Objective of the bound at scale ``t`` (exposed for grid-scan checks)."""
    return float(np.sum(_terms(t, np.asarray(w, float), np.asarray(k, float), np.asarray(pi, float))))


def statdim_bound(partition: BlockPartition, support, w, is_complex: bool = False) -> StatDimResult:
    """Upper bound on the statistical dimension of the weighted l1,2 descent cone.

    Depends only on the block support and the weights. An empty support gives
    0 with ``attained=False`` and ``t_star = inf``.
    """
    w = check_weights(w, partition.q)
    pi = np.zeros(partition.q)
    support = np.asarray(list(support) if not isinstance(support, np.ndarray) else support, dtype=np.intp)
    if support.size and (support.min() < 0 or support.max() >= partition.q):
        raise ModelError("support indices out of range")
    pi[support] = 1.0
    return _minimize(w, real_block_sizes(partition, is_complex), pi)


def expected_bound_model1(
    partition: BlockPartition, prior: PriorModel1, w, is_complex: bool = False, full: bool = False
):
    """Upper bound on the expected number of measurements under per-block probabilities."""
    w = check_weights(w, partition.q)
    if prior.q != partition.q:
        raise ModelError(f"prior has {prior.q} blocks, partition has {partition.q}")
    res = _minimize(w, real_block_sizes(partition, is_complex), prior.p)
    return res if full else res.bound


def expected_bound_model2(
    partition: BlockPartition, prior2: PriorModel2, lam, is_complex: bool = False, full: bool = False
):
    """Upper bound on the expected number of measurements under set accuracies.

    ``sum_i k alpha_i |P_i| + inf_t sum_i |P_i| [t^2 lam_i^2 alpha_i
    + (1 - alpha_i) E[(chi_k - t lam_i)_+^2]]``. Requires equal block sizes.
    """
    k = partition.equal_size
    if k is None:
        raise ModelError("set-accuracy bound requires equal block sizes")
    if prior2.q != partition.q:
        raise ModelError(f"prior has {prior2.q} blocks, partition has {partition.q}")
    if is_complex:
        k *= 2
    lam = check_weights(lam, prior2.L, name="lambda")
    a = prior2.alphas
    sizes = prior2.set_sizes.astype(float)
    const = float(np.sum(k * a * sizes))
    free = a < 1.0
    if not free.any():
        res = StatDimResult(const, 0.0, np.full(prior2.L, 0.0))
    else:
        # Per-set terms without the constant k alpha_i, scaled by |P_i|.
        inner = _minimize_sets(lam[free], k, a[free], sizes[free])
        terms = np.zeros(prior2.L)
        terms[free] = inner.per_block_terms
        res = StatDimResult(const + inner.bound, inner.t_star, terms + k * a * sizes, inner.attained)
    return res if full else res.bound


def _minimize_sets(lam, k, a, sizes) -> StatDimResult:
    def terms(t):
        tl = t * lam
        return sizes * (a * tl * tl + (1.0 - a) * chi_tail_second_moment(tl, k))

    def slope(t):
        tl = t * lam
        return float(np.sum(sizes * (2.0 * a * tl * lam - 2.0 * (1.0 - a) * lam * chi_tail_mean(tl, k))))

    if np.all(a <= 0.0):
        return StatDimResult(0.0, math.inf, np.zeros_like(lam), attained=False)
    hi = 1.0 / np.max(lam)
    for _ in range(200):
        if slope(hi) > 0:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("could not bracket the minimising scale")
    t = brentq(slope, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    tv = np.asarray(terms(t), dtype=float)
    return StatDimResult(float(tv.sum()), float(t), tv)


def _sample_chunk(rng, n_samples, partition, on, w, directions):
    """Per-sample minimum over t of the squared distance to the scaled subdifferential."""
    g = rng.standard_normal((n_samples, partition.n))
    if not on.any():
        # Large t clears every block: the infimum is exactly 0.
        return np.zeros(n_samples)
    q = partition.q
    norms = np.empty((n_samples, q))
    proj = np.zeros((n_samples, q))
    for b, idx in enumerate(partition.blocks):
        gb = g[:, idx]
        norms[:, b] = np.sqrt(np.einsum("ij,ij->i", gb, gb))
        if on[b]:
            proj[:, b] = gb @ directions[b]
    wo = w[on]
    woff = w[~on]
    r_off = norms[:, ~on]
    s_on = proj[:, on]
    sq_on = np.sum(norms[:, on] ** 2, axis=1)
    sw2_on = float(np.sum(wo * wo))
    ws_on = s_on @ wo

    def slope(t):
        excess = np.maximum(r_off - t[:, None] * woff, 0.0)
        return 2.0 * (t * sw2_on - ws_on) - 2.0 * (excess @ woff)

    lo = np.zeros(n_samples)
    hi_cands = [np.zeros(n_samples)]
    if woff.size:
        hi_cands.append(np.max(r_off / woff, axis=1))
    if sw2_on > 0:
        hi_cands.append(np.maximum(ws_on, 0.0) / sw2_on)
    hi = np.max(np.vstack(hi_cands), axis=0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        pos = slope(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    # Exact root on the linear piece selected by the bracket.
    mid = 0.5 * (lo + hi)
    active = r_off > mid[:, None] * woff
    num = ws_on + (r_off * active) @ woff
    den = sw2_on + active.astype(float) @ (woff * woff)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(den > 0, num / den, mid)
    t = np.where((t >= lo - 1e-12) & (t <= hi + 1e-12), np.maximum(t, 0.0), mid)
    excess = np.maximum(r_off - t[:, None] * woff, 0.0)
    val = sq_on - 2.0 * t * ws_on + t * t * sw2_on + np.sum(excess * excess, axis=1)
    return np.maximum(val, 0.0)


def empirical_statdim(
    partition: BlockPartition,
    support,
    w,
    n_samples: int = 10_000,
    seed: int = 0,
    directions=None,
    chunk: int = 2048,
) -> tuple[float, float]:
    """Monte-Carlo statistical dimension of the weighted l1,2 descent cone (real signals).

    Averages ``min_{t>=0} sum_{b in B} |g_b - t w_b x_b|^2 + sum_{b not in B}
    (|g_b| - t w_b)_+^2`` over standard Gaussian ``g``, where ``x_b`` are unit
    block directions of the signal. Returns ``(mean, standard error)``.
    Chunks draw from independent child seeds so results do not depend on
    how the work is split.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    w = check_weights(w, partition.q)
    on = np.zeros(partition.q, dtype=bool)
    on[np.asarray(list(support), dtype=np.intp)] = True
    if directions is None:
        directions = {}
        for b in np.flatnonzero(on):
            d = np.zeros(partition.blocks[b].size)
            d[0] = 1.0
            directions[b] = d
    else:
        directions = {b: np.asarray(directions[b], float) / np.linalg.norm(directions[b]) for b in np.flatnonzero(on)}
    n_chunks = -(-n_samples // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    vals = []
    for i, ss in enumerate(children):
        size = min(chunk, n_samples - i * chunk)
        vals.append(_sample_chunk(np.random.default_rng(ss), size, partition, on, w, directions))
    vals = np.concatenate(vals)
    mean = math.fsum(vals) / vals.size
    stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, stderr
