"""Weighted l1,2 minimisation under an equality or noise-ball constraint.

Solves ``min sum_b w_b |z_b|_2  s.t.  |A z - y|_2 <= eta`` (``eta = 0`` means
``A z = y``) by ADMM on the splitting ``z = v``: ``z`` is projected onto the
constraint set, ``v`` carries the block-norm proximal map. The variable may
be a matrix (one column per snapshot), in which case blocks group rows and
the constraint uses the Frobenius norm; this covers joint-sparse recovery.
Real and complex data are both handled natively.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import BlockPartition, ModelError, check_weights

__all__ = [
    "MeasurementSystem",
    "SolverConfig",
    "RecoveryResult",
    "ConstraintProjector",
    "block_soft_threshold",
    "solve_weighted",
    "solve_mmv",
    "success",
    "relative_error",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementSystem:
    A: np.ndarray
    y: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A)
        y = np.asarray(self.y)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ModelError(f"A must be a non-empty matrix, got shape {A.shape}")
        if y.shape[0] != A.shape[0]:
            raise ModelError(f"y has {y.shape[0]} rows, A has {A.shape[0]}")
        if not self.eta >= 0:
            raise ModelError("eta must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    max_iters: int = 10_000
    relaxation: float = 1.6
    adaptive_rho: bool = True
    rank_tol: float = 1e-10

    def __post_init__(self):
        if self.rho <= 0 or self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("rho and tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must lie in (0, 2)")


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool
    history: list = field(default_factory=list, repr=False)


def block_soft_threshold(v, tau: float) -> np.ndarray:
    """Proximal map of ``tau * |.|_2``: shrink ``v`` toward 0 by ``tau`` in norm."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    v = np.asarray(v)
    nrm = np.linalg.norm(v)
    if nrm <= tau:
        return np.zeros_like(v)
    return v * (1.0 - tau / nrm)


def _group_shrink(x, block_ids, tau_per_block):
    """Block soft-thresholding of all blocks at once; blocks group the rows of ``x``."""
    sq = (x.real**2 + x.imag**2) if np.iscomplexobj(x) else x * x
    sq = sq.sum(axis=1)
    nrm = np.sqrt(np.bincount(block_ids, weights=sq, minlength=tau_per_block.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > tau_per_block, 1.0 - tau_per_block / nrm, 0.0)
    return x * scale[block_ids][:, None]


class ConstraintProjector:
    """Euclidean projection onto ``{Z : |A Z - Y|_F <= eta}``.

    Uses a thin SVD ``A = U S V^H`` truncated at numerical rank, so dependent
    rows are reduced once up front. Inside the row space the constraint is an
    ellipsoid; its projection is ``a = (I + mu S^2)^-1 (a0 + mu S Yt)`` with
    the multiplier ``mu`` found by Newton on the secular equation.
    """

    def __init__(self, A, Y, eta: float = 0.0, rank_tol: float = 1e-10):
        A = np.asarray(A)
        Y = np.asarray(Y)
        if Y.ndim == 1:
            Y = Y[:, None]
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
        r = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        self.U, self.s, self.Vh = U[:, :r], s[:r], Vh[:r]
        self.V = self.Vh.conj().T
        Yt = self.U.conj().T @ Y
        self.Yt = Yt
        off_range = float(np.linalg.norm(Y - self.U @ Yt) ** 2)
        self.eta = float(eta)
        slack = self.eta**2 - off_range
        if slack < -1e-10 * max(1.0, float(np.linalg.norm(Y)) ** 2):
            if self.eta == 0:
                log.warning("y is not in the range of A; projecting onto least-squares solutions")
                slack = 0.0
            else:
                raise ModelError("constraint set is empty: eta is below the least-squares residual")
        self.radius = math.sqrt(max(slack, 0.0))
        self.exact = self.radius == 0.0
        # Affine target used when eta = 0.
        self._c = self.Yt / self.s[:, None] if r else self.Yt
        self._mu = 1.0

    def __call__(self, X):
        a0 = self.Vh @ X
        if self.exact:
            return X - self.V @ (a0 - self._c)
        s = self.s[:, None]
        resid0 = s * a0 - self.Yt
        e2 = np.sum(np.abs(resid0) ** 2, axis=1)
        if math.sqrt(e2.sum()) <= self.radius:
            return X
        mu = self._secular(e2)
        a = (a0 + mu * s * self.Yt) / (1.0 + mu * s * s)
        return X + self.V @ (a - a0)

    def _secular(self, e2):
        # Solve |r(mu)| = radius with r_i(mu) = r_i(0) / (1 + mu s_i^2); Newton on
        # 1/|r(mu)| - 1/radius, which is concave increasing in mu.
        s2 = self.s**2
        mu = max(self._mu, 0.0)
        for _ in range(100):
            d = 1.0 + mu * s2
            f2 = float(np.sum(e2 / d**2))
            nrm = math.sqrt(f2)
            df2 = float(np.sum(-2.0 * e2 * s2 / d**3))
            g = 1.0 / nrm - 1.0 / self.radius
            dg = -0.5 * df2 / (f2 * nrm)
            step = g / dg
            new = mu - step
            if new < 0:
                new = mu / 2.0
            if abs(new - mu) <= 1e-14 * max(1.0, mu):
                mu = new
                break
            mu = new
        self._mu = mu
        return mu


def _admm(A, Y, block_ids, w, eta, cfg: SolverConfig, record=False) -> RecoveryResult:
    n = A.shape[1]
    proj = ConstraintProjector(A, Y, eta, cfg.rank_tol)
    dtype = np.result_type(A, Y, float)
    k = Y.shape[1]
    v = np.zeros((n, k), dtype=dtype)
    u = np.zeros((n, k), dtype=dtype)
    rho = cfg.rho
    sqrt_dim = math.sqrt(n * k * (2 if np.iscomplexobj(v) else 1))
    history = []
    z = proj(v)
    converged = False
    r_norm = s_norm = math.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        z = proj(v - u)
        z_hat = cfg.relaxation * z + (1.0 - cfg.relaxation) * v
        v_old = v
        v = _group_shrink(z_hat + u, block_ids, w / rho)
        u = u + z_hat - v
        r_norm = float(np.linalg.norm(z - v))
        s_norm = rho * float(np.linalg.norm(v - v_old))
        eps_pri = sqrt_dim * cfg.abs_tol + cfg.rel_tol * max(np.linalg.norm(z), np.linalg.norm(v))
        eps_dual = sqrt_dim * cfg.abs_tol + cfg.rel_tol * rho * np.linalg.norm(u)
        if record:
            history.append((r_norm, s_norm, rho))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if cfg.adaptive_rho and it % 10 == 0:
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                u = u / 2.0
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                u = u * 2.0
    if not converged:
        log.info("ADMM stopped at max_iters=%d (primal %.2e, dual %.2e)", cfg.max_iters, r_norm, s_norm)
    x = proj(v)
    sq = np.sum(np.abs(x) ** 2, axis=1)
    obj = float(np.sum(w * np.sqrt(np.bincount(block_ids, weights=sq, minlength=w.size))))
    return RecoveryResult(x, it, r_norm, s_norm, obj, converged, history)


def solve_weighted(
    partition: BlockPartition, w, system: MeasurementSystem, cfg: SolverConfig = SolverConfig(), record: bool = False
) -> RecoveryResult:
    """Weighted l1,2 recovery of a vector; ``x_hat`` satisfies the constraint up to round-off."""
    A = system.A
    if A.shape[1] != partition.n:
        raise ModelError(f"A has {A.shape[1]} columns, partition covers {partition.n}")
    w = check_weights(w, partition.q)
    y = np.asarray(system.y)
    if y.ndim != 1:
        raise ModelError("y must be a vector; use solve_mmv for multiple snapshots")
    res = _admm(A, y[:, None], partition.block_ids, w, system.eta, cfg, record)
    res.x_hat = res.x_hat[:, 0]
    return res


def solve_mmv(
    A, Y, w, eta: float = 0.0, cfg: SolverConfig = SolverConfig(), partition: BlockPartition | None = None,
    record: bool = False,
) -> RecoveryResult:
    """Joint-sparse recovery of ``X`` (q x k) from ``Y = A X + E`` with row blocks.

    By default each row of ``X`` is its own block; pass ``partition`` over the
    rows to group several rows.
    """
    A = np.asarray(A)
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != A.shape[0]:
        raise ModelError(f"Y has {Y.shape[0]} rows, A has {A.shape[0]}")
    if partition is None:
        partition = BlockPartition.contiguous(A.shape[1], [1] * A.shape[1])
    if partition.n != A.shape[1]:
        raise ModelError("row partition does not match the columns of A")
    w = check_weights(w, partition.q)
    if not eta >= 0:
        raise ModelError("eta must be nonnegative")
    return _admm(A, Y, partition.block_ids, w, eta, cfg, record)


def relative_error(x_hat, x_true) -> float:
    x_true = np.asarray(x_true)
    nrm = np.linalg.norm(x_true)
    if nrm == 0:
        raise ValueError("relative error undefined for a zero ground truth")
    return float(np.linalg.norm(np.asarray(x_hat) - x_true) / nrm)


def success(x_hat, x_true, threshold: float = 1e-3) -> bool:
    """Relative l2 error at most ``threshold``."""
    return relative_error(x_hat, x_true) <= threshold
