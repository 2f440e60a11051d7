"""Gaussian tail-moment integrals built on the upper incomplete gamma function.

With ``J_k(z) = int_z^inf u^k exp(-u^2/2) du`` the quantities used by the
weight equations and the statistical-dimension bound are

    psi(z, k)   = int_z^inf (u - z)   u^(k-1) exp(-u^2/2) du = J_k - z J_(k-1)
    phi_B(z, k) = int_z^inf (u - z)^2 u^(k-1) exp(-u^2/2) du
                = J_(k+1) - 2 z J_k + z^2 J_(k-1)

Dividing by ``2^(k/2-1) Gamma(k/2)`` turns them into tail moments of a chi
variable with k degrees of freedom, ``E[(chi_k - z)_+]`` and
``E[(chi_k - z)_+^2]``; those normalised forms are what the solvers use.

All functions accept scalars or broadcastable arrays.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

__all__ = [
    "gammaincc_reg",
    "upper_incomplete_gamma",
    "tail_moment",
    "psi",
    "phi_B",
    "block_norm_constant",
    "chi_mean",
    "chi_tail_mean",
    "chi_tail_second_moment",
    "chi_tail_prob",
]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 2000


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _series_lower(a, x):
    """Regularised lower incomplete gamma P(a, x) by its power series."""
    term = 1.0 / a
    total = term.copy()
    ap = a.copy()
    active = np.ones(a.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active = np.abs(term) > np.abs(total) * _EPS
        if not active.any():
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    with np.errstate(divide="ignore"):
        log_pre = -x + a * np.log(x) - gammaln(a)
    return total * np.exp(log_pre)


def _cf_upper(a, x):
    """Regularised upper incomplete gamma Q(a, x) by modified Lentz continued fraction."""
    b = x + 1.0 - a
    c = np.full(a.shape, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    done = np.zeros(a.shape, dtype=bool)
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = np.where(done, 1.0, d * c)
        h = h * delta
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return np.exp(-x + a * np.log(x) - gammaln(a)) * h


def gammaincc_reg(a, x):
    """Regularised upper incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``.

    Series for ``x < a + 1``, continued fraction otherwise.
    """
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if np.any(a <= 0):
        raise ValueError("incomplete gamma requires a > 0")
    if np.any(x < 0):
        raise ValueError("incomplete gamma requires x >= 0")
    out = np.empty(a.shape)
    lo = x < a + 1.0
    if lo.any():
        out[lo] = 1.0 - _series_lower(a[lo], x[lo])
    hi = ~lo
    if hi.any():
        out[hi] = _cf_upper(a[hi], x[hi])
    return _out(out)


def upper_incomplete_gamma(a, z):
    """``Gamma(a, z) = int_z^inf u^(a-1) exp(-u) du``; equals Gamma(a) at z = 0."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise ValueError("incomplete gamma requires a > 0")
    return _out(gammaincc_reg(a, z) * np.exp(gammaln(a)))


def _check_k(k, minimum):
    k = np.asarray(k)
    if np.any(k < minimum) or np.any(k != np.round(k)):
        raise ValueError(f"k must be an integer >= {minimum}")
    return k.astype(float)


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("z must be nonnegative")
    return z


def tail_moment(k, z):
    """``J_k(z) = int_z^inf u^k exp(-u^2/2) du = 2^((k-1)/2) Gamma((k+1)/2, z^2/2)``."""
    k = _check_k(k, 0)
    z = _check_z(z)
    a = (k + 1.0) / 2.0
    return _out(np.exp((k - 1.0) / 2.0 * math.log(2.0) + gammaln(a)) * gammaincc_reg(a, z * z / 2.0))


def block_norm_constant(k):
    """``2^(k/2-1) Gamma(k/2)``, the normaliser turning J-integrals into chi moments."""
    k = _check_k(k, 1)
    return _out(np.exp((k / 2.0 - 1.0) * math.log(2.0) + gammaln(k / 2.0)))


def chi_mean(k):
    """Mean of a chi variable with k degrees of freedom, ``sqrt(2) Gamma((k+1)/2) / Gamma(k/2)``."""
    k = _check_k(k, 1)
    return _out(math.sqrt(2.0) * np.exp(gammaln((k + 1.0) / 2.0) - gammaln(k / 2.0)))


def chi_tail_prob(z, k):
    """``P(chi_k > z) = Q(k/2, z^2/2)``."""
    k = _check_k(k, 1)
    z = _check_z(z)
    return _out(np.asarray(gammaincc_reg(k / 2.0, z * z / 2.0)))


def chi_tail_mean(z, k):
    """``E[(chi_k - z)_+] = psi(z, k) / (2^(k/2-1) Gamma(k/2))``."""
    k = _check_k(k, 1)
    z = _check_z(z)
    x = z * z / 2.0
    val = chi_mean(k) * gammaincc_reg((k + 1.0) / 2.0, x) - z * gammaincc_reg(k / 2.0, x)
    return _out(np.maximum(val, 0.0))


def chi_tail_second_moment(z, k):
    """``E[(chi_k - z)_+^2] = phi_B(z, k) / (2^(k/2-1) Gamma(k/2))``; equals k at z = 0."""
    k = _check_k(k, 1)
    z = _check_z(z)
    x = z * z / 2.0
    val = (
        k * gammaincc_reg(k / 2.0 + 1.0, x)
        - 2.0 * z * chi_mean(k) * gammaincc_reg((k + 1.0) / 2.0, x)
        + z * z * gammaincc_reg(k / 2.0, x)
    )
    return _out(np.maximum(val, 0.0))


def psi(z, k):
    """``int_z^inf (u - z) u^(k-1) exp(-u^2/2) du``, the right-hand side integral of the weight equation."""
    return _out(np.asarray(chi_tail_mean(z, k)) * block_norm_constant(k))


def phi_B(z, k):
    """``int_z^inf (u - z)^2 u^(k-1) exp(-u^2/2) du``."""
    return _out(np.asarray(chi_tail_second_moment(z, k)) * block_norm_constant(k))
