"""Independent reference computations used only by the tests."""

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, gammaincc, gammaln


def tail_moment_quad(k, z):
    """int_z^{z+40} u^k exp(-u^2/2) du by adaptive Gauss-Kronrod."""
    return quad(lambda u: u**k * np.exp(-u * u / 2), z, z + 40.0, epsabs=0, epsrel=1e-13, limit=400)[0]


def psi_quad(z, k):
    return quad(lambda u: (u - z) * u ** (k - 1) * np.exp(-u * u / 2), z, z + 40.0, epsabs=0, epsrel=1e-13, limit=400)[0]


def phi_quad(z, k):
    return quad(lambda u: (u - z) ** 2 * u ** (k - 1) * np.exp(-u * u / 2), z, z + 40.0, epsabs=0, epsrel=1e-13, limit=400)[0]


def scipy_chi_tail_mean(w, k):
    """E[(chi_k - w)_+] via scipy's incomplete gamma, vectorised in w."""
    x = w * w / 2
    cm = np.sqrt(2) * np.exp(gammaln((k + 1) / 2) - gammaln(k / 2))
    return cm * gammaincc((k + 1) / 2, x) - w * gammaincc(k / 2, x)


def scipy_chi_tail_second_moment(z, k):
    x = z * z / 2
    cm = np.sqrt(2) * np.exp(gammaln((k + 1) / 2) - gammaln(k / 2))
    return k * gammaincc(k / 2 + 1, x) - 2 * z * cm * gammaincc((k + 1) / 2, x) + z * z * gammaincc(k / 2, x)


def weight_grid_scan(p, k, lo=0.0, hi=10.0, step=1e-5):
    """All sign changes of the weight-equation residual on a fine grid."""
    grid = np.arange(lo, hi, step)
    g = p / (1 - p) * grid - scipy_chi_tail_mean(grid, k)
    idx = np.flatnonzero(np.diff(np.sign(g)) != 0)
    return grid[idx] + step / 2


def scalar_sparse_root(p):
    """Bisection on the k=1 closed form p/(1-p) w = sqrt(2/pi) e^{-w^2/2} - w erfc(w/sqrt2)."""
    r = p / (1 - p)
    f = lambda w: math.sqrt(2 / math.pi) * math.exp(-w * w / 2) - w * erfc(w / math.sqrt(2)) - r * w
    lo, hi = 0.0, 20.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cvx_weighted_l12(A, y, blocks, w, eta=0.0):
    import cvxpy as cp

    n = A.shape[1]
    cplx = np.iscomplexobj(A) or np.iscomplexobj(y)
    z = cp.Variable(n, complex=cplx)
    obj = cp.Minimize(sum(wb * cp.norm(z[idx]) for wb, idx in zip(w, blocks)))
    cons = [A @ z == y] if eta == 0 else [cp.norm(A @ z - y) <= eta]
    prob = cp.Problem(obj, cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    return z.value, prob.value
