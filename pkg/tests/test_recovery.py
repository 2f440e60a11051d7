import numpy as np
import pytest
from oracles import cvx_weighted_l12

from bspw.model import BlockPartition, ModelError
from bspw.recovery import (
    ConstraintProjector,
    MeasurementSystem,
    SolverConfig,
    block_soft_threshold,
    relative_error,
    solve_mmv,
    solve_weighted,
    success,
)

TIGHT = SolverConfig(abs_tol=1e-12, rel_tol=1e-10, max_iters=50_000)


def sparse_instance(rng, q=20, k=4, s=3, m=40, cplx=False):
    part = BlockPartition.uniform(q, k)
    x = np.zeros(part.n, dtype=complex if cplx else float)
    for b in rng.choice(q, s, replace=False):
        v = rng.standard_normal(k)
        if cplx:
            v = v + 1j * rng.standard_normal(k)
        x[part.blocks[b]] = v
    A = rng.standard_normal((m, part.n))
    if cplx:
        A = A + 1j * rng.standard_normal((m, part.n))
    return part, A / np.sqrt(m), x


def test_block_soft_threshold():
    v = np.array([3.0, 4.0])
    assert np.allclose(block_soft_threshold(v, 1.0), [2.4, 3.2])
    assert np.all(block_soft_threshold(v, 5.0) == 0)
    assert np.allclose(block_soft_threshold(v, 0.0), v)
    with pytest.raises(ValueError):
        block_soft_threshold(v, -1)


def test_projector_affine(rng):
    A = rng.standard_normal((5, 12))
    y = rng.standard_normal(5)
    P = ConstraintProjector(A, y)
    z = P(rng.standard_normal((12, 1)))
    assert np.allclose(A @ z[:, 0], y, atol=1e-10)
    assert np.allclose(P(z), z)


def test_projector_ball_matches_kkt(rng):
    A = rng.standard_normal((6, 10))
    y = rng.standard_normal(6)
    P = ConstraintProjector(A, y, eta=0.5)
    x0 = rng.standard_normal((10, 1)) * 5
    z = P(x0)
    assert np.linalg.norm(A @ z[:, 0] - y) == pytest.approx(0.5, rel=1e-10)
    # KKT: x0 - z is parallel to A^T (A z - y)
    g = A.T @ (A @ z[:, 0] - y)
    d = x0[:, 0] - z[:, 0]
    assert abs(abs(d @ g) - np.linalg.norm(d) * np.linalg.norm(g)) <= 1e-8 * np.linalg.norm(d) * np.linalg.norm(g)
    inside = np.linalg.lstsq(A, y, rcond=None)[0][:, None]
    assert np.allclose(P(inside), inside)


def test_projector_empty_set(rng):
    A = np.vstack([np.eye(3), np.eye(3)])
    y = np.array([0, 0, 0, 1.0, 1.0, 1.0])
    with pytest.raises(ModelError):
        ConstraintProjector(A, y, eta=0.1)


@pytest.mark.parametrize("eta", [0.0, 0.3])
def test_matches_conic_oracle(rng, eta):
    part, A, x = sparse_instance(rng, q=10, k=3, s=2, m=14)
    y = A @ x + (0.05 * rng.standard_normal(14) if eta else 0)
    w = rng.uniform(0.5, 2.0, 10)
    res = solve_weighted(part, w, MeasurementSystem(A, y, eta), TIGHT)
    ref, val = cvx_weighted_l12(A, y, part.blocks, w, eta)
    assert res.converged
    assert np.linalg.norm(res.x_hat - ref) <= 1e-6 * max(1, np.linalg.norm(ref))
    assert res.objective == pytest.approx(val, rel=1e-7)


def test_complex_matches_conic_oracle(rng):
    part, A, x = sparse_instance(rng, q=8, k=2, s=2, m=10, cplx=True)
    y = A @ x
    w = rng.uniform(0.5, 2.0, 8)
    res = solve_weighted(part, w, MeasurementSystem(A, y), TIGHT)
    ref, val = cvx_weighted_l12(A, y, part.blocks, w)
    assert np.linalg.norm(res.x_hat - ref) <= 1e-6 * max(1, np.linalg.norm(ref))


def test_complex_equals_real_embedding(rng):
    part, A, x = sparse_instance(rng, q=8, k=2, s=2, m=10, cplx=True)
    y = A @ x
    w = rng.uniform(0.5, 2.0, 8)
    zc = solve_weighted(part, w, MeasurementSystem(A, y), TIGHT).x_hat
    # real embedding: blocks of size 2k interleaving real and imaginary parts
    Ar = np.block([[A.real, -A.imag], [A.imag, A.real]])
    yr = np.concatenate([y.real, y.imag])
    blocks = [np.concatenate([idx, idx + part.n]) for idx in part.blocks]
    perm = np.concatenate(blocks)
    rpart = BlockPartition.uniform(8, 4)
    zr = solve_weighted(rpart, w, MeasurementSystem(Ar[:, perm], yr), TIGHT).x_hat
    full = np.empty(2 * part.n)
    full[perm] = zr
    assert np.allclose(full[: part.n] + 1j * full[part.n :], zc, atol=1e-6)


def test_exact_recovery_noiseless(rng):
    part, A, x = sparse_instance(rng, q=20, k=4, s=2, m=50)
    res = solve_weighted(part, np.ones(20), MeasurementSystem(A, A @ x))
    assert success(res.x_hat, x)
    assert np.linalg.norm(A @ res.x_hat - A @ x) <= 1e-8


def test_feasibility_with_noise(rng):
    part, A, x = sparse_instance(rng, q=20, k=4, s=2, m=50)
    y = A @ x + 0.01 * rng.standard_normal(50)
    res = solve_weighted(part, np.ones(20), MeasurementSystem(A, y, 0.1))
    assert np.linalg.norm(A @ res.x_hat - y) <= 0.1 * (1 + 1e-9)


def test_dependent_rows(rng):
    part, A, x = sparse_instance(rng, q=10, k=2, s=2, m=12)
    A2 = np.vstack([A, A[:3] + A[3:6]])
    res = solve_weighted(part, np.ones(10), MeasurementSystem(A2, A2 @ x), TIGHT)
    ref, _ = cvx_weighted_l12(A, A @ x, part.blocks, np.ones(10))
    assert np.allclose(res.x_hat, ref, atol=1e-6)


def test_prior_weights_help(rng):
    part, A, x = sparse_instance(rng, q=30, k=4, s=4, m=34)
    supp = part.block_support(x)
    w = np.full(30, 3.0)
    w[supp] = 0.2
    good = solve_weighted(part, w, MeasurementSystem(A, A @ x))
    assert success(good.x_hat, x)


def test_mmv_row_blocks(rng):
    q, k, m = 25, 6, 12
    X = np.zeros((q, k))
    X[[3, 11, 20]] = rng.standard_normal((3, k))
    A = rng.standard_normal((m, q))
    res = solve_mmv(A, A @ X, np.ones(q), cfg=TIGHT)
    # same problem flattened with one block per row
    vecA = np.kron(A, np.eye(k))
    flat = solve_weighted(BlockPartition.uniform(q, k), np.ones(q), MeasurementSystem(vecA, (A @ X).ravel()), TIGHT)
    assert np.allclose(res.x_hat.ravel(), flat.x_hat, atol=1e-6)


def test_history_and_validation(rng):
    part, A, x = sparse_instance(rng, q=5, k=2, s=1, m=6)
    res = solve_weighted(part, np.ones(5), MeasurementSystem(A, A @ x), record=True)
    assert len(res.history) == res.iterations
    with pytest.raises(ModelError):
        solve_weighted(part, np.ones(4), MeasurementSystem(A, A @ x))
    with pytest.raises(ModelError):
        solve_weighted(BlockPartition.uniform(3, 2), np.ones(3), MeasurementSystem(A, A @ x))
    with pytest.raises(ModelError):
        MeasurementSystem(A, np.ones(3))
    with pytest.raises(ModelError):
        MeasurementSystem(A, A @ x, -1.0)
    with pytest.raises(ValueError):
        SolverConfig(relaxation=2.0)


def test_errors():
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0
    assert not success([1.1, 0], [1.0, 0])
    with pytest.raises(ValueError):
        relative_error([1.0], [0.0])
