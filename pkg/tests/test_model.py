import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bspw.model import (
    BlockPartition,
    ModelError,
    PriorModel1,
    PriorModel2,
    check_weights,
    expand_lambda,
    load_model,
    validate_partition,
)


def test_contiguous_partition():
    part = validate_partition(10, [5, 5])
    assert part.q == 2
    assert part.blocks[0].tolist() == [0, 1, 2, 3, 4]
    assert part.blocks[1].tolist() == [5, 6, 7, 8, 9]


def test_phase_transition_partition():
    part = validate_partition(250, [5] * 50)
    assert part.q == 50 and part.equal_size == 5


@pytest.mark.parametrize("sizes", [[5, 4], [5, 6], [0, 10], [-1, 11]])
def test_bad_sizes(sizes):
    with pytest.raises(ModelError):
        validate_partition(10, sizes)


def test_index_set_partition_and_overlap():
    part = BlockPartition(6, (np.array([0, 2, 4]), np.array([1, 3, 5])))
    assert part.block_ids.tolist() == [0, 1, 0, 1, 0, 1]
    with pytest.raises(ModelError):
        BlockPartition(4, (np.array([0, 1]), np.array([1, 2, 3])))
    with pytest.raises(ModelError):
        BlockPartition(4, (np.array([0, 1]), np.array([2])))


@given(st.lists(st.integers(1, 6), min_size=1, max_size=12))
def test_every_coordinate_in_exactly_one_block(sizes):
    part = BlockPartition.contiguous(sum(sizes), sizes)
    counts = np.zeros(part.n, int)
    for idx in part.blocks:
        counts[idx] += 1
    assert np.all(counts == 1)
    assert part.sizes.tolist() == sizes


def test_block_norms_matrix_rows():
    part = BlockPartition.contiguous(3, [1, 2])
    X = np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]])
    assert np.allclose(part.block_norms(X), [5.0, 1.0])


def test_prior1_rejects_endpoints():
    with pytest.raises(ModelError):
        PriorModel1([0.5, 1.0])
    with pytest.raises(ModelError):
        PriorModel1([0.0])
    pr = PriorModel1.clamped([0.0, 1.0, 0.3])
    assert pr.p[0] == 1e-6 and pr.p[1] == 1 - 1e-6 and pr.p[2] == 0.3


def test_expand_lambda_examples():
    pr = PriorModel2.build(4, [[0, 1], [2, 3]], [0.5, 0.5])
    assert expand_lambda(pr, [2, 3]).tolist() == [2, 2, 3, 3]
    pr = PriorModel2.build(3, [[0, 1, 2]], [0.5])
    assert expand_lambda(pr, [1]).tolist() == [1, 1, 1]


def test_expand_lambda_three_angular_sets():
    sets = [list(range(0, 30)), list(range(30, 60))]
    pr = PriorModel2.build(100, sets, [0.8, 2 / 3], complement_alpha=0.0)
    assert pr.L == 3
    w = expand_lambda(pr, [1.0, 2.0, 3.0])
    assert np.all(w[:30] == 1) and np.all(w[30:60] == 2) and np.all(w[60:] == 3)


def test_prior2_complement_requires_alpha():
    with pytest.raises(ModelError):
        PriorModel2.build(5, [[0, 1]], [0.5])
    with pytest.raises(ModelError):
        PriorModel2.build(5, [[0, 1], [1, 2]], [0.5, 0.5], complement_alpha=0.1)
    with pytest.raises(ModelError):
        PriorModel2.build(5, [[0, 1]], [1.5], complement_alpha=0.1)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_expand_lambda_is_linear(seed):
    rng = np.random.default_rng(seed)
    q = int(rng.integers(2, 30))
    labels = rng.integers(0, 4, size=q)
    sets = [np.flatnonzero(labels == i) for i in range(4) if np.any(labels == i)]
    pr = PriorModel2.build(q, sets, [0.5] * len(sets))
    l1 = rng.uniform(0.1, 5, size=pr.L)
    l2 = rng.uniform(0.1, 5, size=pr.L)
    assert np.allclose(expand_lambda(pr, l1 + l2), expand_lambda(pr, l1) + expand_lambda(pr, l2))


def test_check_weights():
    assert check_weights([1, 2]).dtype == float
    for bad in ([0, 1], [-1, 1], [np.inf, 1]):
        with pytest.raises(ModelError):
            check_weights(bad)
    with pytest.raises(ModelError):
        check_weights([1, 2], size=3)


def test_load_model_roundtrip(tmp_path):
    cfg = {"n": 6, "block_sizes": [2, 2, 2], "p": [0.1, 0.5, 0.9]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    out = load_model(path)
    assert out["partition"].q == 3
    assert np.allclose(out["prior"].p, [0.1, 0.5, 0.9])
    out = load_model({"n": 6, "block_sizes": [3, 3], "sets": [[0]], "alphas": [0.7], "complement_alpha": 0.2})
    assert out["prior2"].L == 2 and out["prior2"].alphas.tolist() == [0.7, 0.2]
    with pytest.raises(ModelError):
        load_model({"n": 6, "block_sizes": [3, 3]})
    with pytest.raises(ModelError):
        load_model({"n": 6, "block_sizes": [3, 3], "p": [0.5]})
