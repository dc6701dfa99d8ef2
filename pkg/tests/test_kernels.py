"""Backend contract tests: both kernels must solve the same systems."""

import numpy as np
import pytest

from antidote_rec._kernels import _numpy, available_backends
from antidote_rec.errors import NumericalError

BACKENDS = available_backends()


def random_problem(seed, rank=5, m=40, entities=15, with_values=True, with_extras=True):
    rng = np.random.default_rng(seed)
    factors = rng.normal(size=(rank, m))
    counts = rng.integers(1, 12, size=entities)
    indptr = np.zeros(entities + 1, dtype=np.int64)
    indptr[1:] = np.cumsum(counts)
    indices = rng.integers(0, m, size=indptr[-1]).astype(np.int64)
    values = rng.normal(size=indptr[-1]) if with_values else None
    if with_extras:
        seed_mat = rng.normal(size=(rank, rank))
        extra_gram = seed_mat @ seed_mat.T
        extra_rhs = rng.normal(size=(rank, entities))
    else:
        extra_gram = extra_rhs = None
    return factors, indptr, indices, values, extra_gram, extra_rhs


def dense_oracle(factors, indptr, indices, values, reg, extra_gram, extra_rhs):
    """Literal per-entity construction with plain numpy."""
    rank = factors.shape[0]
    out = np.zeros((rank, len(indptr) - 1))
    for e in range(len(indptr) - 1):
        idx = indices[indptr[e] : indptr[e + 1]]
        sub = factors[:, idx]
        a = sub @ sub.T + reg * np.eye(rank)
        if extra_gram is not None:
            a = a + extra_gram
        b = np.zeros(rank)
        if values is not None:
            b = sub @ values[indptr[e] : indptr[e + 1]]
        if extra_rhs is not None:
            b = b + extra_rhs[:, e]
        out[:, e] = np.linalg.solve(a, b)
    return out


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("with_values,with_extras", [(True, True), (True, False), (False, True)])
def test_matches_dense_oracle(name, with_values, with_extras):
    for seed in range(4):
        problem = random_problem(seed, with_values=with_values, with_extras=with_extras)
        factors, indptr, indices, values, extra_gram, extra_rhs = problem
        got = BACKENDS[name].solve_normal_equations(
            factors, indptr, indices, values, 0.7, extra_gram, extra_rhs
        )
        want = dense_oracle(factors, indptr, indices, values, 0.7, extra_gram, extra_rhs)
        assert np.abs(got - want).max() < 1e-10


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree():
    for seed in range(6):
        factors, indptr, indices, values, extra_gram, extra_rhs = random_problem(seed)
        results = [
            mod.solve_normal_equations(factors, indptr, indices, values, 0.3, extra_gram, extra_rhs)
            for mod in BACKENDS.values()
        ]
        assert np.abs(results[0] - results[1]).max() < 1e-10


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_singular_names_entity(name):
    # entity 0 is well-posed; entity 1 has no observations and reg=0
    factors = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    indptr = np.array([0, 2, 2], dtype=np.int64)
    indices = np.array([0, 1], dtype=np.int64)
    values = np.array([1.0, 2.0])
    with pytest.raises(NumericalError, match="entity 1"):
        BACKENDS[name].solve_normal_equations(factors, indptr, indices, values, 0.0)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_empty_entity_with_reg_is_zero(name):
    factors = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    indptr = np.array([0, 2, 2], dtype=np.int64)
    indices = np.array([0, 1], dtype=np.int64)
    values = np.array([1.0, 2.0])
    out = BACKENDS[name].solve_normal_equations(factors, indptr, indices, values, 1.0)
    assert np.allclose(out[:, 1], 0.0)
