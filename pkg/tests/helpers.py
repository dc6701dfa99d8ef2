"""Shared test utilities and independent oracles.

The oracles here are deliberately written in the slowest, most literal form
(pairwise sums, per-entry finite differences, scalar loops) and never call
the code paths they check.
"""

from __future__ import annotations

import numpy as np

from antidote_rec.data import RatingDataset


def dataset_from_dense(
    dense: np.ndarray, mask: np.ndarray | None = None, bounds=None
) -> RatingDataset:
    dense = np.asarray(dense, dtype=np.float64)
    if mask is None:
        mask = np.ones(dense.shape, dtype=bool)
    if bounds is None:
        bounds = (float(min(dense.min(), 0.0)), float(max(dense.max(), 5.0)))
    rows, cols = np.nonzero(mask)
    return RatingDataset.from_arrays(
        n=dense.shape[0],
        d=dense.shape[1],
        user_idx=rows,
        item_idx=cols,
        values=dense[rows, cols],
        bounds=bounds,
    )


def random_observed(
    rng: np.random.Generator, n: int, d: int, density: float, low=0.0, high=5.0
) -> RatingDataset:
    """Random dataset with guaranteed row/column coverage."""
    mask = rng.random((n, d)) < density
    for i in range(n):
        if not mask[i].any():
            mask[i, rng.integers(d)] = True
    for j in range(d):
        if not mask[:, j].any():
            mask[rng.integers(n), j] = True
    dense = rng.uniform(low, high, size=(n, d))
    return dataset_from_dense(dense, mask, bounds=(low, high))


def pairwise_polarization(pred: np.ndarray) -> float:
    """O(n^2 d) definition: normalized sum of pairwise squared row distances."""
    n, d = pred.shape
    total = 0.0
    for k in range(n):
        for l in range(k + 1, n):
            diff = pred[k] - pred[l]
            total += float(diff @ diff)
    return total / (n * n * d)


def pairwise_variance(values: np.ndarray) -> float:
    """Mean-free variance: (1/m^2) * sum_{i<j} (x_i - x_j)^2."""
    m = len(values)
    total = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            total += float((values[i] - values[j]) ** 2)
    return total / (m * m)


def central_difference_gradient(scalar_fn, pred: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Entrywise central finite differences of a scalar function of the
    prediction matrix."""
    grad = np.zeros_like(pred)
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            plus = pred.copy()
            plus[i, j] += step
            minus = pred.copy()
            minus[i, j] -= step
            grad[i, j] = (scalar_fn(plus) - scalar_fn(minus)) / (2.0 * step)
    return grad


def assert_gradient_close(analytic, numeric, rel_tol=1e-5, abs_tol=1e-9):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.abs(numeric)
    small = denom < 1e-8
    if small.any():
        assert np.abs(analytic[small] - numeric[small]).max() < abs_tol
    if (~small).any():
        rel = np.abs(analytic[~small] - numeric[~small]) / denom[~small]
        assert rel.max() < rel_tol, f"max relative gradient error {rel.max():.3e}"
