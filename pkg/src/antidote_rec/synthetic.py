"""Seeded synthetic rating generators for experiments and tests."""

from __future__ import annotations

import numpy as np

from .data import Bounds, GroupAssignment, RatingDataset

DEFAULT_BOUNDS: Bounds = (0.0, 5.0)


def _observe(
    dense: np.ndarray,
    mask: np.ndarray,
    bounds: Bounds,
    user_ids=None,
    item_ids=None,
) -> RatingDataset:
    rows, cols = np.nonzero(mask)
    values = np.clip(dense[rows, cols], bounds[0], bounds[1])
    return RatingDataset.from_arrays(
        n=dense.shape[0],
        d=dense.shape[1],
        user_idx=rows,
        item_idx=cols,
        values=values,
        user_ids=user_ids,
        item_ids=item_ids,
        bounds=bounds,
    )


def _density_mask(
    rng: np.random.Generator, n: int, d: int, density, min_per_user: int = 2
) -> np.ndarray:
    """Random observation mask guaranteeing coverage of every user and item."""
    density = np.broadcast_to(np.asarray(density, dtype=np.float64), (n,))
    mask = rng.random((n, d)) < density[:, None]
    for i in range(n):
        short = min_per_user - int(mask[i].sum())
        if short > 0:
            gaps = np.nonzero(~mask[i])[0]
            mask[i, rng.choice(gaps, size=short, replace=False)] = True
    for j in np.nonzero(mask.sum(axis=0) == 0)[0]:
        mask[rng.integers(n), j] = True
    return mask


def polarized_ratings(
    n: int = 200,
    d: int = 100,
    density: float = 0.15,
    gap: float = 1.0,
    noise: float = 0.5,
    seed: int = 0,
    bounds: Bounds = DEFAULT_BOUNDS,
) -> RatingDataset:
    """Two user blocks rating two item blocks oppositely (polarized columns).

    Block-aligned ratings sit ``gap/2`` above the midpoint of the range,
    cross-block ratings ``gap/2`` below, so each item's ratings split into two
    clusters separated by ``gap``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    mid = (lo + hi) / 2.0
    user_block = (np.arange(n) >= n // 2).astype(float)
    item_block = (np.arange(d) >= d // 2).astype(float)
    agree = user_block[:, None] == item_block[None, :]
    dense = np.where(agree, mid + gap / 2.0, mid - gap / 2.0)
    dense = dense + rng.normal(0.0, noise, size=(n, d))
    return _observe(dense, _density_mask(rng, n, d, density), bounds)


def consensus_ratings(
    n: int = 200,
    d: int = 100,
    density: float = 0.15,
    noise: float = 0.25,
    seed: int = 0,
    bounds: Bounds = DEFAULT_BOUNDS,
) -> RatingDataset:
    """Users agree on shared per-item scores (low polarization)."""
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    item_means = rng.uniform(lo + 1.0, hi - 1.0, size=d)
    dense = item_means[None, :] + rng.normal(0.0, noise, size=(n, d))
    return _observe(dense, _density_mask(rng, n, d, density), bounds)


def uneven_cohort_ratings(
    n: int = 300,
    d: int = 100,
    minority: float = 0.2,
    majority_density: float = 0.5,
    minority_density: float = 0.15,
    taste_gap: float = 2.0,
    idiosyncrasy: float = 0.3,
    noise: float = 0.5,
    seed: int = 3,
    bounds: Bounds = DEFAULT_BOUNDS,
) -> RatingDataset:
    """Two user cohorts of unequal observation density and opposed tastes.

    The sparse minority prefers the item block the majority dislikes, so the
    factorization serves it worse; per-user losses spread across cohorts,
    creating individual unfairness that antidote data can reduce.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    mid = (lo + hi) / 2.0
    cutoff = int(round(minority * n))
    item_block = (np.arange(d) >= d // 2).astype(float)
    pref_minority = np.where(item_block > 0, mid + taste_gap / 2, mid - taste_gap / 2)
    pref_majority = np.where(item_block > 0, mid - taste_gap / 2, mid + taste_gap / 2)
    dense = np.where(
        np.arange(n)[:, None] < cutoff, pref_minority[None, :], pref_majority[None, :]
    )
    dense = dense + rng.normal(0.0, idiosyncrasy, size=(n, 1))
    dense = dense + rng.normal(0.0, idiosyncrasy, size=(1, d))
    dense = dense + rng.normal(0.0, noise, size=(n, d))
    density = np.where(np.arange(n) < cutoff, minority_density, majority_density)
    mask = _density_mask(rng, n, d, density, min_per_user=5)
    return _observe(dense, mask, bounds)


def grouped_item_ratings(
    n: int = 300,
    d: int = 100,
    base_density: float = 0.35,
    scarce_density: float = 0.04,
    scarce_fraction: float = 0.4,
    taste_gap: float = 1.5,
    idiosyncrasy: float = 0.3,
    noise: float = 0.4,
    seed: int = 5,
    bounds: Bounds = DEFAULT_BOUNDS,
) -> tuple[RatingDataset, GroupAssignment]:
    """Two item groups of unequal popularity (rating counts).

    Scarcely rated items get strongly shrunken factor fits, so their group
    loss exceeds the popular group's in train and test alike; the gap is the
    group unfairness an antidote block of fully observed rows can close.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bounds
    mid = (lo + hi) / 2.0
    cutoff = int(round(scarce_fraction * d))
    item_block = (np.arange(d) % 2).astype(float)  # interleaved with scarcity
    user_block = (np.arange(n) >= n // 2).astype(float)
    agree = user_block[:, None] == item_block[None, :]
    dense = np.where(agree, mid + taste_gap / 2, mid - taste_gap / 2)
    dense = dense + rng.normal(0.0, idiosyncrasy, size=(n, 1))
    dense = dense + rng.normal(0.0, idiosyncrasy, size=(1, d))
    dense = dense + rng.normal(0.0, noise, size=(n, d))
    per_item = np.where(np.arange(d) < cutoff, scarce_density, base_density)
    mask = rng.random((n, d)) < per_item[None, :]
    for i in range(n):
        short = 5 - int(mask[i].sum())
        if short > 0:
            gaps = np.nonzero(~mask[i])[0]
            mask[i, rng.choice(gaps, size=short, replace=False)] = True
    for j in np.nonzero(mask.sum(axis=0) == 0)[0]:
        mask[rng.integers(n), j] = True
    labels = tuple("scarce" if j < cutoff else "popular" for j in range(d))
    return _observe(dense, mask, bounds), GroupAssignment(axis="items", labels=labels)
