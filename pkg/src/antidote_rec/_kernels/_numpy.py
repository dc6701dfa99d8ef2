"""Pure-numpy backend for the per-entity normal-equation solves.

Gram matrices for all entities are accumulated with bincount sweeps over the
observation arrays and solved as one batched call. This keeps the Python-level
work at O(rank^2) regardless of the entity count, at the cost of an
(rank, nnz) temporary; the compiled backend streams over entities instead.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError

BACKEND_NAME = "python"


def solve_normal_equations(
    factors: np.ndarray,
    indptr: np.ndarray,
    indices: np.ndarray,
    values: np.ndarray | None,
    reg: float,
    extra_gram: np.ndarray | None = None,
    extra_rhs: np.ndarray | None = None,
    entity_kind: str = "entity",
) -> np.ndarray:
    """Solve one ridge system per entity.

    For entity ``e`` with observation slice ``idx = indices[indptr[e]:indptr[e+1]]``
    (and values ``w``), the system is::

        (F[:, idx] @ F[:, idx].T + extra_gram + reg * I) z_e
            = F[:, idx] @ w + extra_rhs[:, e]

    Returns the solutions as a (rank, n_entities) array.
    """
    rank = factors.shape[0]
    n_entities = len(indptr) - 1
    counts = np.diff(indptr)
    seg = np.repeat(np.arange(n_entities), counts)
    obs = factors[:, indices]  # (rank, nnz)

    grams = np.zeros((n_entities, rank, rank))
    for a in range(rank):
        row_a = obs[a]
        for b in range(a, rank):
            acc = np.bincount(seg, weights=row_a * obs[b], minlength=n_entities)
            grams[:, a, b] = acc
            if b != a:
                grams[:, b, a] = acc
    diag = np.arange(rank)
    grams[:, diag, diag] += reg
    if extra_gram is not None:
        grams += extra_gram

    rhs = np.zeros((n_entities, rank))
    if values is not None:
        for a in range(rank):
            rhs[:, a] = np.bincount(seg, weights=obs[a] * values, minlength=n_entities)
    if extra_rhs is not None:
        rhs += extra_rhs.T

    try:
        solution = np.linalg.solve(grams, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        for e in range(n_entities):
            try:
                np.linalg.solve(grams[e], rhs[e])
            except np.linalg.LinAlgError:
                raise NumericalError(
                    f"singular normal equations for {entity_kind} {e} "
                    f"(reg={reg}, observations={counts[e]})"
                ) from None
        raise NumericalError(f"singular normal equations ({entity_kind})") from None
    return np.ascontiguousarray(solution.T)
