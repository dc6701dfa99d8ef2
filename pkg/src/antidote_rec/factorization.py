"""Regularized matrix factorization by alternating least squares.

The training objective over known entries (plus optional fully observed
antidote rows X~) is::

    || P_Omega(X - U^T V) ||_F^2 + || X~ - U~^T V ||_F^2
        + reg * (||U||_F^2 + ||U~||_F^2 + ||V||_F^2)

Each half-sweep solves the exact ridge normal equations per user (or per
item), so the objective is non-increasing across half-sweeps and, after the
closing item half-sweep, every item vector satisfies its closed-form
stationarity condition

    v_j = S_j^{-1} (sum_{i in Omega_j} x_ij u_i + sum_i x~_ij u~_i),
    S_j = sum_{i in Omega_j} u_i u_i^T + U~ U~^T + reg * I.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .data import RatingDataset, SplitPair, holdout_split
from .errors import ConfigError, DataError, NumericalError


@dataclass(frozen=True)
class AlsOptions:
    max_sweeps: int = 50
    objective_tol: float = 1e-4
    seed: int = 0
    init_scale: float | None = None  # default 1/sqrt(rank)
    warm_start: "FactorModel | None" = None

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps must be at least 1")
        if not self.objective_tol > 0:
            raise ConfigError("objective_tol must be positive")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")


@dataclass
class FactorModel:
    """Rank-l factors; columns of U/V are the user/item latent vectors."""

    U: np.ndarray  # (rank, n)
    V: np.ndarray  # (rank, d)
    U_tilde: np.ndarray | None  # (rank, n') antidote user factors
    rank: int
    reg: float
    objective_trace: list[float] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError("rank must be at least 1")
        if self.U.shape[0] != self.rank or self.V.shape[0] != self.rank:
            raise DataError("factor matrices must have `rank` rows")
        if self.U_tilde is not None and self.U_tilde.shape[0] != self.rank:
            raise DataError("antidote factors must have `rank` rows")
        for name, m in (("U", self.U), ("V", self.V), ("U_tilde", self.U_tilde)):
            if m is not None and not np.all(np.isfinite(m)):
                raise NumericalError(f"non-finite values in factor {name}")

    @property
    def n(self) -> int:
        return self.U.shape[1]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def n_antidote(self) -> int:
        return 0 if self.U_tilde is None else self.U_tilde.shape[1]


def predict(model: FactorModel) -> np.ndarray:
    """Dense prediction matrix U^T V over the original users only."""
    return model.U.T @ model.V


def predict_entries(U: np.ndarray, V: np.ndarray, rows, cols, chunk: int = 1 << 20) -> np.ndarray:
    """Predictions u_i^T v_j for aligned index arrays, chunked to bound memory."""
    out = np.empty(len(rows))
    for start in range(0, len(rows), chunk):
        sl = slice(start, start + chunk)
        out[sl] = np.einsum("ki,ki->i", U[:, rows[sl]], V[:, cols[sl]])
    return out


def factorization_objective(
    train: RatingDataset, model: FactorModel, antidote_values: np.ndarray | None = None
) -> float:
    """Value of the regularized factorization objective for the given factors."""
    resid = predict_entries(model.U, model.V, train.user_idx, train.item_idx) - train.values
    total = float(resid @ resid)
    if antidote_values is not None and antidote_values.size:
        a_resid = model.U_tilde.T @ model.V - antidote_values
        total += float(np.sum(a_resid * a_resid))
    total += model.reg * float(np.sum(model.U * model.U) + np.sum(model.V * model.V))
    if model.U_tilde is not None:
        total += model.reg * float(np.sum(model.U_tilde * model.U_tilde))
    return total


def _check_coverage(train: RatingDataset) -> None:
    empty_users = np.nonzero(train.user_counts == 0)[0]
    if empty_users.size:
        raise DataError(f"user {empty_users[0]} has no known ratings")
    empty_items = np.nonzero(train.item_counts == 0)[0]
    if empty_items.size:
        raise DataError(f"item {empty_items[0]} has no known ratings")


def _als(
    train: RatingDataset,
    antidote_values: np.ndarray | None,
    rank: int,
    reg: float,
    opts: AlsOptions,
) -> FactorModel:
    if rank < 1:
        raise ConfigError("rank must be at least 1")
    if reg < 0:
        raise ConfigError("reg must be non-negative")
    _check_coverage(train)
    n, d = train.n, train.d
    n_prime = 0 if antidote_values is None else antidote_values.shape[0]
    if antidote_values is not None and antidote_values.shape[1] != d:
        raise DataError(
            f"antidote has {antidote_values.shape[1]} columns, dataset has {d} items"
        )

    scale = opts.init_scale if opts.init_scale is not None else 1.0 / math.sqrt(rank)
    rng = np.random.default_rng(opts.seed)
    warm = opts.warm_start
    if warm is not None:
        if warm.U.shape != (rank, n) or warm.V.shape != (rank, d):
            raise ConfigError("warm start factors do not match (rank, n, d)")
        U = warm.U.copy()
        V = warm.V.copy()
        if n_prime and warm.n_antidote == n_prime:
            U_t = warm.U_tilde.copy()
        elif n_prime:
            U_t = rng.uniform(0.0, scale, size=(rank, n_prime))
        else:
            U_t = None
    else:
        U = rng.uniform(0.0, scale, size=(rank, n))
        V = rng.uniform(0.0, scale, size=(rank, d))
        U_t = rng.uniform(0.0, scale, size=(rank, n_prime)) if n_prime else None

    csr_indptr, csr_cols, csr_vals = train.csr
    csc_indptr, csc_rows, csc_vals = train.csc

    def current_model() -> FactorModel:
        return FactorModel(U=U, V=V, U_tilde=U_t, rank=rank, reg=reg, objective_trace=trace)

    trace = [factorization_objective(train, FactorModel(U, V, U_t, rank, reg), antidote_values)]
    previous = trace[0]
    for _ in range(opts.max_sweeps):
        U = _kernels.solve_normal_equations(
            V, csr_indptr, csr_cols, csr_vals, reg, entity_kind="user"
        )
        if n_prime:
            lhs = V @ V.T + reg * np.eye(rank)
            try:
                U_t = np.linalg.solve(lhs, V @ antidote_values.T)
            except np.linalg.LinAlgError:
                raise NumericalError(
                    f"singular normal equations for the antidote user block (reg={reg})"
                ) from None
        trace.append(factorization_objective(train, current_model(), antidote_values))

        if n_prime:
            extra_gram = U_t @ U_t.T
            extra_rhs = U_t @ antidote_values
        else:
            extra_gram = None
            extra_rhs = None
        V = _kernels.solve_normal_equations(
            U, csc_indptr, csc_rows, csc_vals, reg, extra_gram, extra_rhs, entity_kind="item"
        )
        objective = factorization_objective(train, current_model(), antidote_values)
        trace.append(objective)
        if abs(previous - objective) < opts.objective_tol * max(abs(previous), 1e-300):
            break
        previous = objective
    return current_model()


def als_factorize(
    train: RatingDataset, rank: int, reg: float, opts: AlsOptions | None = None
) -> FactorModel:
    """Factorize the known ratings; every user and item needs >= 1 rating."""
    return _als(train, None, rank, reg, opts or AlsOptions())


def als_factorize_joint(
    train: RatingDataset,
    antidote_values: np.ndarray,
    rank: int,
    reg: float,
    opts: AlsOptions | None = None,
) -> FactorModel:
    """Factorize original plus antidote rows jointly.

    Antidote rows participate as fully observed users: the item system for
    v_j gains the Gram term U~ U~^T and the right-hand side U~ x~_j.
    With zero antidote rows this reduces exactly to ``als_factorize``.
    """
    antidote_values = np.asarray(antidote_values, dtype=np.float64)
    if antidote_values.ndim != 2:
        raise DataError("antidote values must be a 2-d matrix")
    model = _als(train, antidote_values, rank, reg, opts or AlsOptions())
    if model.U_tilde is None:
        model.U_tilde = np.zeros((rank, 0))
    return model


def rmse_of_entries(data: RatingDataset, pred: np.ndarray) -> float:
    if data.nnz == 0:
        raise DataError("no known entries to score")
    resid = pred[data.user_idx, data.item_idx] - data.values
    return float(np.sqrt(np.mean(resid * resid)))


@dataclass(frozen=True)
class GridCell:
    rank: int
    reg: float
    mean_rmse: float


def validation_rmse_grid(
    dataset: RatingDataset,
    ranks,
    regs,
    splits: int = 5,
    fraction: float = 0.2,
    seed: int = 0,
    opts: AlsOptions | None = None,
) -> list[GridCell]:
    """Mean held-out RMSE per (rank, reg) over independent holdout splits."""
    if splits < 1:
        raise ConfigError("splits must be at least 1")
    opts = opts or AlsOptions()
    pairs: list[SplitPair] = [
        holdout_split(dataset, fraction, seed=seed + s) for s in range(splits)
    ]
    cells = []
    for rank in ranks:
        for reg in regs:
            scores = []
            for s, pair in enumerate(pairs):
                model = _als(
                    pair.train, None, int(rank), float(reg), replace(opts, seed=opts.seed + s)
                )
                scores.append(rmse_of_entries(pair.test, predict(model)))
            cells.append(GridCell(int(rank), float(reg), float(np.mean(scores))))
    return cells


def save_factors(model: FactorModel, path) -> None:
    """Binary container: header (rank, n, d, n', reg) plus row-major matrices."""
    np.savez(
        path,
        header=np.array(
            [model.rank, model.n, model.d, model.n_antidote, model.reg], dtype=np.float64
        ),
        U=model.U,
        V=model.V,
        U_tilde=model.U_tilde if model.U_tilde is not None else np.zeros((model.rank, 0)),
    )


def load_factors(path) -> FactorModel:
    with np.load(path) as payload:
        header = payload["header"]
        rank = int(header[0])
        u_tilde = payload["U_tilde"]
        return FactorModel(
            U=payload["U"],
            V=payload["V"],
            U_tilde=u_tilde if u_tilde.size else None,
            rank=rank,
            reg=float(header[4]),
        )
