"""Antidote data generation.

Antidote data is a small block of synthetic, fully observed user rows whose
ratings are chosen so that refactorizing the system jointly with them shifts
the predictions toward a social objective. This module provides:

* ``optimize_antidote``  -- projected gradient descent/ascent that refactorizes
  the system each iteration and follows the first-order sensitivity of the
  item factors to the antidote ratings,
* ``heuristic1`` / ``heuristic2``  -- one-shot sign-rule generators producing a
  single boundary-valued row replicated to the budget (heuristic2 needs only
  an existing factor matrix, no factorization access),
* ``baseline_min`` / ``baseline_max`` / ``random_antidote``  -- reference
  generators for comparison.

The sensitivity of the objective to one antidote rating x~_ij is

    dR/dx~_ij = g_j^T U^T S_j^{-1} u~_i,
    S_j = sum_{i in Omega_j} u_i u_i^T + U~ U~^T + reg * I,

where g_j is column j of the objective gradient with respect to the
predictions. The d solves w_j = S_j^{-1} (U g_j) are shared by all antidote
rows, so the full gradient is U~^T W.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernels
from .data import Bounds, RatingDataset, _open_text
from .errors import ConfigError, DataError
from .factorization import AlsOptions, FactorModel, als_factorize_joint, predict
from .objectives import ObjectiveSpec, evaluate, gradient


@dataclass(frozen=True)
class AntidoteMatrix:
    """Dense n' x d block of synthetic ratings, constrained to the bounds."""

    values: np.ndarray
    bounds: Bounds

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise DataError("antidote values must be a 2-d matrix")
        lo, hi = self.bounds
        if values.size and (values.min() < lo or values.max() > hi):
            raise DataError(f"antidote ratings must lie within [{lo}, {hi}]")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Budget:
    """Number of antidote rows, absolute or as a fraction of the user count."""

    count: int | None = None
    fraction: float | None = None

    def __post_init__(self):
        if (self.count is None) == (self.fraction is None):
            raise ConfigError("specify exactly one of count or fraction")
        if self.count is not None and self.count < 1:
            raise ConfigError("budget count must be at least 1")
        if self.fraction is not None and not self.fraction > 0:
            raise ConfigError("budget fraction must be positive")

    def resolve(self, n_users: int | None = None) -> int:
        if self.count is not None:
            return self.count
        if n_users is None:
            raise ConfigError("a fractional budget needs the host user count")
        return max(1, math.ceil(self.fraction * n_users))


@dataclass(frozen=True)
class GdOptions:
    """Projected gradient descent/ascent settings.

    ``initial_step=None`` scales the first backtracking trial so the largest
    entry update spans the full rating range; the step then shrinks by
    ``shrink_factor`` until the objective improves. ``init`` is either
    ``fixed`` (all entries ``init_value``, defaulting to the train mean) or
    ``random`` (uniform over the bounds, best of ``restarts`` runs).
    """

    max_iters: int = 30
    step_rule: str = "backtracking"  # or "fixed"
    step: float = 1.0
    initial_step: float | None = None
    shrink_factor: float = 0.5
    max_trials: int = 12
    converge_tol: float = 1e-4
    init: str = "fixed"  # or "random"
    init_value: float | None = None
    seed: int = 0
    restarts: int = 5
    # cold refits keep the optimized objective equal to what an independent
    # refactorization of the returned antidote reproduces; warm starts are
    # cheaper but follow a different chain of factorization optima
    warm_start_factorization: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ConfigError(f"unknown step rule {self.step_rule!r}")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ConfigError("shrink_factor must be in (0, 1)")
        if self.max_trials < 1:
            raise ConfigError("max_trials must be at least 1")
        if self.init not in ("fixed", "random"):
            raise ConfigError(f"unknown init mode {self.init!r}")
        if self.restarts < 1:
            raise ConfigError("restarts must be at least 1")


def clamp(values: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Entrywise projection onto the feasible rating box."""
    return np.clip(values, bounds[0], bounds[1])


def antidote_gradient(
    model: FactorModel, train: RatingDataset, pred_gradient: np.ndarray
) -> np.ndarray:
    """d(objective)/d(antidote rating) for every antidote entry, as (n', d).

    ``pred_gradient`` is the (n, d) gradient of the objective with respect to
    the predictions at the model's current point.
    """
    if model.U_tilde is None or model.n_antidote < 1:
        raise ConfigError("model carries no antidote factors")
    if pred_gradient.shape != (model.n, model.d):
        raise DataError(
            f"gradient shape {pred_gradient.shape} does not match ({model.n}, {model.d})"
        )
    csc_indptr, csc_rows, _ = train.csc
    w = _kernels.solve_normal_equations(
        model.U,
        csc_indptr,
        csc_rows,
        None,
        model.reg,
        extra_gram=model.U_tilde @ model.U_tilde.T,
        extra_rhs=model.U @ pred_gradient,
        entity_kind="item",
    )
    return model.U_tilde.T @ w


def _fixed_init_value(train: RatingDataset, gd: GdOptions) -> float:
    value = train.global_mean if gd.init_value is None else gd.init_value
    return float(np.clip(value, *train.bounds))


def optimize_antidote(
    train: RatingDataset,
    spec: ObjectiveSpec,
    budget: Budget,
    rank: int,
    reg: float,
    gd: GdOptions | None = None,
    als: AlsOptions | None = None,
) -> tuple[AntidoteMatrix, list[float]]:
    """Projected gradient descent/ascent over the antidote ratings.

    Every iteration refactorizes the system jointly with the current antidote
    block, then takes a projected step along the antidote gradient (sign
    flipped for maximize). With backtracking the returned trace of objective
    values is monotone in the optimized direction; the first entry is the
    objective at the initial antidote. With random init the best of
    ``restarts`` independent runs is returned.
    """
    gd = gd or GdOptions()
    als = als or AlsOptions()
    bounds = train.bounds
    n_rows = budget.resolve(train.n)

    if gd.init == "fixed":
        starts = [np.full((n_rows, train.d), _fixed_init_value(train, gd))]
    else:
        starts = [
            np.random.default_rng(gd.seed + r).uniform(
                bounds[0], bounds[1], size=(n_rows, train.d)
            )
            for r in range(gd.restarts)
        ]

    best: tuple[np.ndarray, list[float]] | None = None
    for start in starts:
        result = _descend(train, spec, start, rank, reg, gd, als, bounds)
        if best is None or _improves(spec, result[1][-1], best[1][-1]):
            best = result
    values, trace = best
    return AntidoteMatrix(values=values, bounds=bounds), trace


def _improves(spec: ObjectiveSpec, candidate: float, incumbent: float) -> bool:
    if spec.direction == "minimize":
        return candidate < incumbent
    return candidate > incumbent


def _descend(
    train: RatingDataset,
    spec: ObjectiveSpec,
    start: np.ndarray,
    rank: int,
    reg: float,
    gd: GdOptions,
    als: AlsOptions,
    bounds: Bounds,
) -> tuple[np.ndarray, list[float]]:
    x = clamp(start, bounds)
    model = als_factorize_joint(train, x, rank, reg, als)
    pred = predict(model)
    objective = evaluate(spec, train, pred)
    trace = [objective]

    for _ in range(gd.max_iters):
        grad = antidote_gradient(model, train, gradient(spec, train, pred))
        grad_scale = float(np.abs(grad).max())
        if grad_scale == 0.0:
            break
        warm = replace(als, warm_start=model) if gd.warm_start_factorization else als

        if gd.step_rule == "backtracking":
            step = (
                gd.initial_step
                if gd.initial_step is not None
                else (bounds[1] - bounds[0]) / grad_scale
            )
            accepted = None
            for _trial in range(gd.max_trials):
                candidate = clamp(x - spec.sign * step * grad, bounds)
                cand_model = als_factorize_joint(train, candidate, rank, reg, warm)
                cand_pred = predict(cand_model)
                cand_objective = evaluate(spec, train, cand_pred)
                if _improves(spec, cand_objective, objective):
                    accepted = (candidate, cand_model, cand_pred, cand_objective)
                    break
                step *= gd.shrink_factor
            if accepted is None:
                break  # no feasible improvement left; return the current best
            x, model, pred, new_objective = accepted
        else:
            x = clamp(x - spec.sign * gd.step * grad, bounds)
            model = als_factorize_joint(train, x, rank, reg, warm)
            pred = predict(model)
            new_objective = evaluate(spec, train, pred)

        trace.append(new_objective)
        done = abs(new_objective - objective) < gd.converge_tol * max(abs(objective), 1e-300)
        objective = new_objective
        if done:
            break
    return x, trace


def heuristic1(
    train: RatingDataset,
    spec: ObjectiveSpec,
    budget: Budget,
    rank: int,
    reg: float,
    als: AlsOptions | None = None,
    init_row: float | None = None,
) -> AntidoteMatrix:
    """One joint factorization, then a sign rule on the single-row gradient.

    Entries with a positive partial derivative are set to the lower rating
    bound, the rest (including exact zeros) to the upper bound; the row is
    replicated to the budget.
    """
    if spec.direction != "minimize":
        raise ConfigError("heuristic1 minimizes; use gradient ascent to maximize")
    bounds = train.bounds
    value = float(np.clip(train.global_mean if init_row is None else init_row, *bounds))
    seed_row = np.full((1, train.d), value)
    model = als_factorize_joint(train, seed_row, rank, reg, als or AlsOptions())
    grad = antidote_gradient(model, train, gradient(spec, train, predict(model)))
    row = np.where(grad[0] > 0, bounds[0], bounds[1])
    n_rows = budget.resolve(train.n)
    return AntidoteMatrix(values=np.tile(row, (n_rows, 1)), bounds=bounds)


def heuristic2(
    model: FactorModel,
    pred_gradient: np.ndarray,
    budget: Budget,
    bounds: Bounds,
) -> AntidoteMatrix:
    """Sign rule from existing factors only; no factorization access needed.

    Approximates the antidote gradient direction for item j by the sign of
    1^T (U g_j), i.e. the gradient-weighted sum of the user latent vectors.
    """
    scores = (model.U @ pred_gradient).sum(axis=0)
    row = np.where(scores > 0, bounds[0], bounds[1])
    n_rows = budget.resolve(model.n)
    return AntidoteMatrix(values=np.tile(row, (n_rows, 1)), bounds=bounds)


def baseline_min(train: RatingDataset, budget: Budget) -> AntidoteMatrix:
    """Every antidote row rates each item at that item's mean known rating."""
    counts = train.item_counts
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise DataError(f"item {empty[0]} has no known ratings")
    sums = np.bincount(train.item_idx, weights=train.values, minlength=train.d)
    row = sums / counts
    n_rows = budget.resolve(train.n)
    return AntidoteMatrix(values=np.tile(row, (n_rows, 1)), bounds=train.bounds)


def baseline_max(train: RatingDataset, budget: Budget) -> AntidoteMatrix:
    """Per item, half the antidote rows at the max rating, half at the min."""
    n_rows = budget.resolve(train.n)
    lo, hi = train.bounds
    values = np.full((n_rows, train.d), lo)
    values[: math.ceil(n_rows / 2), :] = hi
    return AntidoteMatrix(values=values, bounds=train.bounds)


def random_antidote(
    budget: Budget, d: int, bounds: Bounds, seed: int = 0, n_users: int | None = None
) -> AntidoteMatrix:
    """I.i.d. uniform ratings over the feasible range."""
    n_rows = budget.resolve(n_users)
    rng = np.random.default_rng(seed)
    return AntidoteMatrix(
        values=rng.uniform(bounds[0], bounds[1], size=(n_rows, d)), bounds=bounds
    )


def row_sign_agreement(a: AntidoteMatrix, b: AntidoteMatrix) -> float:
    """Fraction of matching entries in the first rows (heuristic diagnostics)."""
    if a.d != b.d:
        raise DataError("antidote matrices have different item counts")
    return float(np.mean(a.values[0] == b.values[0]))


# ---------------------------------------------------------------------------
# CSV interchange: synthetic users appendable to a ratings CSV
# ---------------------------------------------------------------------------


def save_antidote_csv(
    antidote: AntidoteMatrix, target, item_ids: Sequence[str] | None = None
) -> None:
    item_ids = (
        [str(j) for j in range(antidote.d)] if item_ids is None else list(item_ids)
    )
    if len(item_ids) != antidote.d:
        raise DataError(f"expected {antidote.d} item ids, got {len(item_ids)}")
    with _open_text(target, "w") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "rating"])
        for k in range(antidote.n_rows):
            for j in range(antidote.d):
                writer.writerow([f"antidote_{k}", item_ids[j], repr(float(antidote.values[k, j]))])


def load_antidote_csv(source, item_ids: Sequence[str], bounds: Bounds) -> AntidoteMatrix:
    """Read a previously exported antidote block against the host item ids."""
    column_of = {iid: j for j, iid in enumerate(item_ids)}
    rows: dict[str, np.ndarray] = {}
    with _open_text(source) as stream:
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user_id", "item_id", "rating"]:
            raise DataError("expected header 'user_id,item_id,rating'")
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != 3:
                raise DataError(f"line {lineno}: expected 3 columns")
            uid, iid, rating = record
            if iid not in column_of:
                raise DataError(f"line {lineno}: unknown item id {iid!r}")
            row = rows.setdefault(uid, np.full(len(item_ids), np.nan))
            row[column_of[iid]] = float(rating)
    # dict insertion order preserves the file's row order
    values = np.array(list(rows.values())) if rows else np.zeros((0, len(item_ids)))
    if values.size and np.isnan(values).any():
        raise DataError("antidote rows must rate every item")
    return AntidoteMatrix(values=values, bounds=bounds)
