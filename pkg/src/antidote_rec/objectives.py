"""Social objective functions over a prediction matrix, with analytic gradients.

All three objectives are population variances:

* polarization          -- mean over items of the per-item variance of
                           predicted ratings across users (equivalently the
                           normalized sum of pairwise squared distances
                           between user prediction rows),
* individual unfairness -- variance across users of the per-user mean squared
                           prediction error over that user's known ratings,
* group unfairness      -- variance across groups of the per-group mean
                           squared prediction error over the group's known
                           ratings, for a partition of users or items.

Gradients are with respect to each predicted entry and are returned as dense
(n, d) arrays; the fairness gradients are exactly zero off the known entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroupAssignment, RatingDataset
from .errors import ConfigError, DataError

KINDS = ("polarization", "individual_fairness", "group_fairness")
DIRECTIONS = ("minimize", "maximize")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which metric to optimize and in which direction."""

    kind: str
    direction: str = "minimize"
    groups: GroupAssignment | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown objective kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown direction {self.direction!r}")
        if self.kind == "group_fairness" and self.groups is None:
            raise ConfigError("group_fairness requires a group assignment")
        if self.kind != "group_fairness" and self.groups is not None:
            raise ConfigError(f"{self.kind} does not take a group assignment")
        if self.kind != "polarization" and self.direction != "minimize":
            raise ConfigError("fairness objectives are minimize-only")

    @property
    def sign(self) -> float:
        """+1 for descent (minimize), -1 for ascent (maximize)."""
        return 1.0 if self.direction == "minimize" else -1.0


def polarization(pred: np.ndarray) -> float:
    """Mean per-item population variance of the predicted ratings."""
    return float(np.var(pred, axis=0).mean())


def user_losses(train: RatingDataset, pred: np.ndarray) -> np.ndarray:
    """Per-user mean squared error over known ratings."""
    counts = train.user_counts
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise DataError(f"user {empty[0]} has no known ratings")
    sq = (pred[train.user_idx, train.item_idx] - train.values) ** 2
    return np.bincount(train.user_idx, weights=sq, minlength=train.n) / counts


def individual_unfairness(train: RatingDataset, pred: np.ndarray) -> float:
    """Population variance of the per-user losses."""
    return float(np.var(user_losses(train, pred)))


def group_losses(
    train: RatingDataset, pred: np.ndarray, groups: GroupAssignment
) -> np.ndarray:
    """Mean squared error per group, over the known ratings in each group."""
    groups.check_matches(train)
    entry_codes = _entry_codes(train, groups)
    counts = np.bincount(entry_codes, minlength=groups.g)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise DataError(f"group {groups.group_labels[empty[0]]!r} has no known ratings")
    sq = (pred[train.user_idx, train.item_idx] - train.values) ** 2
    return np.bincount(entry_codes, weights=sq, minlength=groups.g) / counts


def group_unfairness(
    train: RatingDataset, pred: np.ndarray, groups: GroupAssignment
) -> float:
    """Population variance of the per-group losses."""
    return float(np.var(group_losses(train, pred, groups)))


def evaluate(spec: ObjectiveSpec, train: RatingDataset, pred: np.ndarray) -> float:
    if spec.kind == "polarization":
        return polarization(pred)
    if spec.kind == "individual_fairness":
        return individual_unfairness(train, pred)
    return group_unfairness(train, pred, spec.groups)


def _entry_codes(train: RatingDataset, groups: GroupAssignment) -> np.ndarray:
    """Group code of each known entry, on the assignment's axis."""
    owner = train.user_idx if groups.axis == "users" else train.item_idx
    return groups.codes[owner]


def gradient(spec: ObjectiveSpec, train: RatingDataset, pred: np.ndarray) -> np.ndarray:
    """d(objective)/d(prediction) as a dense (n, d) matrix.

    The gradient of the objective itself; ascent vs. descent is the
    optimizer's concern.
    """
    n, d = pred.shape
    if spec.kind == "polarization":
        return (2.0 / (n * d)) * (pred - pred.mean(axis=0, keepdims=True))

    g = np.zeros_like(pred)
    resid = pred[train.user_idx, train.item_idx] - train.values
    if spec.kind == "individual_fairness":
        losses = user_losses(train, pred)
        centered = losses - losses.mean()
        per_entry = (
            4.0
            * resid
            / (n * train.user_counts[train.user_idx])
            * centered[train.user_idx]
        )
    else:
        groups = spec.groups
        losses = group_losses(train, pred, groups)
        centered = losses - losses.mean()
        entry_codes = _entry_codes(train, groups)
        entry_counts = np.bincount(entry_codes, minlength=groups.g)[entry_codes]
        per_entry = 4.0 * resid / (groups.g * entry_counts) * centered[entry_codes]
    g[train.user_idx, train.item_idx] = per_entry
    return g


def save_gradient_csv(g: np.ndarray, target) -> None:
    """Debug export of a gradient matrix."""
    np.savetxt(target, g, delimiter=",")
