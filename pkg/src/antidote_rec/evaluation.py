"""Measure the effect of antidote injection.

All metrics are computed over the original users only; antidote rows shape
the factors during the joint refit but never enter any metric. The experiment
runner wires the full pipeline: load -> filter -> (optional holdout) ->
factorize -> before metrics -> antidote generation -> joint refit -> after
metrics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import antidote as antidote_mod
from . import objectives
from ._kernels import BACKEND
from .antidote import AntidoteMatrix, Budget
from .config import ExperimentConfig
from .data import (
    GroupAssignment,
    RatingDataset,
    filter_top_items,
    filter_users,
    holdout_split,
    load_genre_groups,
    load_groups_csv,
    load_movielens,
    load_ratings_csv,
    _open_text,
)
from .errors import AntidoteRecError, ConfigError, DataError
from .factorization import (
    AlsOptions,
    FactorModel,
    als_factorize,
    als_factorize_joint,
    load_factors,
    predict,
)
from .objectives import ObjectiveSpec


def rmse(data: RatingDataset, pred: np.ndarray, scope: str = "all", groups=None):
    """Root mean squared error over known entries.

    ``scope='all'`` returns a float, ``'per_user'`` an array aligned with user
    indices, ``'per_group'`` a label -> value mapping. Every entity in scope
    must have at least one known rating.
    """
    sq = (pred[data.user_idx, data.item_idx] - data.values) ** 2
    if scope == "all":
        if data.nnz == 0:
            raise DataError("no known entries to score")
        return float(np.sqrt(sq.mean()))
    if scope == "per_user":
        counts = data.user_counts
        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            raise DataError(f"user {empty[0]} has no known ratings")
        return np.sqrt(np.bincount(data.user_idx, weights=sq, minlength=data.n) / counts)
    if scope == "per_group":
        if groups is None:
            raise ConfigError("per_group scope needs a group assignment")
        losses = objectives.group_losses(data, pred, groups)
        return {label: float(np.sqrt(l)) for label, l in zip(groups.group_labels, losses)}
    raise ConfigError(f"unknown rmse scope {scope!r}")


def per_item_variance(pred: np.ndarray) -> np.ndarray:
    """Population variance of each item's predicted ratings; its mean is the
    polarization metric exactly."""
    return np.var(pred, axis=0)


def topk_jaccard(
    pred_before: np.ndarray,
    pred_after: np.ndarray,
    train: RatingDataset,
    ks,
) -> dict[int, float]:
    """Mean per-user Jaccard similarity of before/after top-k recommendations.

    Candidates are each user's unrated items, ranked by predicted rating
    (ties broken by smaller item index).
    """
    ks = sorted(int(k) for k in ks)
    if not ks or ks[0] < 1:
        raise ConfigError("ks must be positive")
    n, d = pred_before.shape
    indptr, cols, _ = train.csr
    sums = {k: 0.0 for k in ks}
    for i in range(n):
        rated = cols[indptr[i] : indptr[i + 1]]
        mask = np.ones(d, dtype=bool)
        mask[rated] = False
        candidates = np.nonzero(mask)[0]
        if len(candidates) < ks[-1]:
            raise DataError(
                f"user {i} has {len(candidates)} unrated items, fewer than k={ks[-1]}"
            )
        order_before = candidates[np.lexsort((candidates, -pred_before[i, candidates]))]
        order_after = candidates[np.lexsort((candidates, -pred_after[i, candidates]))]
        for k in ks:
            top_before = set(order_before[:k].tolist())
            top_after = set(order_after[:k].tolist())
            union = len(top_before | top_after)
            sums[k] += len(top_before & top_after) / union
    return {k: sums[k] / n for k in ks}


# ---------------------------------------------------------------------------
# experiment report
# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    objective_kind: str
    direction: str
    algorithm: str
    n_antidote_rows: int
    objective_before: float
    objective_after: float
    objective_train_before: float
    objective_train_after: float
    objective_test_before: float | None
    objective_test_after: float | None
    rmse_train_before: float
    rmse_train_after: float
    rmse_test_before: float | None
    rmse_test_after: float | None
    per_user_rmse_before: np.ndarray
    per_user_rmse_after: np.ndarray
    per_group_rmse: dict[str, tuple[float, float]] | None
    per_item_variance_before: np.ndarray
    per_item_variance_after: np.ndarray
    topk_jaccard: dict[int, float]
    trace: list[float] | None
    config_echo: dict[str, Any]
    user_ids: tuple[str, ...] = ()
    item_ids: tuple[str, ...] = ()
    kernel_backend: str = field(default=BACKEND)
    # carried for export convenience; not serialized into the report files
    antidote: AntidoteMatrix | None = field(default=None, repr=False, compare=False)

    def to_text(self) -> str:
        """Human-readable key/value document; numbers at 6 significant digits."""

        def fmt(x) -> str:
            return "-" if x is None else f"{x:.6g}"

        lines = [
            "antidote experiment report",
            "==========================",
            f"objective: {self.objective_kind} ({self.direction})",
            f"algorithm: {self.algorithm}",
            f"antidote rows: {self.n_antidote_rows}",
            f"kernel backend: {self.kernel_backend}",
            "",
            f"{'metric':<24}{'before':>14}{'after':>14}",
            f"{'objective':<24}{fmt(self.objective_before):>14}{fmt(self.objective_after):>14}",
            f"{'objective (train)':<24}{fmt(self.objective_train_before):>14}"
            f"{fmt(self.objective_train_after):>14}",
            f"{'rmse (train)':<24}{fmt(self.rmse_train_before):>14}{fmt(self.rmse_train_after):>14}",
        ]
        if self.rmse_test_before is not None:
            lines.append(
                f"{'objective (test)':<24}{fmt(self.objective_test_before):>14}"
                f"{fmt(self.objective_test_after):>14}"
            )
            lines.append(
                f"{'rmse (test)':<24}{fmt(self.rmse_test_before):>14}{fmt(self.rmse_test_after):>14}"
            )
        lines += ["", "top-k jaccard (mean over users)"]
        for k in sorted(self.topk_jaccard):
            lines.append(f"  k={k:<4d} {self.topk_jaccard[k]:.6g}")
        if self.per_group_rmse:
            lines += ["", f"{'per-group rmse':<24}{'before':>14}{'after':>14}"]
            for label in sorted(self.per_group_rmse):
                before, after = self.per_group_rmse[label]
                lines.append(f"{label:<24}{fmt(before):>14}{fmt(after):>14}")
        if self.trace is not None:
            lines += ["", "objective trace: " + ", ".join(f"{v:.6g}" for v in self.trace)]
        lines += ["", "config (resolved)"]
        lines += _flatten_config(self.config_echo)
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict[str, Any]:
        """Full-precision machine section."""
        return {
            "objective_kind": self.objective_kind,
            "direction": self.direction,
            "algorithm": self.algorithm,
            "n_antidote_rows": self.n_antidote_rows,
            "kernel_backend": self.kernel_backend,
            "objective_before": self.objective_before,
            "objective_after": self.objective_after,
            "objective_train_before": self.objective_train_before,
            "objective_train_after": self.objective_train_after,
            "objective_test_before": self.objective_test_before,
            "objective_test_after": self.objective_test_after,
            "rmse_train_before": self.rmse_train_before,
            "rmse_train_after": self.rmse_train_after,
            "rmse_test_before": self.rmse_test_before,
            "rmse_test_after": self.rmse_test_after,
            "per_user_rmse_before": [float(x) for x in self.per_user_rmse_before],
            "per_user_rmse_after": [float(x) for x in self.per_user_rmse_after],
            "per_group_rmse": (
                None
                if self.per_group_rmse is None
                else {k: [v[0], v[1]] for k, v in self.per_group_rmse.items()}
            ),
            "per_item_variance_before": [float(x) for x in self.per_item_variance_before],
            "per_item_variance_after": [float(x) for x in self.per_item_variance_after],
            "topk_jaccard": {str(k): v for k, v in self.topk_jaccard.items()},
            "trace": self.trace,
            "config_echo": self.config_echo,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(self.to_text(), encoding="utf-8")
        (out / "report.json").write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=1, allow_nan=True) + "\n",
            encoding="utf-8",
        )
        uids = self.user_ids or tuple(str(i) for i in range(len(self.per_user_rmse_before)))
        iids = self.item_ids or tuple(str(j) for j in range(len(self.per_item_variance_before)))
        _write_csv(
            out / "per_user_rmse.csv",
            ["user_id", "before", "after"],
            zip(uids, self.per_user_rmse_before, self.per_user_rmse_after),
        )
        _write_csv(
            out / "per_item_variance.csv",
            ["item_id", "before", "after"],
            zip(iids, self.per_item_variance_before, self.per_item_variance_after),
        )
        if self.per_group_rmse is not None:
            _write_csv(
                out / "per_group_rmse.csv",
                ["group", "before", "after"],
                ((k, v[0], v[1]) for k, v in sorted(self.per_group_rmse.items())),
            )
        _write_csv(
            out / "topk_jaccard.csv",
            ["k", "mean_jaccard"],
            sorted(self.topk_jaccard.items()),
        )


def _write_csv(path, header, rows) -> None:
    with _open_text(path, "w") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([x if isinstance(x, str) else repr(float(x)) for x in row])


def _flatten_config(node: dict, prefix: str = "  ") -> list[str]:
    lines = []
    for key in sorted(node):
        value = node[key]
        if isinstance(value, dict):
            lines.append(f"{prefix}{key}:")
            lines += _flatten_config(value, prefix + "  ")
        else:
            lines.append(f"{prefix}{key} = {value!r}")
    return lines


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


class _Stage:
    """Tag escaping errors with the pipeline stage that raised them."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if isinstance(exc, Exception) and not getattr(exc, "stage", None):
            try:
                exc.stage = self.name
            except AttributeError:
                pass
        return False


def load_configured_dataset(
    config: ExperimentConfig,
) -> tuple[RatingDataset, GroupAssignment | None]:
    """Resolve dataset path/format/filters and the optional group assignment."""
    ds = config["dataset"]
    if not ds["ratings"]:
        raise ConfigError("dataset.ratings is required")
    bounds = config.bounds()
    with _Stage("load"):
        if ds["format"] == "movielens":
            data = load_movielens(ds["ratings"], separator=ds["separator"], bounds=bounds)
        else:
            data = load_ratings_csv(ds["ratings"], bounds=bounds)
        if ds["top_items"] is not None:
            data = filter_top_items(data, int(ds["top_items"]))
        if ds["users_mode"] is not None:
            if ds["users_k"] is None:
                raise ConfigError("dataset.users_k is required with dataset.users_mode")
            data = filter_users(
                data, ds["users_mode"], int(ds["users_k"]), seed=int(ds["filter_seed"])
            )
        groups = None
        obj = config["objective"]
        if obj["groups_csv"] is not None:
            groups = load_groups_csv(obj["groups_csv"], data, axis=obj["groups_axis"])
        elif ds["movies"] is not None:
            groups = load_genre_groups(ds["movies"], data)
    return data, groups


def _generate_antidote(
    config: ExperimentConfig,
    train: RatingDataset,
    spec: ObjectiveSpec,
    model_before: FactorModel,
    als: AlsOptions,
) -> tuple[AntidoteMatrix | None, list[float] | None]:
    name = config["algorithm"]["name"]
    if name == "none":
        return None, None
    budget = config.budget()
    rank = int(config["factorization"]["rank"])
    reg = float(config["factorization"]["reg"])
    bounds = config.bounds()
    if name in ("gd_random", "gd_fixed"):
        matrix, trace = antidote_mod.optimize_antidote(
            train, spec, budget, rank, reg, gd=config.gd_options(), als=als
        )
        return matrix, trace
    if name == "heuristic1":
        init_row = config["algorithm"]["init_value"]
        return (
            antidote_mod.heuristic1(
                train,
                spec,
                budget,
                rank,
                reg,
                als=als,
                init_row=None if init_row is None else float(init_row),
            ),
            None,
        )
    if name == "heuristic2":
        factors_path = config["algorithm"]["factors"]
        model = load_factors(factors_path) if factors_path else model_before
        grad = objectives.gradient(spec, train, predict(model))
        return antidote_mod.heuristic2(model, grad, budget, bounds), None
    if name == "baseline_min":
        return antidote_mod.baseline_min(train, budget), None
    if name == "baseline_max":
        return antidote_mod.baseline_max(train, budget), None
    if name == "random":
        seed = int(config["algorithm"]["seed"])
        return (
            antidote_mod.random_antidote(budget, train.d, bounds, seed=seed, n_users=train.n),
            None,
        )
    raise ConfigError(f"unknown algorithm {name!r}")


def _per_user_rmse_padded(data: RatingDataset, pred: np.ndarray) -> np.ndarray:
    """Per-user RMSE with NaN for users lacking known entries (report padding)."""
    counts = data.user_counts
    sq = (pred[data.user_idx, data.item_idx] - data.values) ** 2
    with np.errstate(invalid="ignore"):
        return np.sqrt(
            np.bincount(data.user_idx, weights=sq, minlength=data.n)
            / np.where(counts > 0, counts, np.nan)
        )


def _per_group_rmse_padded(
    data: RatingDataset, pred: np.ndarray, groups: GroupAssignment
) -> dict[str, float]:
    codes = groups.codes[data.user_idx if groups.axis == "users" else data.item_idx]
    counts = np.bincount(codes, minlength=groups.g)
    sq = (pred[data.user_idx, data.item_idx] - data.values) ** 2
    sums = np.bincount(codes, weights=sq, minlength=groups.g)
    with np.errstate(invalid="ignore"):
        values = np.sqrt(sums / np.where(counts > 0, counts, np.nan))
    return {label: float(v) for label, v in zip(groups.group_labels, values)}


def run_experiment(
    config: ExperimentConfig, antidote_override: AntidoteMatrix | None = None
) -> ExperimentReport:
    """Execute the full pipeline described by ``config``.

    ``antidote_override`` evaluates a pre-existing antidote block instead of
    generating one (the algorithm config is then ignored). Deterministic under
    the config's seeds: identical configs produce identical reports.
    """
    data, groups = load_configured_dataset(config)

    with _Stage("split"):
        fraction = config["holdout"]["fraction"]
        if fraction is not None:
            pair = holdout_split(data, float(fraction), seed=int(config["holdout"]["seed"]))
            train, test = pair.train, pair.test
        else:
            train, test = data, None

    obj = config["objective"]
    spec = ObjectiveSpec(
        kind=obj["kind"],
        direction=obj["direction"],
        groups=groups if obj["kind"] == "group_fairness" else None,
    )

    als = config.als_options()
    rank = int(config["factorization"]["rank"])
    reg = float(config["factorization"]["reg"])

    with _Stage("factorize"):
        model_before = als_factorize(train, rank, reg, als)
        pred_before = predict(model_before)

    with _Stage("antidote"):
        if antidote_override is not None:
            antidote, trace = antidote_override, None
        else:
            antidote, trace = _generate_antidote(config, train, spec, model_before, als)
        if antidote is not None and antidote.d != train.d:
            raise DataError(
                f"antidote has {antidote.d} columns, dataset has {train.d} items"
            )

    with _Stage("refactorize"):
        if antidote is None or antidote.n_rows == 0:
            pred_after = pred_before
        else:
            model_after = als_factorize_joint(train, antidote.values, rank, reg, als)
            pred_after = predict(model_after)

    with _Stage("metrics"):
        eval_set = test if test is not None else train
        objective_train_before = objectives.evaluate(spec, train, pred_before)
        objective_train_after = objectives.evaluate(spec, train, pred_after)
        if test is not None:
            objective_test_before = objectives.evaluate(spec, test, pred_before)
            objective_test_after = objectives.evaluate(spec, test, pred_after)
        else:
            objective_test_before = objective_test_after = None

        report = ExperimentReport(
            objective_kind=spec.kind,
            direction=spec.direction,
            algorithm="override" if antidote_override is not None else config["algorithm"]["name"],
            n_antidote_rows=0 if antidote is None else antidote.n_rows,
            objective_before=(
                objective_test_before if test is not None else objective_train_before
            ),
            objective_after=(
                objective_test_after if test is not None else objective_train_after
            ),
            objective_train_before=objective_train_before,
            objective_train_after=objective_train_after,
            objective_test_before=objective_test_before,
            objective_test_after=objective_test_after,
            rmse_train_before=rmse(train, pred_before),
            rmse_train_after=rmse(train, pred_after),
            rmse_test_before=None if test is None else rmse(test, pred_before),
            rmse_test_after=None if test is None else rmse(test, pred_after),
            per_user_rmse_before=_per_user_rmse_padded(eval_set, pred_before),
            per_user_rmse_after=_per_user_rmse_padded(eval_set, pred_after),
            per_group_rmse=(
                None
                if groups is None
                else {
                    label: (before, after)
                    for (label, before), after in zip(
                        _per_group_rmse_padded(eval_set, pred_before, groups).items(),
                        _per_group_rmse_padded(eval_set, pred_after, groups).values(),
                    )
                }
            ),
            per_item_variance_before=per_item_variance(pred_before),
            per_item_variance_after=per_item_variance(pred_after),
            topk_jaccard=topk_jaccard(
                pred_before, pred_after, train, config["evaluation"]["topk_ks"]
            ),
            trace=trace,
            config_echo=config.echo(),
            user_ids=train.user_ids,
            item_ids=train.item_ids,
            antidote=antidote,
        )
    return report
