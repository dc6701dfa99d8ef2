"""Experiment configuration: one nested key-value document drives a pipeline.

A raw (possibly partial) nested mapping is resolved against the defaults
below; the resolved form is echoed into every report so a run can be
reproduced from its own output. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Any

from .antidote import Budget, GdOptions
from .errors import ConfigError
from .factorization import AlsOptions

ALGORITHMS = (
    "gd_random",
    "gd_fixed",
    "heuristic1",
    "heuristic2",
    "baseline_min",
    "baseline_max",
    "random",
    "none",
)

DEFAULTS: dict[str, Any] = {
    "dataset": {
        "ratings": None,  # path; required
        "format": "csv",  # csv | movielens
        "separator": "::",
        "movies": None,  # path to MovieID::Title::Genres (genre groups)
        "top_items": None,
        "users_mode": None,  # most_active | random_subset
        "users_k": None,
        "filter_seed": 0,
        "bounds": [0.0, 5.0],
    },
    "holdout": {
        "fraction": None,  # e.g. 0.2 enables a per-user holdout split
        "seed": 0,
    },
    "factorization": {
        "rank": 8,
        "reg": 1.0,
        "max_sweeps": 50,
        "tol": 1.0e-4,
        "seed": 0,
    },
    "objective": {
        "kind": "polarization",
        "direction": "minimize",
        "groups_csv": None,  # entity_id,group_label file
        "groups_axis": "items",
    },
    "algorithm": {
        "name": "none",
        "max_iters": 30,
        "step_rule": "backtracking",
        "step": 1.0,
        "initial_step": None,
        "shrink_factor": 0.5,
        "max_trials": 12,
        "converge_tol": 1.0e-4,
        "init_value": None,
        "seed": 0,
        "restarts": 5,
        "warm_start": False,
        "factors": None,  # factor container path (heuristic2 without refit)
    },
    "budget": {
        "count": None,
        "fraction": None,
    },
    "evaluation": {
        "topk_ks": [1, 5, 10, 20, 30],
    },
    "output": {
        "dir": None,
    },
    "validate": {
        "ranks": [4, 8],
        "regs": [0.1, 1.0, 10.0],
        "splits": 5,
        "fraction": 0.2,
        "seed": 0,
    },
}


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            merged[key] = _merge(defaults[key], value, where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_by_path(config: dict, dotted: str, value: Any) -> None:
    """Assign ``a.b.c = value`` inside a nested mapping."""
    keys = dotted.split(".")
    node = config
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment settings (see ``DEFAULTS`` for the schema)."""

    resolved: dict[str, Any]

    @staticmethod
    def from_dict(raw: dict[str, Any]) -> "ExperimentConfig":
        resolved = _merge(DEFAULTS, raw or {})
        config = ExperimentConfig(resolved=resolved)
        config.validate()
        return config

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.resolved[section]

    def echo(self) -> dict[str, Any]:
        return copy.deepcopy(self.resolved)

    # -- domain objects -------------------------------------------------

    def als_options(self) -> AlsOptions:
        f = self.resolved["factorization"]
        return AlsOptions(
            max_sweeps=int(f["max_sweeps"]),
            objective_tol=float(f["tol"]),
            seed=int(f["seed"]),
        )

    def gd_options(self) -> GdOptions:
        a = self.resolved["algorithm"]
        return GdOptions(
            max_iters=int(a["max_iters"]),
            step_rule=str(a["step_rule"]),
            step=float(a["step"]),
            initial_step=None if a["initial_step"] is None else float(a["initial_step"]),
            shrink_factor=float(a["shrink_factor"]),
            max_trials=int(a["max_trials"]),
            converge_tol=float(a["converge_tol"]),
            init="random" if a["name"] == "gd_random" else "fixed",
            init_value=None if a["init_value"] is None else float(a["init_value"]),
            seed=int(a["seed"]),
            restarts=int(a["restarts"]),
            warm_start_factorization=bool(a["warm_start"]),
        )

    def budget(self) -> Budget:
        b = self.resolved["budget"]
        if b["count"] is None and b["fraction"] is None:
            raise ConfigError("budget.count or budget.fraction is required")
        return Budget(
            count=None if b["count"] is None else int(b["count"]),
            fraction=None if b["fraction"] is None else float(b["fraction"]),
        )

    def bounds(self) -> tuple[float, float]:
        lo, hi = self.resolved["dataset"]["bounds"]
        return float(lo), float(hi)

    def validate(self) -> None:
        algorithm = self.resolved["algorithm"]["name"]
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        objective = self.resolved["objective"]
        kind, direction = objective["kind"], objective["direction"]
        if kind not in ("polarization", "individual_fairness", "group_fairness"):
            raise ConfigError(f"unknown objective kind {kind!r}")
        if direction not in ("minimize", "maximize"):
            raise ConfigError(f"unknown direction {direction!r}")
        if kind != "polarization" and direction != "minimize":
            raise ConfigError("fairness objectives are minimize-only")
        if algorithm in ("heuristic1", "heuristic2") and direction != "minimize":
            raise ConfigError(f"{algorithm} requires a minimize objective")
        if algorithm == "baseline_min" and (kind, direction) != ("polarization", "minimize"):
            raise ConfigError("baseline_min pairs with minimizing polarization")
        if algorithm == "baseline_max" and (kind, direction) != ("polarization", "maximize"):
            raise ConfigError("baseline_max pairs with maximizing polarization")
        if kind == "group_fairness":
            dataset = self.resolved["dataset"]
            if objective["groups_csv"] is None and dataset["movies"] is None:
                raise ConfigError(
                    "group_fairness needs objective.groups_csv or dataset.movies"
                )
        fmt = self.resolved["dataset"]["format"]
        if fmt not in ("csv", "movielens"):
            raise ConfigError(f"unknown dataset format {fmt!r}")
        holdout = self.resolved["holdout"]["fraction"]
        if holdout is not None and not 0.0 < float(holdout) < 1.0:
            raise ConfigError("holdout.fraction must be in (0, 1)")
        if algorithm not in ("none",):
            b = self.resolved["budget"]
            if b["count"] is None and b["fraction"] is None:
                raise ConfigError(f"algorithm {algorithm!r} needs a budget")
