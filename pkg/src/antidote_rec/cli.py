"""Command-line front end.

Subcommands: ``prepare`` (filter/split/export datasets), ``validate``
(hyper-parameter RMSE grid), ``antidote`` (generate antidote data and report
its effect), ``evaluate`` (score a pre-existing antidote file). Settings come
from a YAML config file; any ``--<section>.<key> value`` flag overrides the
matching config entry. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import yaml

from .antidote import load_antidote_csv, save_antidote_csv
from .config import DEFAULTS, ExperimentConfig, set_by_path
from .data import holdout_split, save_groups_csv, save_ratings_csv
from .errors import AntidoteRecError, ConfigError, DataError, NumericalError
from .evaluation import load_configured_dataset, run_experiment
from .factorization import validation_rmse_grid

_OVERRIDE_PATHS = sorted(
    f"{section}.{key}" for section, body in DEFAULTS.items() for key in body
)

_LIST_KEYS = {"dataset.bounds", "evaluation.topk_ks", "validate.ranks", "validate.regs"}


def _coerce(text: str):
    value = yaml.safe_load(text)
    return value


def _parse_args(argv) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="antidote-rec",
        description="Generate and evaluate antidote rating data for a "
        "matrix-factorization recommender.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("prepare", "filter/split a dataset and export CSVs"),
        ("validate", "hyper-parameter validation RMSE grid"),
        ("antidote", "generate antidote data and report before/after metrics"),
        ("evaluate", "evaluate a pre-existing antidote CSV"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", help="YAML config file")
        cmd.add_argument("--out", help="output directory (overrides output.dir)")
        if name == "antidote":
            cmd.add_argument(
                "--budget-sweep",
                help="comma list of budgets (counts or percents, e.g. '1,0.5%%,1%%,2%%,5%%'); "
                "one report per budget under <out>/budget_<label>/",
            )
            cmd.add_argument(
                "--parallel",
                type=int,
                default=1,
                help="worker processes for the budget sweep (default sequential)",
            )
            cmd.add_argument(
                "--dump-gradient",
                action="store_true",
                help="also write the objective gradient matrix (debug)",
            )
        if name == "evaluate":
            cmd.add_argument("antidote_path", help="antidote CSV to evaluate")
        for path in _OVERRIDE_PATHS:
            cmd.add_argument(f"--{path}", dest=path, metavar="VALUE")
    return parser.parse_args(argv)


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        raw = loaded
    for dotted in _OVERRIDE_PATHS:
        value = getattr(args, dotted, None)
        if value is not None:
            parsed = _coerce(value)
            if dotted in _LIST_KEYS and not isinstance(parsed, list):
                parsed = [_coerce(part) for part in str(value).split(",")]
            set_by_path(raw, dotted, parsed)
    if args.out:
        set_by_path(raw, "output.dir", args.out)
    return ExperimentConfig.from_dict(raw)


def _out_dir(config: ExperimentConfig) -> Path:
    out = config["output"]["dir"]
    if not out:
        raise ConfigError("an output directory is required (--out or output.dir)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_prepare(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    data, groups = load_configured_dataset(config)
    fraction = config["holdout"]["fraction"]
    if fraction is not None:
        pair = holdout_split(data, float(fraction), seed=int(config["holdout"]["seed"]))
        save_ratings_csv(pair.train, out / "train.csv")
        save_ratings_csv(pair.test, out / "test.csv")
        print(f"wrote {out / 'train.csv'} ({pair.train.nnz} ratings)")
        print(f"wrote {out / 'test.csv'} ({pair.test.nnz} ratings)")
    else:
        save_ratings_csv(data, out / "ratings.csv")
        print(f"wrote {out / 'ratings.csv'} ({data.nnz} ratings)")
    if groups is not None:
        save_groups_csv(groups, data, out / "groups.csv")
        print(f"wrote {out / 'groups.csv'} ({groups.g} groups)")
    print(
        f"dataset: {data.n} users x {data.d} items, {data.nnz} known "
        f"({100.0 * data.density:.2f}% dense)"
    )
    return 0


def cmd_validate(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    data, _ = load_configured_dataset(config)
    grid = config["validate"]
    cells = validation_rmse_grid(
        data,
        ranks=[int(r) for r in grid["ranks"]],
        regs=[float(r) for r in grid["regs"]],
        splits=int(grid["splits"]),
        fraction=float(grid["fraction"]),
        seed=int(grid["seed"]),
        opts=config.als_options(),
    )
    target = out / "validation.csv"
    with open(target, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["rank", "reg", "mean_rmse"])
        for cell in cells:
            writer.writerow([cell.rank, repr(cell.reg), repr(cell.mean_rmse)])
    print(f"{'rank':>6} {'reg':>10} {'mean_rmse':>12}")
    for cell in cells:
        print(f"{cell.rank:>6d} {cell.reg:>10g} {cell.mean_rmse:>12.4f}")
    print(f"wrote {target}")
    return 0


def _parse_budget_token(token: str) -> dict:
    token = token.strip()
    if token.endswith("%"):
        return {"count": None, "fraction": float(token[:-1]) / 100.0}
    return {"count": int(token), "fraction": None}


def _run_antidote_once(config: ExperimentConfig, out: Path, dump_gradient: bool) -> None:
    report = run_experiment(config)
    report.write(out)
    if report.antidote is not None:
        save_antidote_csv(report.antidote, out / "antidote.csv", item_ids=report.item_ids)
    if dump_gradient:
        from .evaluation import load_configured_dataset as _load
        from .factorization import als_factorize, predict
        from .objectives import ObjectiveSpec, gradient, save_gradient_csv

        data, groups = _load(config)
        fraction = config["holdout"]["fraction"]
        if fraction is not None:
            data = holdout_split(
                data, float(fraction), seed=int(config["holdout"]["seed"])
            ).train
        spec = ObjectiveSpec(
            kind=config["objective"]["kind"],
            direction=config["objective"]["direction"],
            groups=groups if config["objective"]["kind"] == "group_fairness" else None,
        )
        als = config.als_options()
        model = als_factorize(
            data, int(config["factorization"]["rank"]), float(config["factorization"]["reg"]), als
        )
        save_gradient_csv(gradient(spec, data, predict(model)), out / "gradient.csv")
    print(
        f"objective {report.objective_kind} ({report.direction}): "
        f"{report.objective_before:.6g} -> {report.objective_after:.6g} "
        f"[{report.algorithm}, {report.n_antidote_rows} rows]"
    )
    print(f"wrote report to {out}")


def cmd_antidote(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    sweep = getattr(args, "budget_sweep", None)
    if not sweep:
        _run_antidote_once(config, out, getattr(args, "dump_gradient", False))
        return 0
    tokens = [t for t in sweep.split(",") if t.strip()]
    jobs = []
    for token in tokens:
        budget = _parse_budget_token(token)
        raw = config.echo()
        raw["budget"] = budget
        label = token.strip().replace("%", "pct")
        sub_out = out / f"budget_{label}"
        raw["output"]["dir"] = str(sub_out)
        jobs.append((ExperimentConfig.from_dict(raw), sub_out))
    workers = max(1, int(getattr(args, "parallel", 1)))
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(workers) as pool:
            pool.starmap(_sweep_job, [(cfg.resolved, str(path)) for cfg, path in jobs])
    else:
        for cfg, path in jobs:
            _run_antidote_once(cfg, path, False)
    print(f"budget sweep complete: {len(jobs)} reports under {out}")
    return 0


def _sweep_job(resolved: dict, out: str) -> None:
    _run_antidote_once(ExperimentConfig.from_dict(resolved), Path(out), False)


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    out = _out_dir(config)
    data, _ = load_configured_dataset(config)
    antidote = load_antidote_csv(args.antidote_path, data.item_ids, config.bounds())
    report = run_experiment(config, antidote_override=antidote)
    report.write(out)
    print(
        f"objective {report.objective_kind} ({report.direction}): "
        f"{report.objective_before:.6g} -> {report.objective_after:.6g} "
        f"[override, {report.n_antidote_rows} rows]"
    )
    print(f"wrote report to {out}")
    return 0


def main(argv=None) -> int:
    args = _parse_args(sys.argv[1:] if argv is None else argv)
    handlers = {
        "prepare": cmd_prepare,
        "validate": cmd_validate,
        "antidote": cmd_antidote,
        "evaluate": cmd_evaluate,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        _report_error(err)
        return 2
    except (DataError, OSError) as err:
        _report_error(err)
        return 3
    except NumericalError as err:
        _report_error(err)
        return 4
    except AntidoteRecError as err:
        _report_error(err)
        return 2


def _report_error(err: Exception) -> None:
    stage = getattr(err, "stage", None)
    prefix = f"[{stage}] " if stage else ""
    print(f"error: {prefix}{err}", file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
