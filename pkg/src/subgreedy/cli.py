"""Command-line front end.

Each command reads one INI section from ``--config``::

    subgreedy fit-density --config configs/fit_density.ini --out-dir out/fit
    subgreedy check-submodular --config configs/check_submodular.ini --out-dir out/check
    subgreedy train-ensemble --config configs/train_ensemble.ini --out-dir out/ens
    subgreedy eval --config configs/eval.ini --out-dir out/eval

Exit codes: 0 success, 1 submodularity violation, 2 bad configuration or
input, 3 output directory exists (use ``--force``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as data_mod
from .density_fit import FitConfig, GridSearch, LocalDescent, divergence_subset_objective, greedy_fit
from .divergence import FGenerator, Grid
from .ensemble import DiversityConfig, MlpEnsemble, ensemble_predict, train_greedy_ensemble
from .kde import mixture_on_grid
from .metrics import MetricReport, adaptive_calibration_error, write_reports_csv
from .nn import Schedule, TrainConfig
from .submodular import SubsetObjective, check_submodular, coverage_objective, modular_objective
from .uncertainty import epistemic_mi

logger = logging.getLogger("subgreedy")


class ConfigError(ValueError):
    pass


class CommandError(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- output


def _fmt(obj, indent: int = 0) -> str:
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_fmt(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{inner}{_fmt(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(obj, path) -> None:
    """JSON with every float written to 17 significant digits."""
    Path(path).write_text(_fmt(obj) + "\n")


# ---------------------------------------------------------------- config

_SCHEMAS: dict[str, dict[str, object]] = {
    "fit_density": {
        "means": "-6, 0, 6", "stds": "1, 1, 1", "weights": "", "grid_lower": "-10", "grid_upper": "10",
        "grid_points": "2001", "generator": "reverse_kl", "capacity_m": "3", "bandwidth": "1.0",
        "objective": "surrogate", "candidate_mode": "grid_search", "stride": "1", "steps": "50",
        "step_size": "0.1", "restarts": "5", "seed": "0",
    },
    "check_submodular": {
        "objective": "fdivergence", "generator": "reverse_kl", "means": "-2, 2", "stds": "0.7, 0.7",
        "weights": "", "grid_lower": "-10", "grid_upper": "10", "grid_points": "2001", "candidates": "",
        "n_candidates": "7", "candidate_low": "-4", "candidate_high": "4", "bandwidth": "2.0",
        "capacity_m": "3", "modular_weights": "1, 2, 3", "coverage_sets": "0 1; 1 2; 2 3 4",
        "ground_set_size": "5", "mode": "exhaustive", "trials": "1000", "tolerance": "1e-9", "seed": "0",
    },
    "train_ensemble": {
        "n_train": "300", "noise": "0.3", "data_seed": "0", "lambda_m": "0.0", "capacity_m": "11",
        "alpha": "5.0", "weighting_source": "gaussian_heuristic", "n_weighting_samples": "",
        "output_space": "probs", "learning_rate": "0.05", "momentum": "0.9", "weight_decay": "1e-4",
        "epochs": "100", "batch_size": "32", "hidden": "128", "schedule": "constant", "warmup_frac": "0.05",
        "anneal_start_frac": "0.5", "anneal_end_frac": "0.9", "final_scale": "0.01", "val_fraction": "0.0",
        "seed": "0",
    },
    "eval": {
        "ensemble_dir": "", "n_test": "1000", "noise": "0.3", "test_seed": "1000", "ood_kind": "uniform_noise",
        "n_ood": "1000", "ood_seed": "0", "ood_low": "", "ood_high": "", "box_stds": "6",
        "grid_resolution": "50", "ace_bins": "30", "seed": "0",
    },
}


def load_section(path, section: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown_sections = [s for s in parser.sections() if s not in _SCHEMAS]
    if unknown_sections:
        raise ConfigError(f"unknown section [{unknown_sections[0]}] in {path}")
    if section not in parser:
        raise ConfigError(f"config {path} has no [{section}] section")
    values = dict(_SCHEMAS[section])
    for key, value in parser[section].items():
        if key not in values:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        values[key] = value
    return values


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


class _Reader:
    """Typed access that names the offending key on failure."""

    def __init__(self, values: dict[str, str], section: str):
        self.values, self.section = values, section

    def _conv(self, key, fn):
        try:
            return fn(self.values[key].strip())
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid value for '{key}' in [{self.section}]: {self.values[key]!r}") from exc

    def int(self, key):
        return self._conv(key, int)

    def float(self, key):
        return self._conv(key, float)

    def str(self, key):
        return self.values[key].strip()

    def floats(self, key):
        return self._conv(key, _floats)

    def optional_int(self, key):
        return None if not self.values[key].strip() else self.int(key)

    def optional_float(self, key):
        return None if not self.values[key].strip() else self.float(key)

    def generator(self, key="generator"):
        return self._conv(key, FGenerator)


def _config_digest(values: dict[str, str]) -> str:
    return hashlib.sha256(json.dumps(values, sort_keys=True).encode()).hexdigest()


def _target_from(r: _Reader):
    means, stds = r.floats("means"), r.floats("stds")
    weights = r.floats("weights") or [1.0 / len(stds)] * len(stds)
    grid = Grid((r.float("grid_lower"),), (r.float("grid_upper"),), r.int("grid_points"))
    try:
        return data_mod.gaussian_mixture_target(means, stds, weights, grid)
    except ValueError as exc:
        raise ConfigError(f"invalid target in [{r.section}]: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_fit_density(values: dict[str, str], out_dir: Path, threads: int = 1) -> int:
    r = _Reader(values, "fit_density")
    target = _target_from(r)
    mode_name = r.str("candidate_mode")
    if mode_name == "grid_search":
        mode = GridSearch(r.int("stride"))
    elif mode_name == "local_descent":
        mode = LocalDescent(r.int("steps"), r.float("step_size"), r.int("restarts"))
    else:
        raise ConfigError(f"invalid value for 'candidate_mode' in [fit_density]: {mode_name!r}")
    try:
        cfg = FitConfig(r.generator(), r.int("capacity_m"), r.float("bandwidth"), r.str("objective"), mode,
                        r.int("seed"), threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mix, log = greedy_fit(target, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json({"capacity_m": mix.capacity_m,
               "kernels": [{"center": list(k.center), "bandwidth": k.bandwidth} for k in mix.kernels]},
              out_dir / "mixture.json")
    dump_json({"config_sha256": _config_digest(values), "seed": cfg.seed,
               "steps": [asdict(s) for s in log]}, out_dir / "steps.json")
    fit = mixture_on_grid(mix, target.grid)
    with open(out_dir / "fit.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z", "target", "fit"])
        for z, p, q in zip(target.grid.points()[:, 0], target.values.ravel(), fit.values.ravel()):
            writer.writerow([format(z, ".17g"), format(p, ".17g"), format(q, ".17g")])
    logger.info("fitted %d kernels; final divergence %.6g", len(mix), log[-1].divergence)
    return 0


def _submodular_objective(r: _Reader) -> SubsetObjective:
    kind = r.str("objective")
    if kind == "modular":
        return modular_objective(r.floats("modular_weights"))
    if kind == "coverage":
        sets = [set(int(v) for v in part.split()) for part in r.str("coverage_sets").split(";") if part.strip()]
        return coverage_objective(sets)
    if kind == "supermodular":
        # |S|^2 has increasing marginal gains
        return SubsetObjective(r.int("ground_set_size"), lambda s: float(len(s) ** 2), "size_squared")
    if kind == "fdivergence":
        target = _target_from(r)
        centers = r.floats("candidates")
        if not centers:
            rng = np.random.default_rng(r.int("seed"))
            centers = list(rng.uniform(r.float("candidate_low"), r.float("candidate_high"), r.int("n_candidates")))
        return divergence_subset_objective(target, np.array(centers)[:, None], r.float("bandwidth"),
                                           r.int("capacity_m"), r.generator())
    raise ConfigError(f"invalid value for 'objective' in [check_submodular]: {kind!r}")


def cmd_check_submodular(values: dict[str, str], out_dir: Path, threads: int = 1) -> int:
    r = _Reader(values, "check_submodular")
    obj = _submodular_objective(r)
    mode = r.str("mode")
    if mode not in ("exhaustive", "sampled"):
        raise ConfigError(f"invalid value for 'mode' in [check_submodular]: {mode!r}")
    report = check_submodular(obj, mode, r.int("trials"), r.int("seed"), r.float("tolerance"))
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"objective": obj.name, "ground_set_size": obj.ground_set_size, **report.to_dict()}
    if report.worst_violation == math.inf:
        payload["worst_violation"] = 0.0
    dump_json(payload, out_dir / "report.json")
    if not report.holds:
        logger.error("submodularity violated by %.3g at %s", report.worst_violation, report.witness)
        return 1
    return 0


def _train_configs(r: _Reader) -> tuple[TrainConfig, DiversityConfig]:
    try:
        schedule = Schedule(r.str("schedule"), r.float("warmup_frac"), r.float("anneal_start_frac"),
                            r.float("anneal_end_frac"), r.float("final_scale"))
        schedule.scale(0.0)
        train = TrainConfig(r.float("learning_rate"), r.float("momentum"), r.float("weight_decay"), r.int("epochs"),
                            r.int("batch_size"), r.int("seed"), r.int("hidden"), schedule, r.float("val_fraction"))
        div = DiversityConfig(r.float("lambda_m"), r.int("capacity_m"), r.float("alpha"), r.str("weighting_source"),
                              r.optional_int("n_weighting_samples"), r.str("output_space"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return train, div


def cmd_train_ensemble(values: dict[str, str], out_dir: Path, threads: int = 1, force: bool = False) -> int:
    r = _Reader(values, "train_ensemble")
    train_cfg, div_cfg = _train_configs(r)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise CommandError(f"output directory {out_dir} is not empty; pass --force to overwrite", 3)
    ds = data_mod.two_moons(r.int("n_train"), r.float("noise"), r.int("data_seed"))
    ens = train_greedy_ensemble(ds.features, ds.labels, train_cfg, div_cfg, train_cfg.seed)
    if out_dir.exists():
        for old in out_dir.glob("member_*.bin"):
            old.unlink()
    ens.save(out_dir, {
        "config": values,
        "config_sha256": _config_digest(values),
        "seed": train_cfg.seed,
        "member_seeds": [log.seed for log in ens.logs],
        "dataset": {"name": ds.name, "n": len(ds), "noise": r.float("noise"), "seed": r.int("data_seed")},
    })
    return 0


def cmd_eval(values: dict[str, str], out_dir: Path, threads: int = 1) -> int:
    r = _Reader(values, "eval")
    if not r.str("ensemble_dir"):
        raise ConfigError("missing value for 'ensemble_dir' in [eval]")
    n_ood = r.int("n_ood")
    if n_ood <= 0:
        raise CommandError("OOD set is empty (n_ood must be positive)", 2)
    try:
        ens = MlpEnsemble.load(r.str("ensemble_dir"))
    except (OSError, KeyError, ValueError) as exc:
        raise CommandError(f"cannot load ensemble from {r.str('ensemble_dir')}: {exc}", 2) from exc
    test = data_mod.two_moons(r.int("n_test"), r.float("noise"), r.int("test_seed"))
    mu, sd = test.features.mean(axis=0), test.features.std(axis=0)
    box = r.float("box_stds")
    low = r.optional_float("ood_low")
    high = r.optional_float("ood_high")
    kind = r.str("ood_kind")
    try:
        if low is None and high is None and kind in ("uniform_noise", "blobs"):
            # noise spread over the data box, mapped per dimension
            unit = data_mod.synthetic_ood(kind, n_ood, test.features.shape[1], r.int("ood_seed"))
            ood = mu - box * sd + unit * (2 * box * sd)
        else:
            ood = data_mod.synthetic_ood(kind, n_ood, test.features.shape[1], r.int("ood_seed"),
                                         0.0 if low is None else low, 1.0 if high is None else high)
    except ValueError as exc:
        raise ConfigError(f"invalid value for 'ood_kind' in [eval]: {exc}") from exc
    mean_id, stack_id = ensemble_predict(ens, test.features)
    _, stack_ood = ensemble_predict(ens, ood)
    mi_id, mi_ood = epistemic_mi(stack_id), epistemic_mi(stack_ood)
    conf = mean_id.max(axis=1)
    correct = mean_id.argmax(axis=1) == test.labels
    report = MetricReport.from_scores(kind, mi_id, mi_ood,
                                      ace=adaptive_calibration_error(conf, correct, r.int("ace_bins")),
                                      accuracy=float(correct.mean()))
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json({"config_sha256": _config_digest(values), "reports": [report.to_dict()]}, out_dir / "metrics.json")
    write_reports_csv([report], out_dir / "metrics.csv")
    bounds = [[m - box * s, m + box * s] for m, s in zip(mu, sd)]
    grid = data_mod.eval_grid(bounds, r.int("grid_resolution"))
    _, stack_grid = ensemble_predict(ens, grid)
    mi_grid = epistemic_mi(stack_grid)
    with open(out_dir / "uncertainty_grid.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "mi"])
        for (gx, gy), v in zip(grid, mi_grid):
            writer.writerow([format(gx, ".17g"), format(gy, ".17g"), format(v, ".17g")])
    return 0


_COMMANDS = {
    "fit-density": ("fit_density", cmd_fit_density),
    "check-submodular": ("check_submodular", cmd_check_submodular),
    "train-ensemble": ("train_ensemble", cmd_train_ensemble),
    "eval": ("eval", cmd_eval),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subgreedy", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI file with the command's section")
        p.add_argument("--seed", type=int, help="override the section's seed")
        p.add_argument("--out-dir", default="out", type=Path)
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for candidate scoring")
    return parser


def main(argv=None) -> int:
    level = logging.getLevelName(os.environ.get("SUBGREEDY_LOG", "WARNING").upper())
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(level if isinstance(level, int) else logging.WARNING)
    args = build_parser().parse_args(argv)
    section, fn = _COMMANDS[args.command]
    try:
        values = load_section(args.config, section)
        if args.seed is not None:
            values["seed"] = str(args.seed)
        kwargs = {"force": args.force} if args.command == "train-ensemble" else {}
        return fn(values, args.out_dir, max(1, args.threads), **kwargs)
    except ConfigError as exc:
        print(f"subgreedy: config error: {exc}", file=sys.stderr)
        return 2
    except CommandError as exc:
        print(f"subgreedy: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"subgreedy: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
