"""Command line front end: run experiments, verify claims, emit reports.

Commands
    byzsim run <config.json>        one experiment or an attack x defense grid
    byzsim verify <which> [flags]   numeric claim verifiers, pass/fail table
    byzsim signtrace <config.json>  per-round sign-statistics CSV
    byzsim list                     available attacks/defenses/models

The config file is a single JSON object with optional sections
{experiment, attack, defense, dataset, output}; unknown keys anywhere
are errors naming the offending section. The attack and defense
sections each take one object or a list of objects; a list on either
axis turns the run into a grid over the cross product.

Every run writes into a fresh hash-named directory below output.dir:
    manifest.json   config hash, seed, version, timestamps, file list
    rounds.csv      one row per round (ROUNDS_HEADER schema)
    summary.json    best/final accuracy, attack impact, selected rates
    signtrace.csv   per-round sign statistics (SIGNTRACE_HEADER schema)
    *.png           accuracy/selection/signtrace figures unless disabled

rounds.csv and summary.json are byte-identical across reruns with the
same config and seed; wall-clock timestamps appear only in
manifest.json. The BYZSIM_SEED environment variable overrides the
experiment seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import MISSING, asdict, fields
from datetime import datetime, timezone

import numpy as np

from . import __version__, analysis
from .aggregators import DEFENSE_KINDS, DefenseSpec
from .analysis import (
    sign_flip_threshold_check,
    sign_trace,
    theorem1_constants,
    verify_lemma1,
    verify_prop1,
)
from .attacks import ATTACK_KINDS, AttackContext, AttackSpec
from .datasets import make_synthetic_dataset
from .signguard import SignGuardConfig
from .simulation import (
    MODEL_KINDS,
    ExperimentConfig,
    ModelSpec,
    run_experiment,
)

SECTIONS = ("experiment", "attack", "defense", "dataset", "output")
DATASET_KEYS = ("d", "n_samples", "n_classes", "margin", "seed", "scale",
                "noise_scale")
OUTPUT_KEYS = ("dir", "figures")
DATASET_DEFAULTS = {"d": 20, "n_samples": 500, "n_classes": 2,
                    "margin": 6.0, "seed": 11, "scale": 0.05}

# frozen column schemas; downstream plotting parses these, never logs
ROUNDS_HEADER = ("round", "attack", "train_loss", "test_accuracy",
                 "global_grad_norm", "full_grad_norm",
                 "honest_selected_rate", "malicious_selected_rate",
                 "n_trusted", "fallback")
SIGNTRACE_HEADER = ("round", "honest_pos", "honest_neg", "honest_zero",
                    "mal_pos", "mal_neg", "mal_zero")

SEED_ENV_VAR = "BYZSIM_SEED"


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration loading


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column "
            f"{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(
            f"{path}: unknown sections {sorted(unknown)}; expected a "
            f"subset of {list(SECTIONS)}")
    return raw


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a JSON object")
    return value


def _spec_list(raw: dict, name: str, builder):
    """One spec object or a list of them; lists open a grid axis."""
    value = raw.get(name, {})
    entries = value if isinstance(value, list) else [value]
    if not entries:
        raise ConfigError(f"section '{name}' must not be an empty list")
    specs = []
    for i, entry in enumerate(entries):
        where = f"{name}[{i}]" if isinstance(value, list) else name
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: must be a JSON object")
        try:
            specs.append(builder(entry))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return tuple(specs)


class RunPlan:
    """A loaded config resolved into datasets, specs, and output policy."""

    def __init__(self, raw: dict):
        dataset_args = dict(DATASET_DEFAULTS)
        ds_section = _section(raw, "dataset")
        unknown = set(ds_section) - set(DATASET_KEYS)
        if unknown:
            raise ConfigError(f"dataset: unknown keys {sorted(unknown)}")
        dataset_args.update(ds_section)

        out = _section(raw, "output")
        unknown = set(out) - set(OUTPUT_KEYS)
        if unknown:
            raise ConfigError(f"output: unknown keys {sorted(unknown)}")
        self.out_dir = out.get("dir", "runs")
        self.figures = bool(out.get("figures", True))

        self.experiment = dict(_section(raw, "experiment"))
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed:
            try:
                self.experiment["seed"] = int(env_seed)
            except ValueError:
                raise ConfigError(
                    f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")

        self.attacks = _spec_list(raw, "attack", AttackSpec.from_dict)
        self.defenses = _spec_list(raw, "defense", DefenseSpec.from_dict)
        self.dataset_args = dataset_args

        try:
            self.dataset = make_synthetic_dataset(**dataset_args)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"dataset: {exc}") from exc
        # validate experiment keys and scalars once, up front
        self.base_config = self.cell_config(self.attacks[0],
                                            self.defenses[0])

        resolved = {
            "dataset": dataset_args,
            "experiment": self.experiment,
            "attack": [asdict(a) for a in self.attacks],
            "defense": [asdict(d) for d in self.defenses],
        }
        canonical = json.dumps(resolved, sort_keys=True,
                               separators=(",", ":"))
        self.resolved = resolved
        self.config_hash = hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def grid(self) -> bool:
        return len(self.attacks) > 1 or len(self.defenses) > 1

    @property
    def seed(self) -> int:
        return self.base_config.seed

    def cell_config(self, attack: AttackSpec,
                    defense: DefenseSpec) -> ExperimentConfig:
        try:
            return ExperimentConfig.from_dict(
                self.experiment, self.dataset, attack=attack,
                defense=defense)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"experiment: {exc}") from exc

    def cells(self):
        for attack in self.attacks:
            for defense in self.defenses:
                yield attack, defense


# ---------------------------------------------------------------------------
# output plumbing


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fresh_dir(base: str, name: str) -> str:
    """Never reuse a directory: suffix a counter when the name exists."""
    candidate = os.path.join(base, name)
    counter = 1
    while True:
        try:
            os.makedirs(candidate)
            return candidate
        except FileExistsError:
            counter += 1
            candidate = os.path.join(base, f"{name}-{counter}")


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj) -> None:
    _write_atomic(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _field(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_field(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def rounds_csv(reports) -> str:
    rows = [(r.round_index, r.attack_kind, r.train_loss, r.test_accuracy,
             r.global_grad_norm, r.full_grad_norm, r.honest_selected_rate,
             r.malicious_selected_rate, len(r.trusted), r.fallback)
            for r in reports]
    return _csv_text(ROUNDS_HEADER, rows)


def signtrace_csv(rows) -> str:
    records = []
    for row in rows:
        mal = row.malicious
        records.append((
            row.round_index,
            row.honest.pos_frac, row.honest.neg_frac, row.honest.zero_frac,
            None if mal is None else mal.pos_frac,
            None if mal is None else mal.neg_frac,
            None if mal is None else mal.zero_frac,
        ))
    return _csv_text(SIGNTRACE_HEADER, records)


def summarize(result) -> dict:
    reports = result.reports
    n_rounds = len(reports)
    return {
        "attack": result.config.attack.kind,
        "defense": result.config.defense.kind,
        "rounds": n_rounds,
        "seed": result.config.seed,
        "n_clients": result.config.n_clients,
        "byz_count": result.config.byz_count,
        "best_accuracy": result.best_accuracy,
        "final_accuracy": result.final_accuracy,
        "baseline_accuracy": result.baseline_accuracy,
        "attack_impact": result.attack_impact,
        "honest_selected_rate_mean": sum(
            r.honest_selected_rate for r in reports) / n_rounds,
        "malicious_selected_rate_mean": sum(
            r.malicious_selected_rate for r in reports) / n_rounds,
        "fallback_rounds": sum(1 for r in reports if r.fallback),
    }


def _write_cell_outputs(result, cell_dir: str, figures: bool) -> list:
    """Emit the per-run file set; returns the file names written."""
    trace = sign_trace(result.reports)
    _write_atomic(os.path.join(cell_dir, "rounds.csv"),
                  rounds_csv(result.reports))
    _write_json(os.path.join(cell_dir, "summary.json"), summarize(result))
    _write_atomic(os.path.join(cell_dir, "signtrace.csv"),
                  signtrace_csv(trace))
    written = ["rounds.csv", "summary.json", "signtrace.csv"]
    if figures:
        from . import figures as figmod

        label = (f"{result.config.attack.kind} vs "
                 f"{result.config.defense.kind}")
        figmod.save_accuracy_figure(
            result.reports, os.path.join(cell_dir, "accuracy.png"),
            baseline=result.baseline_accuracy,
            title=f"Test accuracy ({label})")
        figmod.save_selection_figure(
            result.reports, os.path.join(cell_dir, "selection.png"),
            title=f"Selection rates ({label})")
        figmod.save_signtrace_figure(
            trace, os.path.join(cell_dir, "signtrace.png"),
            title=f"Sign statistics ({label})")
        written += ["accuracy.png", "selection.png", "signtrace.png"]
    return written


def _manifest(plan: RunPlan, started: str, outputs: list) -> dict:
    return {
        "config_hash": plan.config_hash,
        "seed": plan.seed,
        "version": f"{__version__}+g{plan.config_hash[:12]}",
        "started": started,
        "finished": _utc_now(),
        "outputs": sorted(outputs),
        "config": plan.resolved,
    }


# ---------------------------------------------------------------------------
# run / signtrace commands


def cmd_run(args) -> int:
    plan = RunPlan(load_config(args.config))
    figures = plan.figures and not args.no_figures
    started = _utc_now()
    run_name = ("grid-" if plan.grid else "run-") + plan.config_hash[:12]
    run_dir = _fresh_dir(plan.out_dir, run_name)

    # one shared baseline: the same seed and loop with no attack and
    # plain mean aggregation
    baseline_cfg = plan.cell_config(AttackSpec(kind="none"),
                                    DefenseSpec(kind="mean"))
    baseline = run_experiment(baseline_cfg,
                              compute_baseline=False).best_accuracy

    cells = list(plan.cells())
    names = [f"{i:02d}-{a.kind}--{d.kind}" if plan.grid else "."
             for i, (a, d) in enumerate(cells)]

    def run_cell(index: int) -> dict:
        attack, defense = cells[index]
        entry = {"attack": attack.kind, "defense": defense.kind,
                 "dir": names[index]}
        cell_dir = run_dir if names[index] == "." \
            else os.path.join(run_dir, names[index])
        os.makedirs(cell_dir, exist_ok=True)
        try:
            cfg = plan.cell_config(attack, defense)
            result = run_experiment(cfg, baseline_accuracy=baseline)
            files = _write_cell_outputs(result, cell_dir, figures)
            summary = summarize(result)
        except Exception as exc:  # cell failures must not kill the grid
            entry.update(status="error", error=str(exc))
            return entry
        entry.update(status="ok", files=files)
        for key in ("best_accuracy", "final_accuracy", "attack_impact",
                    "honest_selected_rate_mean",
                    "malicious_selected_rate_mean"):
            entry[key] = summary[key]
        return entry

    workers = min(len(cells), os.cpu_count() or 1, 4)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        entries = list(pool.map(run_cell, range(len(cells))))

    outputs = []
    for entry in entries:
        prefix = "" if entry["dir"] == "." else entry["dir"] + "/"
        outputs.extend(prefix + f for f in entry.pop("files", []))

    failures = [e for e in entries if e["status"] != "ok"]
    if plan.grid:
        grid_summary = {"baseline_accuracy": baseline, "cells": entries}
        _write_json(os.path.join(run_dir, "summary.json"), grid_summary)
        outputs.append("summary.json")
        if figures and len(entries) > len(failures):
            from . import figures as figmod

            ok_cells = [e for e in entries if e["status"] == "ok"]
            figmod.save_impact_figure(
                ok_cells, os.path.join(run_dir, "impact.png"))
            outputs.append("impact.png")

    _write_json(os.path.join(run_dir, "manifest.json"),
                _manifest(plan, started, outputs + ["manifest.json"]))

    for entry in entries:
        status = entry["status"]
        if status == "ok":
            print(f"{entry['attack']} x {entry['defense']}: "
                  f"best={entry['best_accuracy']:.4f} "
                  f"impact={entry['attack_impact']:+.4f}")
        else:
            print(f"{entry['attack']} x {entry['defense']}: "
                  f"error: {entry['error']}")
    print(f"wrote {run_dir}")
    return 1 if failures else 0


def cmd_signtrace(args) -> int:
    plan = RunPlan(load_config(args.config))
    if plan.grid:
        raise ConfigError(
            "signtrace needs a single attack and defense, not a grid")
    figures = plan.figures and not args.no_figures
    started = _utc_now()
    run_dir = _fresh_dir(plan.out_dir,
                         "signtrace-" + plan.config_hash[:12])

    result = run_experiment(plan.base_config, compute_baseline=False)
    trace = sign_trace(result.reports)
    _write_atomic(os.path.join(run_dir, "signtrace.csv"),
                  signtrace_csv(trace))
    outputs = ["signtrace.csv"]
    if figures:
        from . import figures as figmod

        figmod.save_signtrace_figure(
            trace, os.path.join(run_dir, "signtrace.png"))
        outputs.append("signtrace.png")
    _write_json(os.path.join(run_dir, "manifest.json"),
                _manifest(plan, started, outputs + ["manifest.json"]))
    print(f"wrote {os.path.join(run_dir, 'signtrace.csv')}")
    return 0


# ---------------------------------------------------------------------------
# verify command


def _print_table(title: str, rows) -> int:
    """Rows are (label, value, ok) with ok None for informational rows.

    Returns the number of failed rows after printing the table.
    """
    label_w = max(len(r[0]) for r in rows)
    value_w = max(len(r[1]) for r in rows)
    print(title)
    failures = 0
    for label, value, ok in rows:
        if ok is None:
            status = "-"
        elif ok:
            status = "PASS"
        else:
            status = "FAIL"
            failures += 1
        print(f"  {label:<{label_w}}  {value:<{value_w}}  {status}")
    print("all checks passed" if failures == 0
          else f"{failures} check(s) failed")
    return failures


def verify_prop1_cmd(args) -> int:
    rng = np.random.default_rng(
        np.random.SeedSequence([args.seed & 0xFFFFFFFF, 16]))
    honest = args.mu + args.sigma * rng.standard_normal(
        (args.n - args.m, args.d))
    ctx = AttackContext(honest=honest, n=args.n, m=args.m)
    report = verify_prop1(ctx, z=args.z, trials=args.trials,
                          seed=args.seed)
    rows = [
        ("some honest gradient farther from average",
         str(report.exists_closer), report.exists_closer),
        ("some honest gradient less aligned",
         str(report.exists_less_similar), report.exists_less_similar),
        ("farther-exists trial fraction",
         f"{report.closer_fraction:.3f} >= 0.95",
         report.closer_fraction >= 0.95),
        ("less-aligned-exists trial fraction",
         f"{report.less_similar_fraction:.3f} >= 0.95",
         report.less_similar_fraction >= 0.95),
        ("attacker-frame identity rel error",
         f"{report.identity_max_rel_err:.3e} <= 1e-10",
         report.identity_max_rel_err <= 1e-10),
        ("mean sq distance within bound (10% slack)",
         f"{report.dist_malicious:.4f} <= {1.1 * report.bound_dist:.4f}",
         report.dist_malicious <= 1.1 * report.bound_dist),
        ("norm-ratio cosine condition violations",
         str(report.xi_condition_violations),
         report.xi_condition_violations == 0),
        ("crafted norm ratio", f"{report.xi_m:.4f}", None),
    ]
    return 1 if _print_table(
        f"crafted-gradient proximity (z={args.z}, n={args.n}, "
        f"m={args.m}, {args.trials} trials)", rows) else 0


def verify_thresholds_cmd(args) -> int:
    check = sign_flip_threshold_check(args.mu, args.sigma, args.z,
                                      n=args.n, m=args.m)
    expected_mean = args.mu - args.z * (args.m / args.n) * args.sigma
    rows = [
        ("median flips (z > mu/sigma)", str(check.median_flips), None),
        ("mean flips (z > n*mu/(m*sigma))", str(check.mean_flips), None),
        ("median instance confirms verdict",
         f"median={check.median_aggregate:.6g}", check.median_confirmed),
        ("mean instance confirms verdict",
         f"mean={check.mean_aggregate:.6g}", check.mean_confirmed),
        ("mean matches mu - z*(m/n)*sigma",
         f"|{check.mean_aggregate:.6g} - {expected_mean:.6g}| <= 1e-12",
         abs(check.mean_aggregate - expected_mean) <= 1e-12),
    ]
    return 1 if _print_table(
        f"sign-flip thresholds (mu={args.mu}, sigma={args.sigma}, "
        f"z={args.z}, n={args.n}, m={args.m})", rows) else 0


LEMMA1_SWEEP_BETAS = (0.0, 0.1, 0.2, 0.4)


def verify_lemma1_cmd(args) -> int:
    single = any(v is not None for v in
                 (args.n, args.beta, args.sigma, args.kappa, args.subset))
    cells = []
    if single:
        cells.append(dict(
            n=args.n if args.n is not None else 50,
            beta=args.beta if args.beta is not None else 0.2,
            sigma=args.sigma if args.sigma is not None else 1.0,
            kappa=args.kappa if args.kappa is not None else 1.0,
            subset=args.subset if args.subset is not None else "random",
        ))
    else:
        for beta in LEMMA1_SWEEP_BETAS:
            for sigma in (0.0, 1.0):
                for kappa in (0.0, 1.0):
                    cells.append(dict(n=50, beta=beta, sigma=sigma,
                                      kappa=kappa, subset="random"))
        for beta in (0.2, 0.4):
            cells.append(dict(n=10, beta=beta, sigma=1.0, kappa=1.0,
                              subset="adversarial"))
    rows = []
    for cell in cells:
        report = verify_lemma1(trials=args.trials, seed=args.seed,
                               d=args.d, **cell)
        label = (f"n={cell['n']} beta={cell['beta']} "
                 f"sigma={cell['sigma']} kappa={cell['kappa']} "
                 f"{cell['subset']}")
        rows.append((label,
                     f"dev={report.empirical_dev:.5f} <= "
                     f"bound={report.bound:.5f}",
                     report.empirical_dev <= report.bound + 1e-12))
    return 1 if _print_table(
        f"benign-subset drift vs bound ({args.trials} trials each)",
        rows) else 0


def verify_theorem1_cmd(args) -> int:
    tc = theorem1_constants(
        c=args.c, b=args.b, delta=args.delta, beta=args.beta,
        sigma=args.sigma, kappa=args.kappa, n=args.n,
        smoothness=args.smoothness, learning_rate=args.learning_rate)
    special = theorem1_constants(c=args.c, sigma=args.sigma,
                                 kappa=args.kappa, n=args.n)
    special_ok = (special.delta2 == 0.0
                  and special.delta1 == 2.0 * args.sigma ** 2 / args.n)

    bumps = dict(c=args.c + 0.5, b=args.b + 0.5,
                 delta=args.delta + 0.5 * (args.beta - args.delta),
                 beta=args.beta + 0.5 * (0.499 - args.beta),
                 sigma=args.sigma + 0.5, kappa=args.kappa + 0.5)
    base = dict(c=args.c, b=args.b, delta=args.delta, beta=args.beta,
                sigma=args.sigma, kappa=args.kappa, n=args.n)
    monotone = True
    for key, value in bumps.items():
        bumped = theorem1_constants(**{**base, key: value})
        monotone &= (bumped.delta1 >= tc.delta1 - 1e-12
                     and bumped.delta2 >= tc.delta2 - 1e-12)

    rows = [
        ("delta1 (rate term)", f"{tc.delta1:.6g}", None),
        ("delta2 (irreducible floor)", f"{tc.delta2:.6g}", None),
        ("clean case: delta2 = 0, delta1 = 2*sigma^2/n",
         f"delta2={special.delta2:.6g} "
         f"delta1={special.delta1:.6g}", special_ok),
        ("error terms monotone in each constant", str(monotone),
         monotone),
    ]
    if tc.max_learning_rate is not None:
        rows.append(("learning-rate ceiling",
                     f"{tc.max_learning_rate:.6g}", None))
    if tc.learning_rate_ok is not None:
        rows.append((
            "learning rate within ceiling",
            f"{args.learning_rate:.6g} <= {tc.max_learning_rate:.6g}",
            tc.learning_rate_ok))
    return 1 if _print_table(
        f"convergence constants (beta={args.beta}, delta={args.delta}, "
        f"n={args.n})", rows) else 0


# ---------------------------------------------------------------------------
# list command


def _schema_lines(spec_cls, skip=()) -> list:
    lines = []
    for field in fields(spec_cls):
        if field.name in skip:
            continue
        if field.default is not MISSING:
            default = field.default
        elif field.default_factory is not MISSING:
            default = field.default_factory()
        else:
            default = "(required)"
        lines.append(f"    {field.name} = {default!r}")
    return lines


def cmd_list(_args) -> int:
    print("attacks (config section: attack)")
    print("  kinds: " + ", ".join(ATTACK_KINDS))
    print("\n".join(_schema_lines(AttackSpec, skip=("kind",))))
    print("defenses (config section: defense)")
    print("  kinds: " + ", ".join(DEFENSE_KINDS))
    print("\n".join(_schema_lines(DefenseSpec, skip=("kind", "signguard"))))
    print("  signguard tuning keys (same section):")
    print("\n".join(_schema_lines(SignGuardConfig, skip=("variant",))))
    print("models (config key: experiment.model)")
    print("  kinds: " + ", ".join(MODEL_KINDS))
    print("\n".join(_schema_lines(ModelSpec, skip=("kind",))))
    print("experiment keys")
    print("\n".join(_schema_lines(
        ExperimentConfig,
        skip=("dataset", "attack", "defense", "model",
              "time_varying_attacks"))))
    print("dataset keys (synthetic blobs)")
    print("\n".join(f"    {k} = {v!r}" for k, v in
                    DATASET_DEFAULTS.items()))
    print("    noise_scale = None")
    print("output keys")
    print("    dir = 'runs'")
    print("    figures = True")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="byzsim",
        description="Byzantine-robust aggregation simulator")
    parser.add_argument("--version", action="version",
                        version=f"byzsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment or a grid")
    run.add_argument("config", help="JSON config file")
    run.add_argument("--no-figures", action="store_true",
                     help="skip PNG rendering")
    run.set_defaults(func=cmd_run)

    trace = sub.add_parser("signtrace",
                           help="emit per-round sign statistics CSV")
    trace.add_argument("config", help="JSON config file")
    trace.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
    trace.set_defaults(func=cmd_signtrace)

    verify = sub.add_parser("verify", help="run a claim verifier")
    which = verify.add_subparsers(dest="which", required=True)

    prop1 = which.add_parser("prop1",
                             help="crafted-gradient proximity claims")
    prop1.add_argument("--n", type=int, default=50)
    prop1.add_argument("--m", type=int, default=10)
    prop1.add_argument("--d", type=int, default=100)
    prop1.add_argument("--mu", type=float, default=1.0)
    prop1.add_argument("--sigma", type=float, default=0.5)
    prop1.add_argument("--z", type=float, default=0.1)
    prop1.add_argument("--trials", type=int, default=100)
    prop1.add_argument("--seed", type=int, default=0)
    prop1.set_defaults(func=verify_prop1_cmd)

    thresholds = which.add_parser("thresholds",
                                  help="median/mean sign-flip thresholds")
    thresholds.add_argument("--mu", type=float, default=1.0)
    thresholds.add_argument("--sigma", type=float, default=2.0)
    thresholds.add_argument("--z", type=float, default=0.6)
    thresholds.add_argument("--n", type=int, default=50)
    thresholds.add_argument("--m", type=int, default=10)
    thresholds.set_defaults(func=verify_thresholds_cmd)

    lemma1 = which.add_parser("lemma1",
                              help="benign-subset drift bound")
    lemma1.add_argument("--n", type=int, default=None)
    lemma1.add_argument("--beta", type=float, default=None)
    lemma1.add_argument("--sigma", type=float, default=None)
    lemma1.add_argument("--kappa", type=float, default=None)
    lemma1.add_argument("--subset", choices=analysis.SUBSET_MODES,
                        default=None)
    lemma1.add_argument("--trials", type=int, default=1000)
    lemma1.add_argument("--seed", type=int, default=0)
    lemma1.add_argument("--d", type=int, default=10)
    lemma1.set_defaults(func=verify_lemma1_cmd)

    theorem1 = which.add_parser("theorem1",
                                help="convergence-rate constants")
    theorem1.add_argument("--c", type=float, default=1.0)
    theorem1.add_argument("--b", type=float, default=0.1)
    theorem1.add_argument("--delta", type=float, default=0.01)
    theorem1.add_argument("--beta", type=float, default=0.2)
    theorem1.add_argument("--sigma", type=float, default=1.0)
    theorem1.add_argument("--kappa", type=float, default=1.0)
    theorem1.add_argument("--n", type=int, default=50)
    theorem1.add_argument("--smoothness", type=float, default=None)
    theorem1.add_argument("--learning-rate", dest="learning_rate",
                          type=float, default=None)
    theorem1.set_defaults(func=verify_theorem1_cmd)

    lister = sub.add_parser(
        "list", help="available attacks, defenses, models, and schemas")
    lister.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
