"""Command-line harness: seeded runs, baselines, gradient checks and reports.

Exit codes: 0 on success, 1 on a configuration error, 2 on a numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .apps import (CmacInstance, ThpInstance, capacity, cmac_initial, cmac_problem, cmac_solver,
                   dual_ellipsoid_baseline, sample_gains, saa_rates, short_term_constraint_baseline,
                   thp_initial, thp_problem, thp_solver, toy_initial, toy_problem, toy_solver)
from .config import ConfigError, canonical_text, config_hash, load_config, solver_config
from .convex import ProjectionError
from .core import ConvergenceError, LongTermIterate, ProblemError, kkt_report
from .longterm import TraceRecord, evaluate_batch, run
from .shortterm import cmac_short_term

log = logging.getLogger("pddssca")

NUMERICAL_ERRORS = (ConvergenceError, ProjectionError, FloatingPointError, np.linalg.LinAlgError)


class Experiment:
    """A configured application: problem, solver, start point and extras."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.name = cfg["experiment"]
        self.pool = None
        self.inst = None
        try:
            if self.name == "cmac":
                self.inst = CmacInstance(N=cfg["cmac.N"], gamma=cfg["cmac.gamma"],
                                         power_db=cfg["cmac.power_db"], p_max=cfg["cmac.p_max"],
                                         gain_law=cfg["cmac.gain_law"], gain_mean=cfg["cmac.gain_mean"])
                if cfg["cmac.pool_size"] < 1:
                    raise ProblemError("cmac.pool_size must be positive")
                self.pool = sample_gains(np.random.default_rng(cfg["cmac.pool_seed"]), cfg["cmac.pool_size"],
                                         self.inst.N, self.inst.gain_law, self.inst.gain_mean)
                self.problem = cmac_problem(self.inst, pool=self.pool)
                self.spec = cmac_solver(self.problem, self.inst)
                self.x0, self.lam0 = cmac_initial(self.inst)
            elif self.name == "thp":
                self.inst = ThpInstance(M=cfg["thp.M"], S=cfg["thp.S"], K=cfg["thp.K"], paths=cfg["thp.paths"],
                                        gamma=cfg["thp.gamma"], g_bound=cfg["thp.g_bound"])
                if cfg["thp.J"] < 1 or cfg["thp.eval_size"] < 1:
                    raise ProblemError("thp.J and thp.eval_size must be positive")
                self.problem = thp_problem(self.inst)
                self.spec = thp_solver(self.problem, self.inst, J=cfg["thp.J"])
                start = np.random.default_rng(np.random.SeedSequence(cfg["solver.seed"], spawn_key=(4,)))
                self.x0, self.lam0 = thp_initial(self.inst, start)
            else:
                self.problem = toy_problem(cfg["toy.constrained"], cfg["toy.noise"])
                self.spec = toy_solver(self.problem)
                self.x0, self.lam0 = toy_initial(self.problem)
        except ProblemError as exc:
            raise ConfigError(str(exc)) from None

    def summary(self, x, lam) -> dict:
        """Experiment-specific figures of merit at ``(x, lam)``."""
        if self.name == "cmac":
            a, b = self.pool[:, 0, :], self.pool[:, 1, :]
            p = cmac_short_term(lam[:self.inst.N], lam[self.inst.N], a, b, self.inst.p_max)
            viol = np.append(p.mean(axis=0) - self.inst.power, np.mean(np.sum(b * p, axis=1)) - self.inst.gamma)
            return {"pool_capacity": float(capacity(a, p).mean()),
                    "pool_max_violation": float(max(0.0, viol.max()))}
        if self.name == "thp":
            rng = np.random.default_rng(np.random.SeedSequence(self.cfg["solver.seed"], spawn_key=(5,)))
            channels = self.problem.sample(rng, self.cfg["thp.eval_size"])
            r = saa_rates(self.inst, x, lam, channels, self.spec)
            return {"heldout_rates": [float(v) for v in r],
                    "heldout_max_shortfall": float(np.max(self.inst.gamma - r))}
        return {}


def _header(cfg: dict) -> list[str]:
    return [f"# pddssca {__version__}", f"# config_hash {config_hash(cfg)}", f"# seed {cfg['solver.seed']}"]


def write_trace(path: Path, trace, cfg: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TraceRecord.COLUMNS)
        for rec in trace:
            writer.writerow([rec.iter, repr(rec.rho), repr(rec.gamma), repr(rec.objective),
                             repr(rec.max_constraint), rec.mode, repr(rec.millis)])


def read_trace(path) -> tuple[list[str], list[dict]]:
    """Provenance lines and rows of a trace file."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))
    return header, rows


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(cfg: dict, out: Path) -> int:
    exp = Experiment(cfg)
    sc = solver_config(cfg)
    result = run(exp.problem, exp.spec, sc, exp.x0, exp.lam0)
    out.mkdir(parents=True, exist_ok=True)
    if cfg["output.emit_plot_data"]:
        write_trace(out / "trace.csv", result.trace, cfg)
    it = result.iterate
    payload = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "config": canonical_text(cfg),
        "experiment": exp.name,
        "seed": cfg["solver.seed"],
        "iterations": len(result.trace),
        "stop_reason": result.stop_reason,
        "x": [float(v) for v in it.x],
        "lam": [float(v) for v in it.lam],
        "t": it.t,
        "objective": float(exp.problem.objective_sign * result.saa_f[0]),
        "saa_f": [float(v) for v in result.saa_f],
        "slater_margin": result.slater_margin,
        "lambda_at_cap": result.lambda_at_cap,
        "infeasible_trajectory": result.infeasible_trajectory,
        "kkt": result.report.as_dict() if result.report is not None else None,
        "summary": exp.summary(it.x, it.lam),
    }
    _write_json(out / "final.json", payload)
    print(f"{exp.name}: {len(result.trace)} iterations ({result.stop_reason}), "
          f"objective {payload['objective']:.6g}, max constraint {float(np.max(result.saa_f[1:], initial=-np.inf)):.3g}")
    for key, value in payload["summary"].items():
        print(f"  {key}: {value}")
    return 0


def cmd_check_gradients(cfg: dict, experiment_given: bool) -> int:
    from .diagnostics import gradient_suite

    names = ("thp", "cmac")
    if experiment_given:
        if cfg["experiment"] == "toy":
            raise ConfigError("check-gradients supports the cmac and thp experiments")
        names = (cfg["experiment"],)
    errors = gradient_suite(names, seed=cfg["solver.seed"])
    worst = 0.0
    for name, err in errors.items():
        print(f"{name}: max relative error {err:.3e}")
        worst = max(worst, err)
    if worst > 1e-5:
        print("gradient check failed (tolerance 1e-5)", file=sys.stderr)
        return 2
    return 0


def cmd_baseline(cfg: dict, out: Path) -> int:
    if cfg["experiment"] != "cmac":
        raise ConfigError("baselines exist for the cmac experiment only")
    exp = Experiment(cfg)
    rows = []
    if cfg["baseline.ellipsoid"]:
        ell = dual_ellipsoid_baseline(exp.inst, exp.pool, volume_tol=cfg["baseline.volume_tol"])
        rows.append(("dual_ellipsoid", ell.capacity, ell.max_violation, ell.iterations))
    if cfg["baseline.short_term"]:
        cap, _ = short_term_constraint_baseline(exp.inst, exp.pool)
        rows.append(("short_term_constraints", cap, 0.0, 1))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "baselines.csv", "w", newline="", encoding="utf-8") as fh:
        for line in _header(cfg):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("method", "capacity", "max_violation", "iterations"))
        for name, cap, viol, iters in rows:
            writer.writerow((name, repr(float(cap)), repr(float(viol)), iters))
            print(f"{name}: capacity {cap:.6f}, max violation {viol:.3g}")
    return 0


def cmd_report(cfg: dict, out: Path) -> int:
    path = out / "final.json"
    try:
        with open(path, encoding="utf-8") as fh:
            saved = json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if saved.get("experiment") != cfg["experiment"]:
        raise ConfigError(f"{path} holds a {saved.get('experiment')!r} run; pass --experiment accordingly")
    exp = Experiment(cfg)
    iterate = LongTermIterate(np.array(saved["x"], dtype=float), np.array(saved["lam"], dtype=float),
                              int(saved.get("t", 0)))
    try:
        iterate.check(exp.problem)
    except ProblemError as exc:
        raise ConfigError(f"saved iterate does not fit the configured problem: {exc}") from None
    rng = np.random.default_rng(np.random.SeedSequence(cfg["solver.seed"], spawn_key=(2,)))
    states = exp.problem.sample(rng, cfg["solver.report_batch"])
    batch = evaluate_batch(exp.problem, exp.spec, iterate.x, iterate.lam, states)
    saa = batch.values.mean(axis=0)
    report = kkt_report(exp.problem, iterate, list(zip(batch.results, states)), saa,
                        expect_multipliers=exp.spec.layer.provides_multipliers)
    payload = {"source": str(path), "batch": len(states), "saa_f": [float(v) for v in saa],
               "kkt": report.as_dict()}
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", payload)
    for key, value in report.as_dict().items():
        print(f"{key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pddssca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "run the outer loop and write trace.csv and final.json",
        "check-gradients": "compare unrolled gradients with finite differences",
        "baseline": "run the reference methods of the multiple-access example",
        "report": "recompute the KKT report of a saved run on a fresh batch",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--experiment", choices=("cmac", "thp", "toy"))
        p.add_argument("--config", help="flat 'section.key = value' config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (default: output.dir)")
        p.add_argument("--workers", type=int, help="worker threads (default: logical processors)")
        p.add_argument("--max-iters", type=int, dest="max_iters", help="override solver.T_max")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.experiment is not None:
        overrides["experiment"] = args.experiment
    if args.seed is not None:
        overrides["solver.seed"] = args.seed
    if args.max_iters is not None:
        overrides["solver.T_max"] = args.max_iters
    overrides["solver.workers"] = args.workers if args.workers is not None else (os.cpu_count() or 1)
    if args.out is not None:
        overrides["output.dir"] = args.out
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg["output.dir"])
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "check-gradients":
            return cmd_check_gradients(cfg, args.experiment is not None)
        if args.command == "baseline":
            return cmd_baseline(cfg, out)
        return cmd_report(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ProblemError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
