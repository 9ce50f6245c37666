"""Command-line experiment runner.

Subcommands:
    validate        feasibility report for a config (assumption checks)
    run             execute one experiment, write the metrics CSV, print a summary
    sweep           rerun a config across values of one parameter
    tightness-demo  the half-attacked quadratic construction at the exact
                    feasibility boundary rho = 1/(1+kappa) = 1/2

Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 I/O failure.
Results depend only on the config and seed; `--threads` parallelizes sweep
runs and never changes any output byte.
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import engine, metrics, topology
from .attacks import AttackSpec
from .config import (
    ExperimentConfig,
    ResolvedExperiment,
    blocking_failures,
    resolve,
    validate_config,
)
from .errors import ConfigError, InvalidStateError, NotFittableError, NumericalFailure
from .problems import ScalarQuadraticProblem
from .schedules import OPTIMAL_TAU_ALPHA, OPTIMAL_TAU_GAMMA, ScheduleSet


def execute_run(resolved: ResolvedExperiment, out_path: str) -> dict:
    """Run a resolved experiment, streaming rows to the output CSV."""
    cfg = resolved.config
    evaluator = metrics.make_evaluator(
        resolved.problem, resolved.unattacked, scale=resolved.scale, n_agents=resolved.graph.n
    )
    start = time.perf_counter()
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(metrics.CSV_HEADER + "\n")

        def callback(row):
            f.write(row.csv_line() + "\n")
            f.flush()

        result = engine.run(
            resolved.problem,
            resolved.mixing,
            cfg.rounds,
            cfg.master_seed,
            algorithm=resolved.algorithm,
            schedules=resolved.schedules,
            dsgd_alpha=resolved.dsgd_alpha,
            attack=resolved.attack,
            batch_size=resolved.batch_size,
            evaluator=evaluator,
            metrics_cadence=cfg.metrics_cadence,
            row_callback=callback,
        )
    elapsed = time.perf_counter() - start

    fitted = None
    try:
        fitted = metrics.fit_rate_exponent(result.xbar_error)
    except NotFittableError:
        pass
    final = result.rows[-1]
    summary = {
        "algorithm": result.algorithm,
        "agents": resolved.graph.n,
        "dimension": resolved.problem.dim,
        "rounds": result.rounds,
        "beta": result.beta,
        "attacked": len(resolved.attack.attacked),
        "final_max_l2_error": final.max_l2_error,
        "final_avg_subopt": final.avg_subopt,
        "final_avg_accuracy": final.avg_accuracy,
        "final_consensus_error": final.consensus_error,
        "fitted_rate_exponent": fitted,
        "lemma1_constant": result.lemma1_c,
        "min_consensus_margin": (
            None if result.lemma1_c is None else result.checks.min_consensus_margin
        ),
        "max_clip_excess": (
            None if result.checks.rounds_checked == 0 else result.checks.max_clip_excess
        ),
        "max_avg_dynamics_dev": (
            None if result.checks.rounds_checked == 0 else result.checks.max_avg_dynamics_dev
        ),
        "elapsed_s": elapsed,
        "output": out_path,
    }
    return summary


def _print_summary(summary: dict) -> None:
    for key, value in summary.items():
        if isinstance(value, float):
            print(f"{key}: {value:.6g}")
        else:
            print(f"{key}: {value}")


def cmd_validate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    checks = validate_config(cfg)
    for check in checks:
        print(check.line())
    failures = blocking_failures(checks)
    if failures:
        print(f"validation failed: {len(failures)} blocking check(s)")
        return 2
    print("validation passed")
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    checks = validate_config(cfg)
    for check in checks:
        print(check.line())
    failures = blocking_failures(checks)
    if failures:
        print(f"validation failed: {len(failures)} blocking check(s)")
        return 2
    resolved = resolve(cfg)
    out_path = args.out or cfg.output or "run.csv"
    summary = execute_run(resolved, out_path)
    _print_summary(summary)
    return 0


SWEEP_PARAMETERS = ("attack_count", "noise_std", "tau_alpha", "tau_gamma", "seed")


def _sweep_variant(cfg: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    if parameter == "seed":
        return cfg.replace(master_seed=int(value))
    if parameter == "attack_count":
        if cfg.attack is None or "count" not in cfg.attack:
            raise ConfigError("attack_count sweep needs an attack block with a 'count' field")
        attack = dict(cfg.attack)
        attack["count"] = int(value)
        return cfg.replace(attack=attack)
    if parameter == "noise_std":
        if cfg.problem.get("kind") != "grid-estimation":
            raise ConfigError("noise_std sweep applies to the grid-estimation problem")
        problem = dict(cfg.problem)
        problem["noise_std"] = float(value)
        return cfg.replace(problem=problem)
    # tau_alpha / tau_gamma
    if cfg.algorithm.get("name") != "clipvrg" or cfg.algorithm.get("exponents") == "optimal":
        raise ConfigError(f"{parameter} sweep needs a clipvrg config with explicit exponents")
    algorithm = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.algorithm.items()}
    algorithm["alpha" if parameter == "tau_alpha" else "gamma"]["tau"] = float(value)
    return cfg.replace(algorithm=algorithm)


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    if args.parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")

    jobs = []
    for value in values:
        variant = _sweep_variant(cfg, args.parameter, value)
        checks = validate_config(variant)
        failures = blocking_failures(checks)
        out_path = f"{args.out_dir}/{args.parameter}_{value}.csv"
        jobs.append((value, variant, failures, out_path))

    def run_one(job):
        value, variant, failures, out_path = job
        if failures:
            return value, "infeasible: " + "; ".join(f.name for f in failures), None
        summary = execute_run(resolve(variant), out_path)
        return value, "ok", summary

    import os

    os.makedirs(args.out_dir, exist_ok=True)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(run_one, jobs))
    else:
        results = [run_one(job) for job in jobs]

    print(f"{'value':>12}  {'status':<32} {'max_l2_error':>14} {'avg_subopt':>14} {'accuracy':>10}")
    for value, status, summary in results:
        if summary is None:
            print(f"{value:>12}  {status:<32} {'-':>14} {'-':>14} {'-':>10}")
        else:
            acc = summary["final_avg_accuracy"]
            acc_str = "-" if acc is None else f"{acc:.4f}"
            print(
                f"{value:>12}  {status:<32} {summary['final_max_l2_error']:>14.6g} "
                f"{summary['final_avg_subopt']:>14.6g} {acc_str:>10}"
            )
    return 0


def run_tightness_demo(m: int, rounds: int, master_seed: int = 0) -> dict:
    """Half the agents minimize x^2 while the other half's oracles simulate (x-1)^2.

    kappa = 1, so the attacked fraction sits exactly at the feasibility
    boundary 1/2: the network settles between the two optima instead of
    recovering 0. The unattacked control run converges to 0.
    """
    if m < 1:
        raise ValueError(f"need at least one agent pair, got m={m}")
    n = 2 * m
    graph = topology.build_complete(n)
    mixing = topology.metropolis_weights(graph)
    problem = ScalarQuadraticProblem(n, center=0.0)
    schedules = ScheduleSet.build(
        c_alpha=0.5,
        tau_alpha=OPTIMAL_TAU_ALPHA,
        c_gamma=2.0,
        tau_gamma=OPTIMAL_TAU_GAMMA,
        c_eta=1.0,
        phi=1,
    )
    shifted_oracle = lambda agent, t, x: 2.0 * (x - 1.0)  # noqa: E731

    def final_avg(attacked: frozenset[int]) -> float:
        attack = (
            AttackSpec(attacked=attacked, mode="custom", custom=shifted_oracle)
            if attacked
            else AttackSpec()
        )
        result = engine.run(
            problem,
            mixing,
            rounds,
            master_seed,
            schedules=schedules,
            attack=attack,
            init=np.array([1.0]),
        )
        return float(result.final.x.mean())

    control = final_avg(frozenset())
    attacked_half = final_avg(frozenset(range(m)))
    attacked_all = final_avg(frozenset(range(n)))
    return {
        "agents": n,
        "rounds": rounds,
        "control_final_avg": control,
        "control_distance_from_zero": abs(control),
        "attacked_final_avg": attacked_half,
        "attacked_distance_from_zero": abs(attacked_half),
        "all_attacked_final_avg": attacked_all,
    }


def cmd_tightness_demo(args) -> int:
    summary = run_tightness_demo(args.agents, args.rounds, args.seed or 0)
    _print_summary(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipvrg",
        description="Attack-resilient distributed stochastic gradient simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a config against the method's assumptions")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p_val.set_defaults(func=cmd_validate)

    p_run = sub.add_parser("run", help="run one experiment and write its metrics CSV")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output CSV path (overrides the config)")
    p_run.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p_run.add_argument("--threads", type=int, default=1, help="worker threads; never affects results")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a config across values of one parameter")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--parameter", required=True, choices=SWEEP_PARAMETERS)
    p_sweep.add_argument("--values", required=True, help="comma-separated parameter values")
    p_sweep.add_argument("--out-dir", default="sweep_out")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.add_argument("--threads", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_demo = sub.add_parser("tightness-demo", help="attack-fraction boundary demo (kappa=1, rho=1/2)")
    p_demo.add_argument("--agents", type=int, default=10, help="agent pairs m (network size 2m)")
    p_demo.add_argument("--rounds", type=int, default=100_000)
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.set_defaults(func=cmd_tightness_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, InvalidStateError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
