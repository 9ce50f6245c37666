"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines;
the suite reuses heavy runs across criteria through module-scope fixtures.
Total runtime is dominated by the full 625-agent replica (~10-12 min) and the
million-round rate run (~2 min).
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

import clipvrg as cv
from clipvrg import engine, metrics
from clipvrg.cli import execute_run, main, run_tightness_demo
from clipvrg.config import ExperimentConfig, resolve

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

CLIP_TOL = 1e-12       # |k_i v_i| <= gamma_t + this, every agent, every round
AVG_DYN_TOL = 1e-10    # network-average identity, per coordinate, every round
MARGIN_TOL = 1e-10     # consensus error <= bound + this, every round


def load_config(name):
    return ExperimentConfig.load(CONFIG_DIR / name)


def run_resolved(cfg, rounds=None, attack_mode=None):
    """Execute a config through the engine with the evaluator attached."""
    if rounds is not None:
        cfg = cfg.replace(rounds=rounds)
    if attack_mode is not None:
        attack = dict(cfg.attack)
        attack["mode"] = attack_mode
        if attack_mode == "sign_flip":
            attack.pop("value", None)
            attack.pop("support", None)
        cfg = cfg.replace(attack=attack)
    r = resolve(cfg)
    ev = metrics.make_evaluator(r.problem, r.unattacked, scale=r.scale, n_agents=r.graph.n)
    start = time.perf_counter()
    result = engine.run(
        r.problem,
        r.mixing,
        cfg.rounds,
        cfg.master_seed,
        algorithm=r.algorithm,
        schedules=r.schedules,
        dsgd_alpha=r.dsgd_alpha,
        attack=r.attack,
        batch_size=r.batch_size,
        evaluator=ev,
        metrics_cadence=cfg.metrics_cadence,
    )
    elapsed = time.perf_counter() - start
    return result, elapsed


@pytest.fixture(scope="module")
def desk_attack_runs():
    """5x5 grid, T = 5e4, constant-vector and sign-flip attacks (criterion 1)."""
    cfg = load_config("grid_desk.json")
    runs = {}
    for mode in ("constant", "sign_flip"):
        runs[mode] = run_resolved(cfg, rounds=50_000, attack_mode=mode)
    return runs


@pytest.fixture(scope="module")
def desk_resilience_runs():
    """5x5 grid desk replica at T = 1e5: the defended method and the baseline (criterion 3)."""
    clip_res, clip_dt = run_resolved(load_config("grid_desk.json"))
    dsgd_res, dsgd_dt = run_resolved(load_config("grid_desk_dsgd.json"))
    return clip_res, dsgd_res, clip_dt + dsgd_dt


@pytest.fixture(scope="module")
def paper_run(tmp_path_factory):
    """The full 625-agent replica, run end to end through the CLI layer (criterion 3)."""
    out = tmp_path_factory.mktemp("paper") / "grid_paper.csv"
    resolved = resolve(load_config("grid_paper.json"))
    start = time.perf_counter()
    summary = execute_run(resolved, str(out))
    elapsed = time.perf_counter() - start
    return summary, out, elapsed


@pytest.fixture(scope="module")
def long_rate_run():
    """No-attack 5x5 grid with the rate-optimal exponents, T = 1e6 (criterion 6)."""
    return run_resolved(load_config("grid_desk_noattack_optimal.json"))


@pytest.fixture(scope="module")
def estimator_decay_runs():
    """Five seeds of the no-attack grid at T = 1e4 (criterion 6, decay surrogate)."""
    cfg = load_config("grid_desk_noattack_optimal.json").replace(rounds=10_000, metrics_cadence=100)
    results = []
    for seed in range(5):
        res, _ = run_resolved(cfg.replace(master_seed=1000 + seed))
        results.append(res)
    return results


@pytest.fixture(scope="module")
def classification_runs():
    """Cycle-of-15 classification desk replica: defended vs baseline (criterion 8)."""
    clip_res, clip_dt = run_resolved(load_config("classification_desk.json"))
    dsgd_res, dsgd_dt = run_resolved(load_config("classification_desk_dsgd.json"))
    return clip_res, dsgd_res, clip_dt + dsgd_dt


def test_criterion_1_consensus_bound(desk_attack_runs):
    for mode, (res, elapsed) in desk_attack_runs.items():
        assert res.lemma1_c is not None, f"{mode}: run must be offset-compliant"
        assert res.checks.min_consensus_margin >= -MARGIN_TOL, (
            f"{mode}: margin {res.checks.min_consensus_margin} at round {res.checks.min_margin_round}"
        )
        for row in res.rows:
            assert row.lemma1_bound is not None
            assert row.consensus_error <= row.lemma1_bound + MARGIN_TOL, f"{mode} t={row.t}"
        assert elapsed < 60.0, f"{mode}: {elapsed:.1f}s"
    margins = {m: desk_attack_runs[m][0].checks.min_consensus_margin for m in desk_attack_runs}
    print(f"\nACCEPTANCE 1: PASS - consensus error within c*sqrt(n)*alpha*gamma (+1e-10) at every "
          f"round of the T=5e4 constant and sign-flip runs; min margins {margins}")


def test_criterion_2_clip_and_average_identities(
    desk_attack_runs, desk_resilience_runs, paper_run, long_rate_run, estimator_decay_runs, classification_runs
):
    tracked = {
        "desk_constant_5e4": desk_attack_runs["constant"][0],
        "desk_signflip_5e4": desk_attack_runs["sign_flip"][0],
        "desk_1e5": desk_resilience_runs[0],
        "noattack_1e6": long_rate_run[0],
        "classification_5e4": classification_runs[0],
        **{f"decay_seed{i}": r for i, r in enumerate(estimator_decay_runs)},
    }
    worst_clip, worst_dev = -math.inf, 0.0
    for name, res in tracked.items():
        assert res.checks.rounds_checked == res.rounds, f"{name}: not every round checked"
        assert res.checks.max_clip_excess <= CLIP_TOL, f"{name}: clip excess {res.checks.max_clip_excess}"
        assert res.checks.max_avg_dynamics_dev <= AVG_DYN_TOL, f"{name}: avg dev {res.checks.max_avg_dynamics_dev}"
        worst_clip = max(worst_clip, res.checks.max_clip_excess)
        worst_dev = max(worst_dev, res.checks.max_avg_dynamics_dev)
    # the 625-agent replica reports through its run summary
    summary = paper_run[0]
    assert summary["max_clip_excess"] <= CLIP_TOL
    assert summary["max_avg_dynamics_dev"] <= AVG_DYN_TOL
    worst_clip = max(worst_clip, summary["max_clip_excess"])
    worst_dev = max(worst_dev, summary["max_avg_dynamics_dev"])
    print(f"\nACCEPTANCE 2: PASS - every round of every run: clip-norm excess <= {worst_clip:.2e} "
          f"(tol 1e-12), average-dynamics deviation <= {worst_dev:.2e} (tol 1e-10)")


def test_criterion_3_resilience_vs_baseline(desk_resilience_runs, paper_run):
    clip_res, dsgd_res, desk_elapsed = desk_resilience_runs
    early = next(r for r in clip_res.rows if r.t == 100)
    final = clip_res.rows[-1]
    assert final.t == 100_000
    assert final.max_l2_error <= early.max_l2_error / 10.0, (
        f"decrease {early.max_l2_error / final.max_l2_error:.2f}x < 10x"
    )
    dsgd_final = dsgd_res.rows[-1]
    assert dsgd_final.max_l2_error >= 5.0 * final.max_l2_error
    assert desk_elapsed < 300.0, f"desk runs took {desk_elapsed:.0f}s"
    summary, csv_path, paper_elapsed = paper_run
    assert csv_path.exists() and summary["rounds"] == 20_000
    assert paper_elapsed < 1800.0, f"625-agent run took {paper_elapsed:.0f}s"
    print(f"\nACCEPTANCE 3: PASS - defended error {early.max_l2_error:.3f} -> {final.max_l2_error:.4f} "
          f"({early.max_l2_error / final.max_l2_error:.0f}x decrease), baseline final "
          f"{dsgd_final.max_l2_error:.3f} ({dsgd_final.max_l2_error / final.max_l2_error:.0f}x worse); "
          f"625-agent replica completed in {paper_elapsed / 60:.1f} min")


def test_criterion_4_attack_fraction_arithmetic():
    assert cv.feasible_rho(1.0) == 0.5
    r = resolve(load_config("grid_paper.json"))
    _, _, kappa = r.problem.condition_number(r.unattacked)
    threshold = cv.max_attacked_count(r.graph.n, kappa)
    assert 110 <= threshold <= 124, f"threshold {threshold} outside [110, 124]"
    assert not cv.check_attack_fraction((threshold + 1) / r.graph.n, kappa)
    assert cv.check_attack_fraction(threshold / r.graph.n, kappa)
    print(f"\nACCEPTANCE 4: PASS - kappa=1 gives bound 1/2; grid kappa={kappa:.4f} gives "
          f"max tolerable count {threshold} (in [110, 124])")


def test_criterion_5_tightness_demo():
    start = time.perf_counter()
    summary = run_tightness_demo(10, 100_000)
    elapsed = time.perf_counter() - start
    assert summary["attacked_distance_from_zero"] >= 0.1
    assert summary["control_distance_from_zero"] <= 1e-3
    assert elapsed < 60.0, f"{elapsed:.0f}s"
    print(f"\nACCEPTANCE 5: PASS - at rho = 1/2 the final iterate sits "
          f"{summary['attacked_distance_from_zero']:.3f} from 0 (>= 0.1) while the unattacked "
          f"control reaches {summary['control_distance_from_zero']:.2e} (<= 1e-3)")


def test_criterion_6_rate_surrogates(long_rate_run, estimator_decay_runs):
    res, elapsed = long_rate_run
    fitted = cv.fit_rate_exponent(res.xbar_error)
    assert fitted >= 0.05, f"fitted exponent {fitted}"
    assert elapsed < 600.0, f"{elapsed:.0f}s"
    early, late = [], []
    for r in estimator_decay_runs:
        by_t = {row.t: row for row in r.rows}
        early.append(by_t[100].mean_estimator_error)
        late.append(by_t[10_000].mean_estimator_error)
    assert float(np.mean(late)) < float(np.mean(early))
    print(f"\nACCEPTANCE 6: PASS - fitted tail exponent {fitted:.3f} (>= 0.05) over T=1e6; "
          f"estimator error decays {np.mean(early):.3f} -> {np.mean(late):.3f} across 5 seeds")


def test_criterion_7_unit_property_suites(tmp_path):
    start = time.perf_counter()

    # gradient-descent contraction on 200 random strongly convex quadratics
    rng = np.random.default_rng(7)
    for _ in range(200):
        d = int(rng.integers(1, 8))
        eigs = rng.uniform(0.05, 20.0, d)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        hess = (q * eigs) @ q.T
        mu, L = eigs.min(), eigs.max()
        x_star = rng.standard_normal(d)
        x = rng.standard_normal(d) * 5.0
        alpha = rng.uniform(1e-6, 2.0 / (L + mu))
        x1 = cv.gradient_step(x, hess @ (x - x_star), alpha)
        assert np.linalg.norm(x1 - x_star) <= (1 - alpha * mu) * np.linalg.norm(x - x_star) + 1e-12

    # oracle unbiasedness, Monte-Carlo
    g = cv.build_grid(3, 3, 1.5)
    problem = cv.make_grid_estimation(g, 2.0, (-40.0, 180.0), 10.0, seed=2)
    x = np.linspace(-5, 5, 9)
    exact = problem.local_gradients(np.tile(x, (9, 1)))[4]
    stream = cv.make_sampler(problem, master_seed=99)
    draws = 20_000
    acc = np.zeros(9)
    for t in range(draws):
        acc += stream(np.tile(x, (9, 1)), t)[4]
    d_i = int(problem.masks[4].sum())
    assert np.linalg.norm(acc / draws - exact) <= 5.0 * (2.0 * 10.0 * math.sqrt(d_i)) / math.sqrt(draws)

    # spectral gap vs dense eigensolver on every small graph
    from test_topology import graph_zoo

    for graph in graph_zoo():
        w = cv.metropolis_weights(graph)
        eigs = np.sort(np.abs(np.linalg.eigvalsh(w.w)))
        assert abs(w.beta - eigs[-2]) <= 1e-8
    path3 = cv.metropolis_weights(cv.Graph(3, ((0, 1), (1, 2))))
    assert abs(path3.beta - 2 / 3) <= 1e-9

    # determinism: bit-identical CSV for one seed, independent of --threads
    cfg = load_config("grid_desk.json").replace(rounds=2_000, metrics_cadence=200)
    cfg_path = tmp_path / "det.json"
    cfg_path.write_text(cfg.to_json())
    blobs = []
    for tag, threads in (("t1", "1"), ("t4", "4"), ("t1b", "1")):
        out = tmp_path / f"{tag}.csv"
        assert main(["run", "--config", str(cfg_path), "--out", str(out), "--threads", threads]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0, f"{elapsed:.0f}s"
    print(f"\nACCEPTANCE 7: PASS - contraction property (200 quadratics, 1e-12), oracle "
          f"unbiasedness, spectral gap vs dense eigensolver (<= 1e-8), and bit-identical "
          f"seeded CSVs across --threads, in {elapsed:.0f}s")


def test_criterion_8_classification_desk_replica(classification_runs):
    clip_res, dsgd_res, elapsed = classification_runs
    clip_acc = clip_res.rows[-1].avg_accuracy
    dsgd_acc = dsgd_res.rows[-1].avg_accuracy
    assert clip_acc >= 0.9, f"defended accuracy {clip_acc}"
    assert dsgd_acc <= 0.7, f"baseline accuracy {dsgd_acc}"
    assert elapsed < 300.0, f"{elapsed:.0f}s"
    print(f"\nACCEPTANCE 8: PASS - defended accuracy {clip_acc:.3f} (>= 0.9) vs baseline "
          f"{dsgd_acc:.3f} (<= 0.7) under the constant-vector attack")
