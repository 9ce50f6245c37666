"""Experiment configuration: JSON schema, resolution into domain objects, validators.

A config names a problem, a topology, an algorithm, an optional attack and the
run bookkeeping. All randomness derives from `master_seed`: the topology,
dataset/parameter and attacked-set draws use fixed child streams, so changing
e.g. the attack mode never reshuffles the sampled attacked set.

Schedule entries are {c, tau, phi} triples; phi may be the string "auto",
meaning the smallest offset for which the consensus bound applies at the
topology's spectral gap. The eta entry's tau may be "derived" (from the
step/clip exponents); algorithm-level "exponents": "optimal" selects the
rate-optimal pair tau_alpha = 5/6, tau_gamma = 1/6.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from . import problems, topology
from .attacks import MODES, SUPPORTS, AttackSpec, sample_attacked_set
from .errors import ConfigError
from .schedules import (
    OPTIMAL_TAU_ALPHA,
    OPTIMAL_TAU_GAMMA,
    Schedule,
    ScheduleSet,
    derive_eta,
    lemma1_compliant,
    lemma1_constant,
    min_phi,
    validate_exponents,
)
from .streams import ATTACK_TAG, PROBLEM_TAG, TOPOLOGY_TAG, derive_seed, setup_stream

PROBLEM_KINDS = ("grid-estimation", "classification")
TOPOLOGY_KINDS = ("grid", "geometric", "cycle_k", "complete")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _known_keys(block: dict, allowed: tuple[str, ...], where: str) -> None:
    unknown = set(block) - set(allowed)
    _require(not unknown, f"unknown keys {sorted(unknown)} in {where}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    topology: dict
    algorithm: dict
    attack: dict | None
    rounds: int
    master_seed: int
    metrics_cadence: Any = 1
    output: str | None = None
    enforce_assumption7: bool = True
    enforce_theorem1: bool = True
    scale: float | None = None
    init: str = "zeros"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _require(isinstance(raw, dict), "config root must be a JSON object")
        _known_keys(
            raw,
            (
                "problem",
                "topology",
                "algorithm",
                "attack",
                "rounds",
                "master_seed",
                "metrics_cadence",
                "output",
                "enforce_assumption7",
                "enforce_theorem1",
                "scale",
                "init",
            ),
            "config",
        )
        for req in ("problem", "topology", "algorithm", "rounds", "master_seed"):
            _require(req in raw, f"config is missing required field {req!r}")
        cfg = cls(
            problem=dict(raw["problem"]),
            topology=dict(raw["topology"]),
            algorithm=dict(raw["algorithm"]),
            attack=None if raw.get("attack") is None else dict(raw["attack"]),
            rounds=int(raw["rounds"]),
            master_seed=int(raw["master_seed"]),
            metrics_cadence=raw.get("metrics_cadence", 1),
            output=raw.get("output"),
            enforce_assumption7=bool(raw.get("enforce_assumption7", True)),
            enforce_theorem1=bool(raw.get("enforce_theorem1", True)),
            scale=None if raw.get("scale") is None else float(raw["scale"]),
            init=raw.get("init", "zeros"),
        )
        cfg._check_structure()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "topology": self.topology,
            "algorithm": self.algorithm,
            "attack": self.attack,
            "rounds": self.rounds,
            "master_seed": self.master_seed,
            "metrics_cadence": self.metrics_cadence,
            "output": self.output,
            "enforce_assumption7": self.enforce_assumption7,
            "enforce_theorem1": self.enforce_theorem1,
            "scale": self.scale,
            "init": self.init,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def replace(self, **updates) -> "ExperimentConfig":
        raw = self.to_dict()
        raw.update(updates)
        return ExperimentConfig.from_dict(raw)

    # -- structural validation (types and enums; numeric feasibility is the
    #    validator's job so it can report instead of raise) -----------------

    def _check_structure(self) -> None:
        prob = self.problem
        _require(prob.get("kind") in PROBLEM_KINDS, f"problem.kind must be one of {PROBLEM_KINDS}")
        if prob["kind"] == "grid-estimation":
            _known_keys(
                prob,
                ("kind", "rows", "cols", "sensing_radius", "comm_radius", "theta_range", "noise_std"),
                "problem",
            )
            for req in ("rows", "cols", "sensing_radius", "comm_radius", "theta_range", "noise_std"):
                _require(req in prob, f"grid-estimation problem is missing {req!r}")
        else:
            _known_keys(prob, ("kind", "synthetic", "csv", "lambda", "batch_size"), "problem")
            _require("lambda" in prob and "batch_size" in prob, "classification needs lambda and batch_size")
            _require(
                (prob.get("synthetic") is None) != (prob.get("csv") is None),
                "classification needs exactly one of 'synthetic' or 'csv'",
            )
            if prob.get("synthetic") is not None:
                _known_keys(
                    prob["synthetic"],
                    ("n_points", "dim", "margin", "spread", "holdout_fraction"),
                    "problem.synthetic",
                )

        topo = self.topology
        _require(topo.get("kind") in TOPOLOGY_KINDS, f"topology.kind must be one of {TOPOLOGY_KINDS}")
        if topo["kind"] == "grid":
            _require(prob["kind"] == "grid-estimation", "grid topology requires the grid-estimation problem")
            _known_keys(topo, ("kind",), "topology")
        elif topo["kind"] == "geometric":
            _known_keys(topo, ("kind", "n", "radius"), "topology")
            _require("n" in topo and "radius" in topo, "geometric topology needs n and radius")
        elif topo["kind"] == "cycle_k":
            _known_keys(topo, ("kind", "n", "k"), "topology")
            _require("n" in topo and "k" in topo, "cycle_k topology needs n and k")
        else:
            _known_keys(topo, ("kind", "n"), "topology")
            _require("n" in topo, "complete topology needs n")

        alg = self.algorithm
        _require(alg.get("name") in ("clipvrg", "dsgd"), "algorithm.name must be 'clipvrg' or 'dsgd'")
        if alg["name"] == "clipvrg":
            _known_keys(alg, ("name", "exponents", "alpha", "gamma", "eta"), "algorithm")
            for req in ("alpha", "gamma", "eta"):
                _require(req in alg, f"clipvrg algorithm is missing the {req!r} schedule")
                _known_keys(alg[req], ("c", "tau", "phi"), f"algorithm.{req}")
                _require("c" in alg[req], f"algorithm.{req} needs a coefficient c")
            if alg.get("exponents") is not None:
                _require(alg["exponents"] == "optimal", "algorithm.exponents must be 'optimal' when present")
                for name in ("alpha", "gamma", "eta"):
                    _require(
                        "tau" not in alg[name] or alg[name]["tau"] == "derived",
                        f"algorithm.{name}.tau conflicts with exponents='optimal'",
                    )
            else:
                _require("tau" in alg["alpha"] and "tau" in alg["gamma"], "alpha and gamma schedules need tau")
        else:
            _known_keys(alg, ("name", "alpha"), "algorithm")
            _require("alpha" in alg, "dsgd algorithm needs an alpha schedule")
            _known_keys(alg["alpha"], ("c", "tau", "phi"), "algorithm.alpha")
            _require("c" in alg["alpha"] and "tau" in alg["alpha"], "dsgd alpha needs c and tau")
            _require(alg["alpha"].get("phi", 1) != "auto", "dsgd alpha phi cannot be 'auto'")

        if self.attack is not None:
            _known_keys(self.attack, ("count", "ids", "mode", "value", "support"), "attack")
            _require(
                ("count" in self.attack) != ("ids" in self.attack),
                "attack needs exactly one of 'count' or 'ids'",
            )
            _require(self.attack.get("mode", "constant") in MODES[:3], "config attacks support constant/sign_flip/zero")
            _require(self.attack.get("support", "all") in SUPPORTS, f"attack.support must be one of {SUPPORTS}")

        _require(self.rounds >= 0, "rounds must be nonnegative")
        if self.metrics_cadence != "log":
            _require(int(self.metrics_cadence) >= 1, "metrics_cadence must be a positive integer or 'log'")
        _require(self.init == "zeros", "only init='zeros' is supported in configs")


@dataclass
class ResolvedExperiment:
    """The domain objects a config denotes, ready to hand to the engine."""

    config: ExperimentConfig
    graph: topology.Graph
    mixing: topology.MixingMatrix
    problem: Any
    attack: AttackSpec
    unattacked: tuple[int, ...]
    schedules: ScheduleSet | None
    dsgd_alpha: Schedule | None
    batch_size: int | None
    scale: float

    @property
    def algorithm(self) -> str:
        return self.config.algorithm["name"]


def build_graph(cfg: ExperimentConfig) -> topology.Graph:
    topo = cfg.topology
    if topo["kind"] == "grid":
        prob = cfg.problem
        return topology.build_grid(int(prob["rows"]), int(prob["cols"]), float(prob["comm_radius"]))
    if topo["kind"] == "geometric":
        seed = derive_seed(cfg.master_seed, TOPOLOGY_TAG)
        return topology.build_random_geometric(int(topo["n"]), float(topo["radius"]), seed)
    if topo["kind"] == "cycle_k":
        return topology.build_cycle_k(int(topo["n"]), int(topo["k"]))
    return topology.build_complete(int(topo["n"]))


def build_problem(cfg: ExperimentConfig, graph: topology.Graph):
    prob = cfg.problem
    if prob["kind"] == "grid-estimation":
        lo, hi = prob["theta_range"]
        return problems.make_grid_estimation(
            graph,
            sensing_radius=float(prob["sensing_radius"]),
            theta_range=(float(lo), float(hi)),
            noise_std=float(prob["noise_std"]),
            seed=derive_seed(cfg.master_seed, PROBLEM_TAG),
        )
    if prob.get("synthetic") is not None:
        syn = prob["synthetic"]
        return problems.make_synthetic_classification(
            n_points=int(syn["n_points"]),
            dim=int(syn["dim"]),
            margin=float(syn["margin"]),
            seed=derive_seed(cfg.master_seed, PROBLEM_TAG),
            lam=float(prob["lambda"]),
            holdout_fraction=float(syn.get("holdout_fraction", 0.25)),
            spread=float(syn.get("spread", 1.0)),
        )
    return problems.load_classification_csv(prob["csv"], lam=float(prob["lambda"]), holdout_fraction=0.25)


def build_attack(cfg: ExperimentConfig, n: int) -> AttackSpec:
    if cfg.attack is None:
        return AttackSpec()
    blk = cfg.attack
    if "ids" in blk:
        attacked = frozenset(int(i) for i in blk["ids"])
        _require(all(0 <= i < n for i in attacked), f"attack ids out of range for n={n}")
    else:
        count = int(blk["count"])
        _require(0 <= count <= n, f"attack count must lie in [0, {n}]")
        attacked = sample_attacked_set(n, count, setup_stream(cfg.master_seed, ATTACK_TAG))
    return AttackSpec(
        attacked=attacked,
        mode=blk.get("mode", "constant"),
        value=float(blk.get("value", 0.0)),
        support=blk.get("support", "all"),
    )


def _resolve_schedules(cfg: ExperimentConfig, beta: float) -> ScheduleSet:
    alg = cfg.algorithm
    if alg.get("exponents") == "optimal":
        tau_alpha, tau_gamma = OPTIMAL_TAU_ALPHA, OPTIMAL_TAU_GAMMA
        tau_eta = None
    else:
        tau_alpha = float(alg["alpha"]["tau"])
        tau_gamma = float(alg["gamma"]["tau"])
        raw_eta = alg["eta"].get("tau", "derived")
        tau_eta = None if raw_eta == "derived" else float(raw_eta)

    phis = {alg[name].get("phi", "auto") for name in ("alpha", "gamma", "eta")}
    _require(len(phis) == 1, f"alpha/gamma/eta phi values must agree, got {sorted(map(str, phis))}")
    phi_raw = phis.pop()
    phi = min_phi(beta, tau_alpha, tau_gamma) if phi_raw == "auto" else int(phi_raw)

    try:
        return ScheduleSet.build(
            c_alpha=float(alg["alpha"]["c"]),
            tau_alpha=tau_alpha,
            c_gamma=float(alg["gamma"]["c"]),
            tau_gamma=tau_gamma,
            c_eta=float(alg["eta"]["c"]),
            phi=phi,
            tau_eta=tau_eta,
            require_theorem=cfg.enforce_theorem1,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def resolve(cfg: ExperimentConfig) -> ResolvedExperiment:
    """Build every domain object a run needs; raises ConfigError on infeasible configs."""
    graph = build_graph(cfg)
    if not topology.is_connected(graph):
        raise ConfigError("communication graph is not connected")
    mixing = topology.metropolis_weights(graph)
    problem = build_problem(cfg, graph)
    attack = build_attack(cfg, graph.n)
    unattacked = attack.unattacked(graph.n)

    batch_size = None
    if cfg.problem["kind"] == "classification":
        batch_size = int(cfg.problem["batch_size"])
        _require(1 <= batch_size <= problem.n_points, f"batch_size must lie in [1, {problem.n_points}]")

    if cfg.enforce_assumption7 and attack.attacked:
        _, _, kappa = problem.condition_number(unattacked)
        if not problems.check_attack_fraction(attack.rho(graph.n), kappa):
            raise ConfigError(
                f"attacked fraction {attack.rho(graph.n):.4f} violates the bound "
                f"1/(1+kappa) = {problems.feasible_rho(kappa):.4f}"
            )

    schedules = None
    dsgd_alpha = None
    if cfg.algorithm["name"] == "clipvrg":
        schedules = _resolve_schedules(cfg, mixing.beta)
    else:
        blk = cfg.algorithm["alpha"]
        dsgd_alpha = Schedule(float(blk["c"]), float(blk["tau"]), int(blk.get("phi", 1)))

    return ResolvedExperiment(
        config=cfg,
        graph=graph,
        mixing=mixing,
        problem=problem,
        attack=attack,
        unattacked=unattacked,
        schedules=schedules,
        dsgd_alpha=dsgd_alpha,
        batch_size=batch_size,
        scale=cfg.scale if cfg.scale is not None else float(graph.n),
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    blocking: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else ("FAIL" if self.blocking else "WARN")
        return f"[{status}] {self.name}: {self.detail}"


def validate_config(cfg: ExperimentConfig) -> list[CheckResult]:
    """Feasibility report: connectivity, mixing spectrum, conditioning, attack
    fraction, exponent constraints and the consensus-bound offset, each with
    the computed numbers."""
    checks: list[CheckResult] = []

    try:
        graph = build_graph(cfg)
    except (ValueError, ConfigError) as exc:
        checks.append(CheckResult("topology", False, True, str(exc)))
        return checks
    connected = topology.is_connected(graph)
    checks.append(
        CheckResult(
            "connectivity",
            connected,
            True,
            f"n={graph.n}, edges={graph.n_edges}, connected={connected}",
        )
    )
    if not connected:
        return checks

    mixing = topology.metropolis_weights(graph)
    diag = mixing.diagnostics()
    mix_ok = diag["max_row_sum_dev"] < 1e-12 and diag["asymmetry"] == 0.0 and 0.0 <= mixing.beta < 1.0
    checks.append(
        CheckResult(
            "mixing_matrix",
            mix_ok,
            True,
            f"beta={mixing.beta:.6f}, max row-sum dev={diag['max_row_sum_dev']:.2e}, "
            f"asymmetry={diag['asymmetry']:.2e}",
        )
    )

    try:
        problem = build_problem(cfg, graph)
        attack = build_attack(cfg, graph.n)
    except (ValueError, ConfigError) as exc:
        checks.append(CheckResult("problem", False, True, str(exc)))
        return checks
    unattacked = attack.unattacked(graph.n)

    try:
        mu, L, kappa = problem.condition_number(unattacked)
        checks.append(
            CheckResult(
                "strong_convexity",
                True,
                True,
                f"mu={mu:.6f}, L={L:.6f}, kappa={kappa:.4f} over {len(unattacked)} unattacked agents",
            )
        )
    except ValueError as exc:
        checks.append(CheckResult("strong_convexity", False, True, str(exc)))
        return checks

    rho = attack.rho(graph.n)
    bound = problems.feasible_rho(kappa)
    rho_ok = problems.check_attack_fraction(rho, kappa)
    checks.append(
        CheckResult(
            "attack_fraction",
            rho_ok,
            cfg.enforce_assumption7,
            f"rho={rho:.4f} ({len(attack.attacked)}/{graph.n}) vs bound 1/(1+kappa)={bound:.4f}; "
            f"max tolerable count={problems.max_attacked_count(graph.n, kappa)}",
        )
    )

    if cfg.algorithm["name"] == "clipvrg":
        alg = cfg.algorithm
        if alg.get("exponents") == "optimal":
            tau_alpha, tau_gamma = OPTIMAL_TAU_ALPHA, OPTIMAL_TAU_GAMMA
        else:
            tau_alpha, tau_gamma = float(alg["alpha"]["tau"]), float(alg["gamma"]["tau"])
        violations = validate_exponents(tau_alpha, tau_gamma)
        checks.append(
            CheckResult(
                "exponent_constraints",
                not violations,
                cfg.enforce_theorem1,
                f"tau_alpha={tau_alpha}, tau_gamma={tau_gamma}"
                + ("" if not violations else "; " + "; ".join(violations)),
            )
        )
        if not violations:
            tau_eta = derive_eta(tau_alpha, tau_gamma)
            raw_eta = alg["eta"].get("tau", "derived")
            eta_ok = raw_eta == "derived" or abs(float(raw_eta) - tau_eta) <= 1e-12
            checks.append(
                CheckResult(
                    "eta_exponent",
                    eta_ok,
                    cfg.enforce_theorem1,
                    f"tau_eta={tau_eta:.12f} (2(tau_alpha+tau_gamma)/3)",
                )
            )
            phi_needed = min_phi(mixing.beta, tau_alpha, tau_gamma)
            phi_raw = alg["alpha"].get("phi", "auto")
            phi = phi_needed if phi_raw == "auto" else int(phi_raw)
            compliant = lemma1_compliant(mixing.beta, tau_alpha, tau_gamma, phi)
            detail = f"phi={phi}, min_phi(beta)={phi_needed}"
            if compliant:
                c = lemma1_constant(mixing.beta, tau_alpha, tau_gamma, phi)
                detail += f", consensus-bound constant c={c:.4f}"
            else:
                detail += "; consensus bound not tracked for this run"
            checks.append(CheckResult("consensus_bound_offset", compliant, False, detail))

    return checks


def blocking_failures(checks: list[CheckResult]) -> list[CheckResult]:
    return [c for c in checks if c.blocking and not c.passed]
