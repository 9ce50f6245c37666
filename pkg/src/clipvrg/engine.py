"""Round-synchronous simulation of the clipped variance-reduced method and DSGD.

Every round has two phases with a barrier between them: each agent queries
its (possibly attacked) oracle at the current iterate, updates its recursive
gradient estimator, clips it, and forms the message x_i - alpha_t k_i v_i;
then every agent replaces its iterate with the mixing-weighted combination
of all messages. All agents consume round-t values before any round-(t+1)
value is written, so results are independent of per-agent execution order.

The mixing step evaluates W @ z in centered form, W @ (z - mean) + mean,
which is algebraically identical but keeps the network-average identity
(the average moves by exactly -(alpha_t/n) sum_i k_i v_i) measurable at
machine precision even when iterates are large.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attacks import NO_ATTACK, AttackSpec, apply_attack_rows
from .errors import InvalidStateError
from .metrics import consensus_error
from .schedules import Schedule, ScheduleSet, lemma1_compliant, lemma1_constant
from .topology import MixingMatrix

Sampler = Callable[[np.ndarray, int], np.ndarray]


def clip_coefficient(v: np.ndarray, gamma: float) -> float:
    """Scaling that caps the norm of v at gamma: 1 below the threshold, gamma/|v| above."""
    if gamma <= 0:
        raise ValueError(f"clipping threshold must be positive, got {gamma}")
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise InvalidStateError("clip coefficient requested for a non-finite vector")
    nv = float(np.linalg.norm(v))
    return 1.0 if nv <= gamma else gamma / nv


def estimator_update(v_prev: np.ndarray, m: np.ndarray, eta: float) -> np.ndarray:
    """Recursive gradient estimator step (1 - eta) v + eta m; eta = 1 replaces v by m."""
    v_prev = np.asarray(v_prev, dtype=float)
    m = np.asarray(m, dtype=float)
    if v_prev.shape != m.shape:
        raise ValueError(f"estimator shapes differ: {v_prev.shape} vs {m.shape}")
    return (1.0 - eta) * v_prev + eta * m


@dataclass(frozen=True)
class AgentState:
    """One agent's view: iterate, gradient estimator, last clipping coefficient."""

    x: np.ndarray
    v: np.ndarray | None
    k: float | None


@dataclass
class NetworkState:
    """Stacked per-agent state after a round: x is the next iterate, v and k the
    estimator and clipping coefficients computed during the round."""

    x: np.ndarray
    v: np.ndarray | None = None
    k: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def agent(self, i: int) -> AgentState:
        return AgentState(
            self.x[i],
            None if self.v is None else self.v[i],
            None if self.k is None else float(self.k[i]),
        )

    def xbar(self) -> np.ndarray:
        return self.x.mean(axis=0)


@dataclass
class InvariantTracker:
    """Worst-case observations of the per-round invariants across a run."""

    max_clip_excess: float = -math.inf       # max over rounds of max_i |k_i v_i| - gamma_t
    max_avg_dynamics_dev: float = 0.0        # max per-coordinate deviation from the average identity
    min_consensus_margin: float = math.inf   # min over rounds of bound - consensus error
    min_margin_round: int | None = None
    rounds_checked: int = 0

    def observe_clip(self, excess: float) -> None:
        self.max_clip_excess = max(self.max_clip_excess, excess)

    def observe_avg_dynamics(self, dev: float) -> None:
        self.max_avg_dynamics_dev = max(self.max_avg_dynamics_dev, dev)

    def observe_margin(self, margin: float, t: int) -> None:
        if margin < self.min_consensus_margin:
            self.min_consensus_margin = margin
            self.min_margin_round = t


def _mix_centered(mixing: MixingMatrix, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zbar = z.mean(axis=0)
    return mixing.w @ (z - zbar) + zbar, zbar


def _eta_for_round(schedules: ScheduleSet, t: int) -> float:
    # v^0 = m^0; v^t blends with eta_{t-1} thereafter. Coefficients above one
    # are clamped so the recursion stays a convex combination.
    if t == 0:
        return 1.0
    return min(1.0, float(schedules.eta.eval(t - 1)))


def clipvrg_round(
    state: NetworkState,
    mixing: MixingMatrix,
    schedules: ScheduleSet,
    sampler: Sampler,
    t: int,
    tracker: InvariantTracker | None = None,
) -> NetworkState:
    """One synchronous round: oracle query, estimator update, clip, message mixing."""
    m = sampler(state.x, t)
    if state.v is None:
        v = np.array(m, dtype=float)
    else:
        v = estimator_update(state.v, m, _eta_for_round(schedules, t))
    gamma_t = float(schedules.gamma.eval(t))
    alpha_t = float(schedules.alpha.eval(t))
    vnorm = np.sqrt(np.einsum("ij,ij->i", v, v))
    k = np.where(vnorm <= gamma_t, 1.0, gamma_t / np.maximum(vnorm, 1e-300))
    z = state.x - alpha_t * (k[:, None] * v)
    x1, zbar = _mix_centered(mixing, z)
    if not np.isfinite(x1).all():
        raise InvalidStateError("iterates became non-finite", t)
    if tracker is not None:
        tracker.observe_clip(float((k * vnorm).max()) - gamma_t)
        tracker.observe_avg_dynamics(float(np.abs(x1.mean(axis=0) - zbar).max()))
        tracker.rounds_checked += 1
    return NetworkState(x1, v, k)


def dsgd_round(
    state: NetworkState,
    mixing: MixingMatrix,
    alpha_t: float,
    sampler: Sampler,
    t: int,
) -> NetworkState:
    """Diffusion-form baseline: mix the raw local gradient steps, no estimator, no clipping."""
    m = sampler(state.x, t)
    z = state.x - alpha_t * m
    x1, _ = _mix_centered(mixing, z)
    if not np.isfinite(x1).all():
        raise InvalidStateError("iterates became non-finite", t)
    return NetworkState(x1)


def make_sampler(
    problem,
    attack: AttackSpec = NO_ATTACK,
    master_seed: int = 0,
    batch_size: int | None = None,
) -> Sampler:
    """Attack-wrapped whole-round oracle: honest samples for everyone, then the
    attacked agents' rows are overridden. Attacked agents still consume their
    draws, so honest agents' randomness does not depend on the attack."""

    def sampler(X: np.ndarray, t: int) -> np.ndarray:
        if batch_size is not None:
            honest = problem.sample_round(X, t, master_seed, batch_size)
        else:
            honest = problem.sample_round(X, t, master_seed)
        if attack.attacked:
            honest = apply_attack_rows(attack, honest, X, t, problem)
        return honest

    return sampler


def record_rounds(rounds: int, cadence) -> set[int]:
    """Round indices at which metrics are recorded; always includes 0 and the final round."""
    if cadence == "log":
        pts = np.unique(np.rint(np.geomspace(1, max(rounds, 1), 512)).astype(int))
        rec = {0, rounds} | {int(p) for p in pts if p <= rounds}
        return rec
    cadence = int(cadence)
    if cadence < 1:
        raise ValueError(f"metrics cadence must be >= 1 or 'log', got {cadence}")
    rec = set(range(0, rounds + 1, cadence))
    rec |= {0, rounds}
    return rec


@dataclass
class RunResult:
    """Everything a run produced: recorded metric rows, invariant observations, final state."""

    algorithm: str
    rounds: int
    rows: list
    xbar_error: list[tuple[int, float]]
    final: NetworkState
    checks: InvariantTracker
    lemma1_c: float | None
    beta: float


def run(
    problem,
    mixing: MixingMatrix,
    rounds: int,
    master_seed: int,
    *,
    algorithm: str = "clipvrg",
    schedules: ScheduleSet | None = None,
    dsgd_alpha: Schedule | None = None,
    attack: AttackSpec = NO_ATTACK,
    batch_size: int | None = None,
    init: np.ndarray | str = "zeros",
    evaluator=None,
    metrics_cadence=1,
    row_callback: Callable | None = None,
) -> RunResult:
    """Execute a full experiment: `rounds` synchronous rounds from a common start.

    Metric rows are produced through `evaluator` (which holds the ground-truth
    knowledge the algorithm itself never sees) at the recording cadence; the
    row for round t always describes the iterate x^t together with the
    estimator state computed at round t. Deterministic for a fixed master seed.
    """
    if rounds < 0:
        raise ValueError(f"rounds must be nonnegative, got {rounds}")
    n, d = mixing.n, problem.dim
    if isinstance(init, str):
        if init != "zeros":
            raise ValueError(f"unknown init {init!r}")
        x0 = np.zeros((n, d))
    else:
        x0 = np.broadcast_to(np.asarray(init, dtype=float), (n, d)).copy()

    if algorithm == "clipvrg":
        if schedules is None:
            raise ValueError("clipvrg needs a ScheduleSet")
        compliant = lemma1_compliant(mixing.beta, schedules.alpha.tau, schedules.gamma.tau, schedules.phi)
        c_consensus = (
            lemma1_constant(mixing.beta, schedules.alpha.tau, schedules.gamma.tau, schedules.phi)
            if compliant
            else None
        )
    elif algorithm == "dsgd":
        if dsgd_alpha is None:
            raise ValueError("dsgd needs an alpha Schedule")
        c_consensus = None
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")

    sampler = make_sampler(problem, attack, master_seed, batch_size)
    rec = record_rounds(rounds, metrics_cadence)
    tracker = InvariantTracker()
    sqrt_n = math.sqrt(n)

    rows: list = []
    xbar_err: list[tuple[int, float]] = []

    def emit(t: int, x: np.ndarray, v: np.ndarray | None, k: np.ndarray | None) -> None:
        if evaluator is None:
            return
        bound = None
        if c_consensus is not None:
            bound = c_consensus * sqrt_n * float(schedules.alpha.eval(t)) * float(schedules.gamma.eval(t))
        row = evaluator.row(t, x, v, k, bound)
        rows.append(row)
        err = evaluator.xbar_error(x)
        if err is not None:
            xbar_err.append((t, err))
        if row_callback is not None:
            row_callback(row)

    state = NetworkState(x0)
    for t in range(rounds):
        if algorithm == "clipvrg":
            new = clipvrg_round(state, mixing, schedules, sampler, t, tracker)
        else:
            new = dsgd_round(state, mixing, float(dsgd_alpha.eval(t)), sampler, t)
        if t in rec:
            emit(t, state.x, new.v, new.k)
        if c_consensus is not None:
            bound = c_consensus * sqrt_n * float(schedules.alpha.eval(t + 1)) * float(schedules.gamma.eval(t + 1))
            tracker.observe_margin(bound - consensus_error(new.x), t + 1)
        state = new

    # Final row: the compute phase of round `rounds` without its mixing step,
    # so the estimator column is defined at the last recorded iterate too.
    if algorithm == "clipvrg":
        m = sampler(state.x, rounds)
        v = np.array(m, dtype=float) if state.v is None else estimator_update(
            state.v, m, _eta_for_round(schedules, rounds)
        )
        gamma_t = float(schedules.gamma.eval(rounds))
        vnorm = np.sqrt(np.einsum("ij,ij->i", v, v))
        k = np.where(vnorm <= gamma_t, 1.0, gamma_t / np.maximum(vnorm, 1e-300))
        emit(rounds, state.x, v, k)
    else:
        emit(rounds, state.x, None, None)

    return RunResult(
        algorithm=algorithm,
        rounds=rounds,
        rows=rows,
        xbar_error=xbar_err,
        final=state,
        checks=tracker,
        lemma1_c=c_consensus,
        beta=mixing.beta,
    )
