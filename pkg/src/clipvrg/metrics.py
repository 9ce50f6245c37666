"""Ground-truth evaluation of runs against the unattacked problem.

The evaluator knows which agents are unattacked and where the true minimizer
is; the algorithms never do. Each recorded round becomes one MetricsRow with
the CSV schema:

    t,max_l2_error,consensus_error,lemma1_bound,avg_subopt,avg_accuracy,mean_estimator_error

Fields that do not apply to a run (accuracy outside classification, bound and
estimator error for the baseline) are left empty.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import NotFittableError
from .problems import solve_minimizer
from .schedules import ScheduleSet, lemma1_constant

CSV_FIELDS = (
    "t",
    "max_l2_error",
    "consensus_error",
    "lemma1_bound",
    "avg_subopt",
    "avg_accuracy",
    "mean_estimator_error",
)
CSV_HEADER = ",".join(CSV_FIELDS)


@dataclass(frozen=True)
class MetricsRow:
    t: int
    max_l2_error: float
    consensus_error: float
    lemma1_bound: float | None
    avg_subopt: float
    avg_accuracy: float | None
    mean_estimator_error: float | None

    def csv_line(self) -> str:
        def fmt(x):
            return "" if x is None else repr(float(x))

        return ",".join(
            [
                str(self.t),
                fmt(self.max_l2_error),
                fmt(self.consensus_error),
                fmt(self.lemma1_bound),
                fmt(self.avg_subopt),
                fmt(self.avg_accuracy),
                fmt(self.mean_estimator_error),
            ]
        )


def write_csv(rows: Iterable[MetricsRow], f: IO[str]) -> None:
    f.write(CSV_HEADER + "\n")
    for row in rows:
        f.write(row.csv_line() + "\n")


def max_l2_error(X: np.ndarray, theta_star: np.ndarray, scale: float) -> float:
    """Scaled worst-agent distance to the reference point: (1/scale) max_i |x_i - theta*|."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    dev = X - theta_star
    return float(np.sqrt(np.einsum("ij,ij->i", dev, dev)).max()) / scale


def consensus_error(X: np.ndarray) -> float:
    """Total deviation from the network average: |x - 1 (x) xbar| over all agents.

    Computed relative to agent 0 first (shift invariance), so exactly equal
    states give exactly zero instead of mean-rounding noise.
    """
    dev = X - X[0]
    dev = dev - dev.mean(axis=0)
    return float(np.linalg.norm(dev))


def suboptimality(problem, X: np.ndarray, agents=None, f_star: float | None = None) -> float:
    """Mean over agents of f(x_i) - f(x*); tiny negatives from solver tolerance clamp to zero."""
    if f_star is None:
        f_star = problem.objective(solve_minimizer(problem, agents), agents)
    vals = [problem.objective(X[i], agents) - f_star for i in range(X.shape[0])]
    gap = float(np.mean(vals))
    if -1e-9 <= gap < 0.0:
        return 0.0
    return gap


def classification_accuracy(problem, X: np.ndarray) -> float:
    """Mean over agents of holdout accuracy; a zero margin counts as wrong."""
    if problem.holdout_features is None or len(problem.holdout_labels) == 0:
        raise ValueError("classification accuracy needs a nonempty holdout set")
    margins = X @ problem.holdout_features.T  # (n_agents, n_holdout)
    correct = (margins * problem.holdout_labels) > 0
    return float(correct.mean())


def fit_rate_exponent(points: Sequence[tuple[float, float]], tail_fraction: float = 0.5) -> float:
    """Power-law exponent of a decaying series: negated slope of log(value) vs log(t+1)
    over the last tail_fraction of samples. A series c (t+1)^-tau returns tau."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    pts = sorted((float(t), float(v)) for t, v in points)
    k = max(2, math.ceil(len(pts) * tail_fraction))
    tail = pts[-k:]
    if len(tail) < 2:
        raise NotFittableError("need at least two samples to fit a rate")
    ts = np.array([p[0] for p in tail])
    vals = np.array([p[1] for p in tail])
    if (vals <= 0).any():
        raise NotFittableError("tail contains nonpositive values")
    logt = np.log(ts + 1.0)
    logv = np.log(vals)
    var = float(((logt - logt.mean()) ** 2).sum())
    if var == 0.0:
        raise NotFittableError("tail samples share one round index")
    slope = float(((logt - logt.mean()) * (logv - logv.mean())).sum()) / var
    return -slope


def consensus_report(X: np.ndarray, t: int, schedules: ScheduleSet, beta: float) -> tuple[float, float, float]:
    """(consensus error, deterministic bound c sqrt(n) alpha_t gamma_t, margin)."""
    c = lemma1_constant(beta, schedules.alpha.tau, schedules.gamma.tau, schedules.phi)
    err = consensus_error(X)
    bound = c * math.sqrt(X.shape[0]) * float(schedules.alpha.eval(t)) * float(schedules.gamma.eval(t))
    return err, bound, bound - err


@dataclass
class Evaluator:
    """Ground-truth side of a run: bound to the problem, the unattacked set and x*."""

    problem: object
    unattacked: tuple[int, ...]
    x_star: np.ndarray
    f_star: float
    scale: float
    classification: bool

    def row(self, t: int, x: np.ndarray, v: np.ndarray | None, k, lemma1_bound: float | None) -> MetricsRow:
        est_err = None
        if v is not None:
            idx = np.asarray(self.unattacked, dtype=int)
            dev = v[idx] - self.problem.local_gradients(x)[idx]
            est_err = float(np.sqrt(np.einsum("ij,ij->i", dev, dev)).mean())
        return MetricsRow(
            t=int(t),
            max_l2_error=max_l2_error(x, self.x_star, self.scale),
            consensus_error=consensus_error(x),
            lemma1_bound=None if lemma1_bound is None else float(lemma1_bound),
            avg_subopt=suboptimality(self.problem, x, self.unattacked, self.f_star),
            avg_accuracy=classification_accuracy(self.problem, x) if self.classification else None,
            mean_estimator_error=est_err,
        )

    def xbar_error(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x.mean(axis=0) - self.x_star))


def make_evaluator(
    problem,
    unattacked=None,
    scale: float | None = None,
    n_agents: int | None = None,
    solver_tol: float = 1e-9,
) -> Evaluator:
    """Solve the reference minimizer once and bind the run-independent ground truth.

    n_agents is needed when the problem itself does not fix the network size
    (one shared dataset replicated on every agent).
    """
    n = getattr(problem, "n_agents", None) or n_agents
    if n is None:
        raise ValueError("pass n_agents for problems that do not fix the network size")
    if unattacked is None:
        unattacked = tuple(range(n))
    unattacked = tuple(sorted(unattacked))
    x_star = solve_minimizer(problem, unattacked, tol=solver_tol)
    f_star = problem.objective(x_star, unattacked)
    classification = getattr(problem, "holdout_features", None) is not None
    return Evaluator(
        problem=problem,
        unattacked=unattacked,
        x_star=x_star,
        f_star=f_star,
        scale=float(scale) if scale is not None else float(n),
        classification=classification,
    )
