"""Local objectives, stochastic gradient oracles and ground-truth quantities.

Two concrete problem families plus a scalar quadratic used by the
attack-fraction tightness demo:

* LinearMeasurementProblem -- each agent takes noisy measurements of the
  coordinates of a shared parameter vector that lie inside its sensing
  radius; the per-sample loss is the squared measurement residual.
* LogisticProblem -- every agent holds the same labelled dataset and
  minimizes l2-regularized logistic loss from minibatch gradients.

The evaluator-facing methods (true_gradient, objective, condition_number,
minimizer) accept the unattacked agent subset; the simulation engine never
sees it and consumes only oracle samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .streams import round_stream
from .topology import Graph


def _as_agent_array(agents, n: int) -> np.ndarray:
    if agents is None:
        return np.arange(n)
    idx = np.asarray(sorted(agents), dtype=int)
    if len(idx) == 0:
        raise ValueError("agent subset is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError(f"agent subset out of range for n={n}")
    return idx


@dataclass(frozen=True)
class LinearMeasurementProblem:
    """Distributed heterogeneous measurement of a d-dimensional parameter.

    masks[i, j] is True when agent i measures coordinate j; the measurement
    matrix rows are canonical basis vectors, so the per-agent Hessian is
    2 diag(masks[i]) and all aggregate quantities have closed forms.
    """

    theta_star: np.ndarray
    masks: np.ndarray
    noise_std: float

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        masks = np.asarray(self.masks, dtype=bool)
        if theta.ndim != 1:
            raise ValueError("theta_star must be a vector")
        if masks.ndim != 2 or masks.shape[1] != theta.shape[0]:
            raise ValueError(f"masks must be (n, {theta.shape[0]}), got {masks.shape}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        if not masks.any(axis=0).all():
            uncovered = int((~masks.any(axis=0)).sum())
            raise ValueError(f"{uncovered} coordinates are measured by no agent")
        theta.setflags(write=False)
        masks.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "masks", masks)

    @property
    def n_agents(self) -> int:
        return self.masks.shape[0]

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    def support_mask(self, agent: int) -> np.ndarray:
        return self.masks[agent]

    def sample(self, agent: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One honest stochastic gradient: 2 H^T (H x - y) with a fresh noisy measurement.

        Nonzero only on the coordinates the agent measures.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"query must have dimension {self.dim}, got {x.shape}")
        mask = self.masks[agent]
        g = np.zeros(self.dim)
        resid = x[mask] - self.theta_star[mask]
        if self.noise_std > 0:
            resid = resid - self.noise_std * rng.standard_normal(int(mask.sum()))
        g[mask] = 2.0 * resid
        return g

    def sample_round(self, X: np.ndarray, t: int, master_seed: int) -> np.ndarray:
        """Honest samples for all agents at round t; agent i consumes row i of the round block."""
        resid = X - self.theta_star
        if self.noise_std > 0:
            noise = round_stream(master_seed, t).standard_normal(X.shape)
            resid = resid - self.noise_std * noise
        return 2.0 * np.where(self.masks, resid, 0.0)

    def local_gradients(self, X: np.ndarray) -> np.ndarray:
        """Exact per-agent gradients at per-agent iterates (n, d)."""
        return 2.0 * np.where(self.masks, X - self.theta_star, 0.0)

    def coverage_counts(self, agents=None) -> np.ndarray:
        """How many of the given agents measure each coordinate."""
        idx = _as_agent_array(agents, self.n_agents)
        return self.masks[idx].sum(axis=0)

    def true_gradient(self, x: np.ndarray, agents=None) -> np.ndarray:
        idx = _as_agent_array(agents, self.n_agents)
        counts = self.masks[idx].sum(axis=0)
        return (2.0 / len(idx)) * counts * (np.asarray(x, dtype=float) - self.theta_star)

    def objective(self, x: np.ndarray, agents=None) -> float:
        """Expected average loss; the per-agent noise floor d_i sigma^2 is kept."""
        idx = _as_agent_array(agents, self.n_agents)
        counts = self.masks[idx].sum(axis=0)
        dev = np.asarray(x, dtype=float) - self.theta_star
        quad = float(np.dot(counts * dev, dev))
        noise_floor = float(self.masks[idx].sum()) * self.noise_std**2
        return (quad + noise_floor) / len(idx)

    def condition_number(self, agents=None) -> tuple[float, float, float]:
        """(mu, L, kappa) of the aggregated objective; exact from coverage counts."""
        idx = _as_agent_array(agents, self.n_agents)
        counts = self.masks[idx].sum(axis=0)
        cmin = int(counts.min())
        if cmin == 0:
            raise ValueError("aggregated objective is not strongly convex: some coordinate is unobserved")
        mu = 2.0 * cmin / len(idx)
        L = 2.0 * int(counts.max()) / len(idx)
        return mu, L, L / mu

    def minimizer(self, agents=None) -> np.ndarray:
        return self.theta_star.copy()


def make_grid_estimation(
    graph: Graph,
    sensing_radius: float,
    theta_range: tuple[float, float],
    noise_std: float,
    seed: int,
) -> LinearMeasurementProblem:
    """Measurement problem over a positioned graph: one parameter per agent location.

    Agent i measures every coordinate whose location is within sensing_radius
    of its own. theta_star is sampled uniformly from theta_range, seeded.
    """
    if graph.positions is None:
        raise ValueError("grid estimation needs agent positions")
    if sensing_radius <= 0:
        raise ValueError(f"sensing_radius must be positive, got {sensing_radius}")
    lo, hi = theta_range
    if not lo < hi:
        raise ValueError(f"theta_range must be increasing, got {theta_range}")
    pos = graph.positions
    diff = pos[:, None, :] - pos[None, :, :]
    masks = (diff**2).sum(axis=2) <= sensing_radius**2
    theta = np.random.default_rng(seed).uniform(lo, hi, graph.n)
    return LinearMeasurementProblem(theta, masks, noise_std)


@dataclass(frozen=True)
class LogisticProblem:
    """l2-regularized logistic regression on a dataset shared by all agents."""

    features: np.ndarray
    labels: np.ndarray
    lam: float
    holdout_features: np.ndarray | None = None
    holdout_labels: np.ndarray | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("features must be a nonempty (m, d) matrix")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must match the number of feature rows")
        if not np.isin(labels, (-1.0, 1.0)).all():
            raise ValueError("labels must be -1 or +1")
        if self.lam < 0:
            raise ValueError(f"regularization must be nonnegative, got {self.lam}")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if (self.holdout_features is None) != (self.holdout_labels is None):
            raise ValueError("holdout features and labels must be given together")
        if self.holdout_features is not None:
            hf = np.asarray(self.holdout_features, dtype=float)
            hl = np.asarray(self.holdout_labels, dtype=float)
            if hf.ndim != 2 or hf.shape[1] != feats.shape[1] or hl.shape != (hf.shape[0],):
                raise ValueError("holdout arrays have inconsistent shapes")
            hf.setflags(write=False)
            hl.setflags(write=False)
            object.__setattr__(self, "holdout_features", hf)
            object.__setattr__(self, "holdout_labels", hl)

    @property
    def n_points(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def support_mask(self, agent: int) -> np.ndarray:
        return np.ones(self.dim, dtype=bool)

    def _batch_gradient(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        feats = self.features[idx]
        labels = self.labels[idx]
        margins = labels * (feats @ x)
        # sigmoid(-margin): weight of each point's gradient term
        w = 1.0 / (1.0 + np.exp(margins))
        return -(feats.T @ (labels * w)) / len(idx) + self.lam * x

    def sample(self, batch_size: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Minibatch gradient from a uniform without-replacement batch."""
        if not 1 <= batch_size <= self.n_points:
            raise ValueError(f"batch_size must be in [1, {self.n_points}], got {batch_size}")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"query must have dimension {self.dim}, got {x.shape}")
        idx = rng.choice(self.n_points, size=batch_size, replace=False)
        return self._batch_gradient(idx, x)

    def sample_round(self, X: np.ndarray, t: int, master_seed: int, batch_size: int) -> np.ndarray:
        """Honest minibatch gradients for all agents; agent i takes the i-th draw of the round stream."""
        rng = round_stream(master_seed, t)
        out = np.empty_like(X)
        for i in range(X.shape[0]):
            idx = rng.choice(self.n_points, size=batch_size, replace=False)
            out[i] = self._batch_gradient(idx, X[i])
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Full-batch gradient (identical for every agent)."""
        return self._batch_gradient(np.arange(self.n_points), np.asarray(x, dtype=float))

    def local_gradients(self, X: np.ndarray) -> np.ndarray:
        return np.vstack([self.gradient(X[i]) for i in range(X.shape[0])])

    def true_gradient(self, x: np.ndarray, agents=None) -> np.ndarray:
        return self.gradient(x)

    def objective(self, x: np.ndarray, agents=None) -> float:
        x = np.asarray(x, dtype=float)
        margins = self.labels * (self.features @ x)
        return float(np.logaddexp(0.0, -margins).mean() + 0.5 * self.lam * float(x @ x))

    def condition_number(self, agents=None) -> tuple[float, float, float]:
        """(mu, L, kappa) with mu = lam (regularizer lower bound, conservative kappa)."""
        if self.lam <= 0:
            raise ValueError("condition number needs lam > 0 for strong convexity")
        data_l = _top_eigenvalue_gram(self.features) / (4.0 * self.n_points)
        L = self.lam + data_l
        return self.lam, L, L / self.lam

    def minimizer(self, agents=None) -> np.ndarray:
        return solve_minimizer(self)


def _top_eigenvalue_gram(feats: np.ndarray, rtol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest eigenvalue of feats^T feats by power iteration (PSD, Rayleigh monotone)."""
    d = feats.shape[1]
    v = np.random.default_rng(5678).standard_normal(d)
    norm = np.linalg.norm(v)
    if norm == 0:
        return 0.0
    v /= norm
    prev = None
    for _ in range(max_iter):
        w = feats.T @ (feats @ v)
        est = float(v @ w)
        nw = float(np.linalg.norm(w))
        if nw < 1e-154:
            return 0.0
        v = w / nw
        if prev is not None and abs(est - prev) <= rtol * max(abs(est), 1e-30):
            return est
        prev = est
    raise NumericalFailure(f"gram-matrix power iteration did not converge in {max_iter} iterations")


def make_synthetic_classification(
    n_points: int,
    dim: int,
    margin: float,
    seed: int,
    lam: float = 0.0,
    holdout_fraction: float = 0.25,
    spread: float = 1.0,
) -> LogisticProblem:
    """Two Gaussian blobs with centers at -margin and +margin along a random direction.

    `spread` is the per-coordinate standard deviation of each blob; it also
    sets the feature scale, and with it the data term of the smoothness
    constant, so small spreads keep the regularized problem well conditioned.
    Labels are balanced; the last holdout_fraction of the shuffled points is
    held out for accuracy measurement. Deterministic given the seed.
    """
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    if n_points < 4:
        raise ValueError(f"need at least 4 points, got {n_points}")
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must lie in [0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    labels = np.where(np.arange(n_points) % 2 == 0, 1.0, -1.0)
    feats = spread * rng.standard_normal((n_points, dim)) + np.outer(labels * margin, direction)
    perm = rng.permutation(n_points)
    feats, labels = feats[perm], labels[perm]
    n_hold = int(round(n_points * holdout_fraction))
    if n_hold == 0:
        return LogisticProblem(feats, labels, lam)
    return LogisticProblem(
        feats[:-n_hold], labels[:-n_hold], lam,
        holdout_features=feats[-n_hold:], holdout_labels=labels[-n_hold:],
    )


def load_classification_csv(path, lam: float, holdout_fraction: float = 0.0) -> LogisticProblem:
    """Dataset from CSV rows of d feature columns followed by a +-1 label column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("CSV needs at least one feature column and a label column")
    feats, labels = data[:, :-1], data[:, -1]
    n_hold = int(round(len(labels) * holdout_fraction))
    if n_hold == 0:
        return LogisticProblem(feats, labels, lam)
    return LogisticProblem(
        feats[:-n_hold], labels[:-n_hold], lam,
        holdout_features=feats[-n_hold:], holdout_labels=labels[-n_hold:],
    )


@dataclass(frozen=True)
class ScalarQuadraticProblem:
    """n agents sharing the scalar objective (x - center)^2; noise-free oracle."""

    n: int
    center: float = 0.0

    @property
    def n_agents(self) -> int:
        return self.n

    @property
    def dim(self) -> int:
        return 1

    def support_mask(self, agent: int) -> np.ndarray:
        return np.ones(1, dtype=bool)

    def sample(self, agent: int, x: np.ndarray, rng=None) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=float) - self.center)

    def sample_round(self, X: np.ndarray, t: int, master_seed: int) -> np.ndarray:
        return 2.0 * (X - self.center)

    def local_gradients(self, X: np.ndarray) -> np.ndarray:
        return 2.0 * (X - self.center)

    def true_gradient(self, x: np.ndarray, agents=None) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=float) - self.center)

    def objective(self, x: np.ndarray, agents=None) -> float:
        return float((np.asarray(x, dtype=float)[0] - self.center) ** 2)

    def condition_number(self, agents=None) -> tuple[float, float, float]:
        return 2.0, 2.0, 1.0

    def minimizer(self, agents=None) -> np.ndarray:
        return np.array([self.center])


def gradient_step(x: np.ndarray, grad: np.ndarray, alpha: float) -> np.ndarray:
    """One gradient-descent step; contracts distance to the minimizer by (1 - alpha mu)
    whenever 0 < alpha <= 2/(L + mu)."""
    return x - alpha * grad


def solve_minimizer(problem, agents=None, tol: float = 1e-9, max_iter: int = 500_000) -> np.ndarray:
    """High-precision minimizer by full-gradient descent at the contraction-optimal step 2/(L + mu)."""
    mu, L, _ = problem.condition_number(agents)
    alpha = 2.0 / (L + mu)
    x = np.zeros(problem.dim)
    for _ in range(max_iter):
        g = problem.true_gradient(x, agents)
        if np.linalg.norm(g) <= tol:
            return x
        x = gradient_step(x, g, alpha)
    raise NumericalFailure(f"minimizer solve did not reach |grad| <= {tol} in {max_iter} iterations")


def feasible_rho(kappa: float) -> float:
    """Largest tolerable attacked fraction: the strict bound 1/(1 + kappa)."""
    if kappa < 1.0:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    return 1.0 / (1.0 + kappa)


def check_attack_fraction(rho: float, kappa: float) -> bool:
    """True iff the attacked fraction is strictly below the feasibility bound."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho < feasible_rho(kappa)


def max_attacked_count(n: int, kappa: float) -> int:
    """Largest attacked-agent count b with b/n strictly below the feasibility bound."""
    bound = feasible_rho(kappa)
    b = min(n, math.floor(n * bound))
    while b > 0 and not b / n < bound:
        b -= 1
    return b
