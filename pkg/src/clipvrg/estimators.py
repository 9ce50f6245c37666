"""scikit-learn front end: train a linear classifier over a simulated agent network.

These estimators wrap the simulation engine behind the standard fit/predict
surface so the method drops into sklearn pipelines, grid search and
cross-validation. Each fit builds a regularized logistic problem from (X, y),
replicates it on every agent of the chosen topology, optionally attacks a
subset of oracles, runs the configured number of rounds and keeps the final
network-average iterate as the linear decision function.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import engine, topology
from .attacks import AttackSpec, sample_attacked_set
from .problems import LogisticProblem
from .schedules import (
    OPTIMAL_TAU_ALPHA,
    OPTIMAL_TAU_GAMMA,
    Schedule,
    ScheduleSet,
    min_phi,
)
from .streams import ATTACK_TAG, TOPOLOGY_TAG, derive_seed, setup_stream


class _NetworkClassifier(BaseEstimator, ClassifierMixin):
    """Shared plumbing: topology construction, label mapping, prediction."""

    def __init__(
        self,
        n_agents=15,
        topology="cycle",
        topology_k=6,
        topology_radius=0.3,
        n_attacked=0,
        attack_value=1.0,
        rounds=20_000,
        batch_size=32,
        lam=0.1,
        seed=0,
    ):
        self.n_agents = n_agents
        self.topology = topology
        self.topology_k = topology_k
        self.topology_radius = topology_radius
        self.n_attacked = n_attacked
        self.attack_value = attack_value
        self.rounds = rounds
        self.batch_size = batch_size
        self.lam = lam
        self.seed = seed

    def _build_graph(self) -> topology.Graph:
        if self.topology == "cycle":
            return topology.build_cycle_k(self.n_agents, self.topology_k)
        if self.topology == "complete":
            return topology.build_complete(self.n_agents)
        if self.topology == "geometric":
            graph = topology.build_random_geometric(
                self.n_agents, self.topology_radius, derive_seed(self.seed, TOPOLOGY_TAG)
            )
            if not topology.is_connected(graph):
                raise ValueError(
                    "sampled geometric topology is disconnected; increase topology_radius"
                )
            return graph
        raise ValueError(f"unknown topology {self.topology!r}")

    def _run(self, problem: LogisticProblem, mixing: topology.MixingMatrix) -> np.ndarray:
        raise NotImplementedError

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary classifier, got {len(self.classes_)} classes")
        labels = np.where(y == self.classes_[1], 1.0, -1.0)
        problem = LogisticProblem(X, labels, lam=self.lam)
        graph = self._build_graph()
        mixing = topology.metropolis_weights(graph)
        final_x = self._run(problem, mixing)
        self.coef_ = final_x
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = self.rounds
        return self

    def _attack(self) -> AttackSpec:
        if self.n_attacked == 0:
            return AttackSpec()
        attacked = sample_attacked_set(
            self.n_agents, self.n_attacked, setup_stream(self.seed, ATTACK_TAG)
        )
        return AttackSpec(attacked=attacked, mode="constant", value=self.attack_value)

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return X @ self.coef_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]


class ClipVRGClassifier(_NetworkClassifier):
    """Clipped variance-reduced distributed SGD; tolerates attacked gradient oracles.

    Decaying sequences are power laws with the rate-optimal exponents by
    default; the shared offset is chosen automatically from the topology's
    spectral gap so the consensus bound applies.
    """

    def __init__(
        self,
        n_agents=15,
        topology="cycle",
        topology_k=6,
        topology_radius=0.3,
        n_attacked=0,
        attack_value=1.0,
        rounds=20_000,
        batch_size=32,
        lam=0.1,
        seed=0,
        c_alpha=1.5,
        tau_alpha=OPTIMAL_TAU_ALPHA,
        c_gamma=5.0,
        tau_gamma=OPTIMAL_TAU_GAMMA,
        c_eta=1.0,
    ):
        super().__init__(
            n_agents=n_agents,
            topology=topology,
            topology_k=topology_k,
            topology_radius=topology_radius,
            n_attacked=n_attacked,
            attack_value=attack_value,
            rounds=rounds,
            batch_size=batch_size,
            lam=lam,
            seed=seed,
        )
        self.c_alpha = c_alpha
        self.tau_alpha = tau_alpha
        self.c_gamma = c_gamma
        self.tau_gamma = tau_gamma
        self.c_eta = c_eta

    def _run(self, problem, mixing):
        schedules = ScheduleSet.build(
            c_alpha=self.c_alpha,
            tau_alpha=self.tau_alpha,
            c_gamma=self.c_gamma,
            tau_gamma=self.tau_gamma,
            c_eta=self.c_eta,
            phi=min_phi(mixing.beta, self.tau_alpha, self.tau_gamma),
        )
        result = engine.run(
            problem,
            mixing,
            self.rounds,
            self.seed,
            schedules=schedules,
            attack=self._attack(),
            batch_size=self.batch_size,
        )
        return result.final.x.mean(axis=0)


class DSGDClassifier(_NetworkClassifier):
    """Undefended diffusion-form distributed SGD baseline with stepsize c/(t+phi)^tau."""

    def __init__(
        self,
        n_agents=15,
        topology="cycle",
        topology_k=6,
        topology_radius=0.3,
        n_attacked=0,
        attack_value=1.0,
        rounds=20_000,
        batch_size=32,
        lam=0.1,
        seed=0,
        alpha_c=2.0,
        alpha_tau=1.0,
    ):
        super().__init__(
            n_agents=n_agents,
            topology=topology,
            topology_k=topology_k,
            topology_radius=topology_radius,
            n_attacked=n_attacked,
            attack_value=attack_value,
            rounds=rounds,
            batch_size=batch_size,
            lam=lam,
            seed=seed,
        )
        self.alpha_c = alpha_c
        self.alpha_tau = alpha_tau

    def _run(self, problem, mixing):
        result = engine.run(
            problem,
            mixing,
            self.rounds,
            self.seed,
            algorithm="dsgd",
            dsgd_alpha=Schedule(self.alpha_c, self.alpha_tau, 1),
            attack=self._attack(),
            batch_size=self.batch_size,
        )
        return result.final.x.mean(axis=0)
