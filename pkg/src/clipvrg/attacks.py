"""Adversarial overrides of per-agent gradient oracles.

Attacked agents keep following the algorithm; only the vector their oracle
returns is replaced. Outputs must stay finite so the round arithmetic stays
defined -- an unbounded adversary is represented by large finite magnitudes,
which clipping caps anyway.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AttackOutputError

MODES = ("constant", "sign_flip", "zero", "custom")
SUPPORTS = ("all", "measured")

# custom attack callback: (agent, round, query point) -> gradient vector
CustomAttack = Callable[[int, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttackSpec:
    """Which agents are attacked and what their oracles return instead."""

    attacked: frozenset[int] = frozenset()
    mode: str = "constant"
    value: float = 0.0
    support: str = "all"
    custom: CustomAttack | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "attacked", frozenset(int(i) for i in self.attacked))
        if self.mode not in MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}, expected one of {MODES}")
        if self.support not in SUPPORTS:
            raise ValueError(f"unknown attack support {self.support!r}, expected one of {SUPPORTS}")
        if (self.custom is not None) != (self.mode == "custom"):
            raise ValueError("a custom callback is required exactly when mode='custom'")
        if any(i < 0 for i in self.attacked):
            raise ValueError("attacked agent ids must be nonnegative")

    def rho(self, n: int) -> float:
        return len(self.attacked) / n

    def unattacked(self, n: int) -> tuple[int, ...]:
        return tuple(i for i in range(n) if i not in self.attacked)


NO_ATTACK = AttackSpec()


def _adversarial_vector(
    attack: AttackSpec,
    agent: int,
    honest: np.ndarray | None,
    t: int,
    x: np.ndarray | None,
    support_mask: np.ndarray | None,
    dim: int,
) -> np.ndarray:
    if attack.mode == "zero":
        return np.zeros(dim)
    if attack.mode == "constant":
        out = np.zeros(dim)
        if attack.support == "measured":
            if support_mask is None:
                raise ValueError("constant attack on measured support needs the agent's support mask")
            out[support_mask] = attack.value
        else:
            out[:] = attack.value
        return out
    if attack.mode == "sign_flip":
        if honest is None:
            raise ValueError("sign-flip attack needs the honest sample")
        return -honest
    out = np.asarray(attack.custom(agent, t, x), dtype=float)
    if out.shape != (dim,):
        raise AttackOutputError(f"custom attack returned shape {out.shape}, expected ({dim},)")
    if not np.isfinite(out).all():
        raise AttackOutputError(f"custom attack returned non-finite values at round {t}, agent {agent}")
    return out


def apply_attack(
    attack: AttackSpec,
    agent: int,
    honest: np.ndarray | None,
    t: int,
    x: np.ndarray | None = None,
    support_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Oracle output after the attack: pass-through for unattacked agents."""
    if agent not in attack.attacked:
        if honest is None:
            raise ValueError(f"agent {agent} is unattacked but no honest sample was given")
        return honest
    dim = len(honest) if honest is not None else (len(x) if x is not None else len(support_mask))
    return _adversarial_vector(attack, agent, honest, t, x, support_mask, dim)


def apply_attack_rows(attack: AttackSpec, samples: np.ndarray, X: np.ndarray, t: int, problem) -> np.ndarray:
    """Replace the attacked agents' rows of a full honest sample block, in place."""
    for i in attack.attacked:
        samples[i] = _adversarial_vector(
            attack, i, samples[i], t, X[i], problem.support_mask(i), samples.shape[1]
        )
    return samples


def sample_attacked_set(n: int, count: int, rng: np.random.Generator) -> frozenset[int]:
    """Uniform attacked subset of the given size."""
    if not 0 <= count <= n:
        raise ValueError(f"attacked count must lie in [0, {n}], got {count}")
    return frozenset(int(i) for i in rng.choice(n, size=count, replace=False))
