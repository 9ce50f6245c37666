"""Decaying sequences driving the clipped variance-reduced method.

Three power-law sequences share one integer offset phi:

    alpha_t = c_alpha (t + phi)^-tau_alpha     stepsize
    gamma_t = c_gamma (t + phi)^-tau_gamma     clipping threshold
    eta_t   = c_eta   (t + phi)^-tau_eta       estimator mixing weight

Convergence requires 2 tau_gamma < tau_alpha < min(1, 1 - tau_gamma) and
tau_eta = 2(tau_alpha + tau_gamma)/3. The consensus bound additionally needs
phi large enough that alpha_{t+1} gamma_{t+1} > beta alpha_t gamma_t holds
for all t, which `min_phi` guarantees; `lemma1_constant` then gives the
constant c with sum_{s<t} beta^{t-s} alpha_s gamma_s <= c alpha_t gamma_t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Schedule:
    """One decaying sequence c * (t + phi)^-tau."""

    c: float
    tau: float
    phi: int

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"coefficient must be positive, got c={self.c}")
        if self.tau < 0:
            raise ValueError(f"exponent must be nonnegative, got tau={self.tau}")
        if self.phi < 1 or int(self.phi) != self.phi:
            raise ValueError(f"offset must be a positive integer, got phi={self.phi}")

    def eval(self, t):
        """Value at round t (t may be an integer or an array of integers)."""
        return self.c * (t + self.phi) ** (-self.tau) if self.tau != 0 else self.c * (t * 0 + 1.0)


@dataclass(frozen=True)
class ScheduleSet:
    """The (alpha, gamma, eta) triple with a shared offset."""

    alpha: Schedule
    gamma: Schedule
    eta: Schedule

    def __post_init__(self):
        if not (self.alpha.phi == self.gamma.phi == self.eta.phi):
            raise ValueError(
                f"schedules must share one phi, got "
                f"{self.alpha.phi}/{self.gamma.phi}/{self.eta.phi}"
            )

    @property
    def phi(self) -> int:
        return self.alpha.phi

    @property
    def tau_sum(self) -> float:
        return self.alpha.tau + self.gamma.tau

    @classmethod
    def build(
        cls,
        c_alpha: float,
        tau_alpha: float,
        c_gamma: float,
        tau_gamma: float,
        c_eta: float,
        phi: int,
        tau_eta: float | None = None,
        require_theorem: bool = True,
    ) -> "ScheduleSet":
        """Assemble a schedule set, deriving tau_eta when not given.

        With require_theorem the exponent constraints are enforced and a
        supplied tau_eta must match the derived value to 1e-12.
        """
        if require_theorem:
            violations = validate_exponents(tau_alpha, tau_gamma)
            if violations:
                raise ValueError("exponent constraints violated: " + "; ".join(violations))
            derived = derive_eta(tau_alpha, tau_gamma)
            if tau_eta is None:
                tau_eta = derived
            elif abs(tau_eta - derived) > 1e-12:
                raise ValueError(
                    f"tau_eta={tau_eta} inconsistent with 2(tau_alpha+tau_gamma)/3={derived}"
                )
        elif tau_eta is None:
            tau_eta = 2.0 * (tau_alpha + tau_gamma) / 3.0
        return cls(
            alpha=Schedule(c_alpha, tau_alpha, phi),
            gamma=Schedule(c_gamma, tau_gamma, phi),
            eta=Schedule(c_eta, tau_eta, phi),
        )


def validate_exponents(tau_alpha: float, tau_gamma: float) -> list[str]:
    """Named violations of the constraints 2 tau_gamma < tau_alpha <= min(1, 1 - tau_gamma).

    The upper bound admits equality so the rate-optimal assignment
    (tau_alpha, tau_gamma) = (5/6, 1/6), which sits exactly on it, is valid.
    An empty list means the constraints hold; violations are data, not errors.
    """
    violations = []
    if tau_gamma <= 0:
        violations.append(f"tau_gamma must be positive: tau_gamma = {tau_gamma}")
    if not 2.0 * tau_gamma < tau_alpha:
        violations.append(f"2*tau_gamma < tau_alpha fails: 2*{tau_gamma} = {2 * tau_gamma} >= {tau_alpha}")
    upper = min(1.0, 1.0 - tau_gamma)
    if tau_alpha > upper + 1e-12:
        violations.append(f"tau_alpha <= min(1, 1 - tau_gamma) fails: {tau_alpha} > {upper}")
    return violations


def derive_eta(tau_alpha: float, tau_gamma: float) -> float:
    """The estimator exponent 2(tau_alpha + tau_gamma)/3 implied by the step/clip exponents."""
    violations = validate_exponents(tau_alpha, tau_gamma)
    if violations:
        raise ValueError("exponent constraints violated: " + "; ".join(violations))
    return 2.0 * (tau_alpha + tau_gamma) / 3.0


def min_phi(beta: float, tau_alpha: float, tau_gamma: float) -> int:
    """Smallest positive integer strictly above 1/(1 - beta^(1/(tau_alpha+tau_gamma))) - 1."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    tau_sum = tau_alpha + tau_gamma
    if tau_sum <= 0:
        raise ValueError(f"tau_alpha + tau_gamma must be positive, got {tau_sum}")
    if beta == 0.0:
        return 1
    bound = 1.0 / (1.0 - beta ** (1.0 / tau_sum)) - 1.0
    phi = max(1, math.floor(bound) + 1)
    # The closed form can round just below an exact-integer boundary; what the
    # offset must actually guarantee is (phi/(phi+1))^tau_sum > beta, strictly.
    while (phi / (phi + 1.0)) ** tau_sum <= beta:
        phi += 1
    return phi


def lemma1_constant(beta: float, tau_alpha: float, tau_gamma: float, phi: int) -> float:
    """Consensus-bound constant: the larger of the two lower bounds.

    Both beta / [(phi/(1+phi))^(tau_alpha+tau_gamma) - beta] (induction step)
    and beta (1 + 1/phi)^(tau_alpha+tau_gamma) (base case) must hold.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if phi < 1:
        raise ValueError(f"phi must be a positive integer, got {phi}")
    if beta == 0.0:
        return 0.0
    tau_sum = tau_alpha + tau_gamma
    shrink = (phi / (1.0 + phi)) ** tau_sum
    denom = shrink - beta
    if denom <= 0.0:
        raise ValueError(
            f"phi={phi} too small for beta={beta}: need phi >= {min_phi(beta, tau_alpha, tau_gamma)}"
        )
    return max(beta / denom, beta * (1.0 + 1.0 / phi) ** tau_sum)


def lemma1_compliant(beta: float, tau_alpha: float, tau_gamma: float, phi: int) -> bool:
    """Whether phi satisfies the consensus-bound offset requirement for this beta."""
    return phi >= min_phi(beta, tau_alpha, tau_gamma)


def rate_exponent_bound(tau_alpha: float, tau_gamma: float) -> float:
    """Supremum of provable convergence-rate exponents: min(tau_gamma, (tau_alpha - 2 tau_gamma)/3)."""
    violations = validate_exponents(tau_alpha, tau_gamma)
    if violations:
        raise ValueError("exponent constraints violated: " + "; ".join(violations))
    return min(tau_gamma, (tau_alpha - 2.0 * tau_gamma) / 3.0)


# The linear program max min(tau_gamma, tau_alpha/3 - 2 tau_gamma/3) subject to
# the exponent constraints is solved by this assignment; the achievable rate
# exponent approaches 1/6.
OPTIMAL_TAU_ALPHA = 5.0 / 6.0
OPTIMAL_TAU_GAMMA = 1.0 / 6.0
