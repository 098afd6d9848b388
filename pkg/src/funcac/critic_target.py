"""Target-based linear functional critic with truncation and ridge regularization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionMismatch
from .features import psi
from .oracles import lambda_fixed_point
from .policy import as_policy


@dataclass(frozen=True, eq=False)
class TargetCriticState:
    xi: np.ndarray
    w: np.ndarray
    lam: float
    B1: float
    B2: float

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        w = np.array(self.w, dtype=float)
        if xi.shape != w.shape or xi.ndim != 1:
            raise DimensionMismatch(f"xi {xi.shape} and w {w.shape} must be equal-length vectors")
        if not self.B1 > self.B2 > 0:
            raise ValueError(f"need B1 > B2 > 0, got B1={self.B1}, B2={self.B2}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "w", w)

    @classmethod
    def zeros(cls, dim: int, lam: float, B1: float, B2: float) -> "TargetCriticState":
        return cls(np.zeros(dim), np.zeros(dim), lam, B1, B2)

    def to_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "w": self.w.tolist()}

    def restore(self, doc: dict) -> "TargetCriticState":
        return TargetCriticState(doc["xi"], doc["w"], self.lam, self.B1, self.B2)


def truncate(z: np.ndarray, B: float, mode: str = "ball") -> np.ndarray:
    """Project onto the ball of radius ``B``.

    ``mode="sphere"`` applies the literal rescaling ``B z / ||z||`` to every
    nonzero vector. The zero vector maps to itself in both modes.
    """
    if B <= 0:
        raise ValueError("truncation radius must be positive")
    norm = float(np.sqrt(z @ z))
    if norm == 0.0:
        return z
    if mode == "ball":
        return z if norm <= B else z * (B / norm)
    if mode == "sphere":
        return z * (B / norm)
    raise ValueError(f"unknown truncation mode {mode!r}")


def target_update(xi, w, phi_sa, psi_next, r, gamma, alpha, beta, lam, B1, B2,
                  fresh_xi=True, truncation="ball"):
    """One step on raw vectors; returns ``(xi_new, w_new)``."""
    td = r + gamma * (psi_next @ w) - phi_sa @ xi
    xi_new = (1.0 - alpha * lam) * xi + (alpha * td) * phi_sa
    src = xi_new if fresh_xi else xi
    w_new = truncate(w + beta * (truncate(src, B2, truncation) - w), B1, truncation)
    return xi_new, w_new


def critic_step(state: TargetCriticState, transition, policy, features, alpha: float, beta: float,
                gamma: float, fresh_xi: bool = True, truncation: str = "ball") -> TargetCriticState:
    """Regularized TD update of ``xi`` against the target ``w``, then the truncated ``w`` update.

    By default ``w`` moves toward the freshly updated ``xi``; ``fresh_xi=False``
    uses the previous one instead.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("step sizes must be nonnegative")
    if features.dim != state.xi.shape[0]:
        raise DimensionMismatch(f"feature dim {features.dim} != critic dim {state.xi.shape[0]}")
    policy = as_policy(policy)
    s, a, r, s2 = transition
    phi_sa = features.phi(s, a, policy)
    psi_next = psi(features, s2, policy)
    xi, w = target_update(state.xi, state.w, phi_sa, psi_next, r, gamma, alpha, beta,
                          state.lam, state.B1, state.B2, fresh_xi, truncation)
    return TargetCriticState(xi, w, state.lam, state.B1, state.B2)


def vanilla_td_update(xi, phi_sa, psi_next, r, gamma, alpha):
    """Plain off-policy semi-gradient TD: no target, no truncation, no regularizer."""
    td = r + gamma * (psi_next @ xi) - phi_sa @ xi
    return xi + (alpha * td) * phi_sa


def min_lambda(gamma: float, C: float, B1: float) -> float:
    """Smallest admissible regularizer ``max(4 gamma^2 C^2, 4 C / B1)``."""
    if C <= 0 or B1 <= 0:
        raise ValueError("C and B1 must be positive")
    return max(4.0 * gamma**2 * C**2, 4.0 * C / B1)


def critic_value(state, policy, features, s: int, a: int) -> float:
    xi = state.xi if hasattr(state, "xi") else np.asarray(state, dtype=float)
    if features.dim != xi.shape[0]:
        raise DimensionMismatch(f"feature dim {features.dim} != critic dim {xi.shape[0]}")
    return float(features.phi(s, a, policy) @ xi)


def calibrate_truncation(mdp, mu, policy, features, C: float | None = None, d_mu=None):
    """Self-consistent ``(lam, B1, B2)`` with ``lam = min_lambda(gamma, C, B1)``.

    ``B1 = 4 ||w*_lam|| + 1`` and ``B2 = B1 / 2``; since ``B1`` depends on
    ``lam`` through the fixed point, the scalar equation is solved by root finding.
    """
    C = features.bound if C is None else C
    gamma = mdp.gamma

    def radius(lam):
        return 4.0 * np.linalg.norm(lambda_fixed_point(mdp, mu, policy, features, lam, d_mu)) + 1.0

    def gap(lam):
        return lam - min_lambda(gamma, C, radius(lam))

    lo = 4.0 * gamma**2 * C**2
    hi = max(4.0 * C, lo)
    if lo > 0 and gap(lo) >= 0:
        lam = lo
    elif gap(hi) <= 0:
        lam = hi
    else:
        lam = brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12)
        # land on the admissible side of the root
        while gap(lam) < 0:
            lam = np.nextafter(lam, np.inf)
    B1 = radius(lam)
    return float(lam), float(B1), float(B1 / 2.0)
