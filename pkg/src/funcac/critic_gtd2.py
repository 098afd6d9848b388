"""Primal-dual GTD2 functional critic over the state features ``psi(s; theta)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .features import psi_table
from .oracles import _sa_weights
from .policy import as_policy


@dataclass(frozen=True, eq=False)
class Gtd2State:
    xi: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        nu = np.array(self.nu, dtype=float)
        if xi.shape != nu.shape or xi.ndim != 1:
            raise DimensionMismatch(f"xi {xi.shape} and nu {nu.shape} must be equal-length vectors")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def zeros(cls, dim: int) -> "Gtd2State":
        return cls(np.zeros(dim), np.zeros(dim))

    def to_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "nu": self.nu.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Gtd2State":
        return cls(doc["xi"], doc["nu"])


def gtd2_update(xi, nu, psi_s, psi_next, r, gamma, alpha, rho=1.0, fresh_dual=False):
    """Raw-vector step; ``rho = pi(a|s) / mu(a|s)`` corrects for off-policy actions.

    The primal step reads the dual from before this step unless ``fresh_dual``.
    """
    delta = r + gamma * (psi_next @ xi) - psi_s @ xi
    proj = psi_s @ nu
    nu_new = nu + (alpha * (rho * delta - proj)) * psi_s
    if fresh_dual:
        proj = psi_s @ nu_new
    xi_new = xi + (alpha * rho * proj) * (psi_s - gamma * psi_next)
    return xi_new, nu_new


def gtd2_step(state: Gtd2State, transition, policy, features, alpha: float, gamma: float,
              rho: float = 1.0, fresh_dual: bool = False) -> Gtd2State:
    """Both updates share the single step size ``alpha``."""
    if alpha < 0:
        raise ValueError("step size must be nonnegative")
    if features.dim != state.xi.shape[0]:
        raise DimensionMismatch(f"feature dim {features.dim} != critic dim {state.xi.shape[0]}")
    s, a, r, s2 = transition
    table = psi_table(features, as_policy(policy))
    xi, nu = gtd2_update(state.xi, state.nu, table[s], table[s2], r, gamma, alpha, rho, fresh_dual)
    return Gtd2State(xi, nu)


def importance_ratio(policy, mu, s: int, a: int) -> float:
    return float(as_policy(policy).probs()[s, a] / mu.probs[s, a])


def expected_update(mdp, mu, policy, features, xi, nu, d_mu=None):
    """Exact mean of the two update directions under ``d_mu x mu x P``."""
    policy = as_policy(policy)
    w = _sa_weights(mdp, mu, d_mu)[:, :, None] * mdp.transition
    table = psi_table(features, policy)
    pi = policy.probs()
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(mu.probs > 0, pi / mu.probs, 0.0)
    delta = (mdp.reward[:, :, None] + mdp.gamma * (table @ xi)[None, None, :]
             - (table @ xi)[:, None, None])
    proj = table @ nu
    d_nu = np.einsum("sat,sd->d", w * (rho[:, :, None] * delta - proj[:, None, None]), table)
    diff = table[:, None, None, :] - mdp.gamma * table[None, None, :, :]
    d_xi = np.einsum("sat,satd->d", w * (rho * proj[:, None])[:, :, None], diff)
    return d_xi, d_nu
