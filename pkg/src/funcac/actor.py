"""Off-policy gradient from a linear functional critic, and the actor step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteGradient
from .mdp import stationary_distribution
from .oracles import functional_gradient
from .policy import TabularSoftmaxPolicy, as_policy


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    g: np.ndarray
    mode: str
    batch_size: int = 0


def _check_dim(features, xi):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (features.dim,):
        raise DimensionMismatch(f"critic weights {xi.shape} do not match feature dim {features.dim}")
    return xi


def _bracket(policy, Phi, Jac, xi, states, second_term):
    # per-state bracket sum_a [Qhat grad pi + pi grad Qhat], one row per entry of `states`
    qhat = Phi[states] @ xi
    out = np.einsum("na,nak->nk", qhat, policy.jacobian_table()[states])
    if second_term and Jac is not None:
        out += np.einsum("na,nadk,d->nk", policy.probs()[states], Jac[states], xi)
    return out


def off_policy_gradient(mdp, mu, policy, features, xi, mode="exact", *, states=None,
                        weights=None, batch_size=None, rng=None, d_mu=None,
                        second_term=True, tables=None) -> GradientEstimate:
    """Gradient of the functional value evaluator at ``policy`` for critic weights ``xi``.

    ``mode="exact"`` sums over states with weights ``d_mu``. ``mode="sample"``
    averages the per-state bracket over ``states`` (optionally ``weights``),
    or over ``batch_size`` states drawn from ``d_mu`` with ``rng``.
    """
    policy = as_policy(policy)
    xi = _check_dim(features, xi)
    Phi, Jac = features.tables(policy) if tables is None else tables
    if mode == "exact":
        d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
        return GradientEstimate(functional_gradient(d, policy, Phi, Jac, xi, second_term), "exact")
    if mode != "sample":
        raise ValueError(f"unknown gradient mode {mode!r}")
    if states is None:
        if rng is None or not batch_size:
            raise ValueError("sample mode needs explicit states or (rng, batch_size)")
        d = stationary_distribution(mdp, mu) if d_mu is None else d_mu
        states = rng.choice(mdp.n_states, size=batch_size, p=d)
    states = np.asarray(states, dtype=int)
    rows = _bracket(policy, Phi, Jac, xi, states, second_term)
    if weights is None:
        g = rows.mean(axis=0)
    else:
        g = np.asarray(weights, dtype=float) @ rows
    return GradientEstimate(g, "sample", len(states))


def onpolicy_approx_gradient(mdp, mu, policy, features, xi, mode="exact", **kw) -> GradientEstimate:
    """Same estimator with the ``pi * grad Qhat`` correction dropped."""
    return off_policy_gradient(mdp, mu, policy, features, xi, mode, second_term=False, **kw)


def actor_step(policy, g, eta: float, descent: bool = False) -> TabularSoftmaxPolicy:
    """``theta + eta g`` (ascent on J); ``descent=True`` flips the sign."""
    if eta < 0:
        raise ValueError("actor step size must be nonnegative")
    policy = as_policy(policy)
    vec = g.g if isinstance(g, GradientEstimate) else np.asarray(g, dtype=float)
    if not np.all(np.isfinite(vec)):
        raise NonFiniteGradient("gradient has non-finite entries")
    sign = -1.0 if descent else 1.0
    return policy.with_theta(policy.theta.ravel() + sign * eta * vec)
