"""Policy-dependent feature maps ``phi(s, a; theta)`` and the state aggregate ``psi``.

Every family exposes full tables so that hot loops evaluate a policy once:
``table(policy)`` has shape ``(S, A, d)`` and ``jacobian_table(policy)`` has
shape ``(S, A, d, p)`` with ``p = S * A``.
"""

from __future__ import annotations

import numpy as np

from .oracles import q_values_and_grad
from .policy import as_policy


class FeatureMap:
    family = "abstract"
    theta_dependent = True

    def __init__(self, n_states: int, n_actions: int, dim: int):
        self.n_states = n_states
        self.n_actions = n_actions
        self.dim = dim

    @property
    def n_params(self) -> int:
        return self.n_states * self.n_actions

    @property
    def bound(self) -> float:
        """Declared upper bound ``C`` on ``||phi(s, a; theta)||``."""
        raise NotImplementedError

    def table(self, policy) -> np.ndarray:
        raise NotImplementedError

    def jacobian_table(self, policy) -> np.ndarray:
        raise NotImplementedError

    def tables(self, policy):
        """``(Phi, Jac)``; ``Jac`` is ``None`` for theta-independent families."""
        policy = as_policy(policy)
        if not self.theta_dependent:
            return self.table(policy), None
        return self.table(policy), self.jacobian_table(policy)

    def phi(self, s: int, a: int, policy) -> np.ndarray:
        return self.table(as_policy(policy))[s, a]

    def phi_jacobian(self, s: int, a: int, policy) -> np.ndarray:
        return self.jacobian_table(as_policy(policy))[s, a]

    def descriptor(self) -> dict:
        return {"family": self.family, "dim": self.dim}


class _StaticFeatures(FeatureMap):
    theta_dependent = False

    def __init__(self, table: np.ndarray):
        table = np.array(table, dtype=float)
        table.setflags(write=False)
        S, A, d = table.shape
        super().__init__(S, A, d)
        self._table = table
        self._bound = float(np.linalg.norm(table, axis=-1).max())

    @property
    def bound(self) -> float:
        return self._bound

    def table(self, policy=None) -> np.ndarray:
        return self._table

    def jacobian_table(self, policy=None) -> np.ndarray:
        return np.zeros((self.n_states, self.n_actions, self.dim, self.n_params))


class Tabular(_StaticFeatures):
    """One-hot over ``(s, a)`` in row-major order; ``d = S * A``."""

    family = "tabular"

    def __init__(self, n_states: int, n_actions: int):
        n = n_states * n_actions
        super().__init__(np.eye(n).reshape(n_states, n_actions, n))


class TabularState(_StaticFeatures):
    """One-hot over the state only, so that ``psi(s) = e_s``; ``d = S``."""

    family = "tabular_state"

    def __init__(self, n_states: int, n_actions: int):
        super().__init__(np.repeat(np.eye(n_states)[:, None, :], n_actions, axis=1))


class StaticFeatures(_StaticFeatures):
    """Arbitrary fixed table, e.g. the crossed Baird features."""

    family = "static"

    def __init__(self, table, family: str = "static"):
        super().__init__(table)
        self.family = family


class OracleQ(FeatureMap):
    """Scalar feature ``phi = Q_theta(s, a)``; ``xi = 1`` represents every ``Q_theta`` exactly."""

    family = "oracle_q"

    def __init__(self, mdp):
        super().__init__(mdp.n_states, mdp.n_actions, 1)
        self.mdp = mdp

    @property
    def bound(self) -> float:
        return self.mdp.r_max / (1.0 - self.mdp.gamma)

    def tables(self, policy):
        Q, dQ = q_values_and_grad(self.mdp, as_policy(policy))
        return Q[:, :, None], dQ[:, :, None, :]

    def table(self, policy) -> np.ndarray:
        return self.tables(policy)[0]

    def jacobian_table(self, policy) -> np.ndarray:
        return self.tables(policy)[1]


class PolicyAugmentedRandom(FeatureMap):
    """``phi = W [onehot(s, a); vec(pi_theta)]`` with a frozen random ``W``.

    ``W`` has shape ``(d, 2 S A)``; entries uniform on ``[-1, 1] / sqrt(d)``
    unless given explicitly.
    """

    family = "policy_augmented"

    def __init__(self, n_states: int, n_actions: int, dim: int, seed: int = 0, W=None):
        super().__init__(n_states, n_actions, dim)
        n = n_states * n_actions
        self.seed = seed
        if W is None:
            rng = np.random.default_rng(seed)
            W = rng.uniform(-1.0, 1.0, size=(dim, 2 * n)) / np.sqrt(dim)
        W = np.array(W, dtype=float)
        if W.shape != (dim, 2 * n):
            raise ValueError(f"W must have shape {(dim, 2 * n)}, got {W.shape}")
        W.setflags(write=False)
        self.W = W
        self._W_sa = W[:, :n]
        self._W_pol = W[:, n:]

    @property
    def bound(self) -> float:
        # ||x||^2 = 1 + sum_s ||pi(.|s)||^2 <= 1 + S
        return float(np.linalg.norm(self.W, 2) * np.sqrt(1.0 + self.n_states))

    def table(self, policy) -> np.ndarray:
        policy = as_policy(policy)
        pol = self._W_pol @ policy.probs().ravel()
        base = self._W_sa.T.reshape(self.n_states, self.n_actions, self.dim)
        return base + pol

    def jacobian_table(self, policy) -> np.ndarray:
        policy = as_policy(policy)
        dvec = policy.jacobian_table().reshape(self.n_params, self.n_params)
        J = self._W_pol @ dvec
        return np.broadcast_to(J, (self.n_states, self.n_actions) + J.shape).copy()

    def descriptor(self) -> dict:
        return {"family": self.family, "dim": self.dim, "seed": self.seed}


def psi_table(features: FeatureMap, policy) -> np.ndarray:
    policy = as_policy(policy)
    return np.einsum("sa,sad->sd", policy.probs(), features.table(policy))


def psi(features: FeatureMap, s: int, policy) -> np.ndarray:
    """``psi(s; theta) = sum_a pi(a|s) phi(s, a; theta)``."""
    return psi_table(features, policy)[s]


def psi_jacobian(features: FeatureMap, s: int, policy) -> np.ndarray:
    """Product rule: ``sum_a phi (x) grad pi(a|s) + pi(a|s) grad phi``; shape ``(d, p)``."""
    policy = as_policy(policy)
    Phi, Jac = features.tables(policy)
    out = np.einsum("ad,ak->dk", Phi[s], policy.jacobian_table()[s])
    if Jac is not None:
        out += np.einsum("a,adk->dk", policy.probs()[s], Jac[s])
    return out


FAMILIES = ("tabular", "tabular_state", "oracle_q", "policy_augmented")


def build_features(descriptor: dict, mdp, static_table=None) -> FeatureMap:
    """Instantiate a family from its run-config descriptor."""
    family = descriptor.get("family")
    S, A = mdp.n_states, mdp.n_actions
    if family == "tabular":
        return Tabular(S, A)
    if family == "tabular_state":
        return TabularState(S, A)
    if family == "oracle_q":
        return OracleQ(mdp)
    if family == "policy_augmented":
        return PolicyAugmentedRandom(S, A, int(descriptor["dim"]), int(descriptor.get("seed", 0)))
    if family == "baird":
        if static_table is None:
            raise ValueError("baird features are only available on the baird environment")
        return StaticFeatures(static_table, family="baird")
    raise ValueError(f"unknown feature family {family!r}")
