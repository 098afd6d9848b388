"""Tabular softmax actor with analytic probability Jacobians."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np


def softmax_rows(theta: np.ndarray) -> np.ndarray:
    z = theta - theta.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TabularSoftmaxPolicy:
    """``pi(a|s) = softmax(theta[s])``; the parameter vector is ``theta.ravel()``."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float, copy=True)
        if theta.ndim != 2:
            raise ValueError(f"theta must be (n_states, n_actions), got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta has non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "TabularSoftmaxPolicy":
        return cls(np.zeros((n_states, n_actions)))

    @property
    def n_states(self) -> int:
        return self.theta.shape[0]

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    @property
    def n_params(self) -> int:
        return self.theta.size

    @cached_property
    def _probs(self) -> np.ndarray:
        p = softmax_rows(self.theta)
        p.setflags(write=False)
        return p

    def probs(self) -> np.ndarray:
        return self._probs

    def action_probs(self, s: int) -> np.ndarray:
        return self._probs[s]

    def jacobian(self, s: int, a: int) -> np.ndarray:
        """Gradient of ``pi(a|s)`` with respect to the flattened ``theta``."""
        A = self.n_actions
        p = self._probs[s]
        g = np.zeros(self.n_params)
        block = -p[a] * p
        block[a] += p[a]
        g[s * A:(s + 1) * A] = block
        return g

    @cached_property
    def _jac_table(self) -> np.ndarray:
        S, A = self.theta.shape
        p = self._probs
        # local[s, a, b] = d pi(a|s) / d theta[s, b]
        local = p[:, :, None] * (np.eye(A)[None] - p[:, None, :])
        jac = np.zeros((S, A, S, A))
        idx = np.arange(S)
        jac[idx, :, idx, :] = local
        jac = jac.reshape(S, A, S * A)
        jac.setflags(write=False)
        return jac

    def jacobian_table(self) -> np.ndarray:
        """``J[s, a, k] = d pi(a|s) / d theta_k`` for every pair."""
        return self._jac_table

    def with_theta(self, theta) -> "TabularSoftmaxPolicy":
        return TabularSoftmaxPolicy(np.reshape(theta, self.theta.shape))

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "TabularSoftmaxPolicy":
        return cls(doc["theta"])

    @classmethod
    def load(cls, path) -> "TabularSoftmaxPolicy":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def as_policy(x) -> TabularSoftmaxPolicy:
    return x if isinstance(x, TabularSoftmaxPolicy) else TabularSoftmaxPolicy(x)


def action_probs(policy, s: int) -> np.ndarray:
    return as_policy(policy).action_probs(s)


def policy_jacobian(policy, s: int, a: int) -> np.ndarray:
    return as_policy(policy).jacobian(s, a)
