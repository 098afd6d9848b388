"""Finite MDPs, behavior-policy chain analysis and transition sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import networkx as nx
import numpy as np

from .errors import BadDiscount, NonFiniteReward, NotErgodic, RowNotStochastic

ROW_TOL = 1e-12


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite discounted MDP with ``transition[s, a, s']`` and ``reward[s, a]``.

    Construction validates every invariant (see :func:`validate_mdp`).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    r_max: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "gamma", float(self.gamma))
        validate_mdp(self)
        object.__setattr__(self, "r_max", float(np.max(np.abs(self.reward))))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FiniteMdp":
        mdp = cls(doc["transition"], doc["reward"], doc["gamma"])
        if "n_states" in doc and doc["n_states"] != mdp.n_states:
            raise ValueError("n_states disagrees with the transition tensor")
        if "n_actions" in doc and doc["n_actions"] != mdp.n_actions:
            raise ValueError("n_actions disagrees with the transition tensor")
        return mdp

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "FiniteMdp":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True, eq=False)
class BehaviorPolicy:
    """Fixed data-collection policy ``probs[s, a] = mu(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise ValueError("behavior probabilities must be a 2-d table")
        for s, row in enumerate(probs):
            if np.any(row < 0) or abs(row.sum() - 1.0) > ROW_TOL:
                raise RowNotStochastic(s, total=float(row.sum()))
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "BehaviorPolicy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "BehaviorPolicy":
        return cls(doc["probs"])


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


class SamplingMode(str, Enum):
    IID = "iid"
    TRAJECTORY = "trajectory"


def validate_mdp(mdp: FiniteMdp) -> None:
    P, r = mdp.transition, mdp.reward
    if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
        raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
    if r.shape != P.shape[:2]:
        raise ValueError(f"reward shape {r.shape} does not match transition {P.shape}")
    for s in range(P.shape[0]):
        for a in range(P.shape[1]):
            row = P[s, a]
            if not np.all(np.isfinite(row)) or np.any(row < 0) or abs(row.sum() - 1.0) > ROW_TOL:
                raise RowNotStochastic(s, a, float(row.sum()))
            if not np.isfinite(r[s, a]):
                raise NonFiniteReward(s, a)
    if not (0.0 <= mdp.gamma < 1.0):
        raise BadDiscount(mdp.gamma)


def _probs_of(policy) -> np.ndarray:
    return policy.probs if isinstance(policy, BehaviorPolicy) else np.asarray(
        policy.probs() if callable(getattr(policy, "probs", None)) else policy, dtype=float
    )


def policy_transition_matrix(mdp: FiniteMdp, policy_probs) -> np.ndarray:
    """State chain ``P_pi[s, s'] = sum_a pi(a|s) P[s, a, s']``."""
    pi = _probs_of(policy_probs)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy table has shape {pi.shape}")
    bad = np.any(pi < 0, axis=1) | (np.abs(pi.sum(axis=1) - 1.0) > ROW_TOL)
    if bad.any():
        s = int(np.argmax(bad))
        raise RowNotStochastic(s, total=float(pi[s].sum()))
    return np.einsum("sa,sat->st", pi, mdp.transition)


def _state_action_graph(mdp: FiniteMdp, mu: BehaviorPolicy) -> nx.DiGraph:
    # nodes are (s, a) pairs in the support of mu
    S, A = mdp.n_states, mdp.n_actions
    support = mu.probs > 0
    g = nx.DiGraph()
    g.add_nodes_from((s, a) for s in range(S) for a in range(A) if support[s, a])
    for s, a in list(g.nodes):
        for s2 in np.flatnonzero(mdp.transition[s, a] > 0):
            for a2 in np.flatnonzero(support[s2]):
                g.add_edge((s, a), (int(s2), int(a2)))
    return g


def is_ergodic(mdp: FiniteMdp, mu: BehaviorPolicy) -> bool:
    """Irreducible and aperiodic state-action chain on the support of ``mu``."""
    g = _state_action_graph(mdp, mu)
    return nx.is_strongly_connected(g) and nx.is_aperiodic(g)


def stationary_distribution(
    mdp: FiniteMdp, mu: BehaviorPolicy, tol: float = 1e-12, max_iter: int = 1_000_000
) -> np.ndarray:
    """Stationary state distribution of the chain under ``mu``.

    Power iteration until the L1 residual drops below ``tol``; falls back to a
    direct solve of the normalized balance equations if that does not happen.
    """
    if not is_ergodic(mdp, mu):
        raise NotErgodic("chain induced by the behavior policy is not ergodic")
    P = policy_transition_matrix(mdp, mu)
    S = mdp.n_states
    d = np.full(S, 1.0 / S)
    for _ in range(max_iter):
        nxt = d @ P
        nxt /= nxt.sum()
        if np.abs(nxt - d).sum() < tol:
            d = nxt
            break
        d = nxt
    else:
        M = np.vstack([P.T - np.eye(S), np.ones((1, S))])
        rhs = np.zeros(S + 1)
        rhs[-1] = 1.0
        d = np.linalg.lstsq(M, rhs, rcond=None)[0]
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def sample_transition(mdp, mu, mode, rng, current_state=None, d_mu=None):
    """Draw one transition; returns ``(Transition, next current_state)``.

    In IID mode ``(s, a)`` comes from ``d_mu x mu`` (computed if not given) and
    the current state is returned unchanged.
    """
    mode = SamplingMode(mode)
    if mode is SamplingMode.IID:
        if d_mu is None:
            d_mu = stationary_distribution(mdp, mu)
        s = int(rng.choice(mdp.n_states, p=d_mu))
    else:
        if current_state is None or not (0 <= current_state < mdp.n_states):
            raise ValueError(f"invalid current state {current_state}")
        s = int(current_state)
    a = int(rng.choice(mdp.n_actions, p=mu.probs[s]))
    s_next = int(rng.choice(mdp.n_states, p=mdp.transition[s, a]))
    tr = Transition(s, a, float(mdp.reward[s, a]), s_next)
    return tr, (s_next if mode is SamplingMode.TRAJECTORY else current_state)


class TransitionSampler:
    """Buffered inverse-CDF sampler used inside long runs.

    Draws uniforms in blocks from its own generator, so a given seed always
    yields the same transition stream.
    """

    def __init__(self, mdp, mu, mode, rng, start_state=0, block=4096):
        self.mdp, self.mu = mdp, mu
        self.mode = SamplingMode(mode)
        self.rng = rng
        self.block = block
        self.state = int(start_state)
        self._cum_p = np.cumsum(mdp.transition, axis=2)
        self._cum_p[..., -1] = 1.0
        self._cum_mu = np.cumsum(mu.probs, axis=1)
        self._cum_mu[:, -1] = 1.0
        if self.mode is SamplingMode.IID:
            d = stationary_distribution(mdp, mu)
            joint = (d[:, None] * mu.probs).ravel()
            self._cum_joint = np.cumsum(joint)
            self._cum_joint[-1] = 1.0
        self._buf = []
        self._pos = 0

    def _refill(self):
        A = self.mdp.n_actions
        if self.mode is SamplingMode.IID:
            u = self.rng.random((self.block, 2))
            sa = np.searchsorted(self._cum_joint, u[:, 0], side="right")
            # guard zero-mass pairs at the top of the range
            sa = np.minimum(sa, len(self._cum_joint) - 1)
            s, a = np.divmod(sa, A)
            rows = self._cum_p[s, a]
            s2 = np.minimum((u[:, 1:2] >= rows).sum(axis=1), self.mdp.n_states - 1)
            r = self.mdp.reward[s, a]
            self._buf = list(zip(s.tolist(), a.tolist(), r.tolist(), s2.tolist()))
        else:
            self._buf = self.rng.random((self.block, 2)).tolist()
        self._pos = 0

    def next(self) -> Transition:
        if self._pos >= len(self._buf):
            self._refill()
        item = self._buf[self._pos]
        self._pos += 1
        if self.mode is SamplingMode.IID:
            return Transition(*item)
        u1, u2 = item
        s = self.state
        a = min(int(np.searchsorted(self._cum_mu[s], u1, side="right")), self.mdp.n_actions - 1)
        s2 = min(int(np.searchsorted(self._cum_p[s, a], u2, side="right")), self.mdp.n_states - 1)
        self.state = s2
        return Transition(s, a, float(self.mdp.reward[s, a]), s2)
