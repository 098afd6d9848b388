"""Benchmark environments: Baird's star, random Garnet MDPs, the two-state switch."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CouldNotMakeErgodic
from ..features import StaticFeatures
from ..mdp import BehaviorPolicy, FiniteMdp, is_ergodic
from ..policy import TabularSoftmaxPolicy

DASHED, SOLID = 0, 1

# classic Baird weight initialization, repeated in each action block
BAIRD_STATE_INIT = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0])


def baird_state_features() -> np.ndarray:
    """The 7 x 8 feature matrix of the classic counterexample."""
    X = np.zeros((7, 8))
    for i in range(6):
        X[i, i] = 2.0
        X[i, 7] = 1.0
    X[6, 6] = 1.0
    X[6, 7] = 2.0
    return X


def make_baird(gamma: float = 0.99, greedy_score: float = 30.0):
    """Baird's 7-state star, adapted to state-action features.

    Returns ``(mdp, mu, features, target_policy)``. Dashed jumps uniformly to
    the six upper states, solid goes to the lower state; all rewards are zero.
    ``mu`` takes dashed with probability 6/7. The target policy is a softmax
    with score ``greedy_score`` on solid, i.e. solid up to ~1e-13.
    """
    S, A = 7, 2
    P = np.zeros((S, A, S))
    P[:, DASHED, :6] = 1.0 / 6.0
    P[:, SOLID, 6] = 1.0
    mdp = FiniteMdp(P, np.zeros((S, A)), gamma)
    mu = BehaviorPolicy(np.tile([6.0 / 7.0, 1.0 / 7.0], (S, 1)))
    X = baird_state_features()
    table = np.zeros((S, A, 2 * X.shape[1]))
    for a in range(A):
        table[:, a, a * 8:(a + 1) * 8] = X
    features = StaticFeatures(table, family="baird")
    theta = np.zeros((S, A))
    theta[:, SOLID] = greedy_score
    return mdp, mu, features, TabularSoftmaxPolicy(theta)


def baird_initial_weights() -> np.ndarray:
    return np.concatenate([BAIRD_STATE_INIT, BAIRD_STATE_INIT])


def make_garnet(n_states: int, n_actions: int, branching: int, reward_scale: float = 1.0,
                seed: int = 0, gamma: float = 0.9, max_retries: int = 100):
    """Random Garnet MDP with a uniform behavior policy; returns ``(mdp, mu)``.

    Each ``(s, a)`` reaches ``branching`` distinct states with Dirichlet(1)
    probabilities; rewards are uniform on ``[0, reward_scale]``. Non-ergodic
    draws are redrawn from the stream ``(seed, attempt)`` so distinct
    seeds never alias each other.
    """
    if not 1 <= branching <= n_states:
        raise ValueError(f"branching must be in [1, {n_states}], got {branching}")
    mu = BehaviorPolicy.uniform(n_states, n_actions)
    for attempt in range(max_retries):
        rng = np.random.default_rng((seed, attempt))
        P = np.zeros((n_states, n_actions, n_states))
        for s in range(n_states):
            for a in range(n_actions):
                targets = rng.choice(n_states, size=branching, replace=False)
                P[s, a, targets] = rng.dirichlet(np.ones(branching))
        # renormalize away the last-ulp drift of the Dirichlet draw
        P /= P.sum(axis=2, keepdims=True)
        r = rng.uniform(0.0, reward_scale, size=(n_states, n_actions))
        mdp = FiniteMdp(P, r, gamma)
        if is_ergodic(mdp, mu):
            return mdp, mu
    raise CouldNotMakeErgodic(f"no ergodic Garnet MDP after {max_retries} seeds from {seed}")


def make_two_state_switch():
    """Stay/switch chain with ``r = 1{s = 1}``, ``gamma = 0.5`` and a 50/50 behavior policy."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0   # stay
    P[0, 1, 1] = P[1, 1, 0] = 1.0   # switch
    r = np.array([[0.0, 0.0], [1.0, 1.0]])
    return FiniteMdp(P, r, 0.5), BehaviorPolicy.uniform(2, 2)


@dataclass
class EnvironmentSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("baird", "garnet", "two_state_switch", "from_file")

    def build(self):
        """Returns ``(mdp, mu, static_feature_table_or_None)``."""
        p = self.params
        if self.kind == "baird":
            mdp, mu, feats, _ = make_baird(gamma=p.get("gamma", 0.99))
            return mdp, mu, feats.table()
        if self.kind == "garnet":
            mdp, mu = make_garnet(
                int(p["n_states"]), int(p["n_actions"]), int(p["branching"]),
                float(p.get("reward_scale", 1.0)), int(p.get("seed", 0)),
                float(p.get("gamma", 0.9)),
            )
            return mdp, mu, None
        if self.kind == "two_state_switch":
            mdp, mu = make_two_state_switch()
            return mdp, mu, None
        if self.kind == "from_file":
            mdp = FiniteMdp.load(p["path"])
            if p.get("behavior_path"):
                import json
                with open(p["behavior_path"]) as f:
                    mu = BehaviorPolicy.from_dict(json.load(f))
            else:
                mu = BehaviorPolicy.uniform(mdp.n_states, mdp.n_actions)
            return mdp, mu, None
        raise ValueError(f"unknown environment kind {self.kind!r}")
