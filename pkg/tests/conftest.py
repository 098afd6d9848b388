import numpy as np
import pytest

from funcac.harness.envs import make_garnet, make_two_state_switch
from funcac.policy import TabularSoftmaxPolicy


def random_garnet(seed, gamma=0.9, max_states=8, max_actions=3):
    """Small random Garnet; sizes are drawn from the seed too."""
    rng = np.random.default_rng(1000 + seed)
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    b = int(rng.integers(1, S + 1))
    mdp, mu = make_garnet(S, A, max(b, 2) if S > 1 else 1, seed=seed, gamma=gamma)
    theta = rng.normal(size=(S, A))
    return mdp, mu, TabularSoftmaxPolicy(theta)


def central_diff(f, x, h=1e-6):
    """Jacobian of ``f`` at flat ``x`` by central differences; shape ``f(x).shape + (len(x),)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def value_iteration_q(mdp, pi, tol=1e-13):
    """Policy evaluation by fixed-point iteration, independent of any linear solve."""
    Q = np.zeros_like(mdp.reward)
    while True:
        V = (pi * Q).sum(axis=1)
        new = mdp.reward + mdp.gamma * mdp.transition @ V
        if np.abs(new - Q).max() < tol:
            return new
        Q = new


@pytest.fixture
def switch():
    return make_two_state_switch()


@pytest.fixture
def always_switch():
    # raw probability table; value oracles accept it directly
    return np.array([[0.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def garnet5():
    mdp, mu = make_garnet(5, 2, 3, seed=3, gamma=0.9)
    return mdp, mu


# ------------------------------------------------------- acceptance reporting

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` prints and records one pass/fail line."""
    def report(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append((n, line))
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
