import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from funcac.errors import BadDiscount, NonFiniteReward, NotErgodic, RowNotStochastic
from funcac.harness.envs import make_garnet
from funcac.mdp import (
    BehaviorPolicy,
    FiniteMdp,
    TransitionSampler,
    is_ergodic,
    policy_transition_matrix,
    sample_transition,
    stationary_distribution,
    validate_mdp,
)


def two_state(rows, gamma=0.5):
    P = np.array([[rows, rows], [rows, rows]], dtype=float)
    return FiniteMdp(P, np.zeros((2, 2)), gamma)


def eigen_stationary(P):
    vals, vecs = linalg.eig(P.T)
    v = vecs[:, np.argmin(np.abs(vals - 1.0))].real
    return v / v.sum()


# ---------------------------------------------------------------- validation

def test_valid_two_state_rows():
    validate_mdp(two_state([0.5, 0.5]))


def test_row_summing_to_more_than_one_rejected():
    with pytest.raises(RowNotStochastic) as err:
        two_state([0.6, 0.6])
    assert err.value.s == 0 and err.value.a == 0


def test_negative_entry_rejected():
    with pytest.raises(RowNotStochastic):
        two_state([1.5, -0.5])


def test_discount_one_rejected():
    with pytest.raises(BadDiscount):
        two_state([0.5, 0.5], gamma=1.0)


def test_nonfinite_reward_rejected():
    r = np.zeros((2, 2))
    r[1, 0] = np.nan
    with pytest.raises(NonFiniteReward) as err:
        FiniteMdp(np.full((2, 2, 2), 0.5), r, 0.5)
    assert (err.value.s, err.value.a) == (1, 0)


def test_r_max_recorded():
    r = np.array([[1.0, -3.0], [0.5, 2.0]])
    assert FiniteMdp(np.full((2, 2, 2), 0.5), r, 0.5).r_max == 3.0


def test_mdp_is_immutable():
    mdp = two_state([0.5, 0.5])
    with pytest.raises(ValueError):
        mdp.transition[0, 0, 0] = 1.0


def test_behavior_rows_validated():
    with pytest.raises(RowNotStochastic):
        BehaviorPolicy([[0.7, 0.7]])


def test_json_round_trip(tmp_path, garnet5):
    mdp, mu = garnet5
    path = tmp_path / "mdp.json"
    mdp.save(path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"n_states", "n_actions", "gamma", "transition", "reward"}
    back = FiniteMdp.load(path)
    np.testing.assert_array_equal(back.transition, mdp.transition)
    np.testing.assert_array_equal(back.reward, mdp.reward)
    assert back.gamma == mdp.gamma
    assert BehaviorPolicy.from_dict(mu.to_dict()).probs.tolist() == mu.probs.tolist()


# --------------------------------------------------------- P_pi and d_mu

def test_switch_policy_matrix(switch, always_switch):
    mdp, _ = switch
    np.testing.assert_array_equal(policy_transition_matrix(mdp, always_switch), [[0, 1], [1, 0]])


def test_uniform_policy_uniform_transitions():
    mdp = FiniteMdp(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 0.9)
    np.testing.assert_allclose(policy_transition_matrix(mdp, np.full((3, 2), 0.5)), 1 / 3, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_policy_matrix_row_stochastic(seed):
    rng = np.random.default_rng(seed)
    mdp, _ = make_garnet(int(rng.integers(2, 7)), 3, 2, seed=seed)
    pi = rng.dirichlet(np.ones(3), size=mdp.n_states)
    P = policy_transition_matrix(mdp, pi)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


def test_doubly_stochastic_gives_uniform():
    P = np.zeros((4, 1, 4))
    for s in range(4):
        P[s, 0, s] = 0.5
        P[s, 0, (s + 1) % 4] = 0.5
    mdp = FiniteMdp(P, np.zeros((4, 1)), 0.9)
    np.testing.assert_allclose(stationary_distribution(mdp, BehaviorPolicy.uniform(4, 1)), 0.25, atol=1e-12)


def test_switch_chain_stationary(switch):
    mdp, mu = switch
    np.testing.assert_allclose(stationary_distribution(mdp, mu), [0.5, 0.5], atol=1e-12)


def test_garnet_stationary_matches_eigen(garnet5):
    mdp, mu = garnet5
    d = stationary_distribution(mdp, mu)
    P = policy_transition_matrix(mdp, mu.probs)
    np.testing.assert_allclose(d, eigen_stationary(P), atol=1e-10)
    assert np.abs(d @ P - d).sum() < 1e-10
    assert np.all(d >= 0) and abs(d.sum() - 1) < 1e-14


def test_fallback_solve_when_power_iteration_stops_early(garnet5):
    mdp, mu = garnet5
    d = stationary_distribution(mdp, mu, max_iter=1)
    P = policy_transition_matrix(mdp, mu.probs)
    assert np.abs(d @ P - d).sum() < 1e-10


def test_stationary_requires_ergodicity(switch):
    mdp, _ = switch
    mu = BehaviorPolicy([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(NotErgodic):
        stationary_distribution(mdp, mu)


# ----------------------------------------------------------------- ergodicity

def test_switch_deterministic_mu_is_periodic(switch):
    mdp, _ = switch
    assert not is_ergodic(mdp, BehaviorPolicy([[0.0, 1.0], [0.0, 1.0]]))


def test_switch_mixing_mu_is_ergodic(switch):
    mdp, mu = switch
    assert is_ergodic(mdp, mu)


def test_disconnected_components_not_ergodic():
    P = np.zeros((4, 1, 4))
    P[0, 0, [0, 1]] = 0.5
    P[1, 0, [0, 1]] = 0.5
    P[2, 0, [2, 3]] = 0.5
    P[3, 0, [2, 3]] = 0.5
    assert not is_ergodic(FiniteMdp(P, np.zeros((4, 1)), 0.9), BehaviorPolicy.uniform(4, 1))


# ------------------------------------------------------------------ sampling

def test_deterministic_trajectory_step(switch):
    mdp, _ = switch
    mu = BehaviorPolicy([[0.0, 1.0], [0.0, 1.0]])
    tr, nxt = sample_transition(mdp, mu, "trajectory", np.random.default_rng(0), current_state=1)
    assert tuple(tr) == (1, 1, 1.0, 0) and nxt == 0


def test_iid_frequencies_match_stationary(garnet5):
    mdp, mu = garnet5
    d = stationary_distribution(mdp, mu)
    sampler = TransitionSampler(mdp, mu, "iid", np.random.default_rng(1))
    counts = np.bincount([sampler.next().s for _ in range(100_000)], minlength=mdp.n_states)
    assert 0.5 * np.abs(counts / counts.sum() - d).sum() < 0.01


def test_iid_single_draw_frequencies(switch):
    mdp, mu = switch
    rng = np.random.default_rng(2)
    d = stationary_distribution(mdp, mu)
    states = [sample_transition(mdp, mu, "iid", rng, d_mu=d)[0].s for _ in range(20_000)]
    assert abs(np.mean(states) - 0.5) < 0.02


def test_trajectory_frequencies_converge(garnet5):
    mdp, mu = garnet5
    d = stationary_distribution(mdp, mu)
    sampler = TransitionSampler(mdp, mu, "trajectory", np.random.default_rng(3))
    counts = np.bincount([sampler.next().s for _ in range(200_000)], minlength=mdp.n_states)
    assert 0.5 * np.abs(counts / counts.sum() - d).sum() < 0.02


@pytest.mark.parametrize("mode", ["iid", "trajectory"])
def test_sampled_rewards_equal_table(garnet5, mode):
    mdp, mu = garnet5
    sampler = TransitionSampler(mdp, mu, mode, np.random.default_rng(4))
    for _ in range(2000):
        s, a, r, s2 = sampler.next()
        assert r == mdp.reward[s, a]
        assert mdp.transition[s, a, s2] > 0 and mu.probs[s, a] > 0


@pytest.mark.parametrize("mode", ["iid", "trajectory"])
def test_same_seed_same_stream(garnet5, mode):
    mdp, mu = garnet5
    a = TransitionSampler(mdp, mu, mode, np.random.default_rng(7))
    b = TransitionSampler(mdp, mu, mode, np.random.default_rng(7))
    assert [a.next() for _ in range(5000)] == [b.next() for _ in range(5000)]
    r1 = np.random.default_rng(9)
    r2 = np.random.default_rng(9)
    s1 = [sample_transition(mdp, mu, mode, r1, current_state=0)[0] for _ in range(50)]
    s2 = [sample_transition(mdp, mu, mode, r2, current_state=0)[0] for _ in range(50)]
    assert s1 == s2


def test_trajectory_consecutive(garnet5):
    mdp, mu = garnet5
    sampler = TransitionSampler(mdp, mu, "trajectory", np.random.default_rng(5), start_state=2)
    prev = sampler.next()
    assert prev.s == 2
    for _ in range(500):
        tr = sampler.next()
        assert tr.s == prev.s_next
        prev = tr
