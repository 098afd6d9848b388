import numpy as np
import pytest

from funcac import oracles
from funcac.features import (
    OracleQ,
    PolicyAugmentedRandom,
    Tabular,
    TabularState,
    build_features,
    psi,
    psi_jacobian,
    psi_table,
)
from funcac.harness.envs import make_garnet
from funcac.mdp import FiniteMdp
from funcac.policy import TabularSoftmaxPolicy

from conftest import central_diff


def all_families(mdp):
    S, A = mdp.n_states, mdp.n_actions
    return [Tabular(S, A), TabularState(S, A), OracleQ(mdp), PolicyAugmentedRandom(S, A, 5, seed=4)]


def test_tabular_one_hot_placement():
    phi = Tabular(2, 2).phi(1, 0, np.zeros((2, 2)))
    np.testing.assert_array_equal(phi, [0, 0, 1, 0])


def test_oracle_q_single_state():
    mdp = FiniteMdp(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9)
    np.testing.assert_allclose(OracleQ(mdp).phi(0, 0, np.zeros((1, 1))), [10.0], rtol=1e-14)


def test_policy_augmented_identity_reproduces_concatenation():
    S, A = 2, 3
    n = S * A
    feats = PolicyAugmentedRandom(S, A, 2 * n, W=np.eye(2 * n))
    pol = TabularSoftmaxPolicy(np.random.default_rng(0).normal(size=(S, A)))
    for s in range(S):
        for a in range(A):
            expect = np.concatenate([np.eye(n)[s * A + a], pol.probs().ravel()])
            np.testing.assert_allclose(feats.phi(s, a, pol), expect, atol=1e-15)


def test_policy_augmented_w_fixed_per_seed():
    a = PolicyAugmentedRandom(3, 2, 4, seed=9)
    b = PolicyAugmentedRandom(3, 2, 4, seed=9)
    c = PolicyAugmentedRandom(3, 2, 4, seed=10)
    np.testing.assert_array_equal(a.W, b.W)
    assert not np.array_equal(a.W, c.W)
    assert np.abs(a.W).max() <= 1 / np.sqrt(4)


def test_tabular_jacobian_zero():
    J = Tabular(3, 2).phi_jacobian(1, 1, np.random.default_rng(1).normal(size=(3, 2)))
    assert J.shape == (6, 6) and not J.any()


def test_oracle_q_jacobian_zero_without_discount():
    mdp, _ = make_garnet(4, 2, 2, seed=1, gamma=0.0)
    J = OracleQ(mdp).jacobian_table(np.random.default_rng(2).normal(size=(4, 2)))
    assert not J.any()


@pytest.mark.parametrize("family", range(4))
def test_jacobians_match_finite_differences(family):
    rng = np.random.default_rng(3 + family)
    worst = 0.0
    for probe in range(100):
        if probe % 20 == 0:
            mdp, _ = make_garnet(4, 3, 3, seed=probe, gamma=0.8)
            feats = all_families(mdp)[family]
            S, A = 4, 3
        theta = rng.normal(size=(S, A))
        s, a = int(rng.integers(S)), int(rng.integers(A))
        fd = central_diff(lambda x: feats.phi(s, a, TabularSoftmaxPolicy(x.reshape(S, A))), theta.ravel())
        worst = max(worst, np.abs(feats.phi_jacobian(s, a, theta) - fd).max())
    assert worst <= 1e-6


@pytest.mark.parametrize("family", range(4))
def test_psi_jacobian_product_rule(family):
    mdp, _ = make_garnet(4, 2, 3, seed=5, gamma=0.7)
    feats = all_families(mdp)[family]
    theta = np.random.default_rng(6).normal(size=(4, 2))
    for s in range(4):
        fd = central_diff(lambda x: psi(feats, s, TabularSoftmaxPolicy(x.reshape(4, 2))), theta.ravel())
        np.testing.assert_allclose(psi_jacobian(feats, s, theta), fd, atol=1e-6)


def test_psi_deterministic_policy_picks_action():
    feats = PolicyAugmentedRandom(3, 2, 4, seed=7)
    theta = np.array([[60.0, 0.0], [0.0, 60.0], [60.0, 0.0]])
    for s, a in enumerate([0, 1, 0]):
        np.testing.assert_allclose(psi(feats, s, theta), feats.phi(s, a, theta), atol=1e-14)


def test_psi_oracle_q_is_state_value():
    mdp, _ = make_garnet(5, 3, 2, seed=8)
    pol = TabularSoftmaxPolicy(np.random.default_rng(9).normal(size=(5, 3)))
    np.testing.assert_allclose(psi_table(OracleQ(mdp), pol)[:, 0], oracles.state_values(mdp, pol), atol=1e-12)


def test_psi_uniform_tabular_averages():
    out = psi(Tabular(3, 4), 1, np.zeros((3, 4)))
    expect = np.zeros(12)
    expect[4:8] = 0.25
    np.testing.assert_allclose(out, expect, atol=1e-16)


def test_oracle_q_represents_q_exactly():
    mdp, _ = make_garnet(6, 2, 3, seed=10)
    pol = TabularSoftmaxPolicy(np.random.default_rng(11).normal(size=(6, 2)))
    np.testing.assert_array_equal(OracleQ(mdp).table(pol) @ np.ones(1), oracles.q_values(mdp, pol))


@pytest.mark.parametrize("family", range(4))
def test_norm_bound_holds(family):
    mdp, _ = make_garnet(4, 3, 3, seed=12, gamma=0.9)
    feats = all_families(mdp)[family]
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(10_000 // 12):
        # each call checks all 12 (s, a) pairs of one random policy
        table = feats.table(TabularSoftmaxPolicy(rng.normal(scale=3.0, size=(4, 3))))
        worst = max(worst, np.linalg.norm(table, axis=-1).max())
    assert worst <= feats.bound + 1e-12


def test_build_features_descriptors():
    mdp, _ = make_garnet(3, 2, 2, seed=0)
    for desc in [{"family": "tabular"}, {"family": "tabular_state"}, {"family": "oracle_q"},
                 {"family": "policy_augmented", "dim": 4, "seed": 3}]:
        feats = build_features(desc, mdp)
        assert feats.descriptor()["family"] == desc["family"]
    aug = build_features({"family": "policy_augmented", "dim": 4, "seed": 3}, mdp)
    np.testing.assert_array_equal(aug.W, PolicyAugmentedRandom(3, 2, 4, seed=3).W)
    with pytest.raises(ValueError):
        build_features({"family": "neural"}, mdp)
    with pytest.raises(ValueError):
        build_features({"family": "baird"}, mdp)
