"""Exact linear-algebra ground truth on finite MDPs.

Every expectation here is an exact weighted sum over ``(s, a, s')``; nothing
is sampled. Value oracles accept either a :class:`TabularSoftmaxPolicy` or a
raw ``(S, A)`` probability table; anything that differentiates with respect
to ``theta`` needs the softmax policy.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_solve

from .errors import SingularSystem
from .mdp import BehaviorPolicy, FiniteMdp, is_ergodic, policy_transition_matrix, stationary_distribution
from .policy import TabularSoftmaxPolicy, as_policy

MAX_COND = 1e12


def factor(M: np.ndarray):
    """LU-factor ``M`` once; returns a solver ``b -> M^-1 b``.

    Refuses systems whose (LAPACK-estimated) 1-norm condition exceeds 1e12.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise SingularSystem("matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv, info = lapack.dgetrf(M)
    if info > 0:
        raise SingularSystem(f"exactly singular (zero pivot {info})")
    anorm = np.abs(M).sum(axis=0).max()
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    if not rcond > 1.0 / MAX_COND:
        raise SingularSystem(f"condition number {1.0 / max(rcond, 1e-300):.3g} exceeds {MAX_COND:.0e}")
    return lambda b: lu_solve((lu, piv), b, check_finite=False)


def solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU solve with partial pivoting; refuses systems with 1-norm condition above 1e12."""
    return factor(M)(b)


def _probs(policy) -> np.ndarray:
    if isinstance(policy, TabularSoftmaxPolicy):
        return policy.probs()
    return np.asarray(policy, dtype=float)


def _d(mdp, mu, d_mu):
    return stationary_distribution(mdp, mu) if d_mu is None else d_mu


def state_values(mdp: FiniteMdp, policy) -> np.ndarray:
    pi = _probs(policy)
    P_pi = policy_transition_matrix(mdp, pi)
    r_pi = (pi * mdp.reward).sum(axis=1)
    return solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)


def q_values(mdp: FiniteMdp, policy) -> np.ndarray:
    """``Q = r + gamma P V`` with ``V = (I - gamma P_pi)^-1 r_pi``."""
    V = state_values(mdp, policy)
    return mdp.reward + mdp.gamma * mdp.transition @ V


def bellman_residual(mdp: FiniteMdp, policy, Q: np.ndarray) -> float:
    pi = _probs(policy)
    V = (pi * Q).sum(axis=1)
    return float(np.max(np.abs(mdp.reward + mdp.gamma * mdp.transition @ V - Q)))


def objective(mdp: FiniteMdp, mu: BehaviorPolicy, policy, d_mu=None) -> float:
    return float(_d(mdp, mu, d_mu) @ state_values(mdp, policy))


def _q_and_grad(mdp: FiniteMdp, policy: TabularSoftmaxPolicy):
    pi = policy.probs()
    dpi = policy.jacobian_table()
    S = mdp.n_states
    M = np.eye(S) - mdp.gamma * policy_transition_matrix(mdp, pi)
    r_pi = (pi * mdp.reward).sum(axis=1)
    inv = factor(M)
    V = inv(r_pi)
    Q = mdp.reward + mdp.gamma * mdp.transition @ V
    # d r_pi + gamma (d P_pi) V collapses to sum_a dpi(a|s) Q(s, a)
    rhs = np.einsum("sak,sa->sk", dpi, Q)
    dV = inv(rhs)
    dQ = mdp.gamma * np.einsum("sat,tk->sak", mdp.transition, dV)
    return Q, dQ


def grad_q_values(mdp: FiniteMdp, policy) -> np.ndarray:
    """``G[s, a, k] = dQ(s, a) / d theta_k`` by differentiating the Bellman solve."""
    return _q_and_grad(mdp, as_policy(policy))[1]


def q_values_and_grad(mdp: FiniteMdp, policy):
    return _q_and_grad(mdp, as_policy(policy))


def exact_gradient_chain(mdp: FiniteMdp, mu: BehaviorPolicy, policy, d_mu=None) -> np.ndarray:
    """Chain-rule gradient: both the ``grad pi * Q`` and the ``pi * grad Q`` terms."""
    policy = as_policy(policy)
    d = _d(mdp, mu, d_mu)
    Q, dQ = _q_and_grad(mdp, policy)
    inner = np.einsum("sak,sa->sk", policy.jacobian_table(), Q)
    inner += np.einsum("sa,sak->sk", policy.probs(), dQ)
    return d @ inner


def emphasis_weights(mdp: FiniteMdp, mu: BehaviorPolicy, policy, d_mu=None) -> np.ndarray:
    """Discounted follow-on weights ``m^T = d_mu^T (I - gamma P_pi)^-1``."""
    d = _d(mdp, mu, d_mu)
    M = np.eye(mdp.n_states) - mdp.gamma * policy_transition_matrix(mdp, _probs(policy))
    return solve(M.T, d)


def exact_gradient_emphatic(mdp: FiniteMdp, mu: BehaviorPolicy, policy, d_mu=None) -> np.ndarray:
    policy = as_policy(policy)
    m = emphasis_weights(mdp, mu, policy, d_mu)
    Q = q_values(mdp, policy)
    return m @ np.einsum("sak,sa->sk", policy.jacobian_table(), Q)


# ---------------------------------------------------------------- critic references


def _sa_weights(mdp, mu, d_mu):
    return _d(mdp, mu, d_mu)[:, None] * mu.probs


def _next_psi(mdp, policy, Phi):
    # E[psi(s') | s, a] with psi(s') = sum_a' pi(a'|s') phi(s', a')
    psi = np.einsum("sa,sad->sd", policy.probs(), Phi)
    return np.einsum("sat,td->sad", mdp.transition, psi)


def lambda_system(mdp, mu, policy, features, lam, d_mu=None):
    """Matrix and right-hand side of the regularized fixed-point equation.

    Returns ``(M, b)`` with ``M = E[phi phi^T] + lam I - gamma E[phi psi'^T]``
    and ``b = E[r phi]``.
    """
    policy = as_policy(policy)
    rho = _sa_weights(mdp, mu, d_mu)
    Phi = features.table(policy)
    nxt = _next_psi(mdp, policy, Phi)
    cov = np.einsum("sa,sai,saj->ij", rho, Phi, Phi)
    cross = np.einsum("sa,sai,saj->ij", rho, Phi, nxt)
    b = np.einsum("sa,sa,sai->i", rho, mdp.reward, Phi)
    return cov + lam * np.eye(features.dim) - mdp.gamma * cross, b


def lambda_fixed_point(mdp, mu, policy, features, lam: float, d_mu=None) -> np.ndarray:
    """Stationary point ``w = Gbar^-1 hbar(w)`` of the target-critic dynamics."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    M, b = lambda_system(mdp, mu, policy, features, lam, d_mu)
    return solve(M, b)


def msbr_minimizer(mdp, mu, policy, features, lam: float, d_mu=None) -> np.ndarray:
    """Ridge minimizer of the squared one-sample Bellman residual (expectation over s')."""
    policy = as_policy(policy)
    rho = _sa_weights(mdp, mu, d_mu)
    Phi = features.table(policy)
    psi = np.einsum("sa,sad->sd", policy.probs(), Phi)
    # e[s, a, t] = phi(s, a) - gamma psi(t)
    e = Phi[:, :, None, :] - mdp.gamma * psi[None, None, :, :]
    w3 = rho[:, :, None] * mdp.transition
    normal = np.einsum("sat,sati,satj->ij", w3, e, e) + lam * np.eye(features.dim)
    rhs = np.einsum("sat,sa,sati->i", w3, mdp.reward, e)
    return solve(normal, rhs)


def gtd2_system(mdp, mu, policy, features, d_mu=None):
    """``(A, z, C)`` for the state-feature GTD2 critic.

    ``A = E_s[psi(s) (psi(s) - gamma E_{s'~P_pi} psi(s'))^T]``,
    ``z = E_s[r_pi(s) psi(s)]`` and ``C = E_s[psi psi^T]``, states from ``d_mu``.
    """
    policy = as_policy(policy)
    d = _d(mdp, mu, d_mu)
    pi = policy.probs()
    psi = np.einsum("sa,sad->sd", pi, features.table(policy))
    P_pi = policy_transition_matrix(mdp, pi)
    r_pi = (pi * mdp.reward).sum(axis=1)
    C = np.einsum("s,si,sj->ij", d, psi, psi)
    A = C - mdp.gamma * np.einsum("s,si,sj->ij", d, psi, P_pi @ psi)
    z = np.einsum("s,s,si->i", d, r_pi, psi)
    return A, z, C


def td_fixed_point_gtd2(mdp, mu, policy, features, d_mu=None) -> np.ndarray:
    A, z, _ = gtd2_system(mdp, mu, policy, features, d_mu)
    return solve(A, z)


def functional_gradient(d, policy, Phi, Jac, xi, second_term=True) -> np.ndarray:
    """``sum_s d(s) sum_a [phi^T xi grad pi + pi (grad phi)^T xi]`` from feature tables."""
    qhat = Phi @ xi
    g = np.einsum("s,sa,sak->k", d, qhat, policy.jacobian_table())
    if second_term and Jac is not None:
        g += np.einsum("s,sa,sadk,d->k", d, policy.probs(), Jac, xi)
    return g


def bias_term(mdp, mu, policy, features, lam: float, d_mu=None) -> np.ndarray:
    """Gap between the exact gradient and the functional gradient at ``w*_lambda``."""
    policy = as_policy(policy)
    d = _d(mdp, mu, d_mu)
    w = lambda_fixed_point(mdp, mu, policy, features, lam, d)
    Phi, Jac = features.tables(policy)
    return exact_gradient_chain(mdp, mu, policy, d) - functional_gradient(d, policy, Phi, Jac, w)


def estimate_delta_lambda(mdp, mu, features, lam: float, theta_pairs, d_mu=None) -> float:
    """Largest observed ``||w*(theta) - w*(theta')|| / ||theta - theta'||``."""
    d = _d(mdp, mu, d_mu)
    pairs = list(theta_pairs)
    if not pairs:
        raise ValueError("need at least one parameter pair")
    best = 0.0
    for t1, t2 in pairs:
        p1, p2 = as_policy(t1), as_policy(t2)
        gap = np.linalg.norm(p1.theta - p2.theta)
        if gap == 0.0:
            raise ValueError("parameter pairs must be distinct")
        w1 = lambda_fixed_point(mdp, mu, p1, features, lam, d)
        w2 = lambda_fixed_point(mdp, mu, p2, features, lam, d)
        best = max(best, float(np.linalg.norm(w1 - w2) / gap))
    return best


@dataclass
class AssumptionReport:
    feature_bound_C: float
    min_cov_eig_c: float
    lipschitz_C0_estimate: float
    delta_lambda_estimate: float
    gtd2_min_sv_c0: float
    feature_capacity_eps: float
    ergodic: bool

    def to_dict(self) -> dict:
        return asdict(self)


def check_assumptions(mdp, mu, policies, features, lam: float) -> AssumptionReport:
    """Measure the regularity constants of the linear-functional setting on a sample of policies.

    ``policies`` is one policy/theta or a list of them. Constants that need the
    stationary distribution are reported as ``nan`` on non-ergodic chains.
    """
    if isinstance(policies, (TabularSoftmaxPolicy, np.ndarray)):
        policies = [policies]
    pols = [as_policy(p) for p in policies]
    ergodic = is_ergodic(mdp, mu)

    C = 0.0
    grad_norm = 0.0
    tables = []
    for p in pols:
        Phi, Jac = features.tables(p)
        tables.append((Phi, Jac))
        C = max(C, float(np.linalg.norm(Phi, axis=-1).max()))
        if Jac is not None:
            grad_norm = max(grad_norm, float(np.linalg.norm(Jac, ord=2, axis=(-2, -1)).max()))

    ratio = 0.0
    for (p1, (F1, _)), (p2, (F2, _)) in zip(zip(pols, tables), zip(pols[1:], tables[1:])):
        gap = np.linalg.norm(p1.theta - p2.theta)
        if gap == 0.0:
            continue
        ratio = max(ratio, float(np.abs(p1.probs() - p2.probs()).max() / gap))
        ratio = max(ratio, float(np.linalg.norm(F1 - F2, axis=-1).max() / gap))
    C0 = max(C, grad_norm, ratio)

    if not ergodic:
        nan = float("nan")
        return AssumptionReport(C, nan, C0, nan, nan, nan, False)

    d = stationary_distribution(mdp, mu)
    rho = d[:, None] * mu.probs
    c = min(
        float(np.linalg.eigvalsh(np.einsum("sa,sai,saj->ij", rho, Phi, Phi)).min())
        for Phi, _ in tables
    )

    pairs = [(a, b) for a, b in zip(pols, pols[1:]) if np.any(a.theta != b.theta)]
    try:
        delta = estimate_delta_lambda(mdp, mu, features, lam, pairs, d) if pairs else 0.0
    except SingularSystem:
        delta = float("inf")

    c0 = float("inf")
    for p in pols:
        A, _, Cmat = gtd2_system(mdp, mu, p, features, d)
        c0 = min(c0, np.linalg.svd(Cmat, compute_uv=False).min(), np.linalg.svd(A, compute_uv=False).min())

    # best single xi over all sampled policies, then its worst-case error
    X = np.concatenate([Phi.reshape(-1, features.dim) for Phi, _ in tables])
    y = np.concatenate([q_values(mdp, p).ravel() for p in pols])
    xi = np.linalg.lstsq(X, y, rcond=None)[0]
    eps = float(np.abs(X @ xi - y).max())

    return AssumptionReport(C, max(c, 0.0), C0, delta, float(max(c0, 0.0)), eps, True)
