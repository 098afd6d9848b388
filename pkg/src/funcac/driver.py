"""The functional actor-critic loop: sample, critic update, gradient, actor step."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from . import oracles
from .actor import off_policy_gradient
from .critic_gtd2 import gtd2_update
from .critic_target import calibrate_truncation, min_lambda, target_update, vanilla_td_update
from .errors import ConfigError, Diverged, FuncacError, IoError, ParseError, ScheduleError, SingularSystem, ViolatesRM, ViolatesTwoTimescale
from .features import build_features
from .harness.envs import EnvironmentSpec, baird_initial_weights
from .mdp import BehaviorPolicy, TransitionSampler, stationary_distribution
from .policy import TabularSoftmaxPolicy

CRITIC_KINDS = ("target", "gtd2", "vanilla_td")
LOG_COLUMNS = ("t", "J", "grad_norm", "G_norm", "critic_err", "bias_norm", "xi_norm", "w_norm", "wall_ms")


# ------------------------------------------------------------------- schedules


@dataclass(frozen=True)
class PowerLaw:
    """``c * (t + t0) ** -power``."""

    c: float
    power: float
    t0: float = 1.0

    def __call__(self, t: int) -> float:
        return self.c * (t + self.t0) ** -self.power

    def to_dict(self) -> dict:
        return {"c": self.c, "power": self.power, "t0": self.t0}


@dataclass(frozen=True)
class StepSchedule:
    """Critic steps ``alpha``, target steps ``beta`` and actor steps ``eta``.

    ``eta`` is either its own power law or ``kappa * beta`` (ratio coupling).
    """

    alpha: PowerLaw
    beta: PowerLaw
    eta: Optional[PowerLaw] = None
    kappa: Optional[float] = None

    def eta_at(self, t: int) -> float:
        if self.eta is not None:
            return self.eta(t)
        return (self.kappa or 0.0) * self.beta(t)

    @property
    def ratio_bound(self) -> float:
        """``limsup eta_t / beta_t``."""
        if self.eta is None:
            return self.kappa or 0.0
        if self.eta.power > self.beta.power:
            return 0.0
        if self.eta.power == self.beta.power:
            return self.eta.c / self.beta.c
        return float("inf")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.to_dict(),
            "beta": self.beta.to_dict(),
            "eta": None if self.eta is None else self.eta.to_dict(),
            "kappa": self.kappa,
        }


def _check_rm(name, law):
    if not 0.5 < law.power <= 1.0:
        raise ViolatesRM(name, law.power)


def validate_schedule(schedule: StepSchedule) -> None:
    """Robbins-Monro for ``alpha`` and ``beta`` and ``p_beta > p_alpha``.

    For power laws ``sum (beta/alpha)^g`` converges exactly when
    ``g (p_beta - p_alpha) > 1``, so some finite ``g`` exists iff ``p_beta > p_alpha``.
    """
    _check_rm("alpha", schedule.alpha)
    _check_rm("beta", schedule.beta)
    if schedule.beta.power <= schedule.alpha.power:
        raise ViolatesTwoTimescale(schedule.alpha.power, schedule.beta.power)
    if schedule.eta is None and schedule.kappa is None:
        raise ScheduleError("need an eta power law or a ratio kappa")
    if schedule.kappa is not None and schedule.kappa < 0:
        raise ScheduleError("kappa must be nonnegative")
    if not np.isfinite(schedule.ratio_bound):
        raise ScheduleError("eta decays slower than beta: eta/beta is unbounded")


def _law(spec, name) -> PowerLaw:
    if isinstance(spec, PowerLaw):
        law = spec
    elif isinstance(spec, dict):
        unknown = set(spec) - {"c", "power", "t0"}
        if unknown:
            raise ParseError(f"unknown key {sorted(unknown)[0]!r} in {name} schedule", key=sorted(unknown)[0])
        law = PowerLaw(float(spec["c"]), float(spec["power"]), float(spec.get("t0", 1.0)))
    else:
        law = PowerLaw(*map(float, spec))
    if law.c < 0:
        raise ScheduleError(f"{name} coefficient must be nonnegative, got {law.c}")
    if law.power < 0:
        raise ScheduleError(f"{name} exponent must be nonnegative, got {law.power}")
    if law.t0 < 1:
        raise ScheduleError(f"{name} offset t0 must be >= 1, got {law.t0}")
    return law


def build_schedule(alpha, beta, eta=None, kappa=None, validate=True) -> StepSchedule:
    """Construct from ``(c, power, t0)`` tuples or dicts and validate."""
    if eta is not None and kappa is not None:
        raise ScheduleError("give either eta or kappa, not both")
    if kappa is not None and kappa < 0:
        raise ScheduleError("kappa must be nonnegative")
    sched = StepSchedule(_law(alpha, "alpha"), _law(beta, "beta"),
                         None if eta is None else _law(eta, "eta"),
                         None if kappa is None else float(kappa))
    if validate:
        validate_schedule(sched)
    return sched


DEFAULT_SCHEDULE = dict(alpha=(0.5, 0.6, 1.0), beta=(0.1, 0.8, 1.0), kappa=1.0)


# ----------------------------------------------------------------- run config


@dataclass
class RunConfig:
    environment: EnvironmentSpec
    features: dict
    critic: str
    schedule: StepSchedule
    T: int
    seed: int
    behavior: Optional[list] = None
    lam: object = 0.0                 # float, "min", or "calibrate"
    B1: Optional[float] = None
    B2: Optional[float] = None
    gradient_mode: str = "exact"
    batch_size: int = 32
    log_every: int = 100
    descent: bool = False
    sampling: str = "iid"
    frozen_actor: bool = False
    enforce_theory: bool = True
    theta0: object = None             # None, nested list, or {"normal": scale}
    xi0: object = None                # None, list, or "baird"
    critic_updates: int = 1
    fresh_xi: bool = True
    truncation: str = "ball"
    wall_clock: bool = True
    divergence_threshold: float = 1e9

    REQUIRED = ("environment", "features", "critic", "schedule", "T", "seed")
    KEY_ALIASES = {"lambda": "lam"}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, value in doc.items():
            name = cls.KEY_ALIASES.get(key, key)
            if name not in names:
                raise ParseError(f"unknown config key {key!r}", key=key)
            kw[name] = value
        for key in cls.REQUIRED:
            if key not in kw:
                raise ParseError(f"missing required config key {key!r}", key=key)
        env = kw["environment"]
        if not isinstance(env, dict) or "kind" not in env:
            raise ParseError("environment needs a 'kind'", key="environment")
        if env["kind"] not in EnvironmentSpec.KINDS:
            raise ParseError(f"unknown environment kind {env['kind']!r}", key="environment")
        kw["environment"] = EnvironmentSpec(env["kind"], {k: v for k, v in env.items() if k != "kind"})
        sched = kw["schedule"]
        if not isinstance(sched, dict):
            raise ParseError("schedule must be an object", key="schedule")
        unknown = set(sched) - {"alpha", "beta", "eta", "kappa"}
        if unknown:
            raise ParseError(f"unknown schedule key {sorted(unknown)[0]!r}", key=sorted(unknown)[0])
        try:
            kw["schedule"] = build_schedule(sched["alpha"], sched["beta"], sched.get("eta"),
                                            sched.get("kappa"), validate=False)
        except KeyError as exc:
            raise ParseError(f"schedule is missing {exc.args[0]!r}", key=exc.args[0]) from None
        cfg = cls(**kw)
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "environment":
                v = {"kind": v.kind, **v.params}
            elif f.name == "schedule":
                v = v.to_dict()
            out["lambda" if f.name == "lam" else f.name] = v
        return out

    def check(self) -> None:
        if self.critic not in CRITIC_KINDS:
            raise ConfigError(f"critic must be one of {CRITIC_KINDS}, got {self.critic!r}")
        if not isinstance(self.T, int) or self.T < 0:
            raise ConfigError("T must be a nonnegative integer")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if self.gradient_mode not in ("exact", "sample"):
            raise ConfigError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.sampling not in ("iid", "trajectory"):
            raise ConfigError(f"unknown sampling mode {self.sampling!r}")
        if self.truncation not in ("ball", "sphere"):
            raise ConfigError(f"unknown truncation mode {self.truncation!r}")
        if self.log_every < 1 or self.critic_updates < 1:
            raise ConfigError("log_every and critic_updates must be positive")
        if self.enforce_theory:
            validate_schedule(self.schedule)

    def with_seed(self, seed: int) -> "RunConfig":
        doc = self.to_dict()
        doc["seed"] = seed
        return RunConfig.from_dict(doc)


# ---------------------------------------------------------------------- logs


class LogRecord(NamedTuple):
    t: int
    J: float
    grad_norm: float
    G_norm: float
    critic_err: float
    bias_norm: float
    xi_norm: float
    w_norm: float
    wall_ms: float


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    diverged_at: Optional[int] = None
    final_theta: Optional[np.ndarray] = None
    final_critic: Optional[dict] = None
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def window_mean(self, name: str, fraction: float = 0.1) -> float:
        """Mean of ``name`` over records with ``t`` in the final ``fraction`` of the run."""
        t = self.column("t")
        vals = self.column(name)
        keep = t >= t[-1] * (1.0 - fraction)
        return float(vals[keep].mean())


# ----------------------------------------------------------------------- run


class _Setup(NamedTuple):
    mdp: object
    mu: BehaviorPolicy
    features: object
    d_mu: np.ndarray
    lam: float
    B1: float
    B2: float
    theta0: np.ndarray
    xi0: np.ndarray


def prepare(config: RunConfig, init_rng=None) -> _Setup:
    """Build environment, features and initial parameters; apply theory checks."""
    try:
        mdp, mu, static = config.environment.build()
        if config.behavior is not None:
            mu = BehaviorPolicy(config.behavior)
        features = build_features(config.features, mdp, static)
    except OSError as exc:
        raise IoError(f"cannot load environment: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FuncacError):
            raise
        raise ConfigError(f"bad environment or feature settings: {exc!r}") from None
    d_mu = stationary_distribution(mdp, mu)
    if init_rng is None:
        init_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[1])

    S, A = mdp.n_states, mdp.n_actions
    if config.theta0 is None:
        theta0 = np.zeros((S, A))
    elif isinstance(config.theta0, dict) and set(config.theta0) == {"normal"}:
        theta0 = init_rng.normal(scale=float(config.theta0["normal"]), size=(S, A))
    else:
        theta0 = np.array(config.theta0, dtype=float).reshape(S, A)

    if config.xi0 is None:
        xi0 = np.zeros(features.dim)
    elif config.xi0 == "baird":
        xi0 = baird_initial_weights()
    else:
        xi0 = np.array(config.xi0, dtype=float)
    if xi0.shape != (features.dim,):
        raise ConfigError(f"xi0 has shape {xi0.shape}, feature dim is {features.dim}")

    lam, B1, B2 = config.lam, config.B1, config.B2
    if lam == "calibrate":
        lam, B1, B2 = calibrate_truncation(mdp, mu, TabularSoftmaxPolicy(theta0), features, d_mu=d_mu)
    else:
        if config.critic == "target" and (B1 is None or B2 is None):
            raise ConfigError("target critic needs B1 and B2 (or lambda='calibrate')")
        if lam == "min":
            if B1 is None:
                raise ConfigError("lambda='min' needs B1")
            lam = min_lambda(mdp.gamma, features.bound, B1)
    if isinstance(lam, str):
        raise ConfigError(f"unknown lambda setting {lam!r}")
    lam = float(lam)
    B1 = float(B1) if B1 is not None else float("inf")
    B2 = float(B2) if B2 is not None else float("inf")
    if config.critic == "target" and config.enforce_theory:
        C = features.bound
        need = min_lambda(mdp.gamma, C, B1)
        if lam < need:
            raise ConfigError(f"lambda={lam} is below min_lambda={need} for C={C}, B1={B1}")
        if not B1 > B2 > C:
            raise ConfigError(f"need B1 > B2 > C, got B1={B1}, B2={B2}, C={C}")
    return _Setup(mdp, mu, features, d_mu, lam, B1, B2, theta0, xi0)


def reference_weights(kind, mdp, mu, policy, features, lam, d_mu):
    """Oracle weights the critic should track; min-norm solution when singular."""
    if kind == "gtd2":
        A, z, _ = oracles.gtd2_system(mdp, mu, policy, features, d_mu)
        M, b = A, z
    else:
        M, b = oracles.lambda_system(mdp, mu, policy, features, lam if kind == "target" else 0.0, d_mu)
    try:
        return oracles.solve(M, b)
    except SingularSystem:
        return np.linalg.lstsq(M, b, rcond=None)[0]


def run_functional_ac(config: RunConfig) -> RunLog:
    """Execute ``config.T`` iterations and return the log.

    Raises :class:`Diverged` (carrying the partial log) when an iterate norm
    exceeds ``config.divergence_threshold``.
    """
    streams = np.random.SeedSequence(config.seed).spawn(3)
    sample_rng, init_rng, batch_rng = (np.random.default_rng(s) for s in streams)
    mdp, mu, features, d_mu, lam, B1, B2, theta0, xi0 = prepare(config, init_rng)
    gamma, kind, sched = mdp.gamma, config.critic, config.schedule
    sampler = TransitionSampler(mdp, mu, config.sampling, sample_rng,
                                start_state=int(np.argmax(d_mu)))

    policy = TabularSoftmaxPolicy(theta0)
    xi = xi0.copy()
    aux = np.zeros_like(xi)           # target w, or GTD2 dual nu
    start = time.perf_counter()
    log = RunLog(meta={"lambda": lam, "B1": B1, "B2": B2, "gamma": gamma,
                       "features": features.descriptor(), "critic": kind})

    cache = {}

    def evaluate(pol):
        Phi, Jac = features.tables(pol)
        Psi = np.einsum("sa,sad->sd", pol.probs(), Phi)
        return Phi, Jac, Psi

    def gradient(pol, tabs, xi):
        kw = dict(d_mu=d_mu, tables=tabs[:2])
        if config.gradient_mode == "sample":
            kw.update(rng=batch_rng, batch_size=config.batch_size)
        return off_policy_gradient(mdp, mu, pol, features, xi, config.gradient_mode, **kw).g

    def record(t, pol, G):
        key = id(pol)
        if key not in cache:
            cache.clear()
            grad = oracles.exact_gradient_chain(mdp, mu, pol, d_mu)
            ref = reference_weights(kind, mdp, mu, pol, features, lam, d_mu)
            Phi, Jac = features.tables(pol)
            bias = grad - oracles.functional_gradient(d_mu, pol, Phi, Jac, ref)
            cache[key] = (oracles.objective(mdp, mu, pol, d_mu), float(np.linalg.norm(grad)),
                          ref, float(np.linalg.norm(bias)), pol)
        J, gnorm, ref, bnorm, _ = cache[key]
        wall = (time.perf_counter() - start) * 1e3 if config.wall_clock else 0.0
        log.records.append(LogRecord(
            t, J, gnorm, float(np.linalg.norm(G)), float(np.linalg.norm(xi - ref)), bnorm,
            float(np.linalg.norm(xi)), float(np.linalg.norm(aux)), wall,
        ))

    def finish(t):
        log.final_theta = policy.theta.copy()
        log.final_critic = {"xi": xi.tolist(), ("nu" if kind == "gtd2" else "w"): aux.tolist()}
        return log

    tabs = evaluate(policy)
    if kind == "gtd2":
        rho = np.where(mu.probs > 0, policy.probs() / np.where(mu.probs > 0, mu.probs, 1.0), 0.0)
    G = gradient(policy, tabs, xi)
    record(0, policy, G)

    limit = config.divergence_threshold
    for t in range(1, config.T + 1):
        Phi, Jac, Psi = tabs
        alpha, beta = sched.alpha(t), sched.beta(t)
        for _ in range(config.critic_updates):
            s, a, r, s2 = sampler.next()
            if kind == "target":
                xi, aux = target_update(xi, aux, Phi[s, a], Psi[s2], r, gamma, alpha, beta,
                                        lam, B1, B2, config.fresh_xi, config.truncation)
            elif kind == "gtd2":
                xi, aux = gtd2_update(xi, aux, Psi[s], Psi[s2], r, gamma, alpha, rho[s, a])
            else:
                xi = vanilla_td_update(xi, Phi[s, a], Psi[s2], r, gamma, alpha)

        bad = not (np.isfinite(xi).all() and np.isfinite(aux).all()) or max(
            np.abs(xi).max(initial=0.0), np.abs(aux).max(initial=0.0)) > limit
        logging = t % config.log_every == 0 or t == config.T
        if not bad:
            if logging or not config.frozen_actor:
                G = gradient(policy, tabs, xi)
            if not config.frozen_actor:
                eta = sched.eta_at(t)
                if eta:
                    step = -eta * G if config.descent else eta * G
                    policy = TabularSoftmaxPolicy(policy.theta + step.reshape(policy.theta.shape))
                    tabs = evaluate(policy)
                    if kind == "gtd2":
                        rho = np.where(mu.probs > 0, policy.probs() / np.where(mu.probs > 0, mu.probs, 1.0), 0.0)
            bad = not np.isfinite(policy.theta).all() or np.abs(policy.theta).max() > limit
        bad = bad or max(np.linalg.norm(xi), np.linalg.norm(aux)) > limit
        if bad:
            if np.isfinite(xi).all() and np.isfinite(aux).all() and np.isfinite(G).all():
                record(t, policy, G)
            log.diverged_at = t
            raise Diverged(t, finish(t))
        if logging:
            record(t, policy, G)
    return finish(config.T)
