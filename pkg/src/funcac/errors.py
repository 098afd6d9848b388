"""Exception hierarchy shared by every module of the package."""


class FuncacError(Exception):
    """Base class for all package errors."""


class MdpError(FuncacError):
    """An MDP or behavior policy violates its construction invariants."""


class RowNotStochastic(MdpError):
    def __init__(self, s, a=None, total=None):
        self.s, self.a, self.total = s, a, total
        where = f"({s}, {a})" if a is not None else f"{s}"
        super().__init__(f"row {where} is not a probability vector (sum={total})")


class NonFiniteReward(MdpError):
    def __init__(self, s, a):
        self.s, self.a = s, a
        super().__init__(f"reward at ({s}, {a}) is not finite")


class BadDiscount(MdpError):
    def __init__(self, gamma):
        self.gamma = gamma
        super().__init__(f"discount must lie in [0, 1), got {gamma}")


class NotErgodic(FuncacError):
    """The chain induced by the behavior policy is reducible or periodic."""


class SingularSystem(FuncacError):
    """A linear system is singular or too ill-conditioned to trust."""


class DimensionMismatch(FuncacError, ValueError):
    pass


class NonFiniteGradient(FuncacError, ValueError):
    pass


class ScheduleError(FuncacError, ValueError):
    """Step-size schedule is malformed or violates the convergence conditions."""


class ViolatesRM(ScheduleError):
    def __init__(self, which, exponent):
        self.which = which
        self.exponent = exponent
        super().__init__(
            f"{which} schedule violates Robbins-Monro: exponent {exponent} not in (1/2, 1]"
        )


class ViolatesTwoTimescale(ScheduleError):
    def __init__(self, p_alpha, p_beta):
        self.p_alpha, self.p_beta = p_alpha, p_beta
        super().__init__(
            f"beta must decay strictly faster than alpha (p_beta={p_beta} <= p_alpha={p_alpha})"
        )


class CouldNotMakeErgodic(FuncacError):
    pass


class ConfigError(FuncacError, ValueError):
    """Run configuration failed to parse or validate."""


class ParseError(ConfigError):
    def __init__(self, message, key=None, line=None):
        self.key, self.line = key, line
        super().__init__(message)


class SchemaMismatch(ConfigError):
    pass


class Diverged(FuncacError):
    """An iterate norm crossed the divergence threshold; ``log`` holds the partial run."""

    def __init__(self, t, log=None):
        self.t = t
        self.log = log
        super().__init__(f"iterates diverged at step {t}")


class IoError(FuncacError, OSError):
    """A file could not be read or written."""
