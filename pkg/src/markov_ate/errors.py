"""Exception hierarchy shared by every module of the package."""


class MarkovATEError(Exception):
    """Base class for all package errors."""


class NotErgodic(MarkovATEError):
    """The chain is reducible, periodic or has a non-unique stationary law."""


class SingularSystem(MarkovATEError):
    """A linear system that should be regular is numerically singular."""


class InvalidParams(MarkovATEError, ValueError):
    pass


class InvalidConstruction(MarkovATEError, ValueError):
    pass


class DegenerateDelta(MarkovATEError):
    pass


class RewardNotStateOnly(MarkovATEError):
    """Rewards depend on the action, but the operation needs r(s, 0) == r(s, 1)."""


class ActionUnobserved(MarkovATEError):
    pass


class EmpiricalChainNotErgodic(MarkovATEError):
    pass


class PerActionChainNotErgodic(EmpiricalChainNotErgodic):
    pass


class DegenerateFamily(MarkovATEError):
    pass


class ConfigError(MarkovATEError, ValueError):
    pass


# Short tags written into result grids in place of an estimate.
ERROR_TAGS = {
    ActionUnobserved: "action_unobserved",
    PerActionChainNotErgodic: "per_action_not_ergodic",
    EmpiricalChainNotErgodic: "empirical_not_ergodic",
    RewardNotStateOnly: "reward_not_state_only",
    NotErgodic: "not_ergodic",
    SingularSystem: "singular_system",
}


def error_tag(exc: BaseException) -> str:
    for cls in type(exc).__mro__:
        if cls in ERROR_TAGS:
            return ERROR_TAGS[cls]
    return "error"
