"""Benchmark MDP families and a seeded random-MDP generator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain_core import stationary_distribution
from .errors import InvalidConstruction, InvalidParams
from .mdp import TwoActionMdp


@dataclass(frozen=True)
class TwoStateParams:
    arrival: float = 0.5
    service: float = 0.5
    rent_prob: float = 0.5
    uplift: float = 0.1

    def __post_init__(self):
        lam, mu, p, d = self.arrival, self.service, self.rent_prob, self.uplift
        if lam <= 0 or mu <= 0:
            raise InvalidParams("arrival and service must be positive")
        if abs(lam + mu - 1.0) > 1e-12:
            raise InvalidParams("arrival + service must equal 1")
        if p <= 0 or d < 0 or p + d > 1.0 + 1e-15:
            raise InvalidParams("need 0 < rent_prob, uplift >= 0, rent_prob + uplift <= 1")


@dataclass(frozen=True)
class RentalParams:
    capacity: int = 100
    arrival_rate: float = 1.0
    service_rate: float = 1.0
    util_control: float = 0.315
    util_treat: float = 0.3937

    def __post_init__(self):
        if self.capacity < 1:
            raise InvalidParams("capacity must be at least 1")
        if self.arrival_rate <= 0 or self.service_rate <= 0:
            raise InvalidParams("rates must be positive")
        if self.util_control <= 0 or self.util_treat <= 0:
            raise InvalidParams("utilities must be positive")


@dataclass(frozen=True)
class BirthDeathParams:
    n_states: int = 10
    drift: float = 0.1
    boundary_index: int | None = None
    reward_spec: str = "top_indicator_centered"
    tail_constant: float = 0.1

    def __post_init__(self):
        if self.n_states < 2:
            raise InvalidParams("n_states must be at least 2")
        if not 0.0 < self.drift <= 0.2:
            raise InvalidParams("drift must lie in (0, 1/5]")
        if self.boundary_index is not None and not 0 <= self.boundary_index < self.n_states:
            raise InvalidParams("boundary_index must lie in [0, n_states)")
        if self.reward_spec not in BIRTH_DEATH_REWARDS:
            raise InvalidParams(f"unknown reward_spec {self.reward_spec!r}")


def two_state(params: TwoStateParams = TwoStateParams()) -> TwoActionMdp:
    """Discrete chain of a single-unit rental: state 0 free, state 1 occupied.

    The reward in the free state is the probability of a rental, i.e. of the
    ``0 -> 1`` transition; the treatment raises the rental probability from
    ``p`` to ``p + delta``.
    """
    lam, mu, p, d = params.arrival, params.service, params.rent_prob, params.uplift

    def kernel(prob):
        return np.array([[(1.0 - prob) * lam + mu, prob * lam], [mu, lam]])

    return TwoActionMdp(
        kernel(p),
        kernel(p + d),
        np.array([lam * p, 0.0]),
        np.array([lam * (p + d), 0.0]),
        name="two_state",
        meta={"params": params},
    )


def rental_jump_chain(params: RentalParams = RentalParams()) -> TwoActionMdp:
    """Jump chain of a rental marketplace with ``N`` listings.

    State ``s`` is the number of available listings. Per event: a listing is
    returned with probability ``(N - s) mu / (N mu + N lam)``; otherwise a
    customer arrives with probability ``N lam / (N mu + N lam)`` and rents with
    probability ``s v(a) / (N + s v(a))``. Reward is 1 exactly on a rental.
    """
    N = params.capacity
    lam, mu = params.arrival_rate, params.service_rate
    total = N * mu + N * lam
    arrive = N * lam / total
    s = np.arange(N + 1, dtype=float)
    kernels, rewards, trans = [], [], []
    for v in (params.util_control, params.util_treat):
        P = np.zeros((N + 1, N + 1))
        R = np.zeros((N + 1, N + 1))
        ret = (N - s) * mu / total
        rent = arrive * s * v / (N + s * v)
        idx = np.arange(N + 1)
        P[idx[:-1], idx[:-1] + 1] = ret[:-1]
        P[idx[1:], idx[1:] - 1] = rent[1:]
        R[idx[1:], idx[1:] - 1] = 1.0
        P[idx, idx] = 1.0 - ret - rent
        kernels.append(P)
        rewards.append(rent)
        trans.append(R)
    return TwoActionMdp(
        kernels[0],
        kernels[1],
        rewards[0],
        rewards[1],
        transition_rewards=np.stack(trans),
        name="rental",
        meta={"params": params},
    )


def _birth_death_base(n: int, d: float) -> np.ndarray:
    P = np.zeros((n, n))
    for s in range(n):
        left, stay, right = 0.25, 0.5 + d, 0.25 - d
        if s == 0:
            stay, left = stay + left, 0.0
        if s == n - 1:
            stay, right = stay + right, 0.0
        P[s, s] = stay
        if s > 0:
            P[s, s - 1] = left
        if s < n - 1:
            P[s, s + 1] = right
    return P


def default_boundary_index(n: int, d: float, tail_constant: float = 0.1) -> int:
    """Smallest ``k`` whose stationary tail mass ``sum_{s>=k} rho(s)`` is at most ``c d / n^2``.

    Only ``k <= n - 2`` counts: at ``k = n - 1`` the modified row coincides
    with the base row and both arms are identical. For small chains no tail is
    that light (at ``d = 0.1`` this holds up to ``n`` around 22), and ``k = 1``
    is returned instead, so the treatment removes the drift on every state
    but the bottom one.
    """
    rho = stationary_distribution(_birth_death_base(n, d))
    tails = np.cumsum(rho[::-1])[::-1]
    threshold = tail_constant * d / n**2
    hits = np.nonzero(tails[: n - 1] <= threshold)[0]
    return int(hits[0]) if hits.size else min(1, n - 1)


def _top_indicator_centered(P1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = P1.shape[0]
    r = np.zeros(n)
    r[n - 1] = 1.0
    r -= stationary_distribution(P1) @ r
    return r, r.copy()


BIRTH_DEATH_REWARDS = {"top_indicator_centered": _top_indicator_centered}


def birth_death_family(params: BirthDeathParams = BirthDeathParams()) -> TwoActionMdp:
    """Lazy birth-death chain with drift toward 0 where treatment removes the drift above ``k``.

    The base chain ``P`` moves (left, stay, right) with probabilities
    ``(1/4, 1/2 + d, 1/4 - d)``; boundary mass is folded into the self-loop.
    ``P_1`` uses ``(1/4, 1/2, 1/4)`` on rows ``s >= k`` and ``P_0 = 2 P - P_1``,
    so the 1/2-randomized chain is exactly ``P``. On rows ``s >= k`` the
    control arm moves right with probability ``1/4 - 2 d``, which requires
    ``d <= 1/8`` whenever some row is modified.
    """
    n, d = params.n_states, params.drift
    P = _birth_death_base(n, d)
    k = params.boundary_index
    if k is None:
        k = default_boundary_index(n, d, params.tail_constant)
    P1 = P.copy()
    for s in range(k, n):
        P1[s] = 0.0
        if s > 0:
            P1[s, s - 1] = 0.25
        if s < n - 1:
            P1[s, s + 1] = 0.25
        P1[s, s] = 1.0 - P1[s].sum()
    P0 = 2.0 * P - P1
    if P0.min() < -1e-15 or P0.max() > 1.0 + 1e-15:
        raise InvalidConstruction("P0 = 2 P - P1 leaves [0, 1]")
    P0 = np.clip(P0, 0.0, 1.0)
    r0, r1 = BIRTH_DEATH_REWARDS[params.reward_spec](P1)
    return TwoActionMdp(
        P0, P1, r0, r1, name=f"birth_death_n{n}", meta={"params": params, "boundary_index": k}
    )


def random_mdp(n: int, seed: int, tv_scale: float = 0.05) -> TwoActionMdp:
    """Seeded random MDP with arms ``P_mix -/+ tv_scale * A``.

    ``P_mix`` rows are Dirichlet(1) draws mixed with 5% uniform mass so the
    chain is ergodic. ``A`` has zero row sums and ``||A||_{1,inf} <= 1`` and is
    scaled per row so both arms stay in the simplex; the achieved TV distance
    is therefore at most ``tv_scale`` (see ``meta['delta_tv']``).
    """
    if n < 2:
        raise InvalidParams("n must be at least 2")
    if not 0.0 <= tv_scale <= 1.0:
        raise InvalidParams("tv_scale must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    P_mix = 0.95 * rng.dirichlet(np.ones(n), size=n) + 0.05 / n
    direction = rng.standard_normal((n, n))
    direction -= direction.mean(axis=1, keepdims=True)
    direction /= np.abs(direction).sum(axis=1, keepdims=True)
    # largest per-row step keeping P_mix +/- step * direction non-negative
    with np.errstate(divide="ignore"):
        room = np.where(direction != 0, P_mix / np.abs(direction), np.inf).min(axis=1)
    step = np.minimum(2.0 * tv_scale, room)[:, None]
    A = step * direction / 2.0
    P1 = P_mix + A
    P0 = P_mix - A
    P1 = np.clip(P1, 0.0, None)
    P0 = np.clip(P0, 0.0, None)
    P1 /= P1.sum(axis=1, keepdims=True)
    P0 /= P0.sum(axis=1, keepdims=True)
    r0 = rng.random(n)
    r1 = rng.random(n)
    mdp = TwoActionMdp(P0, P1, r0, r1, name=f"random_n{n}_s{seed}")
    mdp.meta["delta_tv"] = mdp.delta_tv()
    return mdp


def random_state_only_mdp(n: int, seed: int, tv_scale: float = 0.05) -> TwoActionMdp:
    """:func:`random_mdp` with the action-0 reward used for both arms."""
    base = random_mdp(n, seed, tv_scale)
    mdp = TwoActionMdp(base.p0, base.p1, base.r0, base.r0, name=base.name + "_so")
    mdp.meta["delta_tv"] = mdp.delta_tv()
    return mdp


ENVIRONMENTS = ("two_state", "rental", "birth_death", "random")


def build_environment(name: str, **params) -> TwoActionMdp:
    """Construct a named environment from keyword parameters (CLI/config entry point)."""
    builders = {
        "two_state": lambda kw: two_state(TwoStateParams(**kw)),
        "rental": lambda kw: rental_jump_chain(RentalParams(**kw)),
        "birth_death": lambda kw: birth_death_family(BirthDeathParams(**kw)),
        "random": lambda kw: (random_state_only_mdp if kw.pop("state_only", False) else random_mdp)(**kw),
    }
    if name not in builders:
        raise InvalidParams(f"unknown environment {name!r}; expected one of {ENVIRONMENTS}")
    try:
        return builders[name](dict(params))
    except TypeError as err:
        raise InvalidParams(f"bad parameters for {name}: {err}") from err
