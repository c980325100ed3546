"""Two-action MDPs and their exact, model-based quantities.

Everything here is computed from the known kernels and rewards: average
rewards of the all-control / all-treat / randomized policies, value functions,
the idealized expectations of the Naive and DQ estimators, the perturbation
(Taylor) expansion of the ATE and the policy-optimization surrogates.

Value functions use the normalization ``V = (I - P)^# r``, so ``rho^T V = 0``.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from . import chain_core
from .chain_core import group_inverse, row_l1_inf_norm, stationary_distribution
from .errors import InvalidParams, RewardNotStateOnly


@dataclass(frozen=True, eq=False)
class TwoActionMdp:
    """Kernels ``p0``/``p1`` and expected rewards ``r0``/``r1`` of a two-action MDP.

    ``transition_rewards`` optionally holds realized rewards ``R[a, s, s']``
    bound to a transition; the expected rewards must then equal
    ``sum_s' P_a(s, s') R[a, s, s']``. Simulation records ``R`` when present
    and ``r_a(s)`` otherwise.
    """

    p0: np.ndarray
    p1: np.ndarray
    r0: np.ndarray
    r1: np.ndarray
    transition_rewards: np.ndarray | None = None
    name: str = "mdp"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p0 = chain_core.check_stochastic(self.p0, name="p0")
        p1 = chain_core.check_stochastic(self.p1, name="p1")
        if p0.shape != p1.shape:
            raise InvalidParams("p0 and p1 must have the same shape")
        n = p0.shape[0]
        if n < 2:
            raise InvalidParams("an MDP needs at least two states")
        r0 = np.asarray(self.r0, dtype=float).reshape(-1)
        r1 = np.asarray(self.r1, dtype=float).reshape(-1)
        if r0.shape != (n,) or r1.shape != (n,):
            raise InvalidParams("reward vectors must have length n")
        if not (np.all(np.isfinite(r0)) and np.all(np.isfinite(r1))):
            raise InvalidParams("rewards must be finite")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "r1", r1)
        if self.transition_rewards is not None:
            R = np.asarray(self.transition_rewards, dtype=float)
            if R.shape != (2, n, n):
                raise InvalidParams("transition_rewards must have shape (2, n, n)")
            for a, (P, r) in enumerate(((p0, r0), (p1, r1))):
                if np.abs((P * R[a]).sum(axis=1) - r).max() > 1e-12:
                    raise InvalidParams(f"transition_rewards[{a}] inconsistent with r{a}")
            object.__setattr__(self, "transition_rewards", R)

    @property
    def n(self) -> int:
        return self.p0.shape[0]

    @property
    def r_max(self) -> float:
        return float(max(np.abs(self.r0).max(), np.abs(self.r1).max()))

    @property
    def kernels(self) -> np.ndarray:
        return np.stack([self.p0, self.p1])

    @property
    def rewards(self) -> np.ndarray:
        return np.stack([self.r0, self.r1])

    @property
    def reward_tensor(self) -> np.ndarray:
        """Realized rewards ``R[a, s, s']``; ``r_a(s)`` broadcast when rewards are not transition-bound."""
        if self.transition_rewards is not None:
            return self.transition_rewards
        return np.repeat(self.rewards[:, :, None], self.n, axis=2)

    @property
    def state_only_rewards(self) -> bool:
        return bool(np.allclose(self.r0, self.r1, rtol=0.0, atol=1e-12))

    def delta_tv(self) -> float:
        return float(0.5 * np.abs(self.p1 - self.p0).sum(axis=1).max())

    def with_rewards(self, r0, r1) -> "TwoActionMdp":
        return TwoActionMdp(self.p0, self.p1, r0, r1, name=self.name, meta=dict(self.meta))


@dataclass(frozen=True)
class ExperimentPolicy:
    """Bernoulli design treating every step independently with ``treat_prob``."""

    treat_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.treat_prob < 1.0:
            raise InvalidParams("treat_prob must lie strictly between 0 and 1")


HALF = ExperimentPolicy(0.5)


@dataclass(frozen=True)
class ExactAnalytics:
    ate: float
    lambda0: float
    lambda1: float
    lambda_mix: float
    rho0: np.ndarray
    rho1: np.ndarray
    rho_mix: np.ndarray
    v_mix: np.ndarray
    q_mix: np.ndarray
    naive_expected: float
    dq_expected: float
    delta_tv: float
    p_mix: np.ndarray
    r_mix: np.ndarray
    group_inverse_mix: np.ndarray

    @property
    def naive_bias(self) -> float:
        return self.naive_expected - self.ate

    @property
    def dq_bias(self) -> float:
        return self.dq_expected - self.ate

    def as_dict(self) -> dict:
        return {
            "ate": self.ate,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "lambda_mix": self.lambda_mix,
            "naive_expected": self.naive_expected,
            "dq_expected": self.dq_expected,
            "delta_tv": self.delta_tv,
        }


@dataclass(frozen=True)
class TaylorExpansion:
    order: int
    terms: list[float]
    partial_sums: list[float]
    remainder_bound: float


def mixed_kernel(mdp: TwoActionMdp, policy: ExperimentPolicy = HALF) -> np.ndarray:
    q = policy.treat_prob
    return (1.0 - q) * mdp.p0 + q * mdp.p1


def mixed_reward(mdp: TwoActionMdp, policy: ExperimentPolicy = HALF) -> np.ndarray:
    q = policy.treat_prob
    return (1.0 - q) * mdp.r0 + q * mdp.r1


def average_reward(P, r) -> float:
    return float(stationary_distribution(P) @ np.asarray(r, dtype=float))


def value_function(P, r, rho=None) -> tuple[float, np.ndarray]:
    """Average reward and canonical V-function ``(I-P)^# r`` of a chain."""
    if rho is None:
        rho = stationary_distribution(P)
    r = np.asarray(r, dtype=float)
    return float(rho @ r), group_inverse(P, rho) @ r


def exact_analytics(mdp: TwoActionMdp, policy: ExperimentPolicy = HALF) -> ExactAnalytics:
    rho0 = stationary_distribution(mdp.p0)
    rho1 = stationary_distribution(mdp.p1)
    lambda0 = float(rho0 @ mdp.r0)
    lambda1 = float(rho1 @ mdp.r1)

    p_mix = mixed_kernel(mdp, policy)
    r_mix = mixed_reward(mdp, policy)
    rho_mix = stationary_distribution(p_mix)
    G = group_inverse(p_mix, rho_mix)
    lambda_mix = float(rho_mix @ r_mix)
    v_mix = G @ r_mix
    q_mix = np.column_stack(
        [mdp.r0 - lambda_mix + mdp.p0 @ v_mix, mdp.r1 - lambda_mix + mdp.p1 @ v_mix]
    )
    return ExactAnalytics(
        ate=lambda1 - lambda0,
        lambda0=lambda0,
        lambda1=lambda1,
        lambda_mix=lambda_mix,
        rho0=rho0,
        rho1=rho1,
        rho_mix=rho_mix,
        v_mix=v_mix,
        q_mix=q_mix,
        naive_expected=float(rho_mix @ (mdp.r1 - mdp.r0)),
        dq_expected=float(rho_mix @ (q_mix[:, 1] - q_mix[:, 0])),
        delta_tv=mdp.delta_tv(),
        p_mix=p_mix,
        r_mix=r_mix,
        group_inverse_mix=G,
    )


def taylor_expand_ate(mdp: TwoActionMdp, order: int) -> TaylorExpansion:
    """Expansion of the ATE in the kernel perturbation around ``P_{1/2}``.

    With ``P_1 = P_mix + d A`` and ``P_0 = P_mix - d A`` (``d`` the largest
    per-state TV distance between the arms), term ``k`` is
    ``d^k [rho^T (A G)^k r1 - rho^T (-A G)^k r0]`` where ``G = (I - P_mix)^#``.
    Term 0 is the idealized Naive estimate and terms 0..1 sum to the idealized
    DQ estimate.
    """
    if order < 0:
        raise InvalidParams("order must be non-negative")
    p_mix = mixed_kernel(mdp, HALF)
    rho = stationary_distribution(p_mix)
    G = group_inverse(p_mix, rho)
    d = mdp.delta_tv()
    if d == 0.0:
        naive = float(rho @ (mdp.r1 - mdp.r0))
        terms = [naive] + [0.0] * order
        return TaylorExpansion(order, terms, list(np.cumsum(terms)), 0.0)

    # d * A = (P1 - P0) / 2, so the powers never divide by d
    half_diff = 0.5 * (mdp.p1 - mdp.p0)
    step = half_diff @ G
    up = rho.copy()
    down = rho.copy()
    terms = []
    for _ in range(order + 1):
        terms.append(float(up @ mdp.r1 - down @ mdp.r0))
        up = up @ step
        down = -(down @ step)
    remainder = 2.0 * (d * row_l1_inf_norm(G)) ** (order + 1) * mdp.r_max
    return TaylorExpansion(order, terms, [float(x) for x in np.cumsum(terms)], float(remainder))


def _require_state_only(r0, r1, atol: float = 1e-12) -> np.ndarray:
    r0 = np.asarray(r0, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    if not np.allclose(r0, r1, rtol=0.0, atol=atol):
        raise RewardNotStateOnly(
            f"rewards differ across actions (max gap {np.abs(r1 - r0).max():.3g})"
        )
    return 0.5 * (r0 + r1)


def kth_order_dq_expected(mdp: TwoActionMdp, max_order: int) -> float:
    """Idealized K-th order DQ estimate (sum of the odd-order corrections).

    Order ``k`` solves the auxiliary MDP with state reward ``f^{(k-1)}``
    (``f^{(0)} = r``), takes the average Q-difference under ``rho_{1/2}`` and
    propagates ``f^{(k)} = (Q^{(k)}(., 1) - Q^{(k)}(., 0)) / 2``.
    """
    if max_order < 1:
        raise InvalidParams("max_order must be at least 1")
    r = _require_state_only(mdp.r0, mdp.r1)
    p_mix = mixed_kernel(mdp, HALF)
    rho = stationary_distribution(p_mix)
    G = group_inverse(p_mix, rho)
    diff = mdp.p1 - mdp.p0
    f = r
    total = 0.0
    for k in range(1, max_order + 1):
        q_diff = diff @ (G @ f)
        if k % 2 == 1:
            total += float(rho @ q_diff)
        f = 0.5 * q_diff
    return total


def _target_probs(target, n: int) -> np.ndarray:
    pi = np.broadcast_to(np.asarray(target, dtype=float), (n,)).copy()
    if pi.min() < 0 or pi.max() > 1:
        raise InvalidParams("target action-1 probabilities must lie in [0, 1]")
    return pi


def _surrogate(mdp, P_b, rho_b, G_b, q_b, r0, r1, pi) -> float:
    r_b = (1.0 - q_b) * r0 + q_b * r1
    lam_b = float(rho_b @ r_b)
    V = G_b @ r_b
    Q0 = r0 - lam_b + mdp.p0 @ V
    Q1 = r1 - lam_b + mdp.p1 @ V
    advantage = (1.0 - pi) * Q0 + pi * Q1 - V
    return lam_b + float(rho_b @ advantage)


def surrogate_objectives(mdp: TwoActionMdp, behavior: ExperimentPolicy, target) -> dict:
    """True average reward of ``target`` and its two behavior-policy surrogates.

    ``lambda_tr`` evaluates the advantage of ``target`` under the behavior
    policy's value functions; ``lambda_dq`` is the same expression on the
    auxiliary MDP whose reward is ``r_target(s)`` for both actions.
    """
    pi = _target_probs(target, mdp.n)
    q_b = behavior.treat_prob
    P_b = mixed_kernel(mdp, behavior)
    rho_b = stationary_distribution(P_b)
    G_b = group_inverse(P_b, rho_b)

    P_pi = (1.0 - pi)[:, None] * mdp.p0 + pi[:, None] * mdp.p1
    r_pi = (1.0 - pi) * mdp.r0 + pi * mdp.r1
    lambda_true = float(stationary_distribution(P_pi) @ r_pi)

    lambda_tr = _surrogate(mdp, P_b, rho_b, G_b, q_b, mdp.r0, mdp.r1, pi)
    lambda_dq = _surrogate(mdp, P_b, rho_b, G_b, q_b, r_pi, r_pi, pi)
    return {"lambda_true": lambda_true, "lambda_tr": lambda_tr, "lambda_dq": lambda_dq}


# -- plain-text interchange format -------------------------------------------
#
#   n
#   n rows of P0
#   n rows of P1
#   r0
#   r1
#
# Whitespace-separated decimals; blank lines and '#' comments are ignored.


def dumps_mdp(mdp: TwoActionMdp) -> str:
    out = io.StringIO()
    out.write(f"# {mdp.name}\n{mdp.n}\n")
    for M in (mdp.p0, mdp.p1):
        for row in M:
            out.write(" ".join(repr(float(x)) for x in row) + "\n")
    for r in (mdp.r0, mdp.r1):
        out.write(" ".join(repr(float(x)) for x in r) + "\n")
    return out.getvalue()


def loads_mdp(text: str, name: str = "mdp") -> TwoActionMdp:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines:
        raise InvalidParams("empty MDP file")
    try:
        n = int(lines[0])
        rows = [[float(x) for x in line.split()] for line in lines[1:]]
    except ValueError as exc:
        raise InvalidParams(f"malformed MDP file: {exc}") from None
    if len(rows) != 2 * n + 2 or any(len(row) != n for row in rows):
        raise InvalidParams(f"expected {2 * n + 2} rows of {n} numbers after the header")
    arr = np.array(rows)
    return TwoActionMdp(arr[:n], arr[n : 2 * n], arr[2 * n], arr[2 * n + 1], name=name)


def save_mdp(mdp: TwoActionMdp, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_mdp(mdp))


def load_mdp(path) -> TwoActionMdp:
    with open(path) as fh:
        return loads_mdp(fh.read(), name=os.path.splitext(os.path.basename(str(path)))[0])
