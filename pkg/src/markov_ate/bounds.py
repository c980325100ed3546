"""Asymptotic variances and theoretical bounds.

* :func:`cramer_rao` -- lower bound on ``T Var`` of any unbiased ATE estimator,
  attained by the off-policy LSTD estimator.
* :func:`dq_asymptotic_variance` -- exact CLT variance of the DQ estimator from
  its linearization around the population statistics.
* :func:`dq_variance_bound` -- explicit upper bound on the DQ standard
  deviation in terms of the mixing envelope ``(C, lambda)``.
* lemma checkers for the entry-wise non-expansive property.

All quantities assume the 1/2-randomized design.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .chain_core import (
    MixingEstimate,
    estimate_mixing,
    group_inverse,
    group_inverse_norm_bound,
    mixing_log_term,
    stationary_distribution,
)
from .mdp import HALF, TwoActionMdp, exact_analytics


@dataclass(frozen=True)
class VarianceReport:
    sigma_off_sq: float
    sigma_dq_exact_sq: float
    sigma_dq_bound: float

    @property
    def ratio(self) -> float:
        """``sigma_dq_exact / sigma_off``."""
        if self.sigma_off_sq == 0.0:
            return float("inf") if self.sigma_dq_exact_sq > 0 else float("nan")
        return float(np.sqrt(self.sigma_dq_exact_sq / self.sigma_off_sq))


def _policy_td_errors(P, r, R=None):
    rho = stationary_distribution(P)
    lam = float(rho @ r)
    V = group_inverse(P, rho) @ r
    if R is None:
        R = np.broadcast_to(r[:, None], P.shape)
    # td[s, s'] = V(s') - V(s) + R(s, s') - lambda
    td = V[None, :] - V[:, None] + R - lam
    return rho, td


def cramer_rao(mdp: TwoActionMdp) -> float:
    """Lower bound ``sigma_off^2`` on ``T Var`` of unbiased ATE estimators.

    ``2 sum_s rho_a(s)^2 / rho_mix(s) sum_s' P_a(s, s') td_a(s, s')^2`` summed
    over both arms, with ``td_a`` the temporal-difference error of policy
    ``pi_a``. Zero-probability transitions contribute nothing. When rewards are
    bound to transitions the realized ``R[a, s, s']`` replaces ``r_a(s)``.
    """
    rho_mix = stationary_distribution(0.5 * (mdp.p0 + mdp.p1))
    R = mdp.reward_tensor
    total = 0.0
    for P, r, Ra in ((mdp.p0, mdp.r0, R[0]), (mdp.p1, mdp.r1, R[1])):
        rho_a, td = _policy_td_errors(P, r, Ra)
        inner = np.where(P > 0, P * td**2, 0.0).sum(axis=1)
        total += 2.0 * float(np.sum(rho_a**2 / rho_mix * inner))
    return total


def offpolicy_linearization(mdp: TwoActionMdp) -> np.ndarray:
    """Influence function ``g[a, s, s']`` of the off-policy LSTD estimator."""
    rho_mix = stationary_distribution(0.5 * (mdp.p0 + mdp.p1))
    g = np.zeros((2, mdp.n, mdp.n))
    R = mdp.reward_tensor
    for a, (P, r) in enumerate(((mdp.p0, mdp.r0), (mdp.p1, mdp.r1))):
        rho_a, td = _policy_td_errors(P, r, R[a])
        sign = 1.0 if a == 1 else -1.0
        g[a] = sign * 2.0 * (rho_a / rho_mix)[:, None] * td
    return g


def triple_weights(mdp: TwoActionMdp, rho_mix=None) -> np.ndarray:
    """Stationary law ``rho(s) P_a(s, s') / 2`` of the ``(s, a, s')`` chain."""
    if rho_mix is None:
        rho_mix = stationary_distribution(0.5 * (mdp.p0 + mdp.p1))
    return 0.5 * rho_mix[None, :, None] * mdp.kernels


def cramer_rao_linearized(mdp: TwoActionMdp) -> float:
    """``Var_rho(g)`` of the off-policy influence function (a martingale
    difference, so no autocovariance terms)."""
    w = triple_weights(mdp)
    g = offpolicy_linearization(mdp)
    mean = float(np.sum(w * g))
    return float(np.sum(w * (g - mean) ** 2))


def _reversal(P: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Time reversal ``rho(s) P(s, s') / rho(s')`` (transposed), formed from ratios."""
    return (P * rho[:, None]).T / rho[:, None]


def density_ratios(mdp: TwoActionMdp) -> tuple[np.ndarray, np.ndarray]:
    """``v / rho`` and ``W / rho`` for ``v = (P1 - P0)^T rho`` and ``W = (I - P)^{#T} v``.

    ``y = W / rho`` solves ``(I - P~) y = v / rho`` with ``P~`` the time
    reversal of ``P``, and ``rho^T y = 0``. Working with ratios avoids
    dividing by stationary masses far below machine epsilon.
    """
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    ratio = rho[:, None] / rho[None, :]
    x = ((mdp.p1 - mdp.p0) * ratio).sum(axis=0)
    y = group_inverse(_reversal(P, rho), rho) @ x
    return x, y


def dq_linearization(mdp: TwoActionMdp) -> np.ndarray:
    """Linearization ``f~[a, s, s']`` of the DQ estimator around its limit.

    ``f~(s, a, s') = z_s (r(s, a) - lambda + V(s') - V(s))
    + 2 (1{a=1} - 1{a=0}) (V(s') + r(s, a)) - c`` where
    ``z_s = [rho^T (P1 - P0) (I - P)^#]_s / rho(s)`` and ``c`` centers it.
    Transition-bound rewards ``R[a, s, s']`` take the place of ``r(s, a)``.
    """
    ex = exact_analytics(mdp, HALF)
    rho, V, lam = ex.rho_mix, ex.v_mix, ex.lambda_mix
    z = density_ratios(mdp)[1]
    ft = np.zeros((2, mdp.n, mdp.n))
    for a, R in enumerate(mdp.reward_tensor):
        td = R - lam + V[None, :] - V[:, None]
        sign = 1.0 if a == 1 else -1.0
        ft[a] = z[:, None] * td + 2.0 * sign * (V[None, :] + R)
    w = triple_weights(mdp, rho)
    return ft - np.sum(w * ft)


def triple_chain_variance(mdp: TwoActionMdp, values) -> float:
    """Asymptotic variance of ``sqrt(T) mean f(s_t, a_t, s_{t+1})`` under the design.

    ``E[f^2] + 2 E[f(X_0) ((I - P)^# m)(s_1)]`` where ``m(s)`` is the
    conditional mean of ``f`` given ``s_t = s``; the second term sums every
    lagged covariance of the (s, a, s') chain.
    """
    values = np.asarray(values, dtype=float)
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    G = group_inverse(P, rho)
    w = triple_weights(mdp, rho)
    f = values - np.sum(w * values)
    m = 0.5 * np.sum(mdp.kernels * f, axis=(0, 2))
    Gm = G @ m
    return float(np.sum(w * f**2) + 2.0 * np.sum(w * f * Gm[None, None, :]))


def dq_asymptotic_variance(mdp: TwoActionMdp) -> float:
    """Exact limiting variance of ``sqrt(T) (DQ - E[DQ])``."""
    return triple_chain_variance(mdp, dq_linearization(mdp))


def naive_asymptotic_variance(mdp: TwoActionMdp) -> float:
    """Limiting variance of the Naive estimator (mean over treated minus mean over control)."""
    ex = exact_analytics(mdp, HALF)
    rho = ex.rho_mix
    vals = np.zeros((2, mdp.n, mdp.n))
    for a, (r, R) in enumerate(zip(mdp.rewards, mdp.reward_tensor)):
        mu = float(rho @ r)
        sign = 1.0 if a == 1 else -1.0
        vals[a] = sign * 2.0 * (R - mu)
    return triple_chain_variance(mdp, vals)


def _bound_pieces(mdp: TwoActionMdp, mix: MixingEstimate, rho_min: float) -> dict:
    log_c = mixing_log_term(mix.big_c)
    gap = 1.0 - mix.lam
    g_norm = group_inverse_norm_bound(mix)
    z_max = 4.0 * (log_c + max(np.log(1.0 / rho_min), 0.0) + 1.0) / gap
    v_max = g_norm * mdp.r_max
    f_max = 2.0 * (z_max + 2.0) * (v_max + mdp.r_max)
    return {"z_max": z_max, "v_max": v_max, "f_max": f_max, "group_inverse_bound": g_norm}


def dq_variance_bound(mdp: TwoActionMdp, mix: MixingEstimate | None = None) -> float:
    """Explicit upper bound on the DQ limiting standard deviation.

    ``sqrt(2) sqrt((2 ln C + 1) / (1 - lambda)) f_max`` with
    ``f_max <= 2 (z_max + 2) (V_max + r_max)``,
    ``V_max <= (2 ln C + 1) / (1 - lambda) r_max`` and
    ``z_max <= 4 (ln C + ln(1 / rho_min) + 1) / (1 - lambda)``.
    """
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    if mix is None:
        mix = estimate_mixing(P, rho)
    pieces = _bound_pieces(mdp, mix, float(rho.min()))
    return float(np.sqrt(2.0) * np.sqrt(pieces["group_inverse_bound"]) * pieces["f_max"])


def nonexpansive_vector(mdp: TwoActionMdp) -> tuple[np.ndarray, np.ndarray]:
    """``v = (P1 - P0)^T rho`` and ``W = (I - P)^{#T} v`` for the 1/2 design."""
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    v = (mdp.p1 - mdp.p0).T @ rho
    W = group_inverse(P, rho).T @ v
    return v, W


def check_entrywise_nonexpansive(mdp: TwoActionMdp, mix: MixingEstimate | None = None) -> dict:
    """Check ``|W(rho)(s)| <= c rho(s)`` with ``c = 4 (ln C + ln(1/rho_min) + 1) / (1 - lambda)``."""
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    if mix is None:
        mix = estimate_mixing(P, rho)
    x, y = density_ratios(mdp)
    max_ratio = float(np.max(np.abs(y)))
    c = 4.0 * (mixing_log_term(mix.big_c) + np.log(1.0 / rho.min()) + 1.0) / (1.0 - mix.lam)
    return {
        "max_ratio": max_ratio,
        "c": float(c),
        "holds": bool(max_ratio <= c),
        "v_ratio": float(np.max(np.abs(x))),
    }


def propagated_ratio(mdp: TwoActionMdp, k_max: int = 50) -> float:
    """``max_{k <= k_max, s'} |(v^T P^k)(s')| / rho(s')``; at most 2 by construction."""
    P = 0.5 * (mdp.p0 + mdp.p1)
    rho = stationary_distribution(P)
    x = (mdp.p1 - mdp.p0).T @ rho
    worst = 0.0
    for _ in range(k_max + 1):
        worst = max(worst, float(np.max(np.abs(x) / rho)))
        x = x @ P
    return worst


def variance_report(mdp: TwoActionMdp, mix: MixingEstimate | None = None) -> VarianceReport:
    return VarianceReport(
        sigma_off_sq=cramer_rao(mdp),
        sigma_dq_exact_sq=dq_asymptotic_variance(mdp),
        sigma_dq_bound=dq_variance_bound(mdp, mix),
    )


BOUNDS_COLUMNS = ("instance", "sigma_off", "sigma_dq_exact", "sigma_dq_bound", "ratio")


def bounds_rows(reports: dict[str, VarianceReport]) -> list[dict]:
    return [
        {
            "instance": name,
            "sigma_off": float(np.sqrt(rep.sigma_off_sq)),
            "sigma_dq_exact": float(np.sqrt(rep.sigma_dq_exact_sq)),
            "sigma_dq_bound": rep.sigma_dq_bound,
            "ratio": rep.ratio,
        }
        for name, rep in reports.items()
    ]


def bounds_csv(reports: dict[str, VarianceReport]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=BOUNDS_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in bounds_rows(reports):
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return out.getvalue()
