"""ATE estimators on empirical sufficient statistics.

Every estimator is a pure function of an :class:`EmpiricalModel`; passing a
:class:`Trajectory` converts it first, so both entry points agree exactly.

Solvers work on the dominant recurrent class of the visited empirical chain.
Short trajectories often leave a few rarely visited states with no observed
exit or return; those are trimmed and the dropped visit mass is reported in
``diagnostics["trimmed_mass"]``. If it exceeds ``max_trim`` the chain is
treated as not ergodic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .chain_core import group_inverse, stationary_distribution
from .empirical import EmpiricalModel
from .errors import (
    ActionUnobserved,
    EmpiricalChainNotErgodic,
    InvalidParams,
    NotErgodic,
    PerActionChainNotErgodic,
    RewardNotStateOnly,
    SingularSystem,
)
from .simulate import Trajectory, empirical_model

MAX_TRIM = 0.01


@dataclass(frozen=True)
class EstimateResult:
    value: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def _as_model(data) -> EmpiricalModel:
    if isinstance(data, Trajectory):
        return empirical_model(data)
    if isinstance(data, EmpiricalModel):
        return data
    raise InvalidParams(f"expected Trajectory or EmpiricalModel, got {type(data).__name__}")


def _require_both_actions(model: EmpiricalModel) -> None:
    for a, mass in enumerate(model.d.sum(axis=1)):
        if mass <= 0:
            raise ActionUnobserved(f"action {a} never observed")


@dataclass(frozen=True)
class _Subchain:
    idx: np.ndarray
    P: np.ndarray
    rho: np.ndarray
    G: np.ndarray
    trimmed_mass: float


def _dominant_class(C: np.ndarray, max_trim: float, exc) -> _Subchain:
    """Restrict the count matrix ``C`` to its heaviest closed-enough class."""
    out = C.sum(axis=1)
    total = out.sum()
    visited = np.nonzero(out > 0)[0]
    if visited.size == 0:
        raise exc("no transitions observed")
    sub = C[np.ix_(visited, visited)]
    n_comp, labels = connected_components(sub > 0, directed=True, connection="strong")
    mass = np.bincount(labels, weights=out[visited], minlength=n_comp)
    best = int(np.argmax(mass))
    idx = visited[labels == best]
    block = C[np.ix_(idx, idx)]
    kept = block.sum()
    trimmed = float(1.0 - kept / total)
    if trimmed > max_trim:
        raise exc(
            f"empirical chain is reducible: dominant class keeps {kept / total:.4f} "
            f"of the transition mass (tolerance {max_trim:g})"
        )
    P = block / block.sum(axis=1, keepdims=True)
    try:
        rho = stationary_distribution(P, check=False)
        G = group_inverse(P, rho)
    except (NotErgodic, SingularSystem) as err:
        raise exc(str(err)) from err
    return _Subchain(idx=idx, P=P, rho=rho, G=G, trimmed_mass=trimmed)


def _coverage(model: EmpiricalModel, idx=None) -> dict:
    both = (model.d > 0).all(axis=0)
    info = {"coverage": float(both.mean())}
    if idx is not None:
        info["class_size"] = int(len(idx))
    return info


def naive(data) -> EstimateResult:
    """Mean reward over treated steps minus mean reward over control steps."""
    model = _as_model(data)
    _require_both_actions(model)
    d = model.d.sum(axis=1)
    h = model.h.sum(axis=1)
    value = float(h[1] / d[1] - h[0] / d[0])
    return EstimateResult(value, "naive", _coverage(model))


def _mixed_solution(model: EmpiricalModel, max_trim: float):
    C = model.F[0] + model.F[1]
    chain = _dominant_class(C, max_trim, EmpiricalChainNotErgodic)
    i = chain.idx
    F = model.F[:, i][:, :, i]
    h = model.h[:, i]
    d = F.sum(axis=2)
    r_hat = (h[0] + h[1]) / (d[0] + d[1])
    lam = float(chain.rho @ r_hat)
    V = chain.G @ r_hat
    return chain, F, h, d, r_hat, lam, V


def dq_lstd(data, max_trim: float = MAX_TRIM) -> EstimateResult:
    """Difference-in-Q estimator with an LSTD(0) value function.

    ``V = (I - P)^# r`` for the row-normalized empirical kernel ``P`` of
    ``F_0 + F_1`` and ``r = (h_0 + h_1) / (d_0 + d_1)``; this is the
    zero-mean solution of the LSTD(0) normal equations. The reported value
    is ``1^T (F_1 - F_0) V + 1^T (h_1 - h_0)``.

    ``diagnostics["dynkin"]`` holds the variant that averages
    ``Q(s_t, a_t)`` separately over treated and control steps.
    """
    model = _as_model(data)
    _require_both_actions(model)
    chain, F, h, d, r_hat, lam, V = _mixed_solution(model, max_trim)
    value = float((F[1] - F[0]).sum(axis=0) @ V + (h[1] - h[0]).sum())
    m1 = d[1].sum()
    m0 = d[0].sum()
    if m1 > 0 and m0 > 0:
        dynkin = float(
            (h[1].sum() + F[1].sum(axis=0) @ V) / m1 - (h[0].sum() + F[0].sum(axis=0) @ V) / m0
        )
    else:
        dynkin = float("nan")
    residual = float(np.max(np.abs(V - chain.P @ V - (r_hat - lam))))
    diag = {
        "residual": residual,
        "lambda": lam,
        "dynkin": dynkin,
        "trimmed_mass": chain.trimmed_mass,
        **_coverage(model, chain.idx),
    }
    return EstimateResult(value, "dq", diag)


def dq_lstd_regularized(data, alpha: float = 0.0, max_trim: float = MAX_TRIM) -> EstimateResult:
    """DQ with a ridge-regularized state-action fixed point.

    Solves ``((1 + alpha) I - P_sa) Q = r_sa - lambda`` where ``P_sa`` moves
    ``(s, a) -> (s', a')`` with probability ``P_a(s, s') pi(a' | s')`` and
    ``pi(a | s)`` is the empirical action frequency in ``s``. At ``alpha = 0``
    the zero-mean solution is used, which reproduces :func:`dq_lstd`.
    Larger ``alpha`` shrinks ``Q`` toward zero and the value toward the
    reward-only difference ``1^T (h_1 - h_0)``.
    """
    if alpha < 0:
        raise InvalidParams("alpha must be non-negative")
    model = _as_model(data)
    _require_both_actions(model)
    chain, F, h, d, r_hat, lam, _ = _mixed_solution(model, max_trim)
    m = len(chain.idx)
    pi = d / d.sum(axis=0)
    # per-action kernels; unobserved (s, a) rows fall back to the mixed kernel
    P_a = np.empty_like(F)
    r_a = np.empty_like(h)
    for a in (0, 1):
        seen = d[a] > 0
        P_a[a] = chain.P
        P_a[a][seen] = F[a][seen] / d[a][seen, None]
        r_a[a] = np.where(seen, h[a] / np.where(seen, d[a], 1.0), r_hat)
    # state-action index a * m + s
    P_sa = np.zeros((2 * m, 2 * m))
    for a in (0, 1):
        for b in (0, 1):
            P_sa[a * m : (a + 1) * m, b * m : (b + 1) * m] = P_a[a] * pi[b][None, :]
    rhs = r_a.reshape(-1) - lam
    if alpha == 0.0:
        mu = (pi * chain.rho[None, :]).reshape(-1)
        Q = group_inverse(P_sa, mu) @ rhs
    else:
        Q = np.linalg.solve((1.0 + alpha) * np.eye(2 * m) - P_sa, rhs)
    Q = Q.reshape(2, m)
    V = (pi * Q).sum(axis=0)
    value = float((F[1] - F[0]).sum(axis=0) @ V + (h[1] - h[0]).sum())
    diag = {"alpha": float(alpha), "trimmed_mass": chain.trimmed_mass, **_coverage(model, chain.idx)}
    return EstimateResult(value, "dq_reg", diag)


def dq_kth_order(data, max_order: int = 1, max_trim: float = MAX_TRIM, atol: float = 1e-9) -> EstimateResult:
    """Plug-in K-th order DQ for state-only rewards.

    Order ``k`` contributes ``1^T (F_1 - F_0) V_k + sum_s (d_1 - d_0)(s) f_{k-1}(s)``
    with ``V_k = (I - P)^# f_{k-1}``, ``f_0 = r`` and
    ``f_k = (P_1 - P_0) V_k / 2``; only odd orders enter the sum. For
    ``k = 1`` the reward part uses ``h`` directly, so ``K = 1`` equals
    :func:`dq_lstd`.
    """
    if max_order < 1:
        raise InvalidParams("max_order must be at least 1")
    model = _as_model(data)
    _require_both_actions(model)
    chain, F, h, d, r_hat, lam, _ = _mixed_solution(model, max_trim)
    both = (d[0] > 0) & (d[1] > 0)
    r0 = h[0][both] / d[0][both]
    r1 = h[1][both] / d[1][both]
    if both.any() and np.max(np.abs(r1 - r0)) > atol * max(1.0, np.max(np.abs(r_hat))):
        raise RewardNotStateOnly("empirical rewards differ across actions in some state")
    P_a = np.empty_like(F)
    for a in (0, 1):
        seen = d[a] > 0
        P_a[a] = chain.P
        P_a[a][seen] = F[a][seen] / d[a][seen, None]
    diff_F = (F[1] - F[0]).sum(axis=0)
    f = r_hat
    total = 0.0
    terms = []
    for k in range(1, max_order + 1):
        V = chain.G @ f
        if k == 1:
            term = float(diff_F @ V + (h[1] - h[0]).sum())
        else:
            term = float(diff_F @ V + (d[1] - d[0]) @ f)
        terms.append(term)
        if k % 2 == 1:
            total += term
        f = 0.5 * (P_a[1] - P_a[0]) @ V
    diag = {"terms": terms, "trimmed_mass": chain.trimmed_mass, **_coverage(model, chain.idx)}
    return EstimateResult(total, "dq_k", diag)


def offpolicy_lstd(data, max_trim: float = MAX_TRIM) -> EstimateResult:
    """Off-policy LSTD: ``rho_a^T r_a`` for each empirical per-action chain."""
    model = _as_model(data)
    _require_both_actions(model)
    gains = []
    trimmed = []
    for a in (0, 1):
        chain = _dominant_class(model.F[a], max_trim, PerActionChainNotErgodic)
        i = chain.idx
        r = model.h[a, i] / model.d[a, i]
        gains.append(float(chain.rho @ r))
        trimmed.append(chain.trimmed_mass)
    diag = {"lambda0": gains[0], "lambda1": gains[1], "trimmed_mass": max(trimmed), **_coverage(model)}
    return EstimateResult(gains[1] - gains[0], "ope_lstd", diag)


ESTIMATORS = {
    "naive": naive,
    "dq": dq_lstd,
    "dq_reg": dq_lstd_regularized,
    "dq_k": dq_kth_order,
    "ope_lstd": offpolicy_lstd,
}


def get_estimator(name: str):
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise InvalidParams(f"unknown estimator {name!r}; expected one of {sorted(ESTIMATORS)}") from None
