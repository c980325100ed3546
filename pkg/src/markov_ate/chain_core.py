"""Linear algebra for finite ergodic Markov chains.

Stationary distributions, the group inverse ``(I - P)^#``, the row-wise
l1 operator norm and an empirical estimate of the geometric mixing envelope
``||P^k - 1 rho^T||_{1,inf} <= C lambda^k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, NotErgodic, SingularSystem


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used across the module.

    Tests may build a tighter copy with :func:`dataclasses.replace` and pass it
    through the ``tol`` keyword of the functions below.
    """

    row_sum: float = 1e-12
    unit_eigenvalue: float = 1e-8
    positivity: float = 0.0
    max_condition: float = 1e13
    norm_floor: float = 1e-13
    lambda_inflation: float = 1.001
    lambda_offset: float = 1e-9
    lambda_cap: float = 0.999
    lambda_floor: float = 1e-6


TOL = Tolerances()


@dataclass(frozen=True)
class ChainAnalysis:
    P: np.ndarray
    rho: np.ndarray
    group_inverse: np.ndarray
    rho_min: float
    slem: float

    @property
    def n(self) -> int:
        return self.P.shape[0]


@dataclass(frozen=True)
class MixingEstimate:
    big_c: float
    lam: float
    per_k_norms: list[float] = field(default_factory=list)

    def envelope(self, k: int) -> float:
        return self.big_c * self.lam**k


def check_stochastic(P, tol: Tolerances = TOL, name: str = "P") -> np.ndarray:
    """Return ``P`` as a float array after validating it is row-stochastic."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise InvalidParams(f"{name} must be a square matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise InvalidParams(f"{name} has non-finite entries")
    if P.min() < 0:
        raise InvalidParams(f"{name} has negative entries (min {P.min():.3g})")
    err = np.abs(P.sum(axis=1) - 1.0).max()
    if err > tol.row_sum:
        raise InvalidParams(f"{name} rows do not sum to one (max error {err:.3g})")
    return P


def _eigenvalue_moduli(P: np.ndarray) -> np.ndarray:
    return np.sort(np.abs(np.linalg.eigvals(P)))[::-1]


def is_irreducible(P) -> bool:
    from scipy.sparse.csgraph import connected_components

    n_comp, _ = connected_components(np.asarray(P) > 0, directed=True, connection="strong")
    return n_comp == 1


def _gth(P: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination (subtraction-free, so tiny masses stay accurate)."""
    A = np.array(P, dtype=float)
    n = A.shape[0]
    for i in range(n - 1):
        scale = A[i, i + 1 :].sum()
        if scale <= 0.0:
            raise NotErgodic(f"state block {{0..{i}}} is closed; chain is reducible")
        A[i + 1 :, i] /= scale
        A[i + 1 :, i + 1 :] += np.outer(A[i + 1 :, i], A[i, i + 1 :])
    x = np.zeros(n)
    x[n - 1] = 1.0
    for i in range(n - 2, -1, -1):
        x[i] = x[i + 1 :] @ A[i + 1 :, i]
    return x / x.sum()


def stationary_distribution(P, tol: Tolerances = TOL, check: bool = True) -> np.ndarray:
    """Stationary distribution of an ergodic transition matrix.

    Uses GTH elimination, which never subtracts and therefore returns
    strictly positive, relatively accurate probabilities even when some
    states carry mass far below machine epsilon.

    Parameters
    ----------
    P : (n, n) array_like
        Row-stochastic transition matrix.
    check : bool
        When true, reject chains with more than one eigenvalue of modulus
        (numerically) one, i.e. reducible or periodic chains.

    Raises
    ------
    NotErgodic
        If the stationary law is not unique or not strictly positive.
    """
    P = check_stochastic(P, tol)
    n = P.shape[0]
    if check and n > 1:
        moduli = _eigenvalue_moduli(P)
        if moduli[1] > 1.0 - tol.unit_eigenvalue:
            raise NotErgodic(
                f"second eigenvalue modulus {moduli[1]:.12f} is within "
                f"{tol.unit_eigenvalue:g} of one"
            )
    rho = _gth(P)
    if not np.all(np.isfinite(rho)) or rho.min() <= tol.positivity:
        raise NotErgodic(f"stationary vector is not strictly positive (min {rho.min():.3g})")
    return rho


def stationary_distribution_lstsq(P) -> np.ndarray:
    """Least-squares solve of ``[P^T - I; 1^T] rho = [0; 1]``; kept as a cross-check."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    rho, *_ = np.linalg.lstsq(A, b, rcond=None)
    return rho


def group_inverse(P, rho, tol: Tolerances = TOL) -> np.ndarray:
    """Group inverse ``(I - P + 1 rho^T)^{-1} - 1 rho^T`` of ``I - P``."""
    P = np.asarray(P, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = P.shape[0]
    one_rho = np.outer(np.ones(n), rho)
    Z = np.eye(n) - P + one_rho
    cond = np.linalg.cond(Z)
    if not np.isfinite(cond) or cond > tol.max_condition:
        raise SingularSystem(f"I - P + 1 rho^T is numerically singular (cond {cond:.3g})")
    return np.linalg.inv(Z) - one_rho


def row_l1_inf_norm(M) -> float:
    """Maximum over rows of the l1 norm of the row."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.abs(M).sum(axis=1).max())


def second_eigenvalue_modulus(P) -> float:
    P = np.asarray(P, dtype=float)
    if P.shape[0] < 2:
        return 0.0
    return float(_eigenvalue_moduli(P)[1])


def analyze_chain(P, tol: Tolerances = TOL) -> ChainAnalysis:
    P = check_stochastic(P, tol)
    rho = stationary_distribution(P, tol)
    G = group_inverse(P, rho, tol)
    return ChainAnalysis(
        P=P, rho=rho, group_inverse=G, rho_min=float(rho.min()), slem=second_eigenvalue_modulus(P)
    )


def estimate_mixing(P, rho=None, k_max: int = 200, tol: Tolerances = TOL) -> MixingEstimate:
    """Fit a geometric envelope ``C lambda^k`` to ``||P^k - 1 rho^T||_{1,inf}``.

    ``lambda`` is the second eigenvalue modulus inflated by a small safety
    factor (``slem * 1.001 + 1e-9``, capped at 0.999 and floored at 1e-6);
    ``C`` is then the smallest constant dominating every norm for
    ``k = 0..k_max``. Norms below ``tol.norm_floor`` are recorded as zero, since
    they are round-off.
    """
    if k_max < 2:
        raise InvalidParams("k_max must be at least 2")
    P = check_stochastic(P, tol)
    if rho is None:
        rho = stationary_distribution(P, tol)
    else:
        # still enforce the ergodicity precondition
        if second_eigenvalue_modulus(P) > 1.0 - tol.unit_eigenvalue:
            raise NotErgodic("chain is not ergodic")
    rho = np.asarray(rho, dtype=float)
    n = P.shape[0]
    slem = second_eigenvalue_modulus(P)
    lam = min(tol.lambda_cap, slem * tol.lambda_inflation + tol.lambda_offset)
    lam = max(tol.lambda_floor, lam)

    one_rho = np.outer(np.ones(n), rho)
    norms = []
    Pk = np.eye(n)
    for _ in range(k_max + 1):
        v = row_l1_inf_norm(Pk - one_rho)
        norms.append(0.0 if v < tol.norm_floor else v)
        Pk = Pk @ P
    log_lam = np.log(lam)
    big_c = max(
        (np.exp(np.log(v) - k * log_lam) for k, v in enumerate(norms) if v > 0), default=1.0
    )
    return MixingEstimate(big_c=float(big_c), lam=float(lam), per_k_norms=norms)


def mixing_log_term(big_c: float) -> float:
    """``ln C`` with ``C`` clamped to be at least one."""
    return float(np.log(max(big_c, 1.0)))


def group_inverse_norm_bound(mix: MixingEstimate) -> float:
    """Upper bound ``(2 ln C + 1) / (1 - lambda)`` on ``||(I-P)^#||_{1,inf}``."""
    return (2.0 * mixing_log_term(mix.big_c) + 1.0) / (1.0 - mix.lam)


def check_group_inverse_norm_bound(analysis: ChainAnalysis, mix: MixingEstimate) -> dict:
    lhs = row_l1_inf_norm(analysis.group_inverse)
    rhs = group_inverse_norm_bound(mix)
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs)}
