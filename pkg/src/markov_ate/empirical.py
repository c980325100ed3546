"""Sufficient statistics of a trajectory.

For ``T`` recorded transitions ``(s_t, a_t, s_{t+1})`` with reward ``r_t``:

* ``F[a, s, s'] = 2 #{t : s_t = s, a_t = a, s_{t+1} = s'} / T``
* ``h[a, s] = 2 sum_{t : s_t = s, a_t = a} r_t / T``
* ``d[a, s] = sum_s' F[a, s, s']`` (the diagonal of ``D_a``)

The factor 2 makes ``F_a -> diag(rho) P_a`` under the 1/2 design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams


@dataclass(frozen=True, eq=False)
class EmpiricalModel:
    F: np.ndarray
    h: np.ndarray
    T: float

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if F.ndim != 3 or F.shape[0] != 2 or F.shape[1] != F.shape[2]:
            raise InvalidParams("F must have shape (2, n, n)")
        if h.shape != F.shape[:2]:
            raise InvalidParams("h must have shape (2, n)")
        if F.min() < 0:
            raise InvalidParams("F must be non-negative")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_counts(cls, counts, reward_sums) -> "EmpiricalModel":
        counts = np.asarray(counts, dtype=float)
        T = float(counts.sum())
        if T <= 0:
            raise InvalidParams("empty trajectory")
        return cls(2.0 * counts / T, 2.0 * np.asarray(reward_sums, dtype=float) / T, T)

    @classmethod
    def from_population(cls, mdp, treat_prob: float = 0.5) -> "EmpiricalModel":
        """Limit statistics ``F_a = 2 q_a D P_a``, ``h_a = 2 q_a D r_a`` (``T`` infinite)."""
        from .chain_core import stationary_distribution

        q = np.array([1.0 - treat_prob, treat_prob])
        P_mix = q[0] * mdp.p0 + q[1] * mdp.p1
        rho = stationary_distribution(P_mix)
        F = 2.0 * q[:, None, None] * rho[None, :, None] * mdp.kernels
        h = 2.0 * q[:, None] * rho[None, :] * mdp.rewards
        return cls(F, h, float("inf"))

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def f0(self) -> np.ndarray:
        return self.F[0]

    @property
    def f1(self) -> np.ndarray:
        return self.F[1]

    @property
    def h0(self) -> np.ndarray:
        return self.h[0]

    @property
    def h1(self) -> np.ndarray:
        return self.h[1]

    @property
    def d(self) -> np.ndarray:
        """Row sums ``d[a, s]`` of ``F_a``."""
        return self.F.sum(axis=2)

    @property
    def d0(self) -> np.ndarray:
        return np.diag(self.d[0])

    @property
    def d1(self) -> np.ndarray:
        return np.diag(self.d[1])

    @property
    def counts(self) -> np.ndarray:
        """Transition counts ``n[a, s, s']`` (fractional for population models)."""
        return self.F * self.T / 2.0

    @property
    def visits(self) -> np.ndarray:
        """Per-(action, state) visit counts."""
        return self.d * self.T / 2.0

    @property
    def t1_count(self) -> float:
        return float(self.d[1].sum() * self.T / 2.0)

    @property
    def t0_count(self) -> float:
        return float(self.d[0].sum() * self.T / 2.0)
