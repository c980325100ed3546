"""Trajectories under the Bernoulli experimentation policy.

Random numbers come from numpy's ``default_rng(seed)`` (PCG64). Each seed is
its own stream, consumed in a fixed order: the start state (when drawn from
the stationary law), then ``burn_in + T`` action uniforms, then
``burn_in + T`` transition uniforms. The stepping loop is compiled with numba.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numba
import numpy as np

from .chain_core import stationary_distribution
from .empirical import EmpiricalModel
from .errors import InvalidParams
from .mdp import HALF, ExperimentPolicy, TwoActionMdp

StartSpec = Union[int, str]

TRAJECTORY_COLUMNS = ("t", "state", "action", "reward")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded steps after burn-in.

    ``states`` has length ``T + 1`` (it includes the final landing state);
    ``actions`` and ``rewards`` have length ``T``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    n_states: int
    seed: int
    burn_in: int
    start_state: int

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1 or len(self.actions) != len(self.rewards):
            raise InvalidParams("inconsistent trajectory lengths")
        for arr in (self.states, self.actions, self.rewards):
            arr.setflags(write=False)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def __len__(self) -> int:
        return self.horizon

    @property
    def steps(self) -> Iterator[tuple[int, int, float]]:
        for s, a, r in zip(self.states[:-1], self.actions, self.rewards):
            yield int(s), int(a), float(r)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS)
        for t, (s, a, r) in enumerate(self.steps):
            writer.writerow((t, s, a, repr(r)))
        return out.getvalue()


@dataclass(frozen=True)
class Checkpoint:
    t: int


def checkpoints(ts: Sequence[int], horizon: int | None = None) -> list[Checkpoint]:
    """Validate a strictly increasing list of step counts."""
    ts = [int(t) for t in ts]
    if not ts:
        raise InvalidParams("need at least one checkpoint")
    if any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] < 1:
        raise InvalidParams("checkpoints must be positive and strictly increasing")
    if horizon is not None and ts[-1] > horizon:
        raise InvalidParams(f"checkpoint {ts[-1]} exceeds horizon {horizon}")
    return [Checkpoint(t) for t in ts]


@numba.njit(cache=True)
def _walk(cum, s0, actions, uniforms):
    n = cum.shape[1]
    steps = actions.shape[0]
    states = np.empty(steps + 1, dtype=np.int64)
    s = s0
    states[0] = s
    for t in range(steps):
        row = cum[actions[t], s]
        u = uniforms[t]
        # linear scan; chains here are small or banded near the diagonal
        nxt = n - 1
        for j in range(n):
            if u < row[j]:
                nxt = j
                break
        s = nxt
        states[t + 1] = s
    return states


def _cumulative(mdp: TwoActionMdp) -> np.ndarray:
    cum = np.cumsum(mdp.kernels, axis=2)
    # round-off can leave the last partial sum below 1; send any such draw to
    # the last reachable state instead of a zero-probability one
    n = mdp.n
    last = n - 1 - np.argmax(mdp.kernels[:, :, ::-1] > 0, axis=2)
    cum[np.arange(n)[None, None, :] >= last[:, :, None]] = np.inf
    return cum


def simulate(
    mdp: TwoActionMdp,
    policy: ExperimentPolicy = HALF,
    horizon: int = 1000,
    seed: int = 0,
    burn_in: int | None = None,
    start: StartSpec = "stationary",
) -> Trajectory:
    """Simulate ``burn_in + horizon`` steps and keep the last ``horizon``.

    Parameters
    ----------
    start : int or "stationary"
        Fixed initial state, or a draw from the stationary law of the
        randomized chain.
    burn_in : int, optional
        Discarded steps; defaults to ``5 n``.
    """
    if horizon < 1:
        raise InvalidParams("horizon must be at least 1")
    n = mdp.n
    if burn_in is None:
        burn_in = 5 * n
    if burn_in < 0:
        raise InvalidParams("burn_in must be non-negative")
    rng = np.random.default_rng(seed)
    if isinstance(start, str):
        if start != "stationary":
            raise InvalidParams(f"unknown start spec {start!r}")
        q = policy.treat_prob
        rho = stationary_distribution((1.0 - q) * mdp.p0 + q * mdp.p1)
        s0 = int(min(np.searchsorted(np.cumsum(rho), rng.random(), side="right"), n - 1))
    else:
        s0 = int(start)
        if not 0 <= s0 < n:
            raise InvalidParams(f"start state {s0} out of range")
    total = burn_in + horizon
    actions = (rng.random(total) < policy.treat_prob).astype(np.int64)
    uniforms = rng.random(total)
    states = _walk(_cumulative(mdp), s0, actions, uniforms)
    states, actions = states[burn_in:], actions[burn_in:]
    src, dst = states[:-1], states[1:]
    if mdp.transition_rewards is not None:
        rewards = mdp.transition_rewards[actions, src, dst]
    else:
        rewards = mdp.rewards[actions, src]
    return Trajectory(
        states=states,
        actions=actions.astype(np.int8),
        rewards=np.asarray(rewards, dtype=float),
        n_states=n,
        seed=int(seed),
        burn_in=int(burn_in),
        start_state=s0,
    )


def _flat_indices(traj: Trajectory, lo: int, hi: int):
    n = traj.n_states
    a = traj.actions[lo:hi].astype(np.int64)
    s = traj.states[lo:hi]
    s2 = traj.states[lo + 1 : hi + 1]
    return (a * n + s) * n + s2, a * n + s


def _counts(traj: Trajectory, lo: int, hi: int):
    n = traj.n_states
    trans, sa = _flat_indices(traj, lo, hi)
    counts = np.bincount(trans, minlength=2 * n * n).reshape(2, n, n)
    sums = np.bincount(sa, weights=traj.rewards[lo:hi], minlength=2 * n).reshape(2, n)
    return counts, sums


def empirical_model(traj: Trajectory, t: int | None = None) -> EmpiricalModel:
    """Sufficient statistics of the first ``t`` recorded steps (all by default)."""
    t = traj.horizon if t is None else int(t)
    if not 1 <= t <= traj.horizon:
        raise InvalidParams(f"t must lie in [1, {traj.horizon}]")
    counts, sums = _counts(traj, 0, t)
    return EmpiricalModel.from_counts(counts, sums)


def empirical_models_at(traj: Trajectory, ts: Sequence[int]) -> list[EmpiricalModel]:
    """Statistics at each checkpoint, accumulated incrementally in one pass."""
    cps = checkpoints(ts, traj.horizon)
    n = traj.n_states
    counts = np.zeros((2, n, n), dtype=np.int64)
    sums = np.zeros((2, n))
    out, lo = [], 0
    for cp in cps:
        c, r = _counts(traj, lo, cp.t)
        counts += c
        sums += r
        out.append(EmpiricalModel.from_counts(counts.copy(), sums.copy()))
        lo = cp.t
    return out
