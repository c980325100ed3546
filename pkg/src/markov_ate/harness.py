"""Multi-seed experiments, bias-order sweeps and CSV reports.

Config files are flat TOML. Recognized keys::

    environment = "two_state"        # two_state | rental | birth_death | random
    env_uplift = 0.1                 # env_<name> keys are passed to the constructor
    horizon = 100000                 # recorded steps T (burn-in excluded)
    checkpoints = [1000, 10000, 100000]   # defaults to [horizon]
    seeds = 100                      # count (seed_start, seed_start+1, ...) or explicit list
    seed_start = 0
    estimators = ["naive", "dq", "dq_reg:alpha=0.1", "ope_lstd"]
    burn_in = 10                     # defaults to 5 n
    start = "stationary"             # or a state index
    treat_prob = 0.5
    out = "results"                  # output directory

Sweep configs use ``family`` (an environment name), ``deltas`` and ``env_``
keys; bench configs name a packaged ``suite`` and may override any key.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .environments import ENVIRONMENTS, build_environment
from .errors import ConfigError, DegenerateFamily, InvalidParams, MarkovATEError, error_tag
from .estimators import ESTIMATORS
from .mdp import ExperimentPolicy, TwoActionMdp, exact_analytics
from .simulate import checkpoints as make_checkpoints
from .simulate import empirical_models_at, simulate

ESTIMATES_COLUMNS = ("estimator", "seed", "t", "value", "error_tag")
SUMMARY_COLUMNS = ("estimator", "t", "mean", "bias", "stddev", "rmse", "rel_rmse", "error_rate")
SWEEP_COLUMNS = ("delta", "ate", "naive_bias", "dq_bias")

_KNOWN_KEYS = {
    "environment",
    "horizon",
    "checkpoints",
    "seeds",
    "seed_start",
    "estimators",
    "burn_in",
    "start",
    "treat_prob",
    "out",
}


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator name with keyword hyperparameters, e.g. ``dq_reg:alpha=0.1``."""

    name: str
    params: tuple = ()

    @classmethod
    def parse(cls, text: str) -> "EstimatorSpec":
        name, _, rest = text.partition(":")
        name = name.strip()
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; expected one of {sorted(ESTIMATORS)}")
        params = []
        for item in filter(None, (p.strip() for p in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"bad estimator parameter {item!r} in {text!r}")
            params.append((key.strip(), _parse_scalar(value.strip())))
        return cls(name, tuple(params))

    @property
    def label(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v}" for k, v in self.params)

    def __call__(self, model):
        return ESTIMATORS[self.name](model, **dict(self.params))


def _parse_scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str = "two_state"
    env_params: dict = field(default_factory=dict)
    horizon: int = 10_000
    checkpoints: tuple = ()
    seeds: tuple = (0,)
    estimators: tuple = (EstimatorSpec("naive"), EstimatorSpec("dq"))
    burn_in: int | None = None
    start: int | str = "stationary"
    treat_prob: float = 0.5
    out: str | None = None

    def __post_init__(self):
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.environment!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.estimators:
            raise ConfigError("estimators must be non-empty")
        if not 0.0 < self.treat_prob < 1.0:
            raise ConfigError("treat_prob must lie strictly between 0 and 1")
        cps = self.checkpoints or (self.horizon,)
        try:
            make_checkpoints(cps, self.horizon)
        except InvalidParams as err:
            raise ConfigError(str(err)) from err
        object.__setattr__(self, "checkpoints", tuple(int(t) for t in cps))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        specs = tuple(e if isinstance(e, EstimatorSpec) else EstimatorSpec.parse(e) for e in self.estimators)
        object.__setattr__(self, "estimators", specs)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        env_params = {k[4:]: raw.pop(k) for k in list(raw) if k.startswith("env_")}
        unknown = set(raw) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seeds = raw.pop("seeds", 1)
        start_seed = raw.pop("seed_start", 0)
        if isinstance(seeds, int):
            seeds = range(start_seed, start_seed + seeds)
        kwargs = {k: raw[k] for k in raw}
        if "checkpoints" in kwargs:
            kwargs["checkpoints"] = tuple(kwargs["checkpoints"])
        if "estimators" in kwargs:
            kwargs["estimators"] = tuple(kwargs["estimators"])
        return cls(env_params=env_params, seeds=tuple(seeds), **kwargs)

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        return replace(self, seeds=tuple(s + offset for s in self.seeds))

    def build_mdp(self) -> TwoActionMdp:
        try:
            return build_environment(self.environment, **self.env_params)
        except InvalidParams as err:
            raise ConfigError(str(err)) from err


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_toml(path))


@dataclass(frozen=True)
class Cell:
    estimator: str
    seed: int
    t: int
    value: float | None
    error_tag: str = ""


@dataclass(frozen=True)
class EstimateSeries:
    cells: list
    ate: float
    naive_expected: float
    dq_expected: float
    estimators: tuple
    checkpoints: tuple
    seeds: tuple

    def values(self, estimator: str, t: int | None = None) -> np.ndarray:
        """Successful estimates for one estimator (final checkpoint by default)."""
        t = self.checkpoints[-1] if t is None else t
        return np.array(
            [c.value for c in self.cells if c.estimator == estimator and c.t == t and not c.error_tag]
        )


def _run_seed(args) -> list:
    config, mdp, seed = args
    policy = ExperimentPolicy(config.treat_prob)
    traj = simulate(mdp, policy, config.horizon, seed, config.burn_in, config.start)
    models = empirical_models_at(traj, config.checkpoints)
    cells = []
    for spec in config.estimators:
        for t, model in zip(config.checkpoints, models):
            try:
                value = float(spec(model).value)
                tag = "" if math.isfinite(value) else "non_finite"
            except (MarkovATEError, np.linalg.LinAlgError) as err:
                value, tag = None, error_tag(err)
            cells.append(Cell(spec.label, seed, t, value if not tag else None, tag))
    return cells


def run_experiment(config: ExperimentConfig, threads: int = 1, mdp: TwoActionMdp | None = None) -> EstimateSeries:
    """Simulate every seed and evaluate each estimator at each checkpoint.

    Estimator failures become error-tagged cells; the grid is always complete.
    Seeds run in a process pool when ``threads > 1``; results are assembled
    in seed order, so output does not depend on scheduling.
    """
    if mdp is None:
        mdp = config.build_mdp()
    ex = exact_analytics(mdp, ExperimentPolicy(config.treat_prob))
    jobs = [(config, mdp, seed) for seed in config.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(_run_seed, jobs))
    else:
        per_seed = [_run_seed(job) for job in jobs]
    cells = [c for group in per_seed for c in group]
    return EstimateSeries(
        cells=cells,
        ate=ex.ate,
        naive_expected=ex.naive_expected,
        dq_expected=ex.dq_expected,
        estimators=tuple(s.label for s in config.estimators),
        checkpoints=config.checkpoints,
        seeds=config.seeds,
    )


def report(series: EstimateSeries) -> list[dict]:
    """Per (estimator, checkpoint) summary against the exact ATE.

    ``stddev`` is the population (ddof = 0) spread across seeds, so
    ``rmse**2 == bias**2 + stddev**2``; it is ``None`` with fewer than two
    successful seeds. ``rel_rmse`` divides by ``|ATE|``. Statistics are
    ``None`` when every cell errored.
    """
    if not series.cells:
        raise InvalidParams("empty series")
    groups: dict = {}
    for c in series.cells:
        groups.setdefault((c.estimator, c.t), []).append(c)
    rows = []
    for est in series.estimators:
        for t in series.checkpoints:
            cells = groups.get((est, t), [])
            ok = np.array([c.value for c in cells if not c.error_tag])
            row = {"estimator": est, "t": t, "error_rate": 1.0 - len(ok) / len(cells) if cells else 1.0}
            if ok.size:
                mean = float(ok.mean())
                rmse = float(np.sqrt(np.mean((ok - series.ate) ** 2)))
                row.update(
                    mean=mean,
                    bias=mean - series.ate,
                    stddev=float(ok.std()) if ok.size > 1 else None,
                    rmse=rmse,
                    rel_rmse=rmse / abs(series.ate) if series.ate != 0 else None,
                )
            else:
                row.update(mean=None, bias=None, stddev=None, rmse=None, rel_rmse=None)
            rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _to_csv(columns, rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return out.getvalue()


def summary_csv(series: EstimateSeries) -> str:
    return _to_csv(SUMMARY_COLUMNS, report(series))


def estimates_csv(series: EstimateSeries) -> str:
    rows = (
        {"estimator": c.estimator, "seed": c.seed, "t": c.t, "value": c.value, "error_tag": c.error_tag}
        for c in series.cells
    )
    return _to_csv(ESTIMATES_COLUMNS, rows)


def write_outputs(out_dir, files: dict) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths


@dataclass(frozen=True)
class SweepResult:
    deltas: tuple
    ate: tuple
    naive_bias: tuple
    dq_bias: tuple
    slopes: dict
    intervals: dict

    def rows(self) -> list[dict]:
        return [
            {"delta": d, "ate": a, "naive_bias": nb, "dq_bias": qb}
            for d, a, nb, qb in zip(self.deltas, self.ate, self.naive_bias, self.dq_bias)
        ]

    def to_csv(self) -> str:
        body = _to_csv(SWEEP_COLUMNS, self.rows())
        fits = _to_csv(
            ("estimator", "slope", "ci_low", "ci_high"),
            (
                {"estimator": k, "slope": v, "ci_low": self.intervals[k][0], "ci_high": self.intervals[k][1]}
                for k, v in self.slopes.items()
            ),
        )
        return body + "\n" + fits


FAMILY_DELTA_KEYS = {"two_state": "uplift", "birth_death": "drift", "random": "tv_scale"}


def family_builder(name: str, **params) -> Callable[[float], TwoActionMdp]:
    """Map ``delta`` to an instance of a named environment family."""
    if name not in FAMILY_DELTA_KEYS:
        raise ConfigError(f"no delta-parameterized family named {name!r}")
    key = FAMILY_DELTA_KEYS[name]
    return lambda delta: build_environment(name, **{**params, key: delta})


def _fit(deltas, biases, level: float = 0.95):
    x, y = np.log(deltas), np.log(np.abs(biases))
    if len(x) < 2:
        return float("nan"), (float("nan"), float("nan"))
    fit = stats.linregress(x, y)
    if len(x) < 3:
        return float(fit.slope), (float("nan"), float("nan"))
    half = stats.t.ppf(0.5 + level / 2, len(x) - 2) * fit.stderr
    return float(fit.slope), (float(fit.slope - half), float(fit.slope + half))


def bias_order_sweep(family: Callable[[float], TwoActionMdp], deltas: Sequence[float]) -> SweepResult:
    """Exact Naive and DQ biases over ``deltas`` with log-log slope fits.

    Zero deltas (and any delta with zero bias) are reported but left out of
    the fits.
    """
    deltas = [float(d) for d in deltas]
    positive = [d for d in deltas if d > 0]
    if len(positive) < 4:
        raise InvalidParams("need at least four positive delta values")
    ates, nb, qb = [], [], []
    for d in deltas:
        if d == 0:
            ates.append(0.0)
            nb.append(0.0)
            qb.append(0.0)
            continue
        ex = exact_analytics(family(d))
        if ex.ate == 0.0:
            raise DegenerateFamily(f"ATE is zero at delta = {d}")
        ates.append(ex.ate)
        nb.append(ex.naive_bias)
        qb.append(ex.dq_bias)
    slopes, intervals = {}, {}
    for name, biases in (("naive", nb), ("dq", qb)):
        keep = [(d, b) for d, b in zip(deltas, biases) if d > 0 and b != 0.0]
        xs, ys = zip(*keep) if keep else ((), ())
        slopes[name], intervals[name] = _fit(np.array(xs), np.array(ys))
    return SweepResult(tuple(deltas), tuple(ates), tuple(nb), tuple(qb), slopes, intervals)


def load_sweep(raw: dict) -> tuple[Callable[[float], TwoActionMdp], list[float]]:
    raw = dict(raw)
    family = raw.pop("family", None)
    deltas = raw.pop("deltas", None)
    raw.pop("out", None)
    if family is None or deltas is None:
        raise ConfigError("sweep config needs 'family' and 'deltas'")
    params = {k[4:]: raw.pop(k) for k in list(raw) if k.startswith("env_")}
    if raw:
        raise ConfigError(f"unknown sweep keys: {sorted(raw)}")
    return family_builder(family, **params), list(deltas)


BENCH_SUITES = {
    "two_state": {
        "environment": "two_state",
        "horizon": 100_000,
        "checkpoints": [10_000, 100_000],
        "seeds": 400,
        "estimators": ["naive", "dq", "ope_lstd"],
    },
    "rental": {
        "environment": "rental",
        "env_capacity": 100,
        "horizon": 1_000_000,
        "checkpoints": [10_000, 100_000, 1_000_000],
        "seeds": 20,
        "burn_in": 500,
        "estimators": ["naive", "dq", "dq_reg:alpha=0.1", "ope_lstd"],
    },
    "birth_death": {
        "environment": "birth_death",
        "env_n_states": 10,
        "env_drift": 0.1,
        "horizon": 100_000,
        "checkpoints": [10_000, 100_000],
        "seeds": 100,
        "estimators": ["naive", "dq", "ope_lstd"],
    },
}


def bench_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    suite = raw.pop("suite", None)
    if suite not in BENCH_SUITES:
        raise ConfigError(f"bench config needs 'suite' in {sorted(BENCH_SUITES)}")
    merged = {**BENCH_SUITES[suite], **raw}
    return ExperimentConfig.from_dict(merged)
