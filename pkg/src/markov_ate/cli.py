"""Command line entry point (``markov-ate``)."""

from __future__ import annotations

import csv
import io
import os
import sys

import click

from . import harness
from .bounds import bounds_csv, variance_report
from .environments import ENVIRONMENTS, build_environment
from .errors import MarkovATEError
from .harness import EstimatorSpec
from .mdp import exact_analytics, load_mdp


def _parse_env_spec(text: str):
    """``name`` or ``name:key=value,...``; a path to an MDP text file also works."""
    if os.path.exists(text):
        return load_mdp(text)
    name, _, rest = text.partition(":")
    if name not in ENVIRONMENTS:
        raise click.BadParameter(f"{text!r} is neither a file nor one of {ENVIRONMENTS}")
    params = dict(EstimatorSpec.parse("naive:" + rest).params) if rest else {}
    return build_environment(name, **params)


def _emit(files: dict, out: str | None) -> None:
    if out is None:
        for name, text in files.items():
            if len(files) > 1:
                click.echo(f"# {name}")
            click.echo(text, nl=False)
        return
    for path in harness.write_outputs(out, files):
        click.echo(path, err=True)


def _analytics_csv(mdp) -> str:
    ex = exact_analytics(mdp)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("quantity", "value"))
    for key in ("ate", "lambda0", "lambda1", "lambda_mix", "naive_expected", "dq_expected", "delta_tv"):
        writer.writerow((key, repr(float(getattr(ex, key)))))
    writer.writerow(("naive_bias", repr(ex.naive_bias)))
    writer.writerow(("dq_bias", repr(ex.dq_bias)))
    return out.getvalue()


common = [
    click.option("--seed-offset", type=int, default=0, show_default=True, help="Added to every seed."),
    click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
    click.option("--threads", type=int, default=1, show_default=True, help="Worker processes over seeds."),
    click.option("--format", "fmt", type=click.Choice(["csv"]), default="csv", show_default=True),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Estimate treatment effects in Markovian experiments."""


@main.command()
@click.argument("spec")
@with_common
def analyze(spec, seed_offset, out, threads, fmt):
    """Exact analytics and variance bounds for an MDP file or environment spec."""
    mdp = _parse_env_spec(spec)
    files = {
        "analytics.csv": _analytics_csv(mdp),
        "bounds.csv": bounds_csv({mdp.name: variance_report(mdp)}),
    }
    _emit(files, out)


def _run(config, seed_offset, out, threads, with_bounds=False):
    config = config.with_seed_offset(seed_offset)
    mdp = config.build_mdp()
    series = harness.run_experiment(config, threads=threads, mdp=mdp)
    files = {"summary.csv": harness.summary_csv(series), "estimates.csv": harness.estimates_csv(series)}
    if with_bounds:
        files["bounds.csv"] = bounds_csv({mdp.name: variance_report(mdp)})
    target = out or config.out
    if target is None:
        files = {"summary.csv": files["summary.csv"]}
    _emit(files, target)


@main.command("simulate")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@with_common
def simulate_cmd(config, seed_offset, out, threads, fmt):
    """Run a multi-seed experiment and report summary statistics."""
    _run(harness.load_config(config), seed_offset, out, threads)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@with_common
def sweep(config, seed_offset, out, threads, fmt):
    """Exact bias-order sweep over delta."""
    raw = harness.load_toml(config)
    target = out or raw.get("out")
    family, deltas = harness.load_sweep(raw)
    result = harness.bias_order_sweep(family, deltas)
    _emit({"sweep.csv": result.to_csv()}, target)


@main.command()
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@with_common
def bench(config, seed_offset, out, threads, fmt):
    """Run a packaged benchmark suite (two_state, rental, birth_death)."""
    _run(harness.bench_config(harness.load_toml(config)), seed_offset, out, threads, with_bounds=True)


def run():
    try:
        main(standalone_mode=False)
    except MarkovATEError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except click.ClickException as err:
        err.show()
        sys.exit(err.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)


if __name__ == "__main__":
    run()
