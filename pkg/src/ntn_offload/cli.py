"""Command line entry point: ``simulate <experiment> [options]``.

Exit status is 0 on success and nonzero on failure, with the error class
named on stderr:

    2  usage or configuration error
    3  solver failure
    4  any other runtime error
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import __version__
from .config import (ConfigurationError, RootConfig, env_out_dir, env_seed,
                     load_and_validate)
from .delay import save_tasks
from .experiments import run_experiment
from .optimizer import SolverFailure

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_RUNTIME = 4


def _fail(kind: str, msg, code: int):
    click.echo(f"error: {kind}: {msg}", err=True)
    sys.exit(code)


def _resolve_out(out: str | None, name: str) -> Path:
    base = env_out_dir()
    if out is None:
        return (base or Path(".")) / f"{name}.csv"
    p = Path(out)
    return base / p if base is not None and not p.is_absolute() else p


def _run(name: str, config: str | None, seed: int | None, out: str | None, trials: int | None,
         dump_scenario: bool, trace_bcd: bool, plot: bool) -> None:
    try:
        cfg = load_and_validate(config) if config else RootConfig()
        seed = env_seed(cfg.scenario.rng_seed) if seed is None else seed
        out_path = _resolve_out(out, name)
        from .config import default_experiment
        spec = cfg.experiment if cfg.experiment.name == name else default_experiment(name)
        if trials is not None:
            from dataclasses import replace
            spec = replace(spec, trials=trials)
        if trace_bcd and name not in ("feasibility", "eta"):
            raise ConfigurationError("--trace-bcd applies to feasibility and eta only")
    except ConfigurationError as exc:
        _fail("ConfigurationError", exc, EXIT_CONFIG)
    try:
        result = run_experiment(name, spec, cfg, seed, trace=trace_bcd)
    except ConfigurationError as exc:
        _fail("ConfigurationError", exc, EXIT_CONFIG)
    except SolverFailure as exc:
        _fail("SolverFailure", exc, EXIT_SOLVER)
    except (ValueError, RuntimeError, OSError) as exc:
        _fail(type(exc).__name__, exc, EXIT_RUNTIME)

    try:
        result.write_csv(out_path)
        written = [out_path]
        stem = out_path.with_suffix("")
        if dump_scenario and result.scenario is not None:
            p = Path(f"{stem}_scenario.json")
            result.scenario.save(p)
            written.append(p)
            if result.tasks:
                p = Path(f"{stem}_tasks.csv")
                save_tasks(result.tasks, p)
                written.append(p)
        if trace_bcd:
            written.append(result.write_trace(f"{stem}_trace.csv"))
        if plot:
            from .plotting import plot_result
            written.append(plot_result(result, out_path.with_suffix(".png")))
    except OSError as exc:
        _fail("OSError", exc, EXIT_RUNTIME)
    for p in written:
        click.echo(str(p))


def _common(fn):
    opts = [
        click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                     help="YAML config file; defaults apply when omitted."),
        click.option("--seed", type=int, default=None,
                     help="Root seed (else $NTN_SEED, else scenario.rng_seed)."),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Output CSV (relative paths resolve under $NTN_OUT_DIR)."),
        click.option("--trials", type=click.IntRange(min=1), default=None,
                     help="Override the experiment's trial count."),
        click.option("--dump-scenario", is_flag=True,
                     help="Also write the first trial's scenario (JSON) and tasks (CSV)."),
        click.option("--trace-bcd", is_flag=True,
                     help="Also write the optimizer trace of the first trial."),
        click.option("--plot", is_flag=True, help="Also render a PNG next to the CSV."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="simulate")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Authentication and offloading experiments for the multi-layer NTN model."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _make(name: str, doc: str):
    @main.command(name=name, help=doc)
    @_common
    def cmd(config, seed, out, trials, dump_scenario, trace_bcd, plot):
        _run(name, config, seed, out, trials, dump_scenario, trace_bcd, plot)
    return cmd


_make("auth-roc", "Closed-form against Monte Carlo false-alarm and detection rates.")
_make("feasibility", "Share of feasible tasks against the deadline, per authentication scheme.")
_make("admission", "Legitimate and malicious admission against the false-alarm target.")
_make("eta", "Maximum relative delay against device transmit power.")


if __name__ == "__main__":
    main()
