"""End-to-end sweeps behind the result figures, at desk scale.

Every trial draws its own scenario, fading and authentication noise from a
stream keyed on ``(seed, trial, purpose)``, so series that differ only in a
swept parameter see the same randomness (paired seeds) and any run is
reproducible from its config and seed alone.
"""

from __future__ import annotations

import csv
import datetime as _dt
import functools
import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ChannelState, build_channel_state
from .config import ExperimentSpec, RootConfig, default_experiment
from .delay import Task, propagation_delay
from .optimizer import BcdResult, OffloadInstance, run_bcd
from .pla import (SecretKey, binomial_ci, optimal_threshold, pd_closed_form, pfa_closed_form,
                  sample_statistics, statistic_scale)
from .scenario import Scenario, build_scenario

log = logging.getLogger(__name__)

__all__ = [
    "AUTH_ROC_COLUMNS", "ExperimentResult", "ExperimentSpec", "SUMMARY_COLUMNS", "TrialDraw",
    "draw_trial", "run_admission_vs_pfa", "run_auth_roc", "run_eta_vs_power",
    "run_experiment", "run_feasibility_vs_deadline",
]

SUMMARY_COLUMNS = (
    "series", "sweep_variable", "sweep_value", "trials",
    "feasible_mean", "feasible_ci", "legit_admission_mean", "legit_admission_ci",
    "malicious_admission_mean", "malicious_admission_ci", "eta_mean", "eta_ci",
)
AUTH_ROC_COLUMNS = (
    "kind", "target_pfa", "theta", "pfa_analytic", "pfa_empirical", "pfa_ci",
    "pd_analytic", "pd_empirical", "pd_ci", "sigma_n_sq", "trials",
)
TRACE_COLUMNS = ("series", "sweep_value", "iteration", "mu_lp", "mu_plan", "step_norm",
                 "chi", "varrho", "rejected")

# stream purposes within a trial
_SCENARIO, _CHANNEL, _KEYS, _AUTH = range(4)


@dataclass
class ExperimentResult:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple]
    seed: int
    config_hash: str
    runtime_s: float = 0.0
    per_trial: dict = field(default_factory=dict)   # series -> metric -> (values, trials)
    traces: list = field(default_factory=list)      # (series, sweep value, BcdResult)
    scenario: Scenario | None = None                # first trial's geometry
    tasks: list[Task] = field(default_factory=list)  # first trial's admitted tasks

    def column(self, name: str, series: str | None = None) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows
                         if series is None or r[0] == series], dtype=float)

    def series(self) -> list[str]:
        return list(dict.fromkeys(r[0] for r in self.rows))

    def csv_body(self) -> str:
        buf = io.StringIO()
        buf.write(f"# ntn_offload {__version__}\n")
        buf.write(f"# experiment={self.name}\n")
        buf.write(f"# config_sha256={self.config_hash}\n")
        buf.write(f"# seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        """Write the table; the only run-dependent line is the ``# generated`` one."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        body = self.csv_body()
        head, _, rest = body.partition("\n")
        path.write_text(f"{head}\n# generated={stamp} runtime_s={self.runtime_s:.3f}\n{rest}")
        return path

    def write_trace(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for series, value, res in self.traces:
                for r in res.trace:
                    w.writerow([series, _fmt(value), r.iteration, _fmt(r.mu_lp),
                                _fmt(r.mu_plan), _fmt(r.step_norm), _fmt(r.chi),
                                _fmt(r.varrho), r.rejected])
        return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else f"{float(v):.10g}"
    return str(v)


def strip_metadata(text: str) -> str:
    """CSV text without the timestamp line, for reproducibility comparisons."""
    return "".join(line for line in text.splitlines(keepends=True)
                   if not line.startswith("# generated="))


# ---------------------------------------------------------------- trial draws

def _stream(seed: int, trial: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, purpose)))


@dataclass
class TrialDraw:
    scenario: Scenario
    channel: ChannelState
    keys: list[SecretKey]
    legitimate: np.ndarray       # (nodes,) bool
    lambdas: np.ndarray          # (nodes, reps) authentication statistics


def draw_geometry(cfg: RootConfig, seed: int, trial: int) -> tuple[Scenario, ChannelState]:
    rng = _stream(seed, trial, _SCENARIO)
    scenario = build_scenario(replace(cfg.scenario, rng_seed=int(rng.integers(2**63))))
    channel = build_channel_state(scenario, cfg.radio, _stream(seed, trial, _CHANNEL),
                                  cfg.pla.rho_s_sq, cfg.pla.rho_t_sq)
    return scenario, channel


def draw_trial(cfg: RootConfig, seed: int, trial: int, auth_reps: int = 1,
               malicious_mode: str = "untagged") -> TrialDraw:
    """Scenario, channels, keys and ``auth_reps`` statistics per node for one trial."""
    scenario, channel = draw_geometry(cfg, seed, trial)
    n_legit = cfg.scenario.num_iot
    n_nodes = channel.num_nodes
    key_rng = _stream(seed, trial, _KEYS)
    keys = [SecretKey.generate(key_rng) for _ in range(n_nodes)]
    auth_rng = _stream(seed, trial, _AUTH)
    lambdas = np.empty((n_nodes, auth_reps))
    for i in range(n_nodes):
        mode = "tagged" if i < n_legit else malicious_mode
        lambdas[i] = sample_statistics(float(channel.sigma_n_sq[i]), cfg.pla, auth_reps,
                                       auth_rng, mode=mode, key=keys[i])
    legit = np.arange(n_nodes) < n_legit
    return TrialDraw(scenario, channel, keys, legit, lambdas)


def admission(draw: TrialDraw, cfg: RootConfig, target_pfa: float | None = None) -> np.ndarray:
    """Admission flags (nodes, reps) at the optimal threshold for ``target_pfa``."""
    theta = optimal_threshold(draw.channel.sigma_n_sq, cfg.pla, target_pfa)
    return draw.lambdas > np.asarray(theta)[:, None]


def build_instance(cfg: RootConfig, channel: ChannelState, admitted: np.ndarray,
                   legit: np.ndarray, overhead: float = 0.0,
                   tau_max: float | None = None) -> tuple[OffloadInstance, list[Task]]:
    ts = cfg.tasks
    tmax = ts.tau_max if tau_max is None else tau_max
    ids = np.flatnonzero(admitted)
    tasks = [Task(int(i), ts.delta, ts.c, tmax, bool(legit[i])) for i in ids]
    inst = OffloadInstance.from_tasks(tasks, channel.R_ia[ids], channel.R_ak,
                                      propagation_delay(channel.d_ak), ts.f_max, overhead)
    return inst, tasks


def _served_legit(res: BcdResult, legit: np.ndarray) -> int:
    return int(sum(legit[i] for i in res.plan.task_ids))


def _map_trials(fn, trials: int, workers: int) -> list:
    """Per-trial results ordered by trial index, whatever the worker count."""
    if workers <= 1 or trials == 1:
        return [fn(t) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), chunksize=max(1, trials // (4 * workers))))


def _resolve(spec: ExperimentSpec | None, config: RootConfig | None, name: str,
             seed: int | None) -> tuple[ExperimentSpec, RootConfig, int]:
    config = config or RootConfig()
    if spec is None:
        spec = config.experiment if config.experiment.name == name else default_experiment(name)
    errors = spec.validate()
    if errors:
        from .config import ConfigurationError
        raise ConfigurationError("invalid experiment: " + "; ".join(errors))
    seed = config.scenario.rng_seed if seed is None else int(seed)
    return spec, config.with_overrides(spec.overrides), seed


def _mean_ci(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(1.96 * x.std(ddof=1) / np.sqrt(x.size))


def _summary_rows(series: str, spec: ExperimentSpec, metrics: dict) -> list[tuple]:
    """Rows for one series; ``metrics`` arrays are (values, trials)."""
    rows = []
    for v, value in enumerate(spec.sweep_values):
        n_trials = spec.trials
        out = [series, spec.sweep_variable, float(value), n_trials]
        fm, fc = _mean_ci(metrics["feasible"][v]) if "feasible" in metrics else (np.nan, np.nan)
        em, ec = _mean_ci(metrics["eta"][v]) if "eta" in metrics else (np.nan, np.nan)
        lm, lc = binomial_ci(metrics["legit_k"][v].sum(), metrics["legit_n"][v].sum())
        mm, mc = binomial_ci(metrics["mal_k"][v].sum(), metrics["mal_n"][v].sum())
        if metrics["mal_n"][v].sum() == 0:
            mm, mc = np.nan, np.nan
        out += [fm, fc, float(lm), float(lc), float(mm), float(mc), em, ec]
        rows.append(tuple(out))
    return rows


def _finish(name, columns, rows, seed, cfg, t0, **extra) -> ExperimentResult:
    return ExperimentResult(name, columns, rows, seed, cfg.config_hash(),
                            runtime_s=time.perf_counter() - t0, **extra)


# ------------------------------------------------------------ feasibility

def _feasibility_trial(t: int, cfg: RootConfig, spec: ExperimentSpec, seed: int,
                       keep_trace: bool) -> dict:
    draw = draw_trial(cfg, seed, t, 1, spec.malicious_mode)
    adm = admission(draw, cfg)[:, 0]
    n_legit = int(draw.legitimate.sum())
    out = {"legit_k": int(adm[draw.legitimate].sum()), "legit_n": n_legit,
           "mal_k": int(adm[~draw.legitimate].sum()), "mal_n": int((~draw.legitimate).sum()),
           "feasible": {}, "eta": {}, "traces": [], "tasks": []}
    for scheme, overhead in spec.auth_overhead_s.items():
        feas, eta = [], []
        for tmax in spec.sweep_values:
            inst, tasks = build_instance(cfg, draw.channel, adm, draw.legitimate,
                                         overhead, float(tmax))
            res = run_bcd(inst, cfg.bcd)
            feas.append(_served_legit(res, draw.legitimate) / max(n_legit, 1))
            eta.append(res.plan.mu)
            if keep_trace:
                out["traces"].append((scheme, float(tmax), res))
                out["tasks"] = tasks
        out["feasible"][scheme] = feas
        out["eta"][scheme] = eta
    if t == 0:
        out["scenario"] = draw.scenario
    return out


def run_feasibility_vs_deadline(spec: ExperimentSpec | None = None,
                                config: RootConfig | None = None, seed: int | None = None,
                                trace: bool = False) -> ExperimentResult:
    """Share of legitimate tasks admitted and served within deadline, per scheme.

    Every scheme sees the same admission decisions; a scheme's authentication
    overhead is added to each task's access delay.
    """
    spec, cfg, seed = _resolve(spec, config, "feasibility", seed)
    if spec.sweep_variable != "tau_max":
        raise ValueError("feasibility sweeps tau_max")
    t0 = time.perf_counter()
    fn = functools.partial(_feasibility_trial, cfg=cfg, spec=spec, seed=seed, keep_trace=False)
    results = _map_trials(fn, spec.trials, spec.workers)
    if trace:
        results[0] = _feasibility_trial(0, cfg, spec, seed, keep_trace=True)
    n_v = len(spec.sweep_values)
    rows, per_trial = [], {}
    for scheme in spec.auth_overhead_s:
        m = {
            "feasible": np.array([r["feasible"][scheme] for r in results]).T,
            "eta": np.array([r["eta"][scheme] for r in results]).T,
        }
        for key in ("legit_k", "legit_n", "mal_k", "mal_n"):
            m[key] = np.tile([r[key] for r in results], (n_v, 1))
        per_trial[scheme] = m
        rows += _summary_rows(scheme, spec, m)
    return _finish("feasibility", SUMMARY_COLUMNS, rows, seed, cfg, t0, per_trial=per_trial,
                   traces=results[0]["traces"], scenario=results[0].get("scenario"),
                   tasks=results[0]["tasks"])


# -------------------------------------------------------------- admission

def _admission_trial(t: int, cfg: RootConfig, spec: ExperimentSpec, seed: int) -> dict:
    draw = draw_trial(cfg, seed, t, spec.auth_reps, spec.malicious_mode)
    legit = draw.legitimate
    out = {"legit_k": [], "legit_n": [], "mal_k": [], "mal_n": []}
    # the statistics are drawn once; only the threshold moves with the target
    for pfa in spec.sweep_values:
        adm = admission(draw, cfg, float(pfa))
        out["legit_k"].append(int(adm[legit].sum()))
        out["legit_n"].append(int(adm[legit].size))
        out["mal_k"].append(int(adm[~legit].sum()))
        out["mal_n"].append(int(adm[~legit].size))
    if t == 0:
        out["scenario"] = draw.scenario
    return out


def run_admission_vs_pfa(spec: ExperimentSpec | None = None, config: RootConfig | None = None,
                         seed: int | None = None) -> ExperimentResult:
    """Legitimate and malicious admission rates against the false-alarm target."""
    spec, cfg, seed = _resolve(spec, config, "admission", seed)
    if spec.sweep_variable != "target_pfa":
        raise ValueError("admission sweeps target_pfa")
    t0 = time.perf_counter()
    variants = spec.variants or {"base": {}}
    rows, per_trial, first = [], {}, None
    for label, ov in variants.items():
        vcfg = cfg.with_overrides(ov)
        fn = functools.partial(_admission_trial, cfg=vcfg, spec=spec, seed=seed)
        results = _map_trials(fn, spec.trials, spec.workers)
        first = first or results[0].get("scenario")
        m = {key: np.array([r[key] for r in results]).T
             for key in ("legit_k", "legit_n", "mal_k", "mal_n")}
        m["legit_rate"] = m["legit_k"] / np.maximum(m["legit_n"], 1)
        per_trial[label] = m
        rows += _summary_rows(label, spec, m)
    return _finish("admission", SUMMARY_COLUMNS, rows, seed, cfg, t0, per_trial=per_trial,
                   scenario=first)


# -------------------------------------------------------------------- eta

def _eta_trial(t: int, cfg: RootConfig, spec: ExperimentSpec, seed: int,
               keep_trace: bool) -> dict:
    # admission is fixed at the nominal settings so only the rates move
    draw = draw_trial(cfg, seed, t, 1, spec.malicious_mode)
    adm = admission(draw, cfg)[:, 0]
    legit = draw.legitimate
    n_legit = int(legit.sum())
    out = {"legit_k": int(adm[legit].sum()), "legit_n": n_legit,
           "mal_k": int(adm[~legit].sum()), "mal_n": int((~legit).sum()),
           "eta": {}, "feasible": {}, "traces": [], "tasks": []}
    for label, ov in (spec.variants or {"base": {}}).items():
        etas, feas = [], []
        for p_dbm in spec.sweep_values:
            vcfg = cfg.with_overrides({**ov, "radio.p_i_dbm": float(p_dbm)})
            _, channel = draw_geometry(vcfg, seed, t)
            inst, tasks = build_instance(vcfg, channel, adm, legit)
            res = run_bcd(inst, vcfg.bcd)
            etas.append(res.plan.mu)
            feas.append(_served_legit(res, legit) / max(n_legit, 1))
            if keep_trace:
                out["traces"].append((label, float(p_dbm), res))
                out["tasks"] = tasks
        out["eta"][label] = etas
        out["feasible"][label] = feas
    if t == 0:
        out["scenario"] = draw.scenario
    return out


def run_eta_vs_power(spec: ExperimentSpec | None = None, config: RootConfig | None = None,
                     seed: int | None = None, trace: bool = False) -> ExperimentResult:
    """Achieved maximum relative delay against device transmit power (dBm)."""
    spec, cfg, seed = _resolve(spec, config, "eta", seed)
    if spec.sweep_variable != "p_i":
        raise ValueError("eta sweeps p_i")
    t0 = time.perf_counter()
    fn = functools.partial(_eta_trial, cfg=cfg, spec=spec, seed=seed, keep_trace=False)
    results = _map_trials(fn, spec.trials, spec.workers)
    if trace:
        results[0] = _eta_trial(0, cfg, spec, seed, keep_trace=True)
    n_v = len(spec.sweep_values)
    rows, per_trial = [], {}
    for label in (spec.variants or {"base": {}}):
        m = {"eta": np.array([r["eta"][label] for r in results]).T,
             "feasible": np.array([r["feasible"][label] for r in results]).T}
        for key in ("legit_k", "legit_n", "mal_k", "mal_n"):
            m[key] = np.tile([r[key] for r in results], (n_v, 1))
        per_trial[label] = m
        rows += _summary_rows(label, spec, m)
    return _finish("eta", SUMMARY_COLUMNS, rows, seed, cfg, t0, per_trial=per_trial,
                   traces=results[0]["traces"], scenario=results[0].get("scenario"),
                   tasks=results[0]["tasks"])


# --------------------------------------------------------------- auth-roc

def run_auth_roc(spec: ExperimentSpec | None = None, config: RootConfig | None = None,
                 seed: int | None = None) -> ExperimentResult:
    """Empirical against closed-form PFA/PD for one node of one channel draw.

    ``trials`` statistics are drawn under each hypothesis.  Rows of kind
    ``pfa_grid`` use the optimal threshold for each swept target; rows of kind
    ``theta_grid`` use three thresholds one standard deviation apart around L/2.
    """
    spec, cfg, seed = _resolve(spec, config, "auth-roc", seed)
    if spec.sweep_variable != "target_pfa":
        raise ValueError("auth-roc sweeps target_pfa")
    t0 = time.perf_counter()
    scenario, channel = draw_geometry(cfg, seed, 0)
    n_legit = cfg.scenario.num_iot
    if n_legit == 0:
        raise ValueError("auth-roc needs at least one legitimate node")
    node = int(np.argmax(channel.sigma_n_sq[:n_legit])) if spec.node is None else spec.node
    if not 0 <= node < n_legit:
        raise ValueError(f"node {node} is not a legitimate node")
    sigma = float(channel.sigma_n_sq[node])
    key = SecretKey.generate(_stream(seed, 0, _KEYS))
    rng = _stream(seed, 0, _AUTH)
    lam0 = sample_statistics(sigma, cfg.pla, spec.trials, rng, mode=spec.malicious_mode, key=key)
    lam1 = sample_statistics(sigma, cfg.pla, spec.trials, rng, mode="tagged", key=key)
    n = spec.trials

    def row(kind, target, theta):
        pfa_e, pfa_c = binomial_ci(int(np.sum(lam0 > theta)), n)
        pd_e, pd_c = binomial_ci(int(np.sum(lam1 > theta)), n)
        return (kind, target, float(theta), float(pfa_closed_form(theta, sigma, cfg.pla)),
                float(pfa_e), float(pfa_c), float(pd_closed_form(theta, sigma, cfg.pla)),
                float(pd_e), float(pd_c), sigma, n)

    rows = [row("pfa_grid", float(p), float(optimal_threshold(sigma, cfg.pla, float(p))))
            for p in spec.sweep_values]
    scale = float(statistic_scale(sigma, cfg.pla))
    rows += [row("theta_grid", np.nan, cfg.pla.L / 2 + d * scale) for d in (-1.0, 0.0, 1.0)]
    return _finish("auth-roc", AUTH_ROC_COLUMNS, rows, seed, cfg, t0, scenario=scenario)


RUNNERS = {
    "auth-roc": run_auth_roc,
    "feasibility": run_feasibility_vs_deadline,
    "admission": run_admission_vs_pfa,
    "eta": run_eta_vs_power,
}


def run_experiment(name: str, spec: ExperimentSpec | None = None,
                   config: RootConfig | None = None, seed: int | None = None,
                   trace: bool = False) -> ExperimentResult:
    fn = RUNNERS[name]
    if name in ("feasibility", "eta"):
        return fn(spec, config, seed, trace=trace)
    return fn(spec, config, seed)
