"""Figure-level experiment runners producing CSV result tables.

Each experiment fans out over independent (realization x grid) jobs with
one RNG substream per realization index, aggregates means with standard
errors where disorder averaging applies, and writes the table atomically
(temp file + rename).  Identical config and seed give bit-identical CSV
bodies regardless of the worker count.
"""

from __future__ import annotations

import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from spinpol import __version__
from spinpol.config import ExperimentConfig, config_hash
from spinpol.floquet import (
    fe_min_lab_duration,
    fe_ramp_or_fallback,
    speed_limit,
    speed_limit_quadrature,
)
from spinpol.master import build_transfer_matrix, cycles_to_threshold
from spinpol.model import ModelParams, build_sector_basis, sample_realization
from spinpol.polarization import measure_sweep, run_cycles, transfer_power
from spinpol.protocols import ProtocolSpec
from spinpol.ramps import RampSpec
from spinpol.spectral import classify_states, level_spacing_ratio, resonant_gaps
from spinpol.propagate import IntegrationError  # noqa: F401  (re-export for CLI)

__all__ = ["ResultTable", "run_experiment", "write_csv"]


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    metadata: dict = field(default_factory=dict)
    speed_limited: bool = False

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])


def _fmt_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "nan"
    return format(float(value), ".17g")


def write_csv(table: ResultTable, path: str) -> None:
    """Atomic CSV write: metadata header lines, then rectangular rows."""
    lines = [f"# {key} = {value}" for key, value in table.metadata.items()]
    lines.append(",".join(table.columns))
    for row in table.rows:
        if len(row) != len(table.columns):
            raise ValueError("ragged result row")
        lines.append(",".join(_fmt_cell(v) for v in row))
    body = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _params(cfg: ExperimentConfig, gamma_z: float) -> ModelParams:
    return ModelParams(size=cfg.size, omega_b=cfg.omega_b, g_bar=cfg.g_bar,
                       gamma_xx=cfg.gamma_xx, gamma_z=gamma_z, seed=cfg.seed)


def _protocol(cfg: ExperimentConfig, kind: str, tau_r: float,
              direction: int = +1) -> ProtocolSpec:
    return ProtocolSpec(kind=kind, ramp=RampSpec(cfg.lambda0, tau_r, direction),
                        order=cfg.lcd_order, omega=cfg.omega,
                        substeps_per_period=cfg.substeps_per_period)


def _tau0(cfg: ExperimentConfig) -> float:
    return 2.0 * cfg.lambda0 / cfg.g_bar**2


def _pool_map(jobs, worker, threads):
    """Run keyed jobs, returning results ordered by key."""
    if threads <= 1:
        results = [(key, worker(key)) for key in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads,
                                 initializer=_limit_blas_threads) as pool:
            results = list(zip(jobs, pool.map(worker, jobs)))
    return [value for _, value in sorted(results, key=lambda kv: kv[0])]


def _limit_blas_threads():
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def _mean_se(values) -> tuple:
    arr = np.array([v for v in values if v is not None and np.isfinite(v)])
    if len(arr) == 0:
        return float("nan"), float("nan")
    se = arr.std(ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
    return float(arr.mean()), float(se)


# ---------------------------------------------------------------- sweep scan

_SWEEP_CFG: ExperimentConfig | None = None


def _sweep_init(cfg):
    global _SWEEP_CFG
    _SWEEP_CFG = cfg


def _sweep_job(key):
    """One realization: every protocol at every ramp time, one gamma_z."""
    cfg = _SWEEP_CFG
    gamma_z, r_index = key
    real = sample_realization(_params(cfg, gamma_z), r_index)
    basis = build_sector_basis(cfg.size, cfg.sector())
    labels = classify_states(real, basis, cfg.lambda0)
    out = {}
    for kind in cfg.protocols:
        for tau in cfg.tau_grid():
            res = measure_sweep(_protocol(cfg, kind, tau), real, basis, labels)
            out[(kind, tau)] = (res.eta_T, res.eta_K)
    return out


def run_sweep_scan(cfg: ExperimentConfig) -> ResultTable:
    jobs = [(gz, r) for gz in cfg.gamma_z for r in range(cfg.realizations)]
    _sweep_init(cfg)
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_sweep_pool_init,
                                 initargs=(cfg,)) as pool:
            results = dict(zip(jobs, pool.map(_sweep_job, jobs)))
    else:
        results = {key: _sweep_job(key) for key in jobs}
    tau0 = _tau0(cfg)
    rows = []
    for gz in cfg.gamma_z:
        for kind in cfg.protocols:
            for tau in cfg.tau_grid():
                per_real = [results[(gz, r)][(kind, tau)] for r in range(cfg.realizations)]
                t_mean, t_se = _mean_se([p[0] for p in per_real])
                k_mean, k_se = _mean_se([p[1] for p in per_real])
                rows.append((tau / tau0, t_mean, t_se, k_mean, k_se,
                             _label(cfg, kind), gz))
    return ResultTable(
        columns=("tau_r_over_tau0", "eta_T_mean", "eta_T_se", "eta_K_mean",
                 "eta_K_se", "protocol", "gamma_z"),
        rows=rows)


def _sweep_pool_init(cfg):
    _limit_blas_threads()
    _sweep_init(cfg)


def _label(cfg, kind):
    if kind == "lcd" and cfg.lcd_order > 1:
        return f"LCD{cfg.lcd_order}"
    return kind.upper()


# ---------------------------------------------------------------- sector scan

def _sector_job(key):
    cfg = _SWEEP_CFG
    gamma_z, r_index = key
    real = sample_realization(_params(cfg, gamma_z), r_index)
    tau = cfg.tau_grid()[0] if cfg.tau_grid() else 500.0 / cfg.size
    sectors = cfg.sectors or tuple(range(1, cfg.size // 2 + 1))
    out = {}
    for N in sectors:
        basis = build_sector_basis(cfg.size, N)
        labels = classify_states(real, basis, cfg.lambda0)
        for kind in cfg.protocols:
            res = measure_sweep(_protocol(cfg, kind, tau), real, basis, labels)
            out[(N, kind)] = (res.eta_T, res.eta_K)
    return out


def run_sector_scan(cfg: ExperimentConfig) -> ResultTable:
    jobs = [(gz, r) for gz in cfg.gamma_z for r in range(cfg.realizations)]
    _sweep_init(cfg)
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_sweep_pool_init,
                                 initargs=(cfg,)) as pool:
            results = dict(zip(jobs, pool.map(_sector_job, jobs)))
    else:
        results = {key: _sector_job(key) for key in jobs}
    sectors = cfg.sectors or tuple(range(1, cfg.size // 2 + 1))
    rows = []
    for gz in cfg.gamma_z:
        for kind in cfg.protocols:
            for N in sectors:
                per_real = [results[(gz, r)][(N, kind)] for r in range(cfg.realizations)]
                t_mean, t_se = _mean_se([p[0] for p in per_real])
                k_mean, k_se = _mean_se([p[1] for p in per_real])
                rows.append((N, N / cfg.size, t_mean, t_se, k_mean, k_se,
                             _label(cfg, kind), gz))
    return ResultTable(
        columns=("n_flips", "flip_density", "eta_T_mean", "eta_T_se",
                 "eta_K_mean", "eta_K_se", "protocol", "gamma_z"),
        rows=rows)


# ------------------------------------------------------------- gap histogram

def run_gap_histogram(cfg: ExperimentConfig) -> ResultTable:
    rows = []
    sectors = cfg.sectors or (cfg.sector(),)
    for gz in cfg.gamma_z:
        real = sample_realization(_params(cfg, gz), 0)
        for N in sectors:
            basis = build_sector_basis(cfg.size, N)
            hist = resonant_gaps(real, basis, bins=cfg.bins)
            for center, count in zip(hist.bin_centers, hist.counts):
                rows.append((N, float(center), int(count)))
    return ResultTable(columns=("n_flips", "bin_center", "count"), rows=rows)


# ---------------------------------------------------------------- level stats

def _level_job(key):
    cfg = _SWEEP_CFG
    gamma_z, r_index = key
    real = sample_realization(_params(cfg, gamma_z), r_index)
    basis = build_sector_basis(cfg.size, cfg.sector())
    return {lam: level_spacing_ratio(real, basis, lam) for lam in cfg.lambda_grid}


def run_level_stats(cfg: ExperimentConfig) -> ResultTable:
    jobs = [(gz, r) for gz in cfg.gamma_z for r in range(cfg.realizations)]
    _sweep_init(cfg)
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_sweep_pool_init,
                                 initargs=(cfg,)) as pool:
            results = dict(zip(jobs, pool.map(_level_job, jobs)))
    else:
        results = {key: _level_job(key) for key in jobs}
    rows = []
    for gz in cfg.gamma_z:
        for lam in cfg.lambda_grid:
            mean, se = _mean_se([results[(gz, r)][lam] for r in range(cfg.realizations)])
            rows.append((lam, mean, se, gz))
    return ResultTable(columns=("lambda", "r_mean", "r_stderr", "gamma_z"), rows=rows)


# -------------------------------------------------------------------- cycles

def run_cycles_experiment(cfg: ExperimentConfig) -> ResultTable:
    tau = cfg.tau_grid()[0] if cfg.tau_grid() else 0.05 * _tau0(cfg)
    rows = []
    for gz in cfg.gamma_z:
        real = sample_realization(_params(cfg, gz), 0)
        for kind in cfg.protocols:
            trace = run_cycles(_protocol(cfg, kind, tau), real, cfg.n_cycles,
                               record_sectors=False)
            for cycle, pol in enumerate(trace.bath_polarization):
                rows.append((cycle, float(pol), _label(cfg, kind), gz))
    return ResultTable(columns=("cycle", "S_B_z", "protocol", "gamma_z"), rows=rows)


# ----------------------------------------------------------- master scaling

def run_master_scaling(cfg: ExperimentConfig) -> ResultTable:
    rows = []
    for spec in cfg.master_models:
        label, _, eta = str(spec).partition(":")
        eta0 = float(eta)
        for L in cfg.sizes:
            if label == "cd":
                n = L + 1
                model = build_transfer_matrix(L, 0.0, eta_T=np.ones(n), eta_K=np.zeros(n))
            else:
                model = build_transfer_matrix(L, eta0)
            n_c = cycles_to_threshold(model, cfg.threshold)
            rows.append((L, eta0, label.upper(), n_c))
    return ResultTable(columns=("L", "eta0", "protocol", "N_c"), rows=rows)


# ------------------------------------------------------------------ fe ramp

def run_fe_ramp(cfg: ExperimentConfig) -> ResultTable:
    real = sample_realization(_params(cfg, cfg.gamma_z[0]), 0)
    rows = []
    limited_any = False
    for tau in cfg.tau_grid():
        trace, limited = fe_ramp_or_fallback(real, cfg.lambda0, tau, cfg.omega,
                                             cfg.substeps_per_period)
        limited_any |= limited
        for i in range(len(trace.t)):
            rows.append((tau, float(trace.t[i]), float(trace.Lambda[i]),
                         float(trace.beta[i]), float(trace.s[i]), float(trace.G[i]),
                         int(limited)))
    table = ResultTable(columns=("tau_r", "t", "Lambda", "beta", "s", "G",
                                 "speed_limited"), rows=rows)
    table.speed_limited = limited_any
    return table


# ---------------------------------------------------------------- power scan

def _power_job(key):
    cfg = _SWEEP_CFG
    gamma_z, r_index = key
    real = sample_realization(_params(cfg, gamma_z), r_index)
    basis = build_sector_basis(cfg.size, cfg.sector())
    out = {}
    for kind in cfg.protocols:
        for tau in cfg.tau_grid():
            out[(kind, tau)] = transfer_power(_protocol(cfg, kind, tau), real, basis)
    return out


def run_power_scan(cfg: ExperimentConfig) -> ResultTable:
    jobs = [(gz, r) for gz in cfg.gamma_z for r in range(cfg.realizations)]
    _sweep_init(cfg)
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads, initializer=_sweep_pool_init,
                                 initargs=(cfg,)) as pool:
            results = dict(zip(jobs, pool.map(_power_job, jobs)))
    else:
        results = {key: _power_job(key) for key in jobs}
    rows = []
    tau0 = _tau0(cfg)
    for gz in cfg.gamma_z:
        for kind in cfg.protocols:
            for tau in cfg.tau_grid():
                mean, se = _mean_se([results[(gz, r)][(kind, tau)]
                                     for r in range(cfg.realizations)])
                rows.append((tau, tau / tau0, mean, se, _label(cfg, kind), gz))
    return ResultTable(columns=("tau_r", "tau_r_over_tau0", "power_mean", "power_se",
                                "protocol", "gamma_z"), rows=rows)


# --------------------------------------------------------------- speed limit

def run_speedlimit(cfg: ExperimentConfig) -> ResultTable:
    rows = []
    for gz in cfg.gamma_z:
        for r_index in range(cfg.realizations):
            real = sample_realization(_params(cfg, gz), r_index)
            rows.append((r_index, gz, real.delta_typ,
                         float(speed_limit(real, cfg.lambda0)),
                         float(speed_limit_quadrature(real, cfg.lambda0)),
                         float(fe_min_lab_duration(real, cfg.lambda0))))
    return ResultTable(columns=("realization", "gamma_z", "delta_typ", "tau_sl",
                                "tau_sl_quadrature", "fe_min_duration"), rows=rows)


_RUNNERS = {
    "sweep-scan": run_sweep_scan,
    "sector-scan": run_sector_scan,
    "gap-histogram": run_gap_histogram,
    "level-stats": run_level_stats,
    "cycles": run_cycles_experiment,
    "master-scaling": run_master_scaling,
    "fe-ramp": run_fe_ramp,
    "power-scan": run_power_scan,
    "speedlimit": run_speedlimit,
}


def run_experiment(cfg: ExperimentConfig, out_path: str | None = None) -> ResultTable:
    """Dispatch to the experiment runner and write its CSV artifact."""
    table = _RUNNERS[cfg.experiment](cfg)
    table.metadata = {
        "spinpol": __version__,
        "experiment": cfg.experiment,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
    }
    write_csv(table, out_path or cfg.out)
    return table
