"""Monte Carlo comparison of Proxy VAR, Proxy FAVAR and Proxy DFM on the foresight economy.

Each replication simulates a dataset, builds every estimator's input, identifies
the tax shock with the configured proxy and keeps the (tau, k) responses and the
identified shock.  Aggregation happens only after every replication is
materialized, so results do not depend on execution order or parallelism.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dgp_sim import INSTRUMENT_KINDS, LeeperParams, make_instrument, simulate, substream, tax_irf
from .dynamics import assemble_favar
from .errors import ConfigError, DimensionError, ExcessFailuresError, ProxyDfmError
from .panel import TimeSeriesPanel
from .pipeline import ProxyEstimate, proxy_dfm, proxy_var, rerun
from .proxy_ident import InstrumentSeries, invertibility_test, irf_to_long_csv

logger = logging.getLogger(__name__)

ESTIMATORS = ("var_bivariate", "var_trivariate", "favar", "dfm")
CORE = ("tau", "k")


@dataclass(frozen=True)
class ExperimentConfig:
    n_reps: int = 1000
    dgp: LeeperParams = field(default_factory=LeeperParams)
    estimators: tuple = ESTIMATORS
    lags: int = 2
    estimator_lags: dict = field(default_factory=dict)   # per-estimator override of ``lags``
    dfm_r: int = 5
    dfm_q: int = 2
    favar_extra: int = 3
    instrument_kind: str = "perfect"
    square_alpha: bool = True
    horizon: int = 20
    band_levels: tuple = (0.68, 0.95)
    seed: int = 0
    intercept: bool = False
    inv_test: bool = True
    inv_test_leads: int = 8
    inv_test_level: float = 0.05
    threads: int = 1
    max_failure_rate: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "band_levels", tuple(sorted(self.band_levels)))
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators {sorted(unknown)}; choose from {ESTIMATORS}")
        if self.n_reps < 1:
            raise ConfigError("n_reps must be positive")
        if self.instrument_kind not in INSTRUMENT_KINDS:
            raise ConfigError(f"unknown instrument kind {self.instrument_kind!r}")
        if not 1 <= self.dfm_q <= self.dfm_r:
            raise ConfigError(f"need 1 <= dfm_q <= dfm_r, got q={self.dfm_q}, r={self.dfm_r}")
        if self.dfm_r >= min(self.dgp.T, self.dgp.n_extra + 2):
            raise ConfigError("dfm_r must be smaller than both T and the panel width")
        if self.favar_extra < 0:
            raise ConfigError("favar_extra must be >= 0")
        if any(not 0 < lv < 1 for lv in self.band_levels):
            raise ConfigError("band levels must lie in (0, 1)")

    def lag_for(self, estimator: str) -> int:
        return int(self.estimator_lags.get(estimator, self.lags))

    def to_dict(self):
        d = asdict(self)
        d["estimators"] = list(self.estimators)
        d["band_levels"] = list(self.band_levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        if "dgp" in d and isinstance(d["dgp"], dict):
            dgp_known = {f.name for f in fields(LeeperParams)}
            bad = set(d["dgp"]) - dgp_known
            if bad:
                raise ConfigError(f"unknown dgp fields {sorted(bad)}")
            try:
                d["dgp"] = LeeperParams(**d["dgp"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


@dataclass
class RepOutcome:
    irf: np.ndarray            # (H+1) x 2, rows (tau, k), sign-aligned
    shock: np.ndarray          # identified shock, sign-aligned, length T - p
    lag: int
    corr: float                # corr(shock, u_tau) after alignment
    shock_frobenius: float
    inv_reject: Optional[bool]


# ----------------------------------------------------------------- estimators

def estimator_input(name: str, ds, cfg: ExperimentConfig) -> np.ndarray:
    """The data matrix each estimator sees."""
    if name == "var_bivariate":
        return ds.noisy_observables[:, :2]
    if name == "var_trivariate":
        return ds.noisy_observables
    if name == "favar":
        return assemble_favar(ds.noisy_observables[:, :2], ds.noisy_panel, cfg.favar_extra)
    if name == "dfm":
        return ds.noisy_panel
    raise ConfigError(f"unknown estimator {name!r}")


def estimate(name: str, ds, z: InstrumentSeries, cfg: ExperimentConfig) -> ProxyEstimate:
    data = estimator_input(name, ds, cfg)
    p = cfg.lag_for(name)
    if name == "dfm":
        return proxy_dfm(data, z, cfg.dfm_r, cfg.dfm_q, p, cfg.horizon, cfg.intercept, rows=[0, 1])
    return proxy_var(data, z, p, cfg.horizon, cfg.intercept, rows=[0, 1])


def instrument_sign(cfg: ExperimentConfig, rep: int) -> float:
    """Sign of the proxy's loading on the tax shock (the DGP's own sign convention)."""
    if cfg.instrument_kind == "perfect" or cfg.square_alpha:
        return 1.0
    return float(np.sign(substream(cfg.seed, rep, 1).standard_normal()) or 1.0)


def run_replication(cfg: ExperimentConfig, rep: int):
    """All estimators on replication ``rep``; returns ``(outcomes, failures)``."""
    ds = simulate(cfg.dgp, substream(cfg.seed, rep, 0), cfg.horizon)
    z = make_instrument(cfg.instrument_kind, ds, substream(cfg.seed, rep, 1), square=cfg.square_alpha)
    sgn = instrument_sign(cfg, rep)
    outcomes, failures = {}, []
    for name in cfg.estimators:
        try:
            est = estimate(name, ds, z, cfg)
            p = cfg.lag_for(name)
            u = ds.u_tau[p:]
            shock = est.shock
            c = float(np.corrcoef(shock, u)[0, 1])
            if c < 0:
                shock = -shock
                c = -c
            reject = None
            if cfg.inv_test:
                res = invertibility_test(z, est.ma.shocks, cfg.inv_test_leads, cfg.inv_test_level,
                                         u_index=est.innov_index)
                reject = bool(res.reject)
            outcomes[name] = RepOutcome(sgn * est.irf, shock, p, c,
                                        float(np.linalg.norm(shock - u)), reject)
        except (ProxyDfmError, np.linalg.LinAlgError) as exc:
            failures.append({"rep": rep, "seed": cfg.seed, "estimator": name,
                             "error": f"{type(exc).__name__}: {exc}"})
    return outcomes, failures


def frobenius_distance(est_irf, true_irf) -> float:
    est_irf = np.asarray(est_irf, dtype=float)
    true_irf = np.asarray(true_irf, dtype=float)
    if est_irf.shape != true_irf.shape:
        raise DimensionError(f"shape mismatch {est_irf.shape} vs {true_irf.shape}")
    return float(np.sqrt(np.sum((est_irf - true_irf) ** 2)))


# ----------------------------------------------------------------- results

@dataclass
class EstimatorSummary:
    irfs: np.ndarray                 # n_ok x (H+1) x 2
    mean_irf: np.ndarray
    median_irf: np.ndarray
    bands: dict                      # level -> (lower, upper)
    frobenius: np.ndarray            # per replication
    frobenius_of_mean: float
    mean_shock: np.ndarray
    shock_corr: np.ndarray
    shock_frobenius: np.ndarray
    rejection_rate: float
    n_failed: int

    @property
    def mean_frobenius(self) -> float:
        return float(np.mean(self.frobenius))

    @property
    def mean_shock_corr(self) -> float:
        return float(np.mean(self.shock_corr))


@dataclass
class McResult:
    config: ExperimentConfig
    true_irf: np.ndarray             # (H+1) x 2, rows (tau, k)
    summaries: dict
    failures: list

    def frobenius_table(self):
        return {name: s.mean_frobenius for name, s in self.summaries.items()}

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        irf_to_long_csv(out / "true_irf.csv", self.true_irf, list(CORE))
        for name, s in self.summaries.items():
            irf_to_long_csv(out / f"mean_irf_{name}.csv", s.mean_irf, list(CORE))
            irf_to_long_csv(out / f"bands_{name}.csv", s.median_irf, list(CORE), s.bands)
        with open(out / "frobenius.csv", "w") as fh:
            fh.write("estimator,mean_frobenius,frobenius_of_mean,mean_shock_frobenius,"
                     "mean_shock_corr,rejection_rate,n_ok,n_failed\n")
            for name, s in self.summaries.items():
                fh.write(",".join([name, repr(s.mean_frobenius), repr(s.frobenius_of_mean),
                                   repr(float(np.mean(s.shock_frobenius))), repr(s.mean_shock_corr),
                                   repr(s.rejection_rate), str(len(s.frobenius)), str(s.n_failed)]) + "\n")
        with open(out / "failures.log", "w") as fh:
            for f in self.failures:
                fh.write(json.dumps(f) + "\n")


def quantile_bands(draws: np.ndarray, levels: Sequence[float]) -> dict:
    """Pointwise equal-tailed bands: level -> (lower, upper)."""
    out = {}
    for lv in levels:
        lo, hi = np.quantile(draws, [(1 - lv) / 2, (1 + lv) / 2], axis=0)
        out[lv] = (lo, hi)
    return out


def _summarize(cfg, name, outs, n_failed, true):
    irfs = np.stack([o.irf for o in outs])
    mean_irf = irfs.mean(axis=0)
    rejects = [o.inv_reject for o in outs if o.inv_reject is not None]
    return EstimatorSummary(
        irfs=irfs,
        mean_irf=mean_irf,
        median_irf=np.median(irfs, axis=0),
        bands=quantile_bands(irfs, cfg.band_levels),
        frobenius=np.array([frobenius_distance(i, true) for i in irfs]),
        frobenius_of_mean=frobenius_distance(mean_irf, true),
        mean_shock=np.mean([o.shock for o in outs], axis=0),
        shock_corr=np.array([o.corr for o in outs]),
        shock_frobenius=np.array([o.shock_frobenius for o in outs]),
        rejection_rate=float(np.mean(rejects)) if rejects else float("nan"),
        n_failed=n_failed,
    )


def _worker(args):
    cfg, reps = args
    return [run_replication(cfg, r) for r in reps]


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("PROXYDFM_THREADS", "1"))
    return max(1, int(threads))


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None,
                   progress: Optional[Callable[[int], None]] = None) -> McResult:
    threads = _resolve_threads(cfg.threads if threads is None else threads)
    reps = list(range(cfg.n_reps))
    if threads == 1:
        results = []
        for r in reps:
            results.append(run_replication(cfg, r))
            if progress:
                progress(r)
    else:
        chunks = [reps[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_worker, [(cfg, c) for c in chunks]))
        by_rep = {}
        for chunk, part in zip(chunks, parts):
            by_rep.update(zip(chunk, part))
        results = [by_rep[r] for r in reps]

    true = tax_irf(cfg.dgp, cfg.horizon)
    failures = [f for _, fl in results for f in fl]
    summaries = {}
    for name in cfg.estimators:
        outs = [o[name] for o, _ in results if name in o]
        n_failed = cfg.n_reps - len(outs)
        if not outs or n_failed > cfg.max_failure_rate * cfg.n_reps:
            sample = [f["error"] for f in failures if f["estimator"] == name][:3]
            raise ExcessFailuresError(
                f"{name}: {n_failed}/{cfg.n_reps} replications failed, e.g. {sample}", failures)
        summaries[name] = _summarize(cfg, name, outs, n_failed, true)
    return McResult(cfg, true, summaries, failures)


# ----------------------------------------------------------------- bootstrap

@dataclass
class BootstrapBands:
    point: np.ndarray
    bands: dict                  # level -> (lower, upper)
    draws: np.ndarray            # B_ok x shape(point)
    n_failed: int


def rademacher(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n) * 2.0 - 1.0


def wild_bootstrap(rebuild: Callable[[np.ndarray], object], estimator: Callable[[object], np.ndarray],
                   n_periods: int, B: int = 500, levels=(0.68, 0.95),
                   rng: Optional[np.random.Generator] = None, point=None) -> BootstrapBands:
    """Generic wild bootstrap: one Rademacher weight per period, rebuild, re-estimate.

    ``rebuild(w)`` returns whatever ``estimator`` consumes.
    """
    if B < 50:
        raise ConfigError(f"at least 50 bootstrap draws required, got {B}")
    if B < 200:
        logger.warning("only %d bootstrap draws; 200 or more recommended", B)
    rng = np.random.default_rng(0) if rng is None else rng
    draws, failed = [], 0
    for _ in range(B):
        w = rademacher(rng, n_periods)
        try:
            draws.append(estimator(rebuild(w)))
        except (ProxyDfmError, np.linalg.LinAlgError):
            failed += 1
    if not draws:
        raise ExcessFailuresError("every bootstrap draw failed")
    draws = np.stack(draws)
    point = draws.mean(axis=0) if point is None else point
    return BootstrapBands(point, quantile_bands(draws, levels), draws, failed)


def wild_bootstrap_bands(data, est: ProxyEstimate, z: InstrumentSeries, B: int = 500,
                         levels=(0.68, 0.95), rng: Optional[np.random.Generator] = None,
                         index=None) -> BootstrapBands:
    """Bands for a fitted Proxy VAR / Proxy DFM.

    Each period's (VAR residual, instrument residual, idiosyncratic residual) is
    multiplied by one Rademacher weight, the data are rebuilt through the fitted
    VAR recursion and the whole pipeline is re-estimated.  Because the instrument
    residual is ``z - delta'u``, the rebuilt instrument is the weight times the
    demeaned instrument.
    """
    data = np.asarray(data, dtype=float)
    T = data.shape[0]
    idx = np.arange(T) if index is None else np.asarray(index)
    var = est.var
    p = var.p
    common, iu, iz = np.intersect1d(est.innov_index, z.index, assume_unique=True, return_indices=True)
    z_dm = z.values[iz] - z.values[iz].mean()

    if est.kind == "var":
        def rebuild(w):
            y = var.simulate(var.residuals * w[:, None])
            return y, InstrumentSeries(w[iu] * z_dm, common)
    else:
        fm = est.factor_fit
        xi = fm.idiosyncratic(data)
        base = data - fm.scale_sd * fm.scaled(data)   # mean or trend part, original units

        def rebuild(w):
            f = var.simulate(var.residuals * w[:, None])
            wt = np.concatenate([np.ones(p), w])[:, None]
            x = base + fm.scale_sd * (f @ fm.loadings.T + wt * xi)
            return x, InstrumentSeries(w[iu] * z_dm, common)

    def estimator(built):
        x, zb = built
        return rerun(est, x, zb, index=idx).irf

    return wild_bootstrap(rebuild, estimator, T - p, B, levels, rng, point=est.irf)


# ----------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    core: tuple
    candidates: list
    irfs: dict                 # candidate -> (H+1) x len(core)
    invertible: dict           # candidate -> bool
    favar_irfs: dict
    failures: list

    def stacked(self, favar: bool = False) -> np.ndarray:
        src = self.favar_irfs if favar else self.irfs
        return np.stack([src[c] for c in self.candidates if c in src])


def spec_sweep(panel: TimeSeriesPanel, core: Sequence[str], candidates: Sequence[str],
               z: InstrumentSeries, lags: int, horizon: int, intercept: bool = True,
               favar_factors: int = 0, leads: int = 8, level: float = 0.05,
               index=None) -> SweepResult:
    """One Proxy VAR (and optionally FAVAR) per candidate appended to the core block.

    Failures (for example a candidate collinear with the core) are recorded, not raised.
    """
    idx = panel.dates if (index is None and panel.dates is not None) else index
    core_idx = [panel.index_of(c) for c in core]
    irfs, inv, favar_irfs, failures = {}, {}, {}, []
    rows = list(range(len(core)))
    for cand in candidates:
        try:
            cols = core_idx + [panel.index_of(cand)]
            y = panel.values[:, cols]
            est = proxy_var(y, z, lags, horizon, intercept, index=idx, rows=rows)
            irfs[cand] = est.irf
            res = invertibility_test(z, est.var.residuals, leads, level, u_index=est.innov_index)
            inv[cand] = not res.reject
            if favar_factors:
                stack = assemble_favar(y, panel, favar_factors)
                favar_irfs[cand] = proxy_var(stack, z, lags, horizon, intercept, index=idx, rows=rows).irf
        except (ProxyDfmError, np.linalg.LinAlgError) as exc:
            failures.append({"candidate": cand, "error": f"{type(exc).__name__}: {exc}"})
    return SweepResult(tuple(core), list(candidates), irfs, inv, favar_irfs, failures)


@dataclass
class SimulationSweep:
    sweep: SweepResult
    dfm: ProxyEstimate
    dfm_bands: BootstrapBands
    true_irf: np.ndarray


def simulation_sweep(cfg: ExperimentConfig, n_candidates: int = 20, rep: int = 0,
                     B: int = 500, favar_factors: int = 2) -> SimulationSweep:
    """Sweep over survey series on one simulated dataset, next to the Proxy DFM and its bands."""
    ds = simulate(cfg.dgp, substream(cfg.seed, rep, 0), cfg.horizon)
    z = make_instrument(cfg.instrument_kind, ds, substream(cfg.seed, rep, 1), square=cfg.square_alpha)
    panel = TimeSeriesPanel(ds.noisy_panel, ds.panel_names)
    cands = list(ds.panel_names[2:2 + n_candidates])
    sweep = spec_sweep(panel, CORE, cands, z, cfg.lags, cfg.horizon, cfg.intercept,
                       favar_factors, cfg.inv_test_leads, cfg.inv_test_level)
    p = cfg.lag_for("dfm")
    dfm = proxy_dfm(ds.noisy_panel, z, cfg.dfm_r, cfg.dfm_q, p, cfg.horizon, cfg.intercept, rows=[0, 1])
    bands = wild_bootstrap_bands(ds.noisy_panel, dfm, z, B, cfg.band_levels, substream(cfg.seed, rep, 2))
    return SimulationSweep(sweep, dfm, bands, tax_irf(cfg.dgp, cfg.horizon))
