"""Command-line entry point: ``proxydfm {simulate,montecarlo,estimate,invertibility-test,spec-sweep}``.

Every command writes ``manifest.json`` to its output directory before any result
file.  Settings resolve as flags > JSON config > defaults.

Exit codes: 0 success, 1 other estimation error, 2 configuration or input error,
3 too many failed replications, 4 impact normalization impossible.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .dgp_sim import LeeperParams, make_instrument, simulate, substream
from .dynamics import ma_to_long_csv
from .errors import (BalancedPanelError, ConfigError, ExcessFailuresError, NormalizationError,
                     OverlapError, ParamError, ParseError, ProxyDfmError)
from .mc_harness import ExperimentConfig, run_experiment, spec_sweep, wild_bootstrap_bands
from .panel import TimeSeriesPanel, TransformSpec, load_csv, transform_panel
from .pipeline import proxy_dfm, proxy_var
from .proxy_ident import fevd, invertibility_test, irf_to_long_csv, load_instrument_csv, normalize_irf

logger = logging.getLogger("proxydfm")

COMMANDS = ("simulate", "montecarlo", "estimate", "invertibility-test", "spec-sweep")


@dataclass(frozen=True)
class RunManifest:
    command: str
    config: Optional[str]
    out: str
    seed: int
    version: str = __version__
    timestamp: str = ""
    settings: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> None:
        """Atomic write: temp file in the same directory, then rename."""
        out_dir.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_jsonable)
        os.replace(tmp, out_dir / "manifest.json")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# ------------------------------------------------------------------ configs

@dataclass(frozen=True)
class EstimateConfig:
    r: int = 9
    q: int = 4
    p: int = 8
    horizon: int = 48
    mode: str = "nonstationary"      # or "stationary"
    transform: str = "levels"        # levels | fred | none
    intercept: bool = True
    target: Optional[str] = None     # variable whose impact response is normalized
    target_impact: float = 1.0
    fevd_horizons: tuple = (0, 6, 12, 24, 36, 48)
    bootstrap: int = 0               # number of draws, 0 disables
    band_levels: tuple = (0.68, 0.95)
    var_core: tuple = ()
    sweep: bool = False
    sweep_candidates: tuple = ()
    inv_test: bool = True
    inv_test_leads: int = 8
    inv_test_level: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("fevd_horizons", "band_levels", "var_core", "sweep_candidates"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.mode not in ("stationary", "nonstationary"):
            raise ConfigError(f"mode must be stationary or nonstationary, got {self.mode!r}")
        if self.transform not in ("levels", "fred", "none"):
            raise ConfigError(f"transform must be levels, fred or none, got {self.transform!r}")
        if not 1 <= self.q <= self.r or self.p < 1 or self.horizon < 0:
            raise ConfigError("need 1 <= q <= r, p >= 1 and horizon >= 0")
        if any(h < 0 or h > self.horizon for h in self.fevd_horizons):
            raise ConfigError(f"FEVD horizons must lie in 0..{self.horizon}")
        if self.bootstrap and self.bootstrap < 50:
            raise ConfigError(f"at least 50 bootstrap draws required, got {self.bootstrap}")


@dataclass(frozen=True)
class TestConfig:
    variables: tuple = ()
    p: int = 4
    leads: int = 8
    level: float = 0.05
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))


@dataclass(frozen=True)
class SweepConfig:
    core: tuple = ()
    candidates: tuple = ()
    p: int = 4
    horizon: int = 48
    intercept: bool = True
    favar_factors: int = 0
    leads: int = 8
    level: float = 0.05
    transform: str = "none"

    def __post_init__(self):
        object.__setattr__(self, "core", tuple(self.core))
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.core:
            raise ConfigError("spec-sweep needs at least one core variable")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _build(cls, data: dict):
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown {cls.__name__} fields {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _resolve_threads(flag) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get("PROXYDFM_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PROXYDFM_THREADS must be an integer, got {env!r}") from None
    return 1


def _need_file(path, what):
    if path is None:
        raise ConfigError(f"--{what} is required")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return Path(path)


def _prepare_panel(panel: TimeSeriesPanel, transform: str) -> TimeSeriesPanel:
    """``fred`` applies the panel's transform codes; ``levels`` only takes logs where codes ask for them."""
    if transform == "none" or panel.tcodes is None:
        return panel
    if transform == "fred":
        spec = TransformSpec.from_fred_codes(panel.names, panel.tcodes, strict=False)
    else:
        spec = TransformSpec({n: "log" if c in (4, 5, 6, 7) else "level"
                              for n, c in zip(panel.names, panel.tcodes)})
    return transform_panel(panel, spec)[0]


# ------------------------------------------------------------------ commands

def cmd_simulate(args) -> int:
    data = _read_config(args.config)
    H = int(data.pop("horizon", 20))
    kind = data.pop("instrument_kind", "perfect")
    if args.seed is not None:
        data["seed"] = args.seed
    params = _build(LeeperParams, data)
    out = Path(args.out)
    RunManifest("simulate", args.config, str(out), params.seed, timestamp=_now(),
                settings=dict(params.to_dict(), horizon=H, instrument_kind=kind)).write(out)
    ds = simulate(params, substream(params.seed, 0, 0), H)
    z = make_instrument(kind, ds, substream(params.seed, 0, 1))
    _write_table(out / "panel.csv", ["t", *ds.panel_names], ds.noisy_panel)
    _write_table(out / "observables.csv", ["t", "tau", "k", "a"], ds.noisy_observables)
    _write_table(out / "instrument.csv", ["t", "z"], z.values[:, None])
    truth = out / "truth"
    truth.mkdir(exist_ok=True)
    _write_table(truth / "true_shocks.csv", ["t", "u_a", "u_tau"], ds.true_shocks)
    _write_table(truth / "true_factors.csv", ["t", "k", "u_a", "u_tau", "u_tau_l1", "u_tau_l2"], ds.true_factors)
    ma_to_long_csv(ds.true_irf, truth / "true_irf.csv", ["a", "k", "tau"], ["u_tau", "u_a"])
    _write_table(truth / "noise_sd.csv", ["column", "sd"], ds.noise_sd[:, None],
                 labels=[*ds.panel_names, "a"])
    print(f"wrote T={params.T} N={len(ds.panel_names)} panel to {out}")
    return 0


def cmd_montecarlo(args) -> int:
    data = _read_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    threads = _resolve_threads(args.threads)
    data["threads"] = threads
    cfg = ExperimentConfig.from_dict(data)
    out = Path(args.out)
    RunManifest("montecarlo", args.config, str(out), cfg.seed, timestamp=_now(),
                settings=cfg.to_dict()).write(out)
    res = run_experiment(cfg, threads=threads)
    res.save(out)
    for name, s in res.summaries.items():
        print(f"{name:16s} frobenius={s.mean_frobenius:.4f} shock_corr={s.mean_shock_corr:.3f} "
              f"inv_reject={s.rejection_rate:.3f} failed={s.n_failed}")
    return 0


def _load_inputs(args, transform):
    panel = load_csv(_need_file(args.panel, "panel"))
    z = load_instrument_csv(_need_file(args.instrument, "instrument"))
    return _prepare_panel(panel, transform), z


def cmd_estimate(args) -> int:
    data = _read_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = _build(EstimateConfig, data)
    out = Path(args.out)
    panel, z = _load_inputs(args, cfg.transform)
    RunManifest("estimate", args.config, str(out), cfg.seed, timestamp=_now(),
                settings=dict(asdict(cfg), panel=str(args.panel), instrument=str(args.instrument))).write(out)
    names = list(panel.names)
    est = proxy_dfm(panel.values, z, cfg.r, cfg.q, cfg.p, cfg.horizon, cfg.intercept,
                    mode=cfg.mode, index=panel.dates)
    irf = est.irf
    bands = None
    if cfg.bootstrap:
        boot = wild_bootstrap_bands(panel.values, est, z, cfg.bootstrap, cfg.band_levels,
                                    substream(cfg.seed, 0, 2), index=panel.dates)
        bands = boot.bands
    irf_to_long_csv(out / "irf.csv", irf, names, bands)
    if cfg.target is not None:
        if cfg.target not in names:
            raise ConfigError(f"normalization target {cfg.target!r} is not a panel variable")
        norm = normalize_irf(irf, cfg.target, cfg.target_impact, names)
        c = norm[0, names.index(cfg.target)] / irf[0, names.index(cfg.target)]
        nb = None
        if bands is not None:
            # a negative scale swaps the band edges
            nb = {lv: (np.minimum(c * lo, c * hi), np.maximum(c * lo, c * hi)) for lv, (lo, hi) in bands.items()}
        irf_to_long_csv(out / "irf_normalized.csv", norm, names, nb)

    shares = fevd(est.ma, est.pid, cfg.horizon)
    with open(out / "fevd.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "variable", "share"])
        for h in cfg.fevd_horizons:
            for i, n in enumerate(names):
                w.writerow([h, n, repr(float(shares[h, i]))])
    _write_dated(out / "shock.csv", est.innov_index, est.shock, "shock")
    report = {"first_stage_F": est.pid.fstat_first_stage, "n_overlap": est.pid.n_overlap,
              "alpha_hat": est.pid.alpha_hat}
    if cfg.inv_test:
        res = invertibility_test(z, est.ma.shocks, cfg.inv_test_leads, cfg.inv_test_level,
                                 u_index=est.innov_index)
        report["invertibility"] = asdict(res)
    if cfg.var_core:
        core = panel.select(cfg.var_core)
        var = proxy_var(core.values, z, cfg.p, cfg.horizon, cfg.intercept, index=panel.dates)
        irf_to_long_csv(out / "var_irf.csv", var.irf, list(cfg.var_core))
        if cfg.inv_test:
            res = invertibility_test(z, var.var.residuals, cfg.inv_test_leads, cfg.inv_test_level,
                                     u_index=var.innov_index)
            report["var_invertibility"] = asdict(res)
        if cfg.sweep:
            cands = cfg.sweep_candidates or tuple(n for n in names if n not in cfg.var_core)
            sw = spec_sweep(panel, cfg.var_core, cands, z, cfg.p, cfg.horizon, cfg.intercept,
                            leads=cfg.inv_test_leads, level=cfg.inv_test_level)
            _write_sweep(out, sw)
    (out / "report.json").write_text(json.dumps(report, indent=2, default=_jsonable))
    print(f"estimated r={cfg.r} q={cfg.q} p={cfg.p} on {panel.T}x{panel.N}; first-stage F="
          f"{est.pid.fstat_first_stage:.2f}")
    return 0


def cmd_invertibility(args) -> int:
    cfg = _build(TestConfig, _read_config(args.config))
    if args.vars:
        cfg = replace(cfg, variables=tuple(args.vars))
    panel, z = _load_inputs(args, "none")
    names = cfg.variables or panel.names
    out = Path(args.out)
    RunManifest("invertibility-test", args.config, str(out), args.seed or 0, timestamp=_now(),
                settings=asdict(cfg)).write(out)
    est = proxy_var(panel.select(names).values, z, cfg.p, 0, cfg.intercept, index=panel.dates)
    res = invertibility_test(z, est.var.residuals, cfg.leads, cfg.level, u_index=est.innov_index)
    (out / "invertibility.json").write_text(json.dumps(dict(asdict(res), variables=list(names)),
                                                        indent=2, default=_jsonable))
    verdict = "reject invertibility" if res.reject else "invertibility not rejected"
    print(f"F={res.F:.3f} p={res.pvalue:.4f} ({verdict})")
    return 0


def cmd_spec_sweep(args) -> int:
    cfg = _build(SweepConfig, _read_config(args.config))
    panel, z = _load_inputs(args, cfg.transform)
    out = Path(args.out)
    RunManifest("spec-sweep", args.config, str(out), args.seed or 0, timestamp=_now(),
                settings=asdict(cfg)).write(out)
    cands = cfg.candidates or tuple(n for n in panel.names if n not in cfg.core)
    sw = spec_sweep(panel, cfg.core, cands, z, cfg.p, cfg.horizon, cfg.intercept,
                    cfg.favar_factors, cfg.leads, cfg.level)
    _write_sweep(out, sw)
    print(f"{len(sw.irfs)} specifications estimated, {len(sw.failures)} failed")
    return 0


# ------------------------------------------------------------------ output helpers

def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _write_table(path, header, mat, labels=None):
    mat = np.atleast_2d(mat)
    labels = labels if labels is not None else range(mat.shape[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for label, row in zip(labels, mat):
            w.writerow([label, *(repr(float(v)) for v in row)])


def _write_dated(path, index, values, name):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", name])
        for d, v in zip(index, values):
            w.writerow([str(d), repr(float(v))])


def _write_sweep(out: Path, sw):
    with open(out / "sweep_irf.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate", "model", "horizon", "variable", "value", "invertible"])
        for model, src in (("var", sw.irfs), ("favar", sw.favar_irfs)):
            for cand, irf in src.items():
                for h in range(irf.shape[0]):
                    for i, v in enumerate(sw.core):
                        w.writerow([cand, model, h, v, repr(float(irf[h, i])), sw.invertible.get(cand, "")])
    with open(out / "sweep_failures.log", "w") as fh:
        for f in sw.failures:
            fh.write(json.dumps(f) + "\n")


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxydfm", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        return p

    common(sub.add_parser("simulate", help="simulate the foresight economy and its panel"))
    common(sub.add_parser("montecarlo", help="Monte Carlo comparison of proxy estimators"))
    for name, help_ in (("estimate", "Proxy DFM on an empirical panel"),
                        ("invertibility-test", "test whether a VAR's residuals span the proxied shock"),
                        ("spec-sweep", "one Proxy VAR per candidate variable added to a core set")):
        p = common(sub.add_parser(name, help=help_))
        p.add_argument("--panel", help="panel CSV (first column dates)")
        p.add_argument("--instrument", help="instrument CSV (date,value)")
        if name == "invertibility-test":
            p.add_argument("--vars", nargs="+", help="VAR variables (default: whole panel)")
    return parser


HANDLERS = {"simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "estimate": cmd_estimate,
            "invertibility-test": cmd_invertibility, "spec-sweep": cmd_spec_sweep}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.command](args)
    except NormalizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ExcessFailuresError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ParamError, ParseError, BalancedPanelError, OverlapError,
            FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProxyDfmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
