"""End-to-end Proxy VAR and Proxy DFM estimators.

Both return a :class:`ProxyEstimate` that keeps every intermediate fit, so the
bootstrap can rebuild data from the fitted system and re-run the same pipeline.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import VarFit, WoldRepresentation, fit_var, observable_ma, reduce_rank, wold
from .factor_model import FactorModelFit, estimate_nonstationary, estimate_static_factors
from .proxy_ident import InstrumentSeries, ProxyIdentification, identify


@dataclass(frozen=True)
class ProxyEstimate:
    kind: str                         # "var" or "dfm"
    irf: np.ndarray                   # (H+1) x len(rows)
    shock: np.ndarray                 # identified unit-variance shock over innov_index
    pid: ProxyIdentification
    var: VarFit
    ma: WoldRepresentation            # MA of the reported rows
    innov_index: np.ndarray
    factor_fit: Optional[FactorModelFit] = None
    settings: dict = field(default_factory=dict)


def _index(n, index):
    return np.arange(n) if index is None else np.asarray(index)


def proxy_var(y, z: InstrumentSeries, p: int, H: int, intercept: bool = True,
              index=None, rows=None, names=None) -> ProxyEstimate:
    """Proxy SVAR on the columns of ``y``; ``rows`` selects reported variables."""
    y = np.asarray(y, dtype=float)
    idx = _index(y.shape[0], index)
    fit = fit_var(y, p, intercept, names=names)
    ma = wold(fit, H)
    pid = identify(ma, z, u_index=idx[p:])
    irf = pid.irf if rows is None else pid.irf[:, list(rows)]
    settings = dict(p=p, H=H, intercept=intercept, rows=None if rows is None else list(rows))
    return ProxyEstimate("var", irf, pid.shock, pid, fit, ma, idx[p:], None, settings)


def proxy_dfm(x, z: InstrumentSeries, r: int, q: int, p: int, H: int, intercept: bool = False,
              rows=None, mode: str = "stationary", index=None) -> ProxyEstimate:
    """Proxy DFM: PC factors, factor VAR, rank-q innovations, instrument projection.

    ``mode="nonstationary"`` takes levels and uses the differenced-loadings
    procedure; the factor VAR then runs on the I(1) level factors.
    """
    x = np.asarray(x, dtype=float)
    idx = _index(x.shape[0], index)
    if mode == "stationary":
        fm = estimate_static_factors(x, r, q)
    elif mode == "nonstationary":
        fm = estimate_nonstationary(x, r, q)
    else:
        raise ValueError(f"unknown DFM mode {mode!r}")
    fit = fit_var(fm.factors, p, intercept)
    w = reduce_rank(fit, q, H)
    ma = observable_ma(fm, w, rows=rows)
    pid = identify(ma, z, u_index=idx[p:])
    settings = dict(r=r, q=q, p=p, H=H, intercept=intercept, mode=mode,
                    rows=None if rows is None else list(rows))
    return ProxyEstimate("dfm", pid.irf, pid.shock, pid, fit, ma, idx[p:], fm, settings)


def rerun(est: ProxyEstimate, data, z: InstrumentSeries, index=None) -> ProxyEstimate:
    """Re-estimate with the same settings on new data (used by the bootstrap)."""
    s = est.settings
    if est.kind == "var":
        return proxy_var(data, z, s["p"], s["H"], s["intercept"], index=index, rows=s["rows"])
    return proxy_dfm(data, z, s["r"], s["q"], s["p"], s["H"], s["intercept"], rows=s["rows"],
                     mode=s["mode"], index=index)
