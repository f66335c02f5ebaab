"""External-instrument ("proxy") identification of a unit-variance shock.

Given reduced-form innovations ``u_t`` with covariance ``Sigma_u`` and an instrument
``z_t``, project ``z_t = delta' u_t + v_t``; the identified shock is
``delta' u_t / alpha`` with ``alpha = sqrt(delta' Sigma_u delta)``, and its impulse
responses are ``B(L) Sigma_u delta / alpha``.  The construction never singles out a
variable to instrument, so it works for the singular N x q representation of a DFM
as well as for a square VAR.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats

from .dynamics import WoldRepresentation
from .errors import (DegenerateSeriesError, DimensionError, NormalizationError,
                     OverlapError, WeakInstrumentError)

logger = logging.getLogger(__name__)

SIGMA_IDENTITY_TOL = 0.1


@dataclass(frozen=True)
class InstrumentSeries:
    values: np.ndarray
    index: Optional[np.ndarray] = None   # dates or integer positions; default 0..n-1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise DegenerateSeriesError("instrument contains non-finite values")
        if v.size < 2 or np.ptp(v) == 0:
            raise DegenerateSeriesError("instrument has zero variance")
        object.__setattr__(self, "values", v)
        idx = np.arange(v.size) if self.index is None else np.asarray(self.index)
        if idx.shape != v.shape:
            raise DimensionError(f"instrument index has shape {idx.shape}, values {v.shape}")
        object.__setattr__(self, "index", idx)

    @property
    def coverage(self):
        return self.index[0], self.index[-1]

    def scaled(self, c: float) -> "InstrumentSeries":
        return replace(self, values=c * self.values)


@dataclass(frozen=True)
class ProxyIdentification:
    delta: np.ndarray
    alpha_hat: float
    sigma_u: np.ndarray
    fstat_first_stage: float
    n_overlap: int
    shock: Optional[np.ndarray] = None      # over every innovation row
    irf: Optional[np.ndarray] = None        # (H+1) x n_vars
    overlap_index: Optional[np.ndarray] = None

    @property
    def impact_vector(self) -> np.ndarray:
        """``Sigma_u delta / alpha``: the shock's loading on the innovations."""
        return self.sigma_u @ self.delta / self.alpha_hat


def _align(z: InstrumentSeries, u_index, n):
    u_index = np.arange(n) if u_index is None else np.asarray(u_index)
    if u_index.shape != (n,):
        raise DimensionError(f"innovation index has shape {u_index.shape}, expected ({n},)")
    common, iu, iz = np.intersect1d(u_index, z.index, assume_unique=True, return_indices=True)
    return common, iu, iz


def project_instrument(z: InstrumentSeries, u, cov=None, u_index=None) -> ProxyIdentification:
    """OLS of the demeaned instrument on the innovations over their common dates.

    ``cov`` defaults to the innovations' own (full-sample, divisor n) covariance.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n, m = u.shape
    common, iu, iz = _align(z, u_index, n)
    if common.size < m + 10:
        raise OverlapError(f"instrument overlaps the innovations on {common.size} periods; need {m + 10}")
    if common.size < n or common.size < z.values.size:
        logger.info("instrument/innovation overlap %s .. %s (%d periods)", common[0], common[-1], common.size)
    uo = u[iu]
    zo = z.values[iz] - z.values[iz].mean()
    delta, *_ = np.linalg.lstsq(uo, zo, rcond=None)
    if cov is None:
        cov = u.T @ u / n
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (m, m):
        raise DimensionError(f"innovation covariance has shape {cov.shape}, expected ({m}, {m})")
    a2 = float(delta @ cov @ delta)
    if not a2 > 1e-14 * float(zo @ zo / zo.size):
        raise WeakInstrumentError(f"delta' Sigma delta = {a2:.3g} is not positive")
    fitted = uo @ delta
    rss = float(np.sum((zo - fitted) ** 2))
    ess = float(fitted @ fitted)
    dof = common.size - m
    fstat = (ess / m) / (rss / dof) if rss > 0 else np.inf
    return ProxyIdentification(delta, np.sqrt(a2), cov, fstat, int(common.size), overlap_index=common)


def unit_variance_shock(pid: ProxyIdentification, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    return u @ pid.delta / pid.alpha_hat


def identified_irf(ma: WoldRepresentation, pid: ProxyIdentification) -> np.ndarray:
    """Responses of every variable in ``ma`` to the identified unit-variance shock."""
    if ma.ma.shape[2] != pid.delta.size:
        raise DimensionError(f"MA has {ma.ma.shape[2]} shocks, delta has {pid.delta.size} entries")
    return ma.ma @ pid.impact_vector


def identify(ma: WoldRepresentation, z: InstrumentSeries, u_index=None, cov=None) -> ProxyIdentification:
    """Project, build the shock and the IRF in one go using ``ma.shocks`` as innovations."""
    if ma.shocks is None:
        raise DimensionError("MA representation carries no innovation series")
    if cov is None:
        cov = ma.shock_cov
        n = ma.shocks.shape[0]
        sample = ma.shocks.T @ ma.shocks / n
        dev = np.linalg.norm(sample - cov)
        if np.allclose(cov, np.eye(cov.shape[0])) and dev > SIGMA_IDENTITY_TOL:
            logger.warning("innovation covariance deviates from identity (Frobenius %.3f); using sample", dev)
            cov = sample
    pid = project_instrument(z, ma.shocks, cov, u_index)
    shock = unit_variance_shock(pid, ma.shocks)
    return replace(pid, shock=shock, irf=identified_irf(ma, pid))


def normalize_irf(irf: np.ndarray, target, target_impact: float = 1.0, names=None) -> np.ndarray:
    """Scale the whole IRF so ``irf[0, target] == target_impact``.

    A negative impact response is flipped, i.e. the normalization also fixes the sign.
    An impact below ``1e-10`` times the largest impact response counts as zero.
    """
    irf = np.asarray(irf, dtype=float)
    j = names.index(target) if isinstance(target, str) else int(target)
    impact = irf[0, j] if irf.ndim == 2 else irf[0]
    scale = np.max(np.abs(irf[0])) if irf.size else 0.0
    if not np.isfinite(impact) or abs(impact) <= 1e-10 * scale:
        raise NormalizationError(f"impact response of target {target!r} is {impact}")
    return irf * (target_impact / impact)


def fevd(ma: WoldRepresentation, pid, H: Optional[int] = None) -> np.ndarray:
    """Share of each variable's common-component forecast-error variance due to the shock.

    ``pid`` is a :class:`ProxyIdentification` or directly the impact vector in the
    shock basis.  Returns an (H+1) x n_vars array, NaN where the variable has no
    forecast-error variance up to that horizon.
    """
    impact = pid.impact_vector if isinstance(pid, ProxyIdentification) else np.asarray(pid, dtype=float)
    H = ma.horizon if H is None else H
    B = ma.ma[: H + 1]
    num = np.cumsum((B @ impact) ** 2, axis=0)
    den = np.cumsum(np.einsum("hij,jk,hik->hi", B, ma.shock_cov, B), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return share


@dataclass(frozen=True)
class InvertibilityResult:
    F: float
    pvalue: float
    reject: bool
    leads: int
    n_obs: int


def invertibility_test(z: InstrumentSeries, resid, K: int = 8, level: float = 0.05,
                       u_index=None) -> InvertibilityResult:
    """F-test that the instrument does not load on leads 1..K of the Wold residuals.

    Regression of ``z_t`` on ``(v_t, v_{t+1}, ..., v_{t+K})`` without a constant;
    the current-value block is unrestricted.
    """
    v = np.asarray(resid, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    v = _nondegenerate(v)
    n, k = v.shape
    u_index = np.arange(n) if u_index is None else np.asarray(u_index)
    pos = {key: i for i, key in enumerate(u_index.tolist())}
    rows, zs = [], []
    for zi, key in zip(z.values, z.index.tolist()):
        i = pos.get(key)
        if i is None or i + K >= n:
            continue
        rows.append(v[i:i + K + 1].reshape(-1))
        zs.append(zi)
    n_obs, n_reg = len(zs), (K + 1) * k
    if n_obs < n_reg + 10:
        raise OverlapError(f"{n_obs} usable periods for {n_reg} regressors")
    X = np.asarray(rows)
    y = np.asarray(zs)
    rss_u = _rss(X, y)
    rss_r = _rss(X[:, :k], y)
    df1, df2 = K * k, n_obs - n_reg
    F = ((rss_r - rss_u) / df1) / (rss_u / df2)
    pval = float(stats.f.sf(F, df1, df2))
    return InvertibilityResult(float(F), pval, pval < level, K, n_obs)


def _nondegenerate(v, tol=1e-10):
    """Rotate residuals onto the directions with non-negligible variance.

    An exactly predictable variable leaves an identically zero residual, which
    would make the lead regressors singular.  The F statistic is invariant to
    invertible transforms of the regressors, so nothing else changes.
    """
    vals, vecs = np.linalg.eigh(v.T @ v)
    keep = vals > tol * vals.max()
    if keep.all():
        return v
    logger.info("dropping %d degenerate residual direction(s)", int((~keep).sum()))
    return v @ vecs[:, keep]


def _rss(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ beta
    return float(e @ e)


def irf_to_long_csv(path, irf, var_names=None, bands=None) -> None:
    """Write ``horizon, variable, value[, lower68, upper68, lower95, upper95]``.

    ``bands`` maps a level (0.68, 0.95) to a (lower, upper) pair of arrays shaped
    like ``irf``.
    """
    irf = np.asarray(irf, dtype=float)
    H1, n = irf.shape
    var_names = var_names or [f"y{i}" for i in range(n)]
    levels = sorted(bands) if bands else []
    header = ["horizon", "variable", "value"]
    for lv in levels:
        tag = int(round(lv * 100))
        header += [f"lower{tag}", f"upper{tag}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for h in range(H1):
            for i in range(n):
                row = [h, var_names[i], repr(float(irf[h, i]))]
                for lv in levels:
                    lo, hi = bands[lv]
                    row += [repr(float(lo[h, i])), repr(float(hi[h, i]))]
                w.writerow(row)


def load_instrument_csv(path) -> InstrumentSeries:
    """Two-column CSV (date, value); blank values are skipped."""
    from .panel import _parse_date
    from .errors import ParseError

    dates, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for line, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ParseError(f"{path}:{line}: expected date,value")
            d = _parse_date(row[0])
            if d is None:
                raise ParseError(f"{path}:{line}: unparseable date {row[0]!r}")
            text = row[1].strip()
            if text == "" or text.lower() in ("nan", "na"):
                continue
            try:
                vals.append(float(text))
            except ValueError:
                raise ParseError(f"{path}:{line}: cannot parse {text!r}") from None
            dates.append(d)
    return InstrumentSeries(np.array(vals), np.array(dates, dtype="datetime64[D]"))


def save_instrument_csv(z: InstrumentSeries, path) -> None:
    """Write ``date,value`` in the layout :func:`load_instrument_csv` reads."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "instrument"])
        for d, v in zip(z.index, z.values):
            w.writerow([str(d), repr(float(v))])
