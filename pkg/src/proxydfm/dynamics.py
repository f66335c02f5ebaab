"""Reduced-form dynamics: VAR estimation, Wold MA coefficients and rank reduction.

For a DFM the factor VAR innovations are singular; :func:`reduce_rank` keeps the
top-q principal directions of their covariance so the MA maps q orthonormal shocks
to the factors, and :func:`observable_ma` maps that onto the panel variables.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimensionError, RankDeficiencyError, RankError
from .factor_model import FactorModelFit, principal_components, sorted_eigh
from .panel import TimeSeriesPanel, standardize

logger = logging.getLogger(__name__)

EXPLOSIVE_WARN = 1.02


@dataclass(frozen=True)
class VarFit:
    coeffs: np.ndarray       # p x k x k, coeffs[j] multiplies y_{t-j-1}
    intercept: np.ndarray    # k (zeros when fitted without one)
    residuals: np.ndarray    # (T-p) x k
    resid_cov: np.ndarray    # k x k, divisor T-p
    k: int
    p: int
    endog: np.ndarray        # the T x k data the VAR was fitted on
    has_intercept: bool = True

    def companion(self) -> np.ndarray:
        return companion_matrix(self.coeffs)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))

    def simulate(self, shocks: np.ndarray, presample: Optional[np.ndarray] = None) -> np.ndarray:
        """Run the fitted recursion forward from ``presample`` (default: first p rows of endog).

        ``shocks`` has one row per period after the presample; the result has
        ``p + len(shocks)`` rows.
        """
        p, k = self.p, self.k
        init = self.endog[:p] if presample is None else np.asarray(presample, dtype=float)
        n = shocks.shape[0]
        y = np.empty((p + n, k))
        y[:p] = init
        # lags stacked most recent first, matching coeffs ordering
        big = np.concatenate(list(self.coeffs), axis=1) if p else np.zeros((k, 0))
        for t in range(p, p + n):
            lagged = y[t - p:t][::-1].reshape(-1)
            y[t] = self.intercept + big @ lagged + shocks[t - p]
        return y


@dataclass(frozen=True)
class WoldRepresentation:
    ma: np.ndarray                       # (H+1) x n_vars x n_shocks
    shock_cov: np.ndarray                # n_shocks x n_shocks
    reduction: np.ndarray                # k x q matrix R, identity when not reduced
    horizon: int
    shocks: Optional[np.ndarray] = None  # innovations in the shock basis, n_obs x n_shocks

    @property
    def n_shocks(self):
        return self.ma.shape[2]


def companion_matrix(coeffs) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    p, k, _ = coeffs.shape
    top = np.concatenate(list(coeffs), axis=1)
    if p == 1:
        return top
    lower = np.eye(k * (p - 1), k * p)
    return np.vstack([top, lower])


def lag_matrix(y: np.ndarray, p: int, intercept: bool = True) -> np.ndarray:
    """Regressors ``[1, y_{t-1}, ..., y_{t-p}]`` for t = p..T-1."""
    T = y.shape[0]
    blocks = [y[p - j - 1:T - j - 1] for j in range(p)]
    if intercept:
        blocks.insert(0, np.ones((T - p, 1)))
    return np.hstack(blocks) if blocks else np.zeros((T - p, 0))


def _regressor_names(k, p, intercept, names=None):
    names = names or [f"y{i}" for i in range(k)]
    out = ["const"] if intercept else []
    for j in range(1, p + 1):
        out += [f"{n}(t-{j})" for n in names]
    return out


def _dependent_columns(X: np.ndarray, tol: float = 1e-10):
    """Columns dropped by pivoted QR as linearly dependent on the others."""
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return []
    rank = int(np.sum(diag > tol * diag[0])) if diag[0] > 0 else 0
    return sorted(piv[rank:].tolist())


def fit_var(y, p: int, intercept: bool = True, names=None) -> VarFit:
    """Equation-by-equation OLS VAR(p); residual covariance uses the T-p divisor."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    T, k = y.shape
    if p < 1:
        raise DimensionError(f"lag order must be >= 1, got {p}")
    if not T - p > k * p + 1:
        raise DimensionError(f"too few observations: T={T} for a VAR({p}) in {k} variables")
    X = lag_matrix(y, p, intercept)
    Y = y[p:]
    scale = np.sqrt(np.sum(X ** 2, axis=0))
    scale[scale == 0] = 1.0
    bad = _dependent_columns(X / scale)
    if bad:
        labels = _regressor_names(k, p, intercept, names)
        cols = [labels[i] for i in bad]
        raise RankError(f"collinear regressors: {', '.join(cols)}", cols)
    beta, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ beta
    off = 1 if intercept else 0
    const = beta[0] if intercept else np.zeros(k)
    coeffs = np.stack([beta[off + j * k: off + (j + 1) * k].T for j in range(p)])
    cov = resid.T @ resid / (T - p)
    fit = VarFit(coeffs, const, resid, 0.5 * (cov + cov.T), k, p, y, intercept)
    rho = fit.spectral_radius()
    if rho > EXPLOSIVE_WARN:
        warnings.warn(f"VAR companion spectral radius {rho:.3f} exceeds {EXPLOSIVE_WARN}", RuntimeWarning)
    return fit


def ma_coefficients(coeffs, H: int) -> np.ndarray:
    """Psi_0 = I, Psi_h = sum_{j=1..min(h,p)} D_j Psi_{h-j}."""
    coeffs = np.asarray(coeffs, dtype=float)
    p, k, _ = coeffs.shape
    psi = np.zeros((H + 1, k, k))
    psi[0] = np.eye(k)
    for h in range(1, H + 1):
        for j in range(1, min(h, p) + 1):
            psi[h] += coeffs[j - 1] @ psi[h - j]
    return psi


def wold(fit: VarFit, H: int) -> WoldRepresentation:
    return WoldRepresentation(ma_coefficients(fit.coeffs, H), fit.resid_cov.copy(),
                              np.eye(fit.k), H, fit.residuals)


def reduce_rank(fit: VarFit, q: int, H: int = 20) -> WoldRepresentation:
    """Rank-q reduction ``eps_t = R u_t`` from the eigendecomposition of the residual covariance."""
    if not 1 <= q <= fit.k:
        raise DimensionError(f"need 1 <= q <= k={fit.k}, got q={q}")
    vals, vecs = sorted_eigh(fit.resid_cov)
    if vals[q - 1] <= 1e-12:
        raise RankDeficiencyError(f"eigenvalue {q} of the residual covariance is {vals[q - 1]:.3g}")
    w, m = vecs[:, :q], vals[:q]
    R = w * np.sqrt(m)
    shocks = fit.residuals @ w / np.sqrt(m)
    ma = ma_coefficients(fit.coeffs, H) @ R
    return WoldRepresentation(ma, np.eye(q), R, H, shocks)


def observable_ma(fm: FactorModelFit, w: WoldRepresentation, rows=None,
                  original_units: bool = True) -> WoldRepresentation:
    """``B_chi(L) = Lambda B_F(L)``, by default rescaled to the variables' own units."""
    lam = np.asarray(fm.loadings)
    if lam.shape[1] != w.ma.shape[1]:
        raise DimensionError(f"loadings have {lam.shape[1]} factors, MA has {w.ma.shape[1]} rows")
    scale = np.asarray(fm.scale_sd) if original_units else np.ones(lam.shape[0])
    if rows is not None:
        rows = [fm.names.index(r) if isinstance(r, str) else int(r) for r in rows]
        lam, scale = lam[rows], scale[rows]
    ma = np.einsum("ir,hrq->hiq", lam * scale[:, None], w.ma)
    return WoldRepresentation(ma, w.shock_cov, w.reduction, w.horizon, w.shocks)


def assemble_favar(observables, p_panel, n_extra: int) -> np.ndarray:
    """Stack observables with ``n_extra`` panel PCs purged of the observables.

    The PCs are orthogonalized by OLS projection on ``[1, observables]``.
    """
    obs = np.asarray(observables, dtype=float)
    if obs.ndim == 1:
        obs = obs[:, None]
    if n_extra == 0:
        return obs.copy()
    x = p_panel.values if isinstance(p_panel, TimeSeriesPanel) else np.asarray(p_panel, dtype=float)
    if x.shape[0] != obs.shape[0]:
        raise DimensionError(f"observables have {obs.shape[0]} rows, panel has {x.shape[0]}")
    z, _, _ = standardize(x)
    _, factors, _ = principal_components(z, n_extra)
    X = np.column_stack([np.ones(obs.shape[0]), obs])
    beta, *_ = np.linalg.lstsq(X, factors, rcond=None)
    return np.column_stack([obs, factors - X @ beta])


def ma_to_long_csv(ma: np.ndarray, path, var_names=None, shock_names=None) -> None:
    H1, n, m = ma.shape
    var_names = var_names or [f"y{i}" for i in range(n)]
    shock_names = shock_names or [f"u{j}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "variable", "shock", "value"])
        for h in range(H1):
            for i in range(n):
                for j in range(m):
                    w.writerow([h, var_names[i], shock_names[j], repr(float(ma[h, i, j]))])


def ma_from_long_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    hs = sorted({int(r["horizon"]) for r in rows})
    vs = list(dict.fromkeys(r["variable"] for r in rows))
    ss = list(dict.fromkeys(r["shock"] for r in rows))
    ma = np.zeros((len(hs), len(vs), len(ss)))
    for r in rows:
        ma[int(r["horizon"]), vs.index(r["variable"]), ss.index(r["shock"])] = float(r["value"])
    return ma, vs, ss
