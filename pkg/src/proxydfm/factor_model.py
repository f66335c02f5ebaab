"""Principal-component estimation of static factors and loadings.

Two procedures share one eigen-step:

* stationary: standardize the panel, take the top-r eigenvectors of its sample
  correlation matrix, factors are the cross-sectional projections on the loadings;
* nonstationary (levels): loadings from the standardized first differences, then a
  per-variable linear trend is removed from the levels and the detrended levels are
  projected on those loadings to give I(1) factors.

Normalization: ``F'F/T = I_r`` on the estimation sample and ``Lambda`` carries the
scale (eigenvectors times the square root of the matching eigenvalue of X'X/T).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DegenerateSeriesError, DimensionError
from .panel import TimeSeriesPanel, linear_trend, standardize


@dataclass(frozen=True)
class FactorModelFit:
    loadings: np.ndarray          # N x r, standardized units
    factors: np.ndarray           # T x r
    r: int
    q: int
    trend_const: np.ndarray       # N, zero in stationary mode
    trend_slope: np.ndarray       # N, zero in stationary mode
    mode: str
    scale_mean: np.ndarray        # N
    scale_sd: np.ndarray          # N
    eigenvalues: np.ndarray       # all N eigenvalues of the correlation matrix, descending
    names: tuple = ()

    @property
    def N(self):
        return self.loadings.shape[0]

    def common_component(self, original_units: bool = False) -> np.ndarray:
        chi = self.factors @ self.loadings.T
        if original_units:
            chi = chi * self.scale_sd
        return chi

    def fitted(self) -> np.ndarray:
        """Common component mapped back to the data's units, trend/mean included."""
        tt = np.arange(self.factors.shape[0], dtype=float)[:, None]
        base = self.trend_const + self.trend_slope * tt if self.mode == "nonstationary" else self.scale_mean
        return base + self.common_component(original_units=True)

    def scaled(self, x: np.ndarray) -> np.ndarray:
        """Map raw data into the units the loadings live in (detrended, divided by sd)."""
        x = np.asarray(x, dtype=float)
        if self.mode == "nonstationary":
            tt = np.arange(x.shape[0], dtype=float)[:, None]
            return (x - self.trend_const - self.trend_slope * tt) / self.scale_sd
        return (x - self.scale_mean) / self.scale_sd

    def idiosyncratic(self, x: np.ndarray) -> np.ndarray:
        """Residual ``x - chi`` in standardized units."""
        return self.scaled(x) - self.common_component()

    def with_q(self, q: int) -> "FactorModelFit":
        if not 1 <= q <= self.r:
            raise DimensionError(f"need 1 <= q <= r={self.r}, got q={q}")
        return _replace(self, q=int(q))


def _replace(fit, **kw):
    from dataclasses import replace
    return replace(fit, **kw)


def _values(p) -> tuple:
    if isinstance(p, TimeSeriesPanel):
        return p.values, p.names
    x = np.asarray(p, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"expected a T x N matrix, got shape {x.shape}")
    return x, tuple(f"x{i}" for i in range(x.shape[1]))


def sign_normalize(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive (first on ties)."""
    vecs = np.array(vecs, dtype=float, copy=True)
    if vecs.ndim == 1:
        return sign_normalize(vecs[:, None])[:, 0]
    for j in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def sorted_eigh(sym: np.ndarray):
    """Eigenpairs of a symmetric matrix, descending, sign-normalized.

    Ties in eigenvalue keep the original (ascending-index) order of ``eigh``'s output.
    """
    sym = 0.5 * (sym + sym.T)
    vals, vecs = np.linalg.eigh(sym)
    order = np.lexsort((np.arange(vals.size), -vals))
    return vals[order], sign_normalize(vecs[:, order])


def _check_r(r, T, N):
    if r < 1 or r >= min(T, N):
        raise DimensionError(f"need 1 <= r < min(T, N) = {min(T, N)}, got r={r}")


def principal_components(z: np.ndarray, r: int):
    """PCs of an already standardized T x N matrix.

    Returns ``(loadings, factors, eigenvalues)`` where the eigenvalues are those of
    the correlation matrix ``z'z/(T-1)``.
    """
    T, N = z.shape
    _check_r(r, T, N)
    corr = z.T @ z / (T - 1)
    vals, vecs = sorted_eigh(corr)
    scale = np.sqrt(np.maximum(vals[:r], 0.0) * (T - 1) / T)
    loadings = vecs[:, :r] * scale
    factors = project_on_loadings(z, loadings)
    return loadings, factors, vals


def project_on_loadings(z: np.ndarray, loadings: np.ndarray) -> np.ndarray:
    """Cross-sectional OLS of each row of ``z`` on the loadings."""
    gram = loadings.T @ loadings
    return np.linalg.solve(gram, loadings.T @ z.T).T


def _default_q(q, r):
    q = r if q is None else int(q)
    if not 1 <= q <= r:
        raise DimensionError(f"need 1 <= q <= r={r}, got q={q}")
    return q


def estimate_static_factors(p, r: int, q: Optional[int] = None) -> FactorModelFit:
    x, names = _values(p)
    T, N = x.shape
    _check_r(r, T, N)
    z, mean, sd = standardize(x)
    if np.any(sd <= 0):
        raise DegenerateSeriesError(f"constant series: {[n for n, s in zip(names, sd) if s <= 0]}")
    loadings, factors, vals = principal_components(z, r)
    zeros = np.zeros(N)
    return FactorModelFit(loadings, factors, r, _default_q(q, r), zeros, zeros.copy(),
                          "stationary", mean, sd, vals, names)


def estimate_nonstationary(p, r: int, q: Optional[int] = None) -> FactorModelFit:
    x, names = _values(p)
    T, N = x.shape
    if T < r + 2:
        raise DimensionError(f"need T >= r + 2, got T={T}, r={r}")
    dx = np.diff(x, axis=0)
    sd = dx.std(axis=0, ddof=1)
    scale = np.abs(dx).max(axis=0) + np.abs(x).max(axis=0)
    flat = sd <= 1e-12 * np.maximum(scale, 1.0)
    if flat.any():
        raise DegenerateSeriesError(
            f"series constant after differencing: {[n for n, f in zip(names, flat) if f]}"
        )
    zd = (dx - dx.mean(axis=0)) / sd
    loadings, _, vals = principal_components(zd, r)

    const = np.empty(N)
    slope = np.empty(N)
    for i in range(N):
        const[i], slope[i] = linear_trend(x[:, i])
    tt = np.arange(T, dtype=float)[:, None]
    detrended = (x - const - slope * tt) / sd
    factors = project_on_loadings(detrended, loadings)
    return FactorModelFit(loadings, factors, r, _default_q(q, r), const, slope,
                          "nonstationary", np.zeros(N), sd, vals, names)


def bai_ng_ic(p, r_max: int) -> int:
    """Number of static factors minimizing the ICp2 criterion over 1..r_max."""
    if r_max < 1:
        raise DimensionError(f"r_max must be >= 1, got {r_max}")
    x, _ = _values(p)
    T, N = x.shape
    _check_r(r_max, T, N)
    z, _, sd = standardize(x)
    corr = z.T @ z / (T - 1)
    vals, vecs = sorted_eigh(corr)
    total = np.mean(z ** 2)
    # residual variance below machine resolution is treated as exactly zero
    floor = 1e-12 * total
    penalty = (N + T) / (N * T) * np.log(min(N, T))
    best, best_ic = 1, np.inf
    for k in range(1, r_max + 1):
        v = vecs[:, :k]
        resid = z - z @ v @ v.T
        vr = max(np.mean(resid ** 2), floor)
        ic = np.log(vr) + k * penalty
        if ic < best_ic - 1e-12:
            best, best_ic = k, ic
    return best


def suggest_dynamic_factors(resid_cov: np.ndarray, threshold: float = 0.95) -> int:
    """Smallest q whose leading eigenvalues explain ``threshold`` of VAR-residual variance.

    A convenience heuristic only; it is never applied automatically.
    """
    vals = np.clip(np.linalg.eigvalsh(resid_cov)[::-1], 0.0, None)
    share = np.cumsum(vals) / vals.sum()
    return int(np.searchsorted(share, threshold - 1e-12) + 1)


def canonical_correlations(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Canonical correlations between the column spaces of two T x k matrices."""
    qa, _ = np.linalg.qr(a - a.mean(axis=0))
    qb, _ = np.linalg.qr(b - b.mean(axis=0))
    return np.clip(np.linalg.svd(qa.T @ qb, compute_uv=False), 0.0, 1.0)


# ---------------------------------------------------------------- persistence

def save_fit(fit: FactorModelFit, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = list(fit.names) or [f"x{i}" for i in range(fit.N)]
    cols = [f"f{j + 1}" for j in range(fit.r)]
    _write_matrix(d / "loadings.csv", ["variable", *cols], names, fit.loadings)
    _write_matrix(d / "factors.csv", ["t", *cols], [str(t) for t in range(fit.factors.shape[0])], fit.factors)
    trend = np.column_stack([fit.trend_const, fit.trend_slope, fit.scale_mean, fit.scale_sd])
    _write_matrix(d / "trend.csv", ["variable", "const", "slope", "mean", "sd"], names, trend)
    np.savetxt(d / "eigenvalues.csv", fit.eigenvalues, fmt="%.17g")
    (d / "meta.json").write_text(json.dumps({"r": fit.r, "q": fit.q, "mode": fit.mode}, indent=2))


def load_fit(directory) -> FactorModelFit:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    names, loadings = _read_matrix(d / "loadings.csv")
    _, factors = _read_matrix(d / "factors.csv")
    _, trend = _read_matrix(d / "trend.csv")
    vals = np.atleast_1d(np.loadtxt(d / "eigenvalues.csv"))
    return FactorModelFit(loadings, factors, meta["r"], meta["q"], trend[:, 0], trend[:, 1],
                          meta["mode"], trend[:, 2], trend[:, 3], vals, tuple(names))


def _write_matrix(path, header, labels, mat):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for label, row in zip(labels, np.atleast_2d(mat)):
            fh.write(",".join([label, *(repr(float(v)) for v in row)]) + "\n")


def _read_matrix(path):
    with open(path) as fh:
        lines = fh.read().strip().splitlines()[1:]
    labels = [ln.split(",", 1)[0] for ln in lines]
    mat = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines])
    return labels, mat
