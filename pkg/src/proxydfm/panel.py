"""Balanced time-series panels, per-variable transforms and FRED-MD style CSV I/O.

A panel is an immutable T x N block of finite observations.  FRED-MD files carry a
second header row of numeric transformation codes; those are captured on load but
never applied automatically.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import BalancedPanelError, DomainError, ParseError, StateError

logger = logging.getLogger(__name__)

TRANSFORM_CODES = ("level", "log", "diff", "log-diff", "standardize", "detrend-linear")

# FRED-MD numeric codes that have a direct equivalent here; 3, 6 and 7 (second
# differences and growth-rate differences) are recorded but cannot be applied.
FRED_CODE_MAP = {1: "level", 2: "diff", 4: "log", 5: "log-diff"}


@dataclass(frozen=True)
class TimeSeriesPanel:
    values: np.ndarray
    names: tuple
    dates: Optional[np.ndarray] = None
    freq: str = "abstract"
    tcodes: Optional[tuple] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DomainError(f"panel values must be 2-D, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        names = tuple(str(n) for n in self.names)
        object.__setattr__(self, "names", names)
        T, N = values.shape
        if T < 2 or N < 1:
            raise DomainError(f"panel needs T >= 2 and N >= 1, got T={T}, N={N}")
        if len(names) != N:
            raise DomainError(f"{len(names)} names for {N} columns")
        if len(set(names)) != N:
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DomainError(f"duplicate variable names: {dupes}")
        bad = ~np.isfinite(values)
        if bad.any():
            t, i = np.argwhere(bad)[0]
            raise BalancedPanelError(
                f"missing or non-finite value for {names[i]!r} at {self._label(t)}"
            )
        if self.dates is not None:
            dates = np.asarray(self.dates, dtype="datetime64[D]").copy()
            if dates.shape != (T,):
                raise DomainError(f"expected {T} dates, got {dates.shape}")
            if T > 1 and not np.all(dates[1:] > dates[:-1]):
                raise DomainError("dates must be strictly increasing")
            dates.setflags(write=False)
            object.__setattr__(self, "dates", dates)
        if self.freq not in ("monthly", "abstract"):
            raise DomainError(f"unknown frequency {self.freq!r}")
        if self.tcodes is not None:
            tcodes = tuple(int(c) for c in self.tcodes)
            if len(tcodes) != N:
                raise DomainError(f"{len(tcodes)} transform codes for {N} columns")
            object.__setattr__(self, "tcodes", tcodes)

    def _label(self, t):
        if self.dates is not None:
            return str(np.asarray(self.dates, dtype="datetime64[D]")[t])
        return f"row {t}"

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no variable named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def select(self, names: Sequence[str]) -> "TimeSeriesPanel":
        idx = [self.index_of(n) for n in names]
        tcodes = None if self.tcodes is None else tuple(self.tcodes[i] for i in idx)
        return replace(self, values=self.values[:, idx], names=tuple(names), tcodes=tcodes)

    def rows(self, sl: slice) -> "TimeSeriesPanel":
        dates = None if self.dates is None else self.dates[sl]
        return replace(self, values=self.values[sl], dates=dates)


@dataclass(frozen=True)
class TransformSpec:
    """Per-variable transform codes plus whatever was fitted when they were applied.

    ``params`` is empty until :func:`fit_transforms` (or :func:`transform_panel`)
    fills it; inversion needs it.
    """

    codes: Mapping[str, str]
    params: Mapping[str, dict] = field(default_factory=dict)
    initial: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        for name, code in self.codes.items():
            if code not in TRANSFORM_CODES:
                raise DomainError(f"unknown transform {code!r} for {name!r}")
        for name, prm in self.params.items():
            if "sd" in prm and not prm["sd"] > 0:
                raise DomainError(f"standard deviation for {name!r} must be positive")

    @classmethod
    def uniform(cls, names, code):
        return cls({n: code for n in names})

    @classmethod
    def from_fred_codes(cls, names, tcodes, strict=True):
        codes = {}
        for name, c in zip(names, tcodes):
            if c in FRED_CODE_MAP:
                codes[name] = FRED_CODE_MAP[c]
            elif strict:
                raise DomainError(f"FRED transform code {c} for {name!r} has no equivalent")
            else:
                codes[name] = "level"
        return cls(codes)

    @property
    def fitted(self) -> bool:
        return bool(self.params) or not self._needs_params()

    def _needs_params(self):
        return any(c in ("standardize", "detrend-linear") for c in self.codes.values())

    def code(self, name):
        return self.codes.get(name, "level")


def _differences(p: TimeSeriesPanel, codes) -> bool:
    return any(codes.get(n, "level") in ("diff", "log-diff") for n in p.names)


def fit_transforms(p: TimeSeriesPanel, t: TransformSpec) -> TransformSpec:
    """Fill in the estimated parameters (means, sds, trend coefficients, initial row)."""
    params = {}
    for i, name in enumerate(p.names):
        code = t.code(name)
        x = p.values[:, i]
        if code in ("log", "log-diff") and np.any(x <= 0):
            raise DomainError(f"log transform of nonpositive values in {name!r}")
        if code == "standardize":
            sd = x.std(ddof=1)
            if not sd > 0:
                raise DomainError(f"cannot standardize constant series {name!r}")
            params[name] = {"mean": float(x.mean()), "sd": float(sd)}
        elif code == "detrend-linear":
            a, b = linear_trend(x)
            params[name] = {"const": float(a), "slope": float(b)}
    initial = None
    if _differences(p, t.codes):
        initial = {n: float(v) for n, v in zip(p.names, p.values[0])}
    return TransformSpec(dict(t.codes), params, initial)


def linear_trend(x: np.ndarray):
    """OLS of ``x`` on (1, t), t = 0..T-1; returns (const, slope)."""
    x = np.asarray(x, dtype=float)
    tt = np.arange(x.shape[0], dtype=float)
    X = np.column_stack([np.ones_like(tt), tt])
    coef, *_ = np.linalg.lstsq(X, x, rcond=None)
    return coef[0], coef[1]


def transform_panel(p: TimeSeriesPanel, t: TransformSpec):
    """Apply ``t`` and return ``(panel, fitted_spec)``; the fitted spec inverts it."""
    fitted = fit_transforms(p, t)
    out = []
    drop_first = _differences(p, t.codes)
    tt = np.arange(p.T, dtype=float)
    for i, name in enumerate(p.names):
        code = fitted.code(name)
        x = p.values[:, i]
        if code == "level":
            y = x
        elif code == "log":
            y = np.log(x)
        elif code == "diff":
            y = np.diff(x)
        elif code == "log-diff":
            y = np.diff(np.log(x))
        elif code == "standardize":
            prm = fitted.params[name]
            y = (x - prm["mean"]) / prm["sd"]
        else:
            prm = fitted.params[name]
            y = x - prm["const"] - prm["slope"] * tt
        if drop_first and code not in ("diff", "log-diff"):
            y = y[1:]
        out.append(y)
    dates = p.dates[1:] if (drop_first and p.dates is not None) else p.dates
    panel = TimeSeriesPanel(np.column_stack(out), p.names, dates, p.freq, p.tcodes)
    return panel, fitted


def apply_transforms(p: TimeSeriesPanel, t: TransformSpec) -> TimeSeriesPanel:
    return transform_panel(p, t)[0]


def invert_transforms(p: TimeSeriesPanel, t: TransformSpec, first_date=None) -> TimeSeriesPanel:
    """Undo :func:`transform_panel` given its fitted spec.

    Differenced panels regain their first row from ``t.initial``; ``first_date``
    restores the dropped date stamp when the panel is dated.
    """
    if t._needs_params() and not t.params:
        raise StateError("transform parameters were never fitted")
    differenced = _differences(p, t.codes)
    if differenced and t.initial is None:
        raise StateError("differenced panel needs an initial condition to invert")
    out = []
    T = p.T + 1 if differenced else p.T
    tt = np.arange(T, dtype=float)
    for i, name in enumerate(p.names):
        code = t.code(name)
        y = p.values[:, i]
        if differenced:
            if name not in t.initial:
                raise StateError(f"no initial value stored for {name!r}")
            x0 = t.initial[name]
        if code == "diff":
            x = x0 + np.concatenate([[0.0], np.cumsum(y)])
        elif code == "log-diff":
            x = np.exp(np.log(x0) + np.concatenate([[0.0], np.cumsum(y)]))
        else:
            if code == "level":
                x = y
            elif code == "log":
                x = np.exp(y)
            elif code == "standardize":
                prm = _param(t, name)
                x = y * prm["sd"] + prm["mean"]
            else:
                prm = _param(t, name)
                x = y + prm["const"] + prm["slope"] * (tt[1:] if differenced else tt)
            if differenced:
                x = np.concatenate([[x0], x])
        out.append(x)
    dates = p.dates
    if differenced and dates is not None:
        if first_date is None:
            dates = None
        else:
            dates = np.concatenate([[np.datetime64(first_date, "D")], dates])
    return TimeSeriesPanel(np.column_stack(out), p.names, dates, p.freq if dates is not None else "abstract", p.tcodes)


def _param(t, name):
    try:
        return t.params[name]
    except KeyError:
        raise StateError(f"no fitted parameters for {name!r}") from None


def standardize(x: np.ndarray):
    """Column-wise (x - mean) / sd with the T-1 divisor; returns (z, mean, sd)."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    return (x - mean) / sd, mean, sd


# --------------------------------------------------------------------------- CSV

def _parse_date(text: str):
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%Y-%m", "%m/%d/%Y", "%Y/%m/%d"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    return None


def _is_code_row(row) -> bool:
    cells = [c.strip() for c in row[1:]]
    if not cells or _parse_date(row[0]) is not None:
        return False
    try:
        return all(c == "" or float(c).is_integer() for c in cells)
    except ValueError:
        return False


def load_csv(path, date_column: Optional[str] = None) -> TimeSeriesPanel:
    """Read a rectangular CSV into a balanced panel.

    The date column defaults to the first column.  Rows at either end with any
    missing cell are trimmed, fully empty columns are dropped, and a gap that
    survives the trimming raises :class:`BalancedPanelError`.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if date_column is None:
        dcol = 0
    else:
        if date_column not in header:
            raise ParseError(f"{path}: no column named {date_column!r}")
        dcol = header.index(date_column)
    vcols = [j for j in range(len(header)) if j != dcol]
    names = [header[j] for j in vcols]

    body = rows[1:]
    tcodes = None
    first_line = 2
    if body and _is_code_row([body[0][dcol]] + [body[0][j] for j in vcols if j < len(body[0])]):
        tcodes = [int(float(body[0][j])) if j < len(body[0]) and body[0][j].strip() else 1 for j in vcols]
        body = body[1:]
        first_line = 3

    values = np.full((len(body), len(vcols)), np.nan)
    dates = []
    for r, row in enumerate(body):
        line = first_line + r
        if len(row) > len(header):
            raise ParseError(f"{path}:{line}: {len(row)} cells but {len(header)} header fields")
        cell = row[dcol] if dcol < len(row) else ""
        d = _parse_date(cell)
        if d is None:
            raise ParseError(f"{path}:{line}: unparseable date {cell!r}")
        dates.append(d)
        for c, j in enumerate(vcols):
            text = row[j].strip() if j < len(row) else ""
            if text == "" or text.lower() in ("nan", "na"):
                continue
            try:
                values[r, c] = float(text)
            except ValueError:
                raise ParseError(f"{path}:{line}: column {names[c]!r}: cannot parse {text!r}") from None

    empty_cols = np.isnan(values).all(axis=0)
    if empty_cols.any():
        logger.info("dropping empty columns: %s", [n for n, e in zip(names, empty_cols) if e])
        keep = ~empty_cols
        values = values[:, keep]
        names = [n for n, k in zip(names, keep) if k]
        if tcodes is not None:
            tcodes = [c for c, k in zip(tcodes, keep) if k]
    complete = ~np.isnan(values).any(axis=1)
    if not complete.any():
        raise BalancedPanelError(f"{path}: no row without missing values")
    first = int(np.argmax(complete))
    last = len(complete) - int(np.argmax(complete[::-1]))
    if first or last < len(complete):
        logger.info("trimmed %d leading and %d trailing rows", first, len(complete) - last)
    values = values[first:last]
    dates = dates[first:last]
    gaps = np.argwhere(np.isnan(values))
    if gaps.size:
        t, i = gaps[0]
        raise BalancedPanelError(f"{path}: interior missing value for {names[i]!r} at {dates[t]}")
    freq = "monthly" if _looks_monthly(dates) else "abstract"
    return TimeSeriesPanel(values, tuple(names), np.array(dates, dtype="datetime64[D]"), freq, tcodes)


def _looks_monthly(dates) -> bool:
    if len(dates) < 2:
        return False
    months = [d.year * 12 + d.month for d in dates]
    return all(b - a == 1 for a, b in zip(months, months[1:]))


def save_csv(p: TimeSeriesPanel, path, date_header: str = "date") -> None:
    """Write the panel in the layout :func:`load_csv` reads (17 significant digits)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([date_header, *p.names])
        if p.tcodes is not None:
            w.writerow(["transform", *p.tcodes])
        if p.dates is not None:
            labels = [str(d) for d in p.dates]
        else:
            base = np.datetime64("1900-01-01", "D")
            labels = [str(base + i) for i in range(p.T)]
        for label, row in zip(labels, p.values):
            w.writerow([label, *(repr(float(v)) for v in row)])
