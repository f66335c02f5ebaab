"""Fiscal-foresight RBC economy, its static-factor representation and proxy generators.

With foresight horizon h the tax shock is announced h periods before it moves the
tax rate, so capital reacts to it before the econometrician sees the tax rate.  The
five static factors ``F_t = (k_t, u_a_t, u_tau_t, u_tau_{t-1}, u_tau_{t-2})`` follow a
VAR(1) driven by the two shocks, and every observed series loads on them.

Random numbers come from per-(seed, replication) substreams so any replication can
be regenerated on its own.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ParamError
from .proxy_ident import InstrumentSeries

INSTRUMENT_KINDS = ("perfect", "I1", "I2", "I3", "I4")
OBS_NAMES = ("tau", "k", "a")
SHOCK_NAMES = ("u_a", "u_tau")


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; order of use elsewhere is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


@dataclass(frozen=True)
class LeeperParams:
    alpha: float = 0.36
    theta: float = 0.2673
    tau_ss: float = 0.25
    h: int = 2
    n_extra: int = 100
    nu: float = 0.0
    T: int = 200
    seed: int = 0
    burn_in: int = 200

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ParamError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not abs(self.theta) < 1:
            raise ParamError(f"|theta| must be < 1, got {self.theta}")
        if not 0 < self.tau_ss < 1:
            raise ParamError(f"tau_ss must lie in (0, 1), got {self.tau_ss}")
        if self.h not in (0, 2):
            raise ParamError(f"foresight horizon must be 0 or 2, got {self.h}")
        if self.n_extra < 0 or self.T < 10 or self.burn_in < 0:
            raise ParamError("n_extra >= 0, T >= 10 and burn_in >= 0 required")
        if self.nu < 0:
            raise ParamError(f"nu must be >= 0, got {self.nu}")

    @property
    def kappa(self) -> float:
        return (1 - self.theta) * self.tau_ss / (1 - self.tau_ss)

    def to_dict(self):
        return asdict(self)


def transition(params: LeeperParams):
    """``(A, B)`` of ``F_t = A F_{t-1} + B u_t`` with ``u_t = (u_a, u_tau)``."""
    a, th, kap = params.alpha, params.theta, params.kappa
    A = np.zeros((5, 5))
    A[0, 0] = a
    A[3, 2] = 1.0
    A[4, 3] = 1.0
    B = np.zeros((5, 2))
    B[0, 0] = 1.0
    B[1, 0] = 1.0
    B[2, 1] = 1.0
    if params.h == 2:
        A[0, 2] = -kap
        B[0, 1] = -kap * th
    return A, B


def observation_matrix(params: LeeperParams) -> np.ndarray:
    """Rows mapping F_t to (tau_t, k_t, a_t)."""
    L = np.zeros((3, 5))
    L[0, 2 + params.h] = 1.0
    L[1, 0] = 1.0
    L[2, 1] = 1.0
    return L


@dataclass(frozen=True)
class SimulatedDataset:
    params: LeeperParams
    observables: np.ndarray          # T x 3, columns (tau, k, a), no noise
    survey: np.ndarray               # T x n, no noise
    noisy_panel: np.ndarray          # T x (n+2): noisy (tau, k) then noisy survey
    noisy_observables: np.ndarray    # T x 3, noisy (tau, k, a)
    true_shocks: np.ndarray          # T x 2, columns (u_a, u_tau)
    true_factors: np.ndarray         # T x 5
    loadings: np.ndarray             # (n+2) x 5 for the panel
    noise_sd: np.ndarray             # (n+3,) for panel columns then the a column
    true_irf: np.ndarray             # (H+1) x 3 x 2
    presample: np.ndarray = field(repr=False, default=None)  # (tau, k, a) at t = -1

    @property
    def panel_names(self):
        return ("tau", "k") + tuple(f"s{i + 1}" for i in range(self.survey.shape[1]))

    @property
    def clean_panel(self) -> np.ndarray:
        return np.column_stack([self.observables[:, :2], self.survey])

    @property
    def u_tau(self):
        return self.true_shocks[:, 1]


def simulate(params: LeeperParams, rng: Optional[np.random.Generator] = None, H: int = 20) -> SimulatedDataset:
    rng = substream(params.seed) if rng is None else rng
    T, n, burn = params.T, params.n_extra, params.burn_in
    A, B = transition(params)
    u = rng.standard_normal((burn + T, 2))
    F = np.zeros((burn + T, 5))
    prev = np.zeros(5)
    for t in range(burn + T):
        prev = A @ prev + B @ u[t]
        F[t] = prev
    Lx = observation_matrix(params)
    y_all = F @ Lx.T
    F, u, y, presample = F[burn:], u[burn:], y_all[burn:], (y_all[burn - 1] if burn else np.zeros(3))

    lam_star = rng.standard_normal((n, 5))
    survey = F @ lam_star.T
    loadings = np.vstack([Lx[:2], lam_star])
    clean = np.column_stack([y[:, :2], survey])
    # noise standard deviations, one per panel column plus one for technology
    sd = rng.uniform(0.0, params.nu, size=n + 3) if params.nu > 0 else np.zeros(n + 3)
    noise = rng.standard_normal((T, n + 3)) * sd
    noisy_panel = clean + noise[:, : n + 2]
    noisy_obs = np.column_stack([noisy_panel[:, :2], y[:, 2] + noise[:, n + 2]])
    return SimulatedDataset(params, y, survey, noisy_panel, noisy_obs, u, F, loadings, sd,
                            theoretical_irf(params, H), presample)


def theoretical_irf(params: LeeperParams, H: int = 20) -> np.ndarray:
    """Analytic MA coefficients: rows (a, k, tau), columns (u_tau, u_a).

    Expands ``-kappa (L + theta) / (1 - alpha L)`` and ``1 / (1 - alpha L)`` term by
    term; the tax row is the pure lag ``L^h``.
    """
    a, th, kap, h = params.alpha, params.theta, params.kappa, params.h
    out = np.zeros((H + 1, 3, 2))
    out[0, 0, 1] = 1.0
    powers = a ** np.arange(H + 1)
    out[:, 1, 1] = powers
    if h == 2:
        k_tax = np.zeros(H + 1)
        k_tax[0] = -kap * th
        if H >= 1:
            k_tax[1] = -kap * (1 + a * th)
        for s in range(2, H + 1):
            k_tax[s] = a * k_tax[s - 1]
        out[:, 1, 0] = k_tax
    if h <= H:
        out[h, 2, 0] = 1.0
    return out


def tax_irf(params: LeeperParams, H: int = 20) -> np.ndarray:
    """Analytic responses of (tau, k) to the tax shock, shape (H+1) x 2."""
    full = theoretical_irf(params, H)
    return np.column_stack([full[:, 2, 0], full[:, 1, 0]])


def make_instrument(kind: str, ds: SimulatedDataset, rng: Optional[np.random.Generator] = None,
                    square: bool = True, alpha_tilde: Optional[float] = None,
                    sigma_eps: Optional[float] = None, phi: float = 0.5,
                    lag_weights=(-0.6, 0.4, 0.0)) -> InstrumentSeries:
    """Proxy for the tax shock.

    ``perfect`` is the shock itself; I1..I4 scale it by ``alpha_tilde**2`` (or by
    ``alpha_tilde`` when ``square`` is False) and add, respectively, nothing, white
    measurement noise, ``phi`` times its own lag, or ``lag_weights' y_{t-1}`` with
    ``y = (a, k, tau)``.
    """
    if kind not in INSTRUMENT_KINDS:
        raise ParamError(f"unknown instrument kind {kind!r}; choose from {INSTRUMENT_KINDS}")
    u_tau = ds.u_tau
    if kind == "perfect":
        return InstrumentSeries(u_tau.copy())
    rng = substream(ds.params.seed, 99) if rng is None else rng
    at = rng.standard_normal() if alpha_tilde is None else float(alpha_tilde)
    se = rng.uniform(0.0, 0.5) if sigma_eps is None else float(sigma_eps)
    scale = at ** 2 if square else at
    z = scale * u_tau
    if kind == "I2":
        z = z + se * rng.standard_normal(u_tau.size)
    elif kind == "I3":
        out = np.empty_like(z)
        prev = 0.0
        for t in range(z.size):
            prev = z[t] + phi * prev
            out[t] = prev
        z = out
    elif kind == "I4":
        y = ds.observables[:, [2, 1, 0]]   # (a, k, tau)
        pre = ds.presample[[2, 1, 0]] if ds.presample is not None else np.zeros(3)
        lagged = np.vstack([pre, y[:-1]])
        z = z + lagged @ np.asarray(lag_weights, dtype=float)
    return InstrumentSeries(z)


def with_nu(params: LeeperParams, nu: float) -> LeeperParams:
    return replace(params, nu=nu)


# ------------------------------------------------------------ planted I(1) panel

@dataclass(frozen=True)
class PlantedPanel:
    panel: "TimeSeriesPanel"        # levels with trends, monthly dates, FRED code row
    instrument: InstrumentSeries    # the planted shock itself, dated
    irf: np.ndarray                 # (H+1) x N responses to the planted unit shock
    fevd: np.ndarray                # (H+1) x N share of common-component variance
    loadings: np.ndarray            # N x r
    factors: np.ndarray             # T x r, levels
    shocks: np.ndarray              # T x q


def simulate_planted(N: int = 100, T: int = 600, r: int = 3, q: int = 2, H: int = 48,
                     idio_sd: float = 0.5, seed: int = 0, start: str = "1960-01") -> PlantedPanel:
    """Panel driven by I(1) factors whose differences follow a VAR(1).

    ``dF_t = A dF_{t-1} + B u_t`` in levels is the VAR(2)
    ``F_t = (I + A) F_{t-1} - A F_{t-2} + B u_t``; each series adds a linear
    trend and a stationary AR(1) idiosyncratic term to ``lambda_i' F_t``.  The
    planted shock is ``u_t[0]``.
    """
    from .dynamics import ma_coefficients
    from .panel import TimeSeriesPanel

    if not 1 <= q <= r:
        raise ParamError(f"need 1 <= q <= r, got q={q}, r={r}")
    rng = substream(seed, 7)
    A = np.diag(np.linspace(0.5, 0.2, r))
    B = rng.standard_normal((r, q))
    lam = rng.standard_normal((N, r))
    burn = 100
    u = rng.standard_normal((burn + T, q))
    dF = np.zeros((burn + T, r))
    for t in range(1, burn + T):
        dF[t] = A @ dF[t - 1] + B @ u[t]
    F = np.cumsum(dF, axis=0)[burn:]
    u = u[burn:]
    xi = np.zeros((T, N))
    e = rng.standard_normal((T, N)) * idio_sd * np.sqrt(1 - 0.25)
    for t in range(1, T):
        xi[t] = 0.5 * xi[t - 1] + e[t]
    tt = np.arange(T, dtype=float)[:, None]
    trend = rng.normal(0.0, 5.0, N) + rng.normal(0.0, 0.01, N) * tt
    x = trend + F @ lam.T + xi

    psi = ma_coefficients(np.stack([np.eye(r) + A, -A]), H)
    common = np.einsum("ir,hrq->hiq", lam, psi @ B)          # (H+1) x N x q
    irf = common[:, :, 0]
    den = np.cumsum(np.sum(common ** 2, axis=2), axis=0)
    share = np.cumsum(irf ** 2, axis=0) / den
    dates = np.datetime64(start, "M") + np.arange(T)
    dates = dates.astype("datetime64[D]")
    names = tuple(f"x{i + 1:03d}" for i in range(N))
    panel = TimeSeriesPanel(x, names, dates, "monthly", tuple([2] * N))
    return PlantedPanel(panel, InstrumentSeries(u[:, 0].copy(), dates), irf, share, lam, F, u)
