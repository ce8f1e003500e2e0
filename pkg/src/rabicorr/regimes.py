"""Weak / strong / ultra-strong regime classification per correlation order."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from rabicorr.lindblad import (
    InitialState,
    SolverSettings,
    TimeSeries,
    default_sample_dt,
    relative_difference,
    simulate,
)
from rabicorr.model import RabiParams, RateSet
from rabicorr.operators import SpaceDims, observable_name

log = logging.getLogger(__name__)

LABELS = ("weak", "strong", "ultra_strong", "ultra_strong_not_strong")
DENOMINATOR_FLOOR = 1e-30


class UndefinedDeltaError(ValueError):
    """The reference integral vanishes, so the relative deviation is undefined."""


def _squared_integral(series: TimeSeries, n: int) -> float:
    values = series.observables[observable_name(n)]
    return float(np.trapezoid(np.abs(values) ** 2, series.times))


def compute_delta(series_with: TimeSeries, series_without: TimeSeries, n: int) -> float:
    """Relative change of the integrated squared n-th order correlation.

    ``(I_with - I_without) / I_without`` with ``I = int |<a+^n a^n>|^2 dt``
    evaluated by the trapezoid rule on the shared sample grid.
    """
    if series_with.times.shape != series_without.times.shape or not np.array_equal(
            series_with.times, series_without.times):
        raise ValueError("series must share the same time grid")
    denom = _squared_integral(series_without, n)
    if abs(denom) < DENOMINATOR_FLOOR:
        raise UndefinedDeltaError(f"reference integral for n={n} vanishes ({denom:.3e})")
    return (_squared_integral(series_with, n) - denom) / denom


def strong_coupling_boundary(rates: RateSet, n: float) -> float:
    """Coupling above which order ``n`` oscillates faster than it relaxes: 2 ga n^(2/3)."""
    if rates.gamma_a <= 0:
        raise ValueError("the strong-coupling boundary needs gamma_a > 0")
    return 2.0 * rates.gamma_a * n ** (2.0 / 3.0)


def is_strong(coupling: float, rates: RateSet, n: int) -> bool:
    """n^(1/3) W > 2 ga n."""
    return n ** (1.0 / 3.0) * coupling > 2.0 * rates.gamma_a * n


def classify_regime(params: RabiParams, rates: RateSet, n: int, delta: float,
                    delta_threshold: float = 0.1) -> str:
    """Regime label of order ``n``.

    ``delta`` is the counter-rotating deviation for this order (see
    :func:`compute_delta`); the order counts as ultra-strong when it reaches
    ``delta_threshold``. Couplings are compared in units of ``omega0``.
    """
    if delta is None or not math.isfinite(delta):
        raise UndefinedDeltaError(f"delta for n={n} is undefined")
    strong = is_strong(params.coupling / params.omega0, _scaled(rates, params.omega0), n)
    ultra = delta >= delta_threshold
    if ultra:
        return "ultra_strong" if strong else "ultra_strong_not_strong"
    return "strong" if strong else "weak"


def _scaled(rates: RateSet, omega0: float) -> RateSet:
    return RateSet(rates.gamma_a / omega0, rates.gamma_d / omega0,
                   rates.gamma_p / omega0, rates.gamma_sigma / omega0)


@dataclass
class SweepConfig:
    """Parameters of an (n, coupling) regime sweep; frequencies in units of omega0."""

    n_values: list[int] = field(default_factory=lambda: list(range(1, 11)))
    omega_values: list[float] = field(
        default_factory=lambda: [float(x) for x in np.geomspace(0.005, 0.3, 20)])
    rates: RateSet = field(default_factory=lambda: RateSet(1e-3, 1e-3, 0.0, 1e-3))
    initial_state: InitialState = field(default_factory=InitialState)
    delta_threshold: float = 0.1
    n_max_base: int = 20
    n_max_per_coupling: float = 60.0
    n_max_step: int = 5
    convergence_threshold: float = 1e-4
    settings: SolverSettings = field(default_factory=SolverSettings)
    workers: int = 1

    def n_max_for(self, coupling: float) -> int:
        """Photon cutoff used at ``coupling`` (grows with the counter-rotating admixture)."""
        base = max(self.n_max_base, int(math.ceil(self.initial_state.mean_photons)) + 5,
                   max(self.n_values))
        return base + int(math.ceil(self.n_max_per_coupling * coupling))


@dataclass
class PointResult:
    coupling: float
    n_max: int
    deltas: dict[int, float]
    convergence: float
    error: str | None = None


def paired_runs(coupling: float, rates: RateSet, initial: InitialState, dims: SpaceDims,
                orders: Sequence[int], settings: SolverSettings,
                t_grid=None) -> tuple[TimeSeries, TimeSeries]:
    """Full and RWA time series on a common grid."""
    full = simulate(RabiParams.for_level("full", coupling), rates, initial, dims, orders,
                    t_grid, settings)
    rwa = simulate(RabiParams.for_level("rwa", coupling), rates, initial, dims, orders,
                   full.times, settings)
    return full, rwa


def _sweep_point(cfg: SweepConfig, coupling: float) -> PointResult:
    n_max = cfg.n_max_for(coupling)
    orders = list(cfg.n_values)
    try:
        coarse = simulate(RabiParams.for_level("full", coupling), cfg.rates, cfg.initial_state,
                          SpaceDims(n_max), orders, None, cfg.settings)
        fine_dims = SpaceDims(n_max + cfg.n_max_step)
        full, rwa = paired_runs(coupling, cfg.rates, cfg.initial_state, fine_dims, orders,
                                cfg.settings, coarse.times)
        conv = max(relative_difference(coarse.corr(n), full.corr(n)) for n in orders)
        deltas = {n: compute_delta(full, rwa, n) for n in orders}
        err = None
        if conv > cfg.convergence_threshold:
            err = f"truncation not converged: {conv:.2e} > {cfg.convergence_threshold:.0e}"
        return PointResult(coupling, fine_dims.n_max, deltas, conv, err)
    except Exception as exc:  # recorded per point; the sweep continues
        log.warning("sweep point W=%g failed: %s", coupling, exc)
        return PointResult(coupling, n_max, {}, math.nan, f"{type(exc).__name__}: {exc}")


@dataclass
class RegimeGrid:
    """Delta(n, W) with regime labels and boundary curves (rows: n, columns: W)."""

    n_values: list[int]
    omega_values: list[float]
    delta: np.ndarray
    labels: np.ndarray
    valid: np.ndarray
    omega_sc: np.ndarray
    omega_usc: np.ndarray
    delta_threshold: float
    rates: RateSet
    n_max: list[int]
    convergence: list[float]
    errors: dict[float, str]

    @property
    def ln_delta(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.delta > 0, np.log(self.delta), np.nan)

    @property
    def complete(self) -> bool:
        return bool(self.valid.all())

    def monotonicity_violation(self) -> float:
        """Largest decrease of Delta between adjacent cells along n or W (0 if none)."""
        d = np.where(self.valid, self.delta, np.nan)
        drops = [np.nanmax(d[:-1, :] - d[1:, :], initial=0.0),
                 np.nanmax(d[:, :-1] - d[:, 1:], initial=0.0)]
        return float(max(0.0, *drops))

    def to_dict(self) -> dict:
        def clean(x):
            return None if (isinstance(x, float) and not math.isfinite(x)) else x
        return {
            "n_values": list(self.n_values),
            "omega_values": [float(w) for w in self.omega_values],
            "delta": [[clean(float(v)) for v in row] for row in self.delta],
            "ln_delta": [[clean(float(v)) for v in row] for row in self.ln_delta],
            "labels": self.labels.tolist(),
            "valid": self.valid.tolist(),
            "omega_sc": [float(v) for v in self.omega_sc],
            "omega_usc": [clean(float(v)) for v in self.omega_usc],
            "delta_threshold": self.delta_threshold,
            "rates": vars(self.rates) if hasattr(self.rates, "__dict__") else {},
            "n_max": list(self.n_max),
            "convergence": [clean(float(c)) for c in self.convergence],
            "errors": {str(k): v for k, v in self.errors.items()},
        }


def usc_onset(omegas: Sequence[float], deltas: Sequence[float], threshold: float) -> float:
    """First coupling where Delta reaches ``threshold`` (log-log interpolation).

    NaN when the threshold is not reached on the grid.
    """
    w = np.asarray(omegas, float)
    d = np.asarray(deltas, float)
    for k in range(len(w)):
        if not math.isfinite(d[k]) or d[k] < threshold:
            continue
        if k == 0:
            return float(w[0])
        lo, hi = d[k - 1], d[k]
        if lo > 0 and math.isfinite(lo):
            frac = (math.log(threshold) - math.log(lo)) / (math.log(hi) - math.log(lo))
            return float(math.exp(math.log(w[k - 1]) + frac * (math.log(w[k]) - math.log(w[k - 1]))))
        return float(w[k])
    return math.nan


def assemble_grid(cfg: SweepConfig, points: Sequence[PointResult]) -> RegimeGrid:
    ns, ws = list(cfg.n_values), list(cfg.omega_values)
    delta = np.full((len(ns), len(ws)), np.nan)
    valid = np.zeros_like(delta, dtype=bool)
    labels = np.full(delta.shape, "invalid", dtype=object)
    errors = {}
    for j, p in enumerate(points):
        if p.error:
            errors[p.coupling] = p.error
        for i, n in enumerate(ns):
            if n not in p.deltas:
                continue
            delta[i, j] = p.deltas[n]
            if p.error is None:
                valid[i, j] = True
                labels[i, j] = classify_regime(RabiParams(ws[j]), cfg.rates, n, p.deltas[n],
                                               cfg.delta_threshold)
    omega_sc = np.array([strong_coupling_boundary(cfg.rates, n) for n in ns])
    omega_usc = np.array([usc_onset(ws, np.where(valid[i], delta[i], np.nan),
                                    cfg.delta_threshold) for i in range(len(ns))])
    return RegimeGrid(ns, ws, delta, labels.astype(str), valid, omega_sc, omega_usc,
                      cfg.delta_threshold, cfg.rates, [p.n_max for p in points],
                      [p.convergence for p in points], errors)


def sweep_regime_map(cfg: SweepConfig) -> RegimeGrid:
    """Paired full/RWA runs over the coupling grid; all orders share each run.

    Points run in a process pool when ``cfg.workers > 1`` and are merged by
    grid index, so results do not depend on scheduling.
    """
    ws = list(cfg.omega_values)
    if not ws or not cfg.n_values:
        raise ValueError("sweep ranges must be nonempty")
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            points = list(pool.map(_sweep_point, [cfg] * len(ws), ws))
    else:
        points = []
        for w in ws:
            points.append(_sweep_point(cfg, w))
            log.info("sweep W=%.4g done (n_max=%d, conv=%.1e)", w, points[-1].n_max,
                     points[-1].convergence)
    return assemble_grid(cfg, points)


@dataclass(frozen=True)
class FrequencyShift:
    shift: float
    resolution: float
    frequency_rwa: float
    frequency_full: float


def dominant_frequency(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """Angular frequency of the strongest spectral line and the bin width 2 pi / T.

    Hann-windowed periodogram, refined by maximising the windowed DTFT
    within one bin of the coarse peak.
    """
    t = np.asarray(times, float)
    x = np.real(np.asarray(values)) - np.mean(np.real(values))
    dt = t[1] - t[0]
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise ValueError("dominant_frequency needs a uniform grid")
    span = t[-1] - t[0]
    win = np.hanning(t.size)
    xw = x * win
    pad = 8 * t.size
    spec = np.abs(np.fft.rfft(xw, n=pad))
    freqs = 2 * np.pi * np.fft.rfftfreq(pad, d=dt)
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if spec[k] <= 1e-12 * np.sum(np.abs(xw)):
        raise ValueError("no identifiable spectral peak")
    bin_width = 2 * np.pi / span

    def neg_power(w):
        return -abs(np.sum(xw * np.exp(-1j * w * (t - t[0]))))

    res = minimize_scalar(neg_power, bounds=(max(freqs[k] - bin_width / 4, 0.0),
                                             freqs[k] + bin_width / 4),
                          method="bounded", options={"xatol": 1e-12 * max(freqs[k], 1.0)})
    return float(res.x), bin_width


def bloch_siegert_shift(coupling: float, rates: RateSet,
                        initial: InitialState | None = None, n_max: int | None = None,
                        rabi_periods: float = 200.0,
                        settings: SolverSettings | None = None) -> FrequencyShift:
    """Shift of the dominant <a+a> oscillation frequency between the full and RWA models."""
    initial = initial or InitialState()
    settings = settings or SolverSettings()
    if coupling <= 0:
        return FrequencyShift(0.0, math.inf, 0.0, 0.0)
    n_max = n_max or int(math.ceil(initial.mean_photons)) + 10 + int(math.ceil(60 * coupling))
    rabi = 2 * coupling * math.sqrt(initial.mean_photons + 1)
    horizon = settings.horizon or rabi_periods * 2 * math.pi / rabi
    dt = default_sample_dt(RabiParams.for_level("full", coupling), initial.mean_photons)
    t = np.linspace(0.0, horizon, int(math.ceil(horizon / dt)) + 1)
    full, rwa = paired_runs(coupling, rates, initial, SpaceDims(n_max), [1], settings, t)
    f_full, res = dominant_frequency(t, full.corr(1))
    f_rwa, _ = dominant_frequency(t, rwa.corr(1))
    return FrequencyShift(f_full - f_rwa, res, f_rwa, f_full)
