"""Singular spectrum analysis baseline.

Per-cell pipeline: embed the series into a Hankel trajectory matrix, take
its SVD, diagonal-average every rank-1 term back into a component series,
classify each component by its dominant periodogram frequency into trend
(10-year-and-longer periodicities), seasonal (annual cycle and its
harmonics) or residual, and report the residual as the anomaly series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError, ShapeError, SsaWindowError
from .grid import AnomalyField, MassSeries

TREND = "trend"
SEASONAL = "seasonal"
RESIDUAL = "residual"


@dataclass(frozen=True)
class SsaConfig:
    """Window length and grouping bands for the decomposition."""

    window: int = 120  # embedding window L, months
    trend_cutoff: int = 120  # periodicities >= this many months count as trend
    seasonal_period: int = 12
    freq_tolerance: float = 0.004  # cycles/month around each harmonic
    max_harmonic: int = 6
    pad_factor: int = 4  # periodogram zero-padding multiple

    def validate_for(self, n_months: int) -> None:
        if self.window < 12:
            raise SsaWindowError(f"window must be >= 12 months, got {self.window}")
        if n_months < 2 * self.window:
            raise SsaWindowError(
                f"series of {n_months} months too short for window {self.window}; "
                f"use window <= {n_months // 2}"
            )
        if self.trend_cutoff < 120:
            raise SsaWindowError("trend_cutoff must be >= 120 months (10 years)")


@dataclass(frozen=True)
class Eigentriple:
    """Bookkeeping for one SVD component after grouping."""

    singular_value: float
    frequency: float | None  # cycles/month; None when the component is zero
    group: str


@dataclass(frozen=True)
class SsaDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    eigentriples: tuple


def embed(series: np.ndarray, window: int) -> np.ndarray:
    """Hankel trajectory matrix: column j holds series[j : j+window]."""
    series = np.asarray(series, dtype=float)
    n = series.shape[0]
    if n < 2 * window:
        raise SsaWindowError(f"series length {n} < 2 * window {window}")
    return np.lib.stride_tricks.sliding_window_view(series, window).T.copy()


def decompose(trajectory: np.ndarray):
    """Full SVD of the trajectory matrix, singular values non-increasing."""
    try:
        u, s, vt = np.linalg.svd(np.asarray(trajectory, dtype=float), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD did not converge on a {trajectory.shape} trajectory matrix"
        ) from exc
    return u, s, vt


def hankelize(matrix: np.ndarray) -> np.ndarray:
    """Anti-diagonal averaging back to a series of length rows + cols - 1."""
    matrix = np.ascontiguousarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ShapeError("hankelize expects a 2-D matrix")
    return kernels.hankel_average(matrix)


def dominant_frequency(component: np.ndarray, pad_factor: int = 4) -> float | None:
    """Argmax frequency (cycles/month) of the zero-padded periodogram.

    Returns None for an all-zero component, which grouping sends to the
    residual class.
    """
    component = np.asarray(component, dtype=float)
    if not np.any(component != 0.0):
        return None
    nfft = max(pad_factor * component.shape[0], component.shape[0])
    power = np.abs(np.fft.rfft(component, nfft)) ** 2
    return float(np.argmax(power) / nfft)


def _component_series(u, s, vt):
    return kernels.rank_one_series(
        np.ascontiguousarray(u), np.ascontiguousarray(s), np.ascontiguousarray(vt)
    )


def _classify(freq: float | None, config: SsaConfig) -> str:
    if freq is None:
        return RESIDUAL
    if freq < 1.0 / config.trend_cutoff:
        return TREND
    base = 1.0 / config.seasonal_period
    for k in range(1, config.max_harmonic + 1):
        if abs(freq - k * base) < config.freq_tolerance:
            return SEASONAL
    return RESIDUAL


def group(u, s, vt, config: SsaConfig) -> SsaDecomposition:
    """Classify every eigentriple and sum the component series per class."""
    comps = _component_series(u, s, vt)
    n = comps.shape[1]
    sums = {TREND: np.zeros(n), SEASONAL: np.zeros(n), RESIDUAL: np.zeros(n)}
    triples = []
    for i in range(comps.shape[0]):
        freq = dominant_frequency(comps[i], config.pad_factor)
        cls = _classify(freq, config)
        sums[cls] += comps[i]
        triples.append(Eigentriple(singular_value=float(s[i]), frequency=freq, group=cls))
    return SsaDecomposition(
        trend=sums[TREND],
        seasonal=sums[SEASONAL],
        residual=sums[RESIDUAL],
        eigentriples=tuple(triples),
    )


def decompose_series(series: np.ndarray, config: SsaConfig) -> SsaDecomposition:
    """embed -> SVD -> diagonal averaging -> frequency grouping for one cell."""
    series = np.asarray(series, dtype=float)
    config.validate_for(series.shape[0])
    u, s, vt = decompose(embed(series, config.window))
    return group(u, s, vt, config)


def ssa_anomalies(mass: MassSeries, config: SsaConfig | None = None,
                  jobs: int = 1) -> AnomalyField:
    """Residual anomalies per cell: original minus trend minus seasonal.

    The residual keeps inter-annual (1-10 year) and sub-annual variability,
    which is where extreme departures live. Cells are independent, so
    ``jobs`` > 1 decomposes them in a thread pool.
    """
    config = config or SsaConfig()
    values = np.asarray(mass.values, dtype=float)
    n_cells, n_months = values.shape
    config.validate_for(n_months)

    anoms = np.empty_like(values)
    if jobs > 1 and n_cells > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda c: decompose_series(c, config), values))
        for c, dec in enumerate(results):
            anoms[c] = dec.residual
    else:
        for c in range(n_cells):
            anoms[c] = decompose_series(values[c], config).residual

    return AnomalyField(
        values=anoms,
        cells=np.asarray(mass.cells, dtype=int),
        valid=np.ones(n_months, dtype=bool),
        method="ssa",
        start_year=mass.start_year,
        start_month=mass.start_month,
    )
