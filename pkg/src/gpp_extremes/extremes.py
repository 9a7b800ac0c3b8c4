"""Percentile thresholds, extreme flags and regional aggregation.

Protocol: trim the first and last year of anomalies, pool every valid
(cell, month) anomaly of the region, set the negative threshold from the
5th percentile and the positive one from the 95th (linear interpolation
between order statistics), flag with strict inequalities, then aggregate
flags into per-cell frequency maps and regional monthly series.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, EmptyRegionError, ShapeError
from .grid import GGC_PER_TGC, AnomalyField

NEG = -1
POS = 1
NONE = 0

TRIM_MONTHS = 12


@dataclass(frozen=True)
class ThresholdSet:
    """Extreme thresholds for one (region, period, method).

    ``q_neg`` is the magnitude of the 5th-percentile anomaly (the headline
    threshold); negative extremes are anomalies < -q_neg. ``q_pos`` is the
    95th percentile; positive extremes are anomalies > +q_pos. With
    ``mode="absolute"`` both equal the 95th percentile of |anomaly|.
    """

    region: str
    period: str
    method: str
    q_neg: float
    q_pos: float
    mode: str = "two-sided"


@dataclass(frozen=True)
class ExtremesReport:
    """Flags plus the three aggregations of one flag set."""

    region: str
    period: str
    method: str
    thresholds: ThresholdSet
    flags: np.ndarray  # int8 (n_cells, n_months): NEG / NONE / POS
    cells: np.ndarray
    valid: np.ndarray
    start_year: int
    start_month: int
    freq_neg: np.ndarray  # per-cell negative-extreme counts
    freq_pos: np.ndarray
    monthly_count_neg: np.ndarray  # flagged cells per month
    monthly_count_pos: np.ndarray
    monthly_mag_neg: np.ndarray  # TgC per month, <= 0
    monthly_mag_pos: np.ndarray  # TgC per month, >= 0


def trim_edges(anoms: AnomalyField) -> AnomalyField:
    """Invalidate the first and last year so both methods share a span.

    A 31-year record keeps 29 years of usable months (372 -> 348),
    mirroring the shortening a 12-month reconstruction window imposes.
    Idempotent for a fixed span.
    """
    n = anoms.n_months
    if n < 3 * TRIM_MONTHS:
        raise ShapeError(f"need at least {3 * TRIM_MONTHS} months to trim, got {n}")
    valid = anoms.valid.copy()
    valid[:TRIM_MONTHS] = False
    valid[n - TRIM_MONTHS:] = False
    return replace(anoms, valid=valid)


def pooled_sample(anoms: AnomalyField) -> np.ndarray:
    """All valid (cell, month) anomalies of the region as a flat array."""
    pool = anoms.values[:, anoms.valid].ravel()
    if pool.size == 0:
        raise EmptyRegionError("no valid anomaly samples to pool")
    return pool


def compute_thresholds(anoms: AnomalyField, region: str, period: str,
                       mode: str = "two-sided") -> ThresholdSet:
    """Percentile thresholds over the pooled regional anomaly sample."""
    pool = pooled_sample(anoms)
    if mode == "two-sided":
        q_neg = float(abs(np.percentile(pool, 5.0)))
        q_pos = float(np.percentile(pool, 95.0))
    elif mode == "absolute":
        q = float(np.percentile(np.abs(pool), 95.0))
        q_neg = q_pos = q
    else:
        raise DataError(f"unknown threshold mode {mode!r}")
    return ThresholdSet(
        region=region,
        period=period,
        method=anoms.method,
        q_neg=q_neg,
        q_pos=q_pos,
        mode=mode,
    )


def classify(anoms: AnomalyField, thresholds: ThresholdSet) -> np.ndarray:
    """Per-sample flags; threshold ties are not extremes (strict inequality)."""
    flags = np.zeros(anoms.values.shape, dtype=np.int8)
    valid = anoms.valid[None, :]
    flags[(anoms.values < -thresholds.q_neg) & valid] = NEG
    flags[(anoms.values > thresholds.q_pos) & valid] = POS
    return flags


def frequency_map(flags: np.ndarray, sign: int) -> np.ndarray:
    """Count of extremes of one sign per cell over the valid months."""
    return (flags == sign).sum(axis=1)


def regional_series(anoms: AnomalyField, flags: np.ndarray, sign: int):
    """(monthly count, monthly magnitude in TgC) of one sign's extremes."""
    hits = flags == sign
    counts = hits.sum(axis=0)
    mags = np.where(hits, anoms.values, 0.0).sum(axis=0) / GGC_PER_TGC
    return counts, mags


def cumulative_totals(report: "ExtremesReport") -> dict:
    """Period totals of the monthly magnitudes, TgC per sign."""
    return {
        "region": report.region,
        "period": report.period,
        "method": report.method,
        "negative_TgC": float(report.monthly_mag_neg.sum()),
        "positive_TgC": float(report.monthly_mag_pos.sum()),
    }


def build_report(anoms: AnomalyField, region: str, period: str,
                 mode: str = "two-sided") -> ExtremesReport:
    """Trim, threshold, classify and aggregate one anomaly field."""
    trimmed = trim_edges(anoms)
    thresholds = compute_thresholds(trimmed, region, period, mode)
    flags = classify(trimmed, thresholds)
    count_neg, mag_neg = regional_series(trimmed, flags, NEG)
    count_pos, mag_pos = regional_series(trimmed, flags, POS)
    return ExtremesReport(
        region=region,
        period=period,
        method=trimmed.method,
        thresholds=thresholds,
        flags=flags,
        cells=trimmed.cells,
        valid=trimmed.valid,
        start_year=trimmed.start_year,
        start_month=trimmed.start_month,
        freq_neg=frequency_map(flags, NEG),
        freq_pos=frequency_map(flags, POS),
        monthly_count_neg=count_neg,
        monthly_count_pos=count_pos,
        monthly_mag_neg=mag_neg,
        monthly_mag_pos=mag_pos,
    )
