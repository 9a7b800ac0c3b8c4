"""Gridded monthly GPP data model.

Owns the on-disk formats (flat-binary + JSON header, or CSV), the flux to
per-cell carbon-mass conversion, region masking and the synthetic-data
generator used for desk-scale validation.

Units: stored grid values are fluxes in gC m^-2 s^-1; derived mass series
are GgC per month per cell. Month lengths follow a no-leap 365-day
calendar throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyRegionError,
    FormatError,
    ShapeError,
    SynthSpecError,
)

MONTH_DAYS = np.array([31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31], dtype=float)
SECONDS_PER_DAY = 86400.0
GRAMS_PER_GIGAGRAM = 1.0e9
GGC_PER_TGC = 1.0e3

_HEADER_FIELDS = ("n_lat", "n_lon", "n_months", "start_year", "start_month")


@dataclass(frozen=True)
class GridSeries:
    """A lat x lon x month flux field with per-cell area and land fraction.

    ``values`` has shape (n_cells, n_months) with cells in row-major
    (lat-major) order. Cells with land_frac == 0 may hold NaN; land cells
    may not.
    """

    n_lat: int
    n_lon: int
    n_months: int
    start_year: int
    start_month: int
    values: np.ndarray
    cell_area: np.ndarray
    land_frac: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.n_lat * self.n_lon

    def validate(self) -> "GridSeries":
        if self.n_lat < 1 or self.n_lon < 1 or self.n_months < 1:
            raise ShapeError("grid dimensions must be positive")
        if not (1 <= self.start_month <= 12):
            raise FormatError(f"start_month must be 1..12, got {self.start_month}")
        if self.values.shape != (self.n_cells, self.n_months):
            raise ShapeError(
                f"values shape {self.values.shape} != "
                f"(n_cells={self.n_cells}, n_months={self.n_months})"
            )
        if self.cell_area.shape != (self.n_cells,) or self.land_frac.shape != (self.n_cells,):
            raise ShapeError("cell_area and land_frac must have one entry per cell")
        if not np.all(self.cell_area > 0):
            raise ShapeError("cell_area must be positive for every cell")
        if np.any(self.land_frac < 0) or np.any(self.land_frac > 1):
            raise ShapeError("land_frac must lie in [0, 1]")
        land = self.land_frac > 0
        if np.any(~np.isfinite(self.values[land])):
            raise ShapeError("non-finite flux in a cell with land_frac > 0")
        return self

    def month_seconds(self) -> np.ndarray:
        """Seconds in each month of the record (no-leap calendar)."""
        cal = (self.start_month - 1 + np.arange(self.n_months)) % 12
        return MONTH_DAYS[cal] * SECONDS_PER_DAY

    def slice_months(self, start: int, count: int) -> "GridSeries":
        """Sub-record of ``count`` months beginning at month index ``start``."""
        if start < 0 or count < 1 or start + count > self.n_months:
            raise ShapeError(
                f"month slice [{start}, {start + count}) outside record of "
                f"{self.n_months} months"
            )
        total = (self.start_month - 1) + start
        return GridSeries(
            n_lat=self.n_lat,
            n_lon=self.n_lon,
            n_months=count,
            start_year=self.start_year + total // 12,
            start_month=total % 12 + 1,
            values=self.values[:, start:start + count],
            cell_area=self.cell_area,
            land_frac=self.land_frac,
        )


@dataclass(frozen=True)
class RegionMask:
    """Named set of grid cell indices; low-land cells are excluded on use."""

    name: str
    cells: np.ndarray
    min_land_frac: float = 0.10

    def effective_cells(self, grid: GridSeries) -> np.ndarray:
        """Cell indices retained for analysis: land_frac strictly above cutoff."""
        cells = np.asarray(self.cells, dtype=int)
        if cells.size and (cells.min() < 0 or cells.max() >= grid.n_cells):
            raise ShapeError(
                f"region {self.name!r} references cells outside the "
                f"{grid.n_cells}-cell grid"
            )
        keep = grid.land_frac[cells] > self.min_land_frac
        return np.sort(cells[keep])


@dataclass(frozen=True)
class MassSeries:
    """Per-cell monthly carbon mass (GgC/month) for one region and period.

    ``valid`` is None for source data; reconstructions set it to flag the
    months with a trustworthy value.
    """

    values: np.ndarray  # (n_cells_masked, n_months)
    cells: np.ndarray  # source grid cell indices, sorted
    start_year: int
    start_month: int
    valid: np.ndarray | None = None

    @property
    def n_months(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AnomalyField:
    """Per-cell anomaly series (GgC/month) tagged with the producing method.

    ``valid`` marks months usable for extreme classification; edge
    trimming clears the first and last year.
    """

    values: np.ndarray  # (n_cells_masked, n_months)
    cells: np.ndarray
    valid: np.ndarray  # bool, (n_months,)
    method: str
    start_year: int
    start_month: int

    @property
    def n_months(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# file formats

def _header_dict(grid: GridSeries, layout: str) -> dict:
    return {
        "n_lat": grid.n_lat,
        "n_lon": grid.n_lon,
        "n_months": grid.n_months,
        "start_year": grid.start_year,
        "start_month": grid.start_month,
        "layout": layout,
    }


def _paths(path: str | Path, payload_suffix: str) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix == ".json":
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(payload_suffix)


def _read_header(header_path: Path, expect_layout: str) -> dict:
    try:
        raw = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{header_path}: header is not valid JSON ({exc})") from exc
    for name in _HEADER_FIELDS:
        if name not in raw:
            raise FormatError(f"{header_path}: header missing field {name!r}")
        if not isinstance(raw[name], int):
            raise FormatError(f"{header_path}: header field {name!r} must be an integer")
    if raw.get("layout") != expect_layout:
        raise FormatError(
            f"{header_path}: header field 'layout' must be {expect_layout!r}, "
            f"got {raw.get('layout')!r}"
        )
    if raw["n_lat"] < 1 or raw["n_lon"] < 1 or raw["n_months"] < 1:
        raise FormatError(f"{header_path}: grid dimensions must be positive")
    if not (1 <= raw["start_month"] <= 12):
        raise FormatError(f"{header_path}: header field 'start_month' outside 1..12")
    return raw


def save_grid(grid: GridSeries, path: str | Path, format: str = "flat-binary") -> None:
    """Write a grid as `<base>.json` plus a payload file.

    flat-binary payload (`<base>.f64`): little-endian float64, values in
    cell-major order (all months of cell 0, then cell 1, ...), then the
    cell_area block, then the land_frac block. CSV payload (`<base>.csv`):
    one row per cell, columns cell,area_m2,land_frac followed by one
    column per month; the JSON header carries the grid dimensions.
    """
    grid.validate()
    if format == "flat-binary":
        header_path, payload_path = _paths(path, ".f64")
        header_path.write_text(json.dumps(_header_dict(grid, "cell-major"), indent=2) + "\n")
        payload = np.concatenate(
            [grid.values.ravel(), grid.cell_area, grid.land_frac]
        ).astype("<f8")
        payload_path.write_bytes(payload.tobytes())
    elif format == "csv":
        header_path, payload_path = _paths(path, ".csv")
        header_path.write_text(json.dumps(_header_dict(grid, "csv"), indent=2) + "\n")
        lines = ["cell,area_m2,land_frac," + ",".join(f"m{t:03d}" for t in range(grid.n_months))]
        for c in range(grid.n_cells):
            row = [str(c), repr(float(grid.cell_area[c])), repr(float(grid.land_frac[c]))]
            row.extend(repr(float(v)) for v in grid.values[c])
            lines.append(",".join(row))
        payload_path.write_text("\n".join(lines) + "\n")
    else:
        raise FormatError(f"unknown grid format {format!r}")


def load_grid(path: str | Path, format: str = "flat-binary") -> GridSeries:
    """Read a grid written by :func:`save_grid`; inverse for both formats."""
    if format == "flat-binary":
        header_path, payload_path = _paths(path, ".f64")
        raw = _read_header(header_path, "cell-major")
        n_cells = raw["n_lat"] * raw["n_lon"]
        expected = n_cells * raw["n_months"] + 2 * n_cells
        payload = np.frombuffer(payload_path.read_bytes(), dtype="<f8")
        if payload.size != expected:
            raise ShapeError(
                f"{payload_path}: payload holds {payload.size} values, header "
                f"implies {expected}"
            )
        values = payload[: n_cells * raw["n_months"]].reshape(n_cells, raw["n_months"])
        cell_area = payload[n_cells * raw["n_months"]: n_cells * raw["n_months"] + n_cells]
        land_frac = payload[n_cells * raw["n_months"] + n_cells:]
    elif format == "csv":
        header_path, payload_path = _paths(path, ".csv")
        raw = _read_header(header_path, "csv")
        n_cells = raw["n_lat"] * raw["n_lon"]
        lines = payload_path.read_text().strip().splitlines()
        if len(lines) != n_cells + 1:
            raise ShapeError(
                f"{payload_path}: {len(lines) - 1} data rows, header implies {n_cells}"
            )
        values = np.empty((n_cells, raw["n_months"]))
        cell_area = np.empty(n_cells)
        land_frac = np.empty(n_cells)
        for i, line in enumerate(lines[1:]):
            parts = line.split(",")
            if len(parts) != 3 + raw["n_months"]:
                raise ShapeError(
                    f"{payload_path}: row {i} has {len(parts)} columns, expected "
                    f"{3 + raw['n_months']}"
                )
            cell_area[i] = float(parts[1])
            land_frac[i] = float(parts[2])
            values[i] = [float(p) for p in parts[3:]]
    else:
        raise FormatError(f"unknown grid format {format!r}")

    grid = GridSeries(
        n_lat=raw["n_lat"],
        n_lon=raw["n_lon"],
        n_months=raw["n_months"],
        start_year=raw["start_year"],
        start_month=raw["start_month"],
        values=np.ascontiguousarray(values),
        cell_area=np.ascontiguousarray(cell_area),
        land_frac=np.ascontiguousarray(land_frac),
    )
    return grid.validate()


# ---------------------------------------------------------------------------
# unit conversion and aggregation

def flux_to_mass(grid: GridSeries, mask: RegionMask) -> MassSeries:
    """Convert flux to per-cell monthly carbon mass over a region.

    mass[GgC/month] = flux[gC m^-2 s^-1] * area[m^2] * land_frac
                      * seconds_in_month / 1e9
    """
    cells = mask.effective_cells(grid)
    if cells.size == 0:
        raise EmptyRegionError(
            f"region {mask.name!r} has no cells with land_frac > {mask.min_land_frac}"
        )
    seconds = grid.month_seconds()
    scale = grid.cell_area[cells] * grid.land_frac[cells] / GRAMS_PER_GIGAGRAM
    values = grid.values[cells] * scale[:, None] * seconds[None, :]
    return MassSeries(
        values=values,
        cells=cells,
        start_year=grid.start_year,
        start_month=grid.start_month,
    )


def regional_mean_series(mass: MassSeries) -> np.ndarray:
    """Per-month mean mass across the region's cells (GgC/month)."""
    if mass.values.shape[0] == 0:
        raise EmptyRegionError("mass series has no cells")
    return mass.values.mean(axis=0)


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class SynthEvent:
    """Multiplicative suppression of one cell's flux over a month span.

    ``suppression`` is the fraction removed: 0.6 leaves 40% of the signal.
    """

    cell: int
    start: int
    length: int
    suppression: float


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic GPP generator (desk-scale CESM stand-in)."""

    n_lat: int
    n_lon: int
    n_months: int
    start_year: int = 1850
    start_month: int = 1
    base_flux: float = 5.0e-6
    cell_variation: float = 0.2
    trend_linear: float = 0.0
    trend_quadratic: float = 0.0
    annual_amplitude: float = 2.0e-6
    noise_std: float = 0.0
    noise_df: int = 0  # Student-t degrees of freedom; 0 means Gaussian
    cell_area: float = 1.0e10
    land_frac: float | list = 1.0
    events: tuple = ()

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        data = dict(raw)
        events = []
        for i, ev in enumerate(data.pop("events", [])):
            try:
                events.append(
                    SynthEvent(
                        cell=int(ev["cell"]),
                        start=int(ev["start"]),
                        length=int(ev["length"]),
                        suppression=float(ev["suppression"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SynthSpecError(f"events[{i}]: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__ if f != "events"}
        unknown = set(data) - known
        if unknown:
            raise SynthSpecError(f"unknown synth spec fields: {sorted(unknown)}")
        missing = {"n_lat", "n_lon", "n_months"} - set(data)
        if missing:
            raise SynthSpecError(f"synth spec missing fields: {sorted(missing)}")
        return cls(events=tuple(events), **data)


def synth_generate(spec: SynthSpec, seed: int) -> tuple[GridSeries, np.ndarray]:
    """Deterministic synthetic grid plus ground-truth event labels.

    Per cell: flux = scale*(base + annual sinusoid) + linear/quadratic
    trend + noise, clipped at zero. Noise is Gaussian, or Student-t when
    noise_df >= 3 (monthly flux anomalies are heavy-tailed in practice);
    either way it is scaled to the requested standard deviation. Events
    multiply the clean signal by (1 - suppression) over their span.
    Returns the grid and a boolean (n_cells, n_months) array marking
    injected (cell, month) samples.
    """
    n_cells = spec.n_lat * spec.n_lon
    for i, ev in enumerate(spec.events):
        if not (0 <= ev.cell < n_cells):
            raise SynthSpecError(f"events[{i}]: cell {ev.cell} outside grid of {n_cells} cells")
        if ev.length < 1 or ev.start < 0 or ev.start + ev.length > spec.n_months:
            raise SynthSpecError(
                f"events[{i}]: span [{ev.start}, {ev.start + ev.length}) outside "
                f"[0, {spec.n_months})"
            )
        if not (0.0 < ev.suppression <= 1.0):
            raise SynthSpecError(f"events[{i}]: suppression must be in (0, 1]")

    rng = np.random.default_rng(seed)
    t = np.arange(spec.n_months, dtype=float)
    scale = 1.0 + spec.cell_variation * rng.uniform(-1.0, 1.0, size=n_cells)
    annual = np.sin(2.0 * np.pi * t / 12.0)
    clean = scale[:, None] * (spec.base_flux + spec.annual_amplitude * annual[None, :])
    clean = clean + spec.trend_linear * t[None, :] + spec.trend_quadratic * t[None, :] ** 2

    truth = np.zeros((n_cells, spec.n_months), dtype=bool)
    for ev in spec.events:
        span = slice(ev.start, ev.start + ev.length)
        clean[ev.cell, span] *= 1.0 - ev.suppression
        truth[ev.cell, span] = True

    values = clean
    if spec.noise_std > 0:
        if spec.noise_df == 0:
            noise = rng.normal(0.0, spec.noise_std, size=clean.shape)
        elif spec.noise_df >= 3:
            draws = rng.standard_t(spec.noise_df, size=clean.shape)
            noise = draws * spec.noise_std / np.sqrt(spec.noise_df / (spec.noise_df - 2.0))
        else:
            raise SynthSpecError("noise_df must be 0 (Gaussian) or >= 3")
        values = values + noise
    values = np.maximum(values, 0.0)

    if isinstance(spec.land_frac, (int, float)):
        land = np.full(n_cells, float(spec.land_frac))
    else:
        land = np.asarray(spec.land_frac, dtype=float)
        if land.shape != (n_cells,):
            raise SynthSpecError(f"land_frac list must have {n_cells} entries")

    grid = GridSeries(
        n_lat=spec.n_lat,
        n_lon=spec.n_lon,
        n_months=spec.n_months,
        start_year=spec.start_year,
        start_month=spec.start_month,
        values=values,
        cell_area=np.full(n_cells, float(spec.cell_area)),
        land_frac=land,
    )
    return grid.validate(), truth
