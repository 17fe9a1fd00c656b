"""Export panels: CSV ingestion, rank weights, and return correlators.

A panel holds yearly export values for N products over Y consecutive years.
All downstream statistics are unit-free: rank weights are shares of the world
total and correlators are built from standardized log returns, so the currency
scale of the input never matters.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSeriesError, DimensionError, PanelFormatError

log = logging.getLogger(__name__)

MIN_PRODUCTS = 2
MIN_YEARS = 3


@dataclass(frozen=True)
class ExportPanel:
    """Yearly export values, strictly positive, shape (N, Y).

    ``repairs`` lists the (product_id, year) cells floored during ingestion
    under the "floor" policy; empty for clean input.
    """

    values: np.ndarray
    product_ids: tuple[str, ...]
    base_year: int
    repairs: tuple[tuple[str, int], ...] = ()

    @property
    def n_products(self) -> int:
        return self.values.shape[0]

    @property
    def n_years(self) -> int:
        return self.values.shape[1]

    def years(self) -> np.ndarray:
        return self.base_year + np.arange(self.n_years)


@dataclass(frozen=True)
class InflationSchedule:
    """Yearly inflation rates as fractions; rates[n-1] covers year interval (n-1, n].

    Outside the covered span the schedule extends with its mean rate, which is
    what long-horizon runs use once the historical record runs out.
    """

    rates: np.ndarray
    first_year: int | None = None

    def __post_init__(self) -> None:
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size == 0:
            raise DimensionError("inflation schedule needs a non-empty 1-d rate array")
        object.__setattr__(self, "rates", rates)

    @property
    def n_years(self) -> int:
        return self.rates.size

    @property
    def mean_rate(self) -> float:
        return float(self.rates.mean())

    def rate_at(self, t: float) -> float:
        """Instantaneous rate at model time t (years since panel base year)."""
        if t < 0:
            raise ValueError(f"time {t} precedes the schedule")
        idx = int(np.floor(t))
        if idx >= self.rates.size:
            return self.mean_rate
        return float(self.rates[idx])

    def integral(self, t0: float, t1: float) -> float:
        """Exact integral of the step-function rate over [t0, t1]."""
        if t1 < t0:
            raise ValueError("integral bounds reversed")
        if t0 < 0:
            raise ValueError("integral starts before the schedule")
        edges = np.arange(np.floor(t0) + 1, np.ceil(t1) + 0.5)
        cuts = np.concatenate(([t0], edges[edges < t1], [t1]))
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            total += self.rate_at(a) * (b - a)
        return total


@dataclass(frozen=True)
class PanelStatistics:
    """Derived panel statistics: weights (shares), returns, and correlators."""

    weights: np.ndarray              # (N,) rank weights, sums to 1
    returns: np.ndarray              # (N, Y-1) log returns
    normalized_returns: np.ndarray   # (N, Y-1) standardized log returns
    correlation: np.ndarray          # (N, N) return correlators, unit diagonal


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def load_panel(source: str | Path, policy: str = "reject") -> ExportPanel:
    """Read a panel CSV with header ``product_id,year_<Y0>,...,year_<Yk>``.

    Years must be consecutive. Non-positive cells are handled per ``policy``:

    * ``"reject"``: raise, naming the offending product and year.
    * ``"floor"``: replace with the smallest positive value observed for that
      product; every repair is logged and recorded on the returned panel.

    Raises PanelFormatError for malformed input and DimensionError when the
    panel is smaller than 2 products x 3 years.
    """
    if policy not in ("reject", "floor"):
        raise ValueError(f"unknown ingestion policy {policy!r}")
    path = Path(source)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        years = _parse_panel_header(path, header)
        ids: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(years) + 1:
                raise PanelFormatError(
                    f"{path}:{lineno}: expected {len(years) + 1} fields, got {len(row)}"
                )
            ids.append(row[0].strip())
            try:
                rows.append([float(x) for x in row[1:]])
            except ValueError as exc:
                raise PanelFormatError(f"{path}:{lineno}: {exc}") from None

    if len(ids) != len(set(ids)):
        raise PanelFormatError(f"{path}: duplicate product ids")
    values = np.asarray(rows, dtype=float)
    if len(ids) < MIN_PRODUCTS or len(years) < MIN_YEARS:
        raise DimensionError(
            f"{path}: panel must be at least {MIN_PRODUCTS} products x {MIN_YEARS} years,"
            f" got {len(ids)} x {len(years)}"
        )
    if not np.isfinite(values).all():
        i, n = np.argwhere(~np.isfinite(values))[0]
        raise PanelFormatError(f"{path}: non-finite value for {ids[i]} in {years[n]}")

    repairs: list[tuple[str, int]] = []
    bad = values <= 0.0
    if bad.any():
        if policy == "reject":
            i, n = np.argwhere(bad)[0]
            raise PanelFormatError(
                f"{path}: non-positive value for {ids[i]} in {years[n]}"
                " (policy 'floor' would repair it)"
            )
        for i in range(values.shape[0]):
            row_bad = bad[i]
            if not row_bad.any():
                continue
            positive = values[i][~row_bad]
            if positive.size == 0:
                raise PanelFormatError(
                    f"{path}: product {ids[i]} has no positive values; cannot floor"
                )
            floor = positive.min()
            for n in np.flatnonzero(row_bad):
                repairs.append((ids[i], int(years[n])))
                log.warning(
                    "floored %s in %d: %g -> %g", ids[i], years[n], values[i, n], floor
                )
            values[i, row_bad] = floor

    return ExportPanel(
        values=values,
        product_ids=tuple(ids),
        base_year=int(years[0]),
        repairs=tuple(repairs),
    )


def _parse_panel_header(path: Path, header: list[str]) -> list[int]:
    if not header or header[0].strip() != "product_id":
        raise PanelFormatError(f"{path}:1: first header field must be 'product_id'")
    years = []
    for col in header[1:]:
        col = col.strip()
        if not col.startswith("year_"):
            raise PanelFormatError(f"{path}:1: bad year column {col!r}")
        try:
            years.append(int(col[len("year_"):]))
        except ValueError:
            raise PanelFormatError(f"{path}:1: bad year column {col!r}") from None
    if any(b - a != 1 for a, b in zip(years[:-1], years[1:])):
        raise PanelFormatError(f"{path}:1: year columns must be consecutive")
    return years


def save_panel(panel: ExportPanel, dest: str | Path) -> None:
    """Write a panel back out in the same CSV schema load_panel reads."""
    path = Path(dest)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["product_id"] + [f"year_{y}" for y in panel.years()])
        for pid, row in zip(panel.product_ids, panel.values):
            writer.writerow([pid] + [repr(float(v)) for v in row])


def load_inflation(source: str | Path) -> InflationSchedule:
    """Read an inflation CSV with header ``year,rate_percent`` (consecutive years)."""
    path = Path(source)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        if [c.strip() for c in header] != ["year", "rate_percent"]:
            raise PanelFormatError(f"{path}:1: expected header 'year,rate_percent'")
        years: list[int] = []
        rates: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise PanelFormatError(f"{path}:{lineno}: expected 2 fields")
            try:
                years.append(int(row[0]))
                rates.append(float(row[1]))
            except ValueError as exc:
                raise PanelFormatError(f"{path}:{lineno}: {exc}") from None
    if not years:
        raise PanelFormatError(f"{path}: no rate rows")
    if any(b - a != 1 for a, b in zip(years[:-1], years[1:])):
        raise PanelFormatError(f"{path}: years must be consecutive")
    return InflationSchedule(rates=np.asarray(rates) / 100.0, first_year=years[0])


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def compute_rank_weights(panel: ExportPanel, window: int = 10) -> np.ndarray:
    """Average share of the world total over the last ``window`` years.

    weights[i] = (1/window) * sum over the final years of
    values[i, n] / sum_k values[k, n]; the result sums to 1.
    """
    if not 1 <= window <= panel.n_years:
        raise ValueError(
            f"window must be in [1, {panel.n_years}], got {window}"
        )
    block = panel.values[:, panel.n_years - window:]
    shares = block / block.sum(axis=0, keepdims=True)
    return shares.mean(axis=1)


def compute_correlators(panel: ExportPanel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Log returns, standardized returns, and their correlation matrix.

    Standardization and the correlator average both divide by the number of
    return samples Y-1 (population convention), so the diagonal is exactly 1.
    Returns (returns, normalized_returns, correlation).
    """
    values = panel.values
    returns = np.log(values[:, 1:] / values[:, :-1])
    n_samples = returns.shape[1]
    mean = returns.mean(axis=1, keepdims=True)
    var = np.var(returns, axis=1, keepdims=True)  # ddof=0 over Y-1 samples
    dead = np.flatnonzero(var[:, 0] == 0.0)
    if dead.size:
        raise DegenerateSeriesError(
            f"product {panel.product_ids[dead[0]]} has zero return variance"
        )
    normalized = (returns - mean) / np.sqrt(var)
    correlation = (normalized @ normalized.T) / n_samples
    return returns, normalized, correlation


def compute_statistics(panel: ExportPanel, window: int | None = None) -> PanelStatistics:
    """Bundle rank weights and correlators; window defaults to min(10, Y)."""
    if window is None:
        window = min(10, panel.n_years)
    weights = compute_rank_weights(panel, window)
    returns, normalized, correlation = compute_correlators(panel)
    return PanelStatistics(
        weights=weights,
        returns=returns,
        normalized_returns=normalized,
        correlation=correlation,
    )
