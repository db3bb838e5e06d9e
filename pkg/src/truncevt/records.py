"""Record ages: the maximum of n exponential excess lifetimes.

With scale ``sigma`` and ``n`` deaths, the record has distribution function
``(1 - exp(-x/sigma))**n``.  When the number of deaths is Poisson with mean
``n`` it becomes ``exp(-n exp(-x/sigma))``.  Everything here is in excess
years; subtract the threshold from an age before calling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from truncevt.errors import ParameterDomainError

DEFAULT_GRID_STOP = 25.0
DEFAULT_GRID_STEP = 0.05


def _check(sigma, n, x, n_min=1.0):
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterDomainError(f"sigma must be > 0, got {sigma!r}")
    if not (math.isfinite(n) and n >= n_min) or n <= 0:
        raise ParameterDomainError(f"n must be >= {n_min:g}, got {n!r}")
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ParameterDomainError("x must be >= 0")
    return arr, scalar


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _log_record_cdf(sigma, n, x):
    with np.errstate(divide="ignore"):
        return n * np.log1p(-np.exp(-x / sigma))


def record_cdf(sigma: float, n: float, x):
    """P(record <= x) for ``n`` iid exponential excesses with mean ``sigma``."""
    arr, scalar = _check(sigma, n, x)
    return _out(np.exp(_log_record_cdf(sigma, n, arr)), scalar)


def record_exceedance(sigma: float, n: float, x):
    """P(record > x), computed without cancellation for tiny probabilities."""
    arr, scalar = _check(sigma, n, x)
    return _out(-np.expm1(_log_record_cdf(sigma, n, arr)), scalar)


def outlier_probability(sigma: float, n: float, x):
    """Chance that the largest of ``n`` exponential excesses exceeds ``x``."""
    return record_exceedance(sigma, n, x)


def record_pdf(sigma: float, n: float, x):
    """Density ``n exp(-x/sigma) (1 - exp(-x/sigma))**(n-1) / sigma``."""
    arr, scalar = _check(sigma, n, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_body = (n - 1) * np.log1p(-np.exp(-arr / sigma)) if n != 1 else 0.0
        out = np.exp(math.log(n) - arr / sigma + log_body - math.log(sigma))
    return _out(out, scalar)


def record_cdf_poisson(sigma: float, n: float, x):
    """P(record <= x) when the number of deaths is Poisson with mean ``n > 0``."""
    arr, scalar = _check(sigma, n, x, n_min=0.0)
    return _out(np.exp(-n * np.exp(-arr / sigma)), scalar)


def record_pdf_poisson(sigma: float, n: float, x):
    """Derivative of :func:`record_cdf_poisson`: ``(n/sigma) e^{-x/sigma} exp(-n e^{-x/sigma})``."""
    arr, scalar = _check(sigma, n, x, n_min=0.0)
    q = np.exp(-arr / sigma)
    return _out(n / sigma * q * np.exp(-n * q), scalar)


@dataclass(frozen=True)
class RecordForecast:
    """Scale and expected death count for a forecast window, with 95% intervals."""

    sigma: float
    n: float
    sigma_interval: tuple[float, float] | None = None
    n_interval: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.sigma > 0 or not self.n > 0:
            raise ParameterDomainError("sigma and n must be > 0")
        for name, point, iv in (("sigma", self.sigma, self.sigma_interval), ("n", self.n, self.n_interval)):
            if iv is None:
                continue
            lo, hi = iv
            if not (0 < lo <= point <= hi):
                raise ParameterDomainError(f"{name} interval {iv} does not bracket {point}")

    @property
    def has_intervals(self) -> bool:
        return self.sigma_interval is not None and self.n_interval is not None

    @property
    def lower(self) -> tuple[float, float]:
        return self._bounds()[0]

    @property
    def upper(self) -> tuple[float, float]:
        return self._bounds()[1]

    def _bounds(self):
        if not self.has_intervals:
            raise ParameterDomainError("forecast has no confidence intervals")
        (s_lo, s_hi), (n_lo, n_hi) = self.sigma_interval, self.n_interval
        return (s_lo, n_lo), (s_hi, n_hi)

    @staticmethod
    def joint_confidence(level: float = 0.95) -> float:
        """Coverage of the (sigma, n) rectangle for two independent intervals."""
        return level * level

    def prob_below(self, x: float) -> dict:
        """Record-below-``x`` probability at the point estimate and at the lower bounds.

        Lowering ``sigma`` and ``n`` moves the record down, so the lower bounds
        yield the upper bound on this probability.
        """
        out = {"estimate": record_cdf(self.sigma, self.n, x)}
        if self.has_intervals:
            out["upper_bound"] = record_cdf(*self.lower, x)
        return out

    def prob_above(self, x: float) -> dict:
        """Record-above-``x`` probability at the point estimate and at the upper bounds."""
        out = {"estimate": record_exceedance(self.sigma, self.n, x)}
        if self.has_intervals:
            out["upper_bound"] = record_exceedance(*self.upper, x)
        return out


class ForecastBand(NamedTuple):
    x: np.ndarray
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def default_grid() -> np.ndarray:
    k = int(round(DEFAULT_GRID_STOP / DEFAULT_GRID_STEP))
    return np.arange(k + 1) * DEFAULT_GRID_STEP


def forecast_band(f: RecordForecast, x_grid=None) -> ForecastBand:
    """Record densities at the point estimate and at both interval corners."""
    if not f.has_intervals:
        raise ParameterDomainError("forecast_band needs sigma and n intervals")
    x = default_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    (s_lo, n_lo), (s_hi, n_hi) = f.lower, f.upper
    return ForecastBand(
        x,
        record_pdf(f.sigma, f.n, x),
        record_pdf(s_lo, n_lo, x),
        record_pdf(s_hi, n_hi, x),
    )


def write_band_csv(path, band: ForecastBand, threshold: float = 110.0) -> None:
    """Write ``age, density_point, density_lower, density_upper`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["age", "density_point", "density_lower", "density_upper"])
        for row in zip(band.x, band.point, band.lower, band.upper):
            w.writerow([repr(round(float(threshold + row[0]), 10))] + [repr(float(v)) for v in row[1:]])
