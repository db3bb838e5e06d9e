"""Truncated likelihood for lifetimes sampled by death date.

A country contributes every person who reached the threshold age at calendar
time ``t`` and died at ``t + x`` inside its death window ``[b, e)``.  Conditional
on ``t``, the excess ``x`` is then restricted to ``[max(b - t, 0), e - t)``, and
its likelihood contribution is

    f(x) / (F(e - t) - F(max(b - t, 0)))

which covers both the person who crossed the threshold before ``b`` (left and
right truncation) and the one who crossed it inside the window (right
truncation only, since ``F`` vanishes below 0).

The window is half-open: a death exactly at ``e`` is outside it.  All times are
fractional years.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from truncevt.errors import DegenerateWindowError, InconsistencyError, ParameterDomainError
from truncevt.evd import GpParams, _logpdf, _logsf


@dataclass(frozen=True)
class SamplingWindow:
    """Death-date interval ``[begin, end)``; either side may be infinite."""

    begin: float
    end: float

    def __post_init__(self):
        if math.isnan(self.begin) or math.isnan(self.end):
            raise ParameterDomainError("window bounds must not be NaN")
        if not self.begin < self.end:
            raise ParameterDomainError(f"window begin {self.begin} must precede end {self.end}")

    @classmethod
    def unbounded(cls) -> "SamplingWindow":
        return cls(-math.inf, math.inf)

    def contains(self, death_time: float) -> bool:
        return self.begin <= death_time < self.end

    def shifted(self, offset: float) -> "SamplingWindow":
        return SamplingWindow(self.begin + offset, self.end + offset)


@dataclass(frozen=True)
class TruncatedObservation:
    """One sampled lifetime: threshold-crossing time, excess and window.

    ``record_id``, ``country`` and ``gender`` are optional
    labels carried through from ingestion; they do not enter the likelihood.
    """

    crossing_time: float
    excess: float
    window: SamplingWindow
    record_id: str | None = field(default=None, compare=False)
    country: str | None = field(default=None, compare=False)
    gender: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.crossing_time) and math.isfinite(self.excess)):
            raise InconsistencyError("crossing_time and excess must be finite")
        if self.excess < 0:
            raise InconsistencyError(f"negative excess {self.excess}")
        if not self.window.contains(self.death_time):
            raise InconsistencyError(
                f"death at {self.death_time} outside window [{self.window.begin}, {self.window.end})"
            )

    @property
    def death_time(self) -> float:
        return self.crossing_time + self.excess

    @property
    def left_truncated(self) -> bool:
        """True when the threshold was crossed at or before the window opened."""
        return self.crossing_time <= self.window.begin

    @property
    def lower_bound(self) -> float:
        """Smallest excess that would have been sampled, ``max(b - t, 0)``."""
        return max(self.window.begin - self.crossing_time, 0.0)

    @property
    def upper_bound(self) -> float:
        """Supremum of sampled excesses, ``e - t``."""
        return self.window.end - self.crossing_time


class TruncatedSample:
    """Array view of a list of observations, for fast repeated evaluation."""

    __slots__ = ("excess", "lower", "upper", "_lower_active", "_upper_active")

    def __init__(self, excess, lower, upper):
        self.excess = np.asarray(excess, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if not (self.excess.shape == self.lower.shape == self.upper.shape) or self.excess.ndim != 1:
            raise ParameterDomainError("excess, lower and upper must be 1-d arrays of equal length")
        self._lower_active = bool(np.any(self.lower > 0))
        self._upper_active = bool(np.any(np.isfinite(self.upper)))

    @classmethod
    def from_observations(cls, observations: Iterable[TruncatedObservation]) -> "TruncatedSample":
        obs = list(observations)
        return cls(
            [o.excess for o in obs],
            [o.lower_bound for o in obs],
            [o.upper_bound for o in obs],
        )

    def __len__(self):
        return self.excess.size

    def untruncated(self) -> "TruncatedSample":
        n = len(self)
        return TruncatedSample(self.excess, np.zeros(n), np.full(n, np.inf))

    def scaled(self, factor: float) -> "TruncatedSample":
        return TruncatedSample(self.excess * factor, self.lower * factor, self.upper * factor)

    def concat(self, other: "TruncatedSample") -> "TruncatedSample":
        return TruncatedSample(
            np.concatenate([self.excess, other.excess]),
            np.concatenate([self.lower, other.lower]),
            np.concatenate([self.upper, other.upper]),
        )

    def log_contributions(self, p: GpParams) -> np.ndarray:
        """Per-observation log contributions; ``nan`` marks a degenerate window."""
        return _log_contributions(self, p.gamma, p.sigma)


def as_sample(sample) -> TruncatedSample:
    if isinstance(sample, TruncatedSample):
        return sample
    return TruncatedSample.from_observations(sample)


def untruncated(observations: Sequence[TruncatedObservation]) -> list[TruncatedObservation]:
    """Copies of the observations with an unbounded window (naive analysis)."""
    wide = SamplingWindow.unbounded()
    return [replace(o, window=wide) for o in observations]


def _log_norm(gamma, sigma, lower, upper, lower_active=True, upper_active=True):
    """log(F(upper) - F(lower)) = log S(lower) + log(1 - S(upper)/S(lower))."""
    log_s_lo = _logsf(gamma, sigma, lower) if lower_active else 0.0
    if not upper_active:
        return log_s_lo + np.zeros_like(upper)
    log_s_hi = _logsf(gamma, sigma, upper)
    with np.errstate(invalid="ignore", divide="ignore"):
        diff = log_s_hi - log_s_lo
        # diff >= 0 means no mass between the bounds; nan arises from -inf - -inf
        tail = np.where(diff < 0, np.log(-np.expm1(np.minimum(diff, 0.0))), np.nan)
    return np.where(np.isneginf(log_s_hi) & np.isfinite(log_s_lo), log_s_lo, log_s_lo + tail)


def _log_contributions(s: TruncatedSample, gamma: float, sigma: float) -> np.ndarray:
    norm = _log_norm(gamma, sigma, s.lower, s.upper, s._lower_active, s._upper_active)
    return _logpdf(gamma, sigma, s.excess) - norm


def log_contribution(obs: TruncatedObservation, p: GpParams) -> float:
    """Log-likelihood contribution of one observation.

    Returns ``-inf`` if the excess lies outside the support of ``p``.

    Raises
    ------
    DegenerateWindowError
        If ``p`` puts no mass on the excesses the window admits.
    """
    lower = np.array([obs.lower_bound])
    upper = np.array([obs.upper_bound])
    norm = _log_norm(p.gamma, p.sigma, lower, upper)[0]
    if not np.isfinite(norm):
        raise DegenerateWindowError(
            f"window [{obs.lower_bound}, {obs.upper_bound}) has zero probability under {p}"
        )
    return float(_logpdf(p.gamma, p.sigma, np.array([obs.excess]))[0] - norm)


def total_loglik(sample, p: GpParams) -> float:
    """Sum of log contributions over a sample (exact-rounding summation).

    ``sample`` is a sequence of :class:`TruncatedObservation` or a
    :class:`TruncatedSample`.  Returns ``-inf`` when any contribution is
    undefined, so optimizers can treat the point as infeasible.
    """
    s = as_sample(sample)
    if len(s) == 0:
        raise ParameterDomainError("empty sample")
    return _sum_loglik(s, p.gamma, p.sigma)


def _sum_loglik(s: TruncatedSample, gamma: float, sigma: float) -> float:
    terms = _log_contributions(s, gamma, sigma)
    if not np.all(np.isfinite(terms)):
        return -math.inf
    return math.fsum(terms)
