"""Poisson regression of yearly exceedance-death counts on calendar year.

Two links are supported: ``identity`` (``mu_t = a + b t``) and ``log``
(``mu_t = exp(a + b t)``).  The year is centered at the midpoint of the data
range while fitting; reported coefficients and covariances are on the original
year scale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from truncevt.errors import ConvergenceError, InfeasibleForecastError, ParameterDomainError, SchemaError

LINKS = ("identity", "log")
Z95 = 1.96
LOG_LINK_DRAWS = 100_000
DEFAULT_RATIO = 1.76  # persons aged 100-104 in 2000, wide country set / IT+EW+US (HMD)
MAX_NEWTON_ITER = 200


@dataclass(frozen=True)
class YearlyCounts:
    years: tuple[int, ...]
    counts: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        years = tuple(int(y) for y in self.years)
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "counts", counts)
        if len(years) != len(counts):
            raise ParameterDomainError("years and counts differ in length")
        if any(b <= a for a, b in zip(years, years[1:])):
            raise ParameterDomainError("years must be strictly increasing")
        if any(c < 0 for c in counts):
            raise ParameterDomainError("counts must be >= 0")


@dataclass(frozen=True)
class TrendModel:
    """Fitted Poisson trend.

    ``coef`` and ``cov_centered`` hold ``(intercept, slope)`` for the year
    centered at ``center``; :attr:`intercept` and :attr:`covariance` give the
    same on the original scale (linear predictor at year 0).
    """

    link: str
    coef: tuple[float, float]
    cov_centered: np.ndarray
    loglik: float
    center: float
    years: tuple[int, ...] = ()

    @property
    def slope(self) -> float:
        return self.coef[1]

    @property
    def intercept(self) -> float:
        return self.coef[0] - self.coef[1] * self.center

    @property
    def covariance(self) -> np.ndarray:
        J = np.array([[1.0, -self.center], [0.0, 1.0]])
        cov = J @ self.cov_centered @ J.T
        return 0.5 * (cov + cov.T)

    def linear_predictor(self, years) -> np.ndarray:
        t = np.asarray(years, dtype=float) - self.center
        return self.coef[0] + self.coef[1] * t

    def mean(self, years) -> np.ndarray:
        eta = self.linear_predictor(years)
        return np.exp(eta) if self.link == "log" else eta

    @property
    def se_slope(self) -> float:
        return math.sqrt(self.cov_centered[1, 1])

    @property
    def slope_ci(self) -> tuple[float, float]:
        return (self.slope - Z95 * self.se_slope, self.slope + Z95 * self.se_slope)

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "intercept": float(self.intercept),
            "slope": float(self.slope),
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "center": float(self.center),
            "intercept_centered": float(self.coef[0]),
            "covariance_centered": [[float(v) for v in row] for row in self.cov_centered],
            "loglik": float(self.loglik),
            "years": [int(y) for y in self.years],
        }


class CountEstimate(NamedTuple):
    estimate: float
    low: float
    high: float
    se: float | None = None

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "low": self.low, "high": self.high, "se": self.se}


def _poisson_loglik(counts, mu):
    # log(N!) dropped; the constant does not affect estimates or covariances.
    # A zero intensity is admissible only where the count is zero.
    if np.any(mu < 0) or np.any((mu == 0) & (counts > 0)):
        return -math.inf
    pos = counts > 0
    return math.fsum(counts[pos] * np.log(mu[pos])) - math.fsum(mu)


def _edge_fits(s, N):
    # Identity link: the feasible set is bounded by mu = 0 at the first or the
    # last year.  On either edge mu = b (s - s_j) and the MLE of b is closed form.
    out = []
    for j in (0, -1):
        if N[j] == 0:
            d = s - s[j]
            b = N.sum() / d.sum()
            out.append((np.array([-b * s[j], b]), b * d))
    return out


def _design(data: YearlyCounts):
    years = np.asarray(data.years, dtype=float)
    center = 0.5 * (years[0] + years[-1])
    return years - center, np.asarray(data.counts, dtype=float), center


def _score_hessian(link, s, N, theta):
    eta = theta[0] + theta[1] * s
    X = np.column_stack([np.ones_like(s), s])
    if link == "log":
        mu = np.exp(eta)
        grad = X.T @ (N - mu)
        hess = -(X.T * mu) @ X
    else:
        mu = eta
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(N > 0, N / mu, 0.0)
            w = np.where(N > 0, N / mu**2, 0.0)
        grad = X.T @ (r - 1.0)
        hess = -(X.T * w) @ X
    return mu, grad, hess


def fit_trend(data: YearlyCounts, link: str = "identity") -> TrendModel:
    """Maximum likelihood Poisson regression by damped Newton iterations.

    Identity-link steps are halved until every fitted intensity stays
    positive, so the likelihood itself acts as the barrier.  When a zero
    count sits at the first or last year the maximum can lie on the edge
    where that year's intensity is zero; both edges are checked in closed
    form and the best admissible fit is returned.

    Raises
    ------
    ParameterDomainError
        Fewer than three years or all counts zero.
    ConvergenceError
        Newton iterations did not settle.
    """
    if link not in LINKS:
        raise ParameterDomainError(f"link must be one of {LINKS}, got {link!r}")
    if len(data.years) < 3:
        raise ParameterDomainError("need at least 3 years of counts")
    if sum(data.counts) == 0:
        raise ParameterDomainError("counts are all zero")
    s, N, center = _design(data)
    if np.ptp(s) == 0:
        raise ParameterDomainError("degenerate design")
    mean = N.mean()
    theta = np.array([math.log(mean), 0.0]) if link == "log" else np.array([mean, 0.0])

    def loglik(th):
        eta = th[0] + th[1] * s
        return _poisson_loglik(N, np.exp(eta) if link == "log" else eta)

    edges = _edge_fits(s, N) if link == "identity" else []
    try:
        theta, ll = _newton(link, s, N, theta, loglik)
    except ConvergenceError:
        if not edges:
            raise
        ll = -math.inf
    for cand, mu in edges:
        ll_c = _poisson_loglik(N, mu)
        if ll_c > ll:
            theta, ll = cand, ll_c
    return _model(link, s, N, theta, ll, center, data.years)


def _newton(link, s, N, theta, loglik):
    ll = loglik(theta)
    for _ in range(MAX_NEWTON_ITER):
        _, grad, hess = _score_hessian(link, s, N, theta)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError as exc:
            raise ParameterDomainError("singular information in trend fit") from exc
        t = 1.0
        while True:
            cand = theta + t * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 or t < 1e-12:
                break
            t *= 0.5
        if not math.isfinite(ll_new):
            raise ConvergenceError("no feasible Newton step", best=theta)
        theta, ll_old, ll = cand, ll, ll_new
        if np.max(np.abs(t * step)) < 1e-10 * (1.0 + np.max(np.abs(theta))) and abs(ll - ll_old) < 1e-10:
            break
    else:
        raise ConvergenceError("Newton iterations did not converge", best=theta)
    return theta, ll


def _model(link, s, N, theta, ll, center, years):
    _, _, hess = _score_hessian(link, s, N, theta)
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError as exc:
        raise ParameterDomainError("singular information in trend fit") from exc
    return TrendModel(
        link=link,
        coef=(float(theta[0]), float(theta[1])),
        cov_centered=0.5 * (cov + cov.T),
        loglik=ll,
        center=center,
        years=years,
    )


def forecast_count(m: TrendModel, window: tuple[int, int], seed: int = 0, draws: int = LOG_LINK_DRAWS) -> CountEstimate:
    """Expected number of deaths over the inclusive year range ``window``.

    The identity-link interval uses the delta method (the sum is linear in
    the coefficients).  The log-link interval takes the 2.5% and 97.5%
    percentiles of the sum over ``draws`` coefficient vectors drawn from the
    asymptotic normal law with the given seed.

    Raises
    ------
    InfeasibleForecastError
        If an identity-link intensity is nonpositive inside the window.
    """
    first, last = window
    if last < first:
        return CountEstimate(0.0, 0.0, 0.0, 0.0)
    years = np.arange(int(first), int(last) + 1, dtype=float)
    s = years - m.center
    theta, cov = np.asarray(m.coef), m.cov_centered
    if m.link == "identity":
        mu = theta[0] + theta[1] * s
        if np.any(mu <= 0):
            bad = years[mu <= 0]
            raise InfeasibleForecastError(f"identity-link intensity <= 0 in years {bad.astype(int).tolist()}")
        g = np.array([s.size, s.sum()])
        est = float(g @ theta)
        se = math.sqrt(float(g @ cov @ g))
        return CountEstimate(est, est - Z95 * se, est + Z95 * se, se)
    est = float(np.sum(np.exp(theta[0] + theta[1] * s)))
    rng = np.random.default_rng(seed)
    coef = rng.multivariate_normal(theta, cov, size=draws, method="cholesky")
    totals = np.exp(coef[:, :1] + coef[:, 1:2] * s[None, :]).sum(axis=1)
    lo, hi = np.percentile(totals, [2.5, 97.5])
    return CountEstimate(est, float(lo), float(hi), float(np.std(totals, ddof=1)))


def scale_count(est: CountEstimate, ratio: float = DEFAULT_RATIO) -> CountEstimate:
    """Multiply an estimate and its interval by ``ratio`` (no rounding)."""
    if not ratio > 0:
        raise ParameterDomainError("ratio must be > 0")
    se = None if est.se is None else est.se * ratio
    return CountEstimate(est.estimate * ratio, est.low * ratio, est.high * ratio, se)


def fitted_rows(data: YearlyCounts, models: Sequence[TrendModel]):
    """``(year, observed, fitted_<link>...)`` rows for plotting the regression lines."""
    for y, c in zip(data.years, data.counts):
        yield [y, c] + [float(m.mean([y])[0]) for m in models]


def write_fitted_csv(path, data: YearlyCounts, models: Sequence[TrendModel]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "observed"] + [f"fitted_{m.link}" for m in models])
        for row in fitted_rows(data, models):
            w.writerow(row[:2] + [repr(v) for v in row[2:]])


def load_yearly_counts(path) -> dict[str, YearlyCounts]:
    """Read ``year,count,label`` CSV rows into one :class:`YearlyCounts` per label."""
    rows: dict[str, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"year", "count"} <= set(reader.fieldnames):
            raise SchemaError("yearly counts CSV needs 'year' and 'count' columns")
        for line, row in enumerate(reader, start=2):
            try:
                rows.setdefault(row.get("label") or "", []).append((int(row["year"]), int(row["count"])))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"line {line}: {exc}") from exc
    out = {}
    for label, pairs in rows.items():
        pairs.sort()
        out[label] = YearlyCounts(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), label)
    return out

