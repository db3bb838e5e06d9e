"""Synthetic data under window sampling schemes and estimator calibration studies.

Threshold crossings arrive as a Poisson process on an arrival span with
intensity ``rate * (1 + growth * (t - start))``; excess lifetimes are drawn from
the scenario's GP law.  A scheme then decides which simulated lives enter the
sample:

``death-in-window``
    death time in ``[b, e)`` (the usual registry scheme).
``alive-at-b-dead-by-e``
    threshold crossed by ``b``, alive at ``b`` and dead before ``e``.

Replications draw independent streams from ``numpy.random.SeedSequence(seed)
.spawn(reps)``, so rep ``i`` sees the same numbers no matter how many reps run
or in which order they are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from truncevt.errors import BudgetError, ParameterDomainError, TruncEVTError
from truncevt.evd import GpParams, gp_quantile
from truncevt.trunclik import SamplingWindow, TruncatedObservation, TruncatedSample

SCHEMES = ("death-in-window", "alive-at-b-dead-by-e")
DRAW_BUDGET_FACTOR = 1000
#: Lives crossing the threshold this long before ``b`` are (numerically) all dead by ``b``.
MAX_BURN_IN = 200.0


@dataclass(frozen=True)
class SchemeScenario:
    """A simulation setting.

    ``growth`` is the relative yearly increase of the crossing intensity
    (0 for a constant rate).  ``arrival_span`` defaults to a burn-in period
    before the window, long enough that earlier crossings cannot survive into
    it, up to the window end.
    """

    true_params: GpParams
    window: SamplingWindow
    scheme: str = "death-in-window"
    rate: float = 50.0
    growth: float = 0.0
    arrival_span: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterDomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not self.rate > 0:
            raise ParameterDomainError("arrival rate must be > 0")
        if not self.growth >= 0:
            raise ParameterDomainError("growth must be >= 0")
        start, stop = self.span
        if not (math.isfinite(start) and math.isfinite(stop) and start < stop):
            raise ParameterDomainError(f"invalid arrival span {(start, stop)}")

    @property
    def span(self) -> tuple[float, float]:
        if self.arrival_span is not None:
            return tuple(self.arrival_span)
        b, e = self.window.begin, self.window.end
        if not math.isfinite(b):
            if math.isfinite(e):
                raise ParameterDomainError("a window open on the left needs an explicit arrival_span")
            return (0.0, 1.0)
        burn_in = min(float(gp_quantile(self.true_params, 1 - 1e-12)), MAX_BURN_IN)
        stop = e if math.isfinite(e) else b + burn_in
        if self.scheme == "alive-at-b-dead-by-e":
            stop = b
        return (b - burn_in, stop)

    @property
    def expected_arrivals(self) -> float:
        start, stop = self.span
        d = stop - start
        return self.rate * (d + 0.5 * self.growth * d * d)

    def with_seed(self, seed) -> "SchemeScenario":
        return SchemeScenario(
            self.true_params, self.window, self.scheme, self.rate, self.growth, self.arrival_span, seed
        )


def _arrival_times(s: SchemeScenario, u: np.ndarray) -> np.ndarray:
    """Inverse-cdf transform of uniforms to crossing times on the arrival span."""
    start, stop = s.span
    d = stop - start
    g = s.growth
    v = u * (d + 0.5 * g * d * d)
    tau = 2.0 * v / (1.0 + np.sqrt(1.0 + 2.0 * g * v))
    return start + np.minimum(tau, d)


def _included(s: SchemeScenario, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    b, e = s.window.begin, s.window.end
    death = t + x
    if s.scheme == "death-in-window":
        return (death >= b) & (death < e)
    return (t <= b) & (death >= b) & (death < e)


def _draw(s: SchemeScenario, rng: np.random.Generator, size: int):
    t = _arrival_times(s, rng.random(size))
    x = np.asarray(gp_quantile(s.true_params, rng.random(size)), dtype=float)
    return t, x


def simulate_arrays(s: SchemeScenario, target_count: int | None, seed=None):
    """Crossing times and excesses of included lives, as two arrays.

    With ``target_count`` the first that many included lives (in draw order)
    are returned; with ``None`` a Poisson number of arrivals with mean
    :attr:`SchemeScenario.expected_arrivals` is simulated and all included
    lives are kept.
    """
    rng = np.random.default_rng(s.seed if seed is None else seed)
    if target_count is None:
        t, x = _draw(s, rng, int(rng.poisson(s.expected_arrivals)))
        keep = _included(s, t, x)
        return t[keep], x[keep]
    if target_count < 0:
        raise ParameterDomainError("target_count must be >= 0")
    if target_count == 0:
        return np.empty(0), np.empty(0)
    budget = DRAW_BUDGET_FACTOR * target_count
    batch = max(4 * target_count, 1024)
    ts, xs, found, drawn = [], [], 0, 0
    while found < target_count:
        size = min(batch, budget - drawn)
        if size <= 0:
            raise BudgetError(
                f"only {found} of {target_count} lives included after {drawn} candidate draws"
            )
        t, x = _draw(s, rng, size)
        drawn += size
        keep = _included(s, t, x)
        ts.append(t[keep])
        xs.append(x[keep])
        found += int(keep.sum())
    return np.concatenate(ts)[:target_count], np.concatenate(xs)[:target_count]


def simulate_scheme(s: SchemeScenario, target_count: int | None, seed=None) -> list[TruncatedObservation]:
    """Simulated observations under the scenario's scheme; deterministic given the seed."""
    t, x = simulate_arrays(s, target_count, seed)
    w = s.window
    return [TruncatedObservation(float(ti), float(xi), w) for ti, xi in zip(t, x)]


def simulate_sample(s: SchemeScenario, target_count: int | None, seed=None) -> TruncatedSample:
    """Like :func:`simulate_scheme` but packed for likelihood evaluation."""
    t, x = simulate_arrays(s, target_count, seed)
    lower = np.maximum(s.window.begin - t, 0.0)
    upper = s.window.end - t
    return TruncatedSample(x, lower, upper)


# --- labeled fixture scenarios -----------------------------------------------

#: Registry whose threshold crossings ramp up linearly from three years before a
#: six-year death window.  A fixture setting (not taken from real data) under
#: which naive GP fits show the apparent finite lifespan limit.
RAMP_SCENARIO = SchemeScenario(
    true_params=GpParams(0.0, 1.34),
    window=SamplingWindow(2000.0, 2006.0),
    scheme="death-in-window",
    rate=1.0,
    growth=100.0,
    arrival_span=(1997.0, 2006.0),
)

#: Persons alive at ``b`` who die within 3.5 years, constant crossing rate.
ALIVE_AT_B_SCENARIO = SchemeScenario(
    true_params=GpParams(0.0, 1.34),
    window=SamplingWindow(2000.0, 2003.5),
    scheme="alive-at-b-dead-by-e",
)

#: Stationary registry with a long window; the naive analysis is nearly unbiased.
STATIONARY_SCENARIO = SchemeScenario(
    true_params=GpParams(0.0, 1.34),
    window=SamplingWindow(1980.0, 2000.0),
)


def rep_generators(seed, reps: int) -> list[np.random.Generator]:
    """Independent per-replication generators from one root seed."""
    return [np.random.default_rng(ss) for ss in np.random.SeedSequence(seed).spawn(reps)]


# --- bias study ----------------------------------------------------------------


@dataclass
class BiasStudy:
    """Per-replication estimates from :func:`bias_study`."""

    naive_gamma: np.ndarray
    truncated_gamma: np.ndarray
    exp_sigma: np.ndarray
    exp_ci_low: np.ndarray
    exp_ci_high: np.ndarray
    true_sigma: float

    @property
    def median_naive_gamma(self) -> float:
        return float(np.median(self.naive_gamma))

    @property
    def median_truncated_gamma(self) -> float:
        return float(np.median(self.truncated_gamma))

    @property
    def mean_sigma(self) -> float:
        return float(np.mean(self.exp_sigma))

    @property
    def sigma_coverage(self) -> float:
        return float(np.mean((self.exp_ci_low <= self.true_sigma) & (self.true_sigma <= self.exp_ci_high)))

    @property
    def fraction_truncated_closer(self) -> float:
        """Share of replications with ``|gamma_truncated| < |gamma_naive|``."""
        return float(np.mean(np.abs(self.truncated_gamma) < np.abs(self.naive_gamma)))

    def summary(self) -> dict:
        return {
            "reps": int(self.exp_sigma.size),
            "median_naive_gamma": self.median_naive_gamma,
            "median_truncated_gamma": self.median_truncated_gamma,
            "mean_sigma": self.mean_sigma,
            "sigma_coverage": self.sigma_coverage,
            "fraction_truncated_closer": self.fraction_truncated_closer,
        }


def bias_study(s: SchemeScenario, n: int = 500, reps: int = 200, seed=0, naive: bool = True) -> BiasStudy:
    """Fit naive GP, truncated GP and truncated exponential models to replicated samples."""
    from truncevt.fit import fit_gp

    naive_g, trunc_g, sig, lo, hi = [], [], [], [], []
    for rng in rep_generators(seed, reps):
        sample = simulate_sample(s, n, rng)
        naive_g.append(fit_gp(sample.untruncated(), "gp").gamma if naive else math.nan)
        trunc_g.append(fit_gp(sample, "gp").gamma)
        e = fit_gp(sample, "exponential")
        sig.append(e.sigma)
        ci = e.ci_sigma or (math.nan, math.nan)
        lo.append(ci[0])
        hi.append(ci[1])
    arr = np.asarray
    return BiasStudy(arr(naive_g), arr(trunc_g), arr(sig), arr(lo), arr(hi), s.true_params.sigma)


# --- power --------------------------------------------------------------------


@dataclass(frozen=True)
class PowerResult:
    power: float
    se: float
    reps: int
    level: float
    delta: float
    survival_base: float
    survival_new: float
    sigma_base: float
    sigma_new: float
    failures: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def power_survival_increase(
    sigma_base: float,
    n: int,
    delta: float,
    level: float = 0.05,
    reps: int = 2000,
    seed=0,
    scenario: SchemeScenario | None = None,
) -> PowerResult:
    """Rejection rate of the two-sample Wald test for a raised yearly survival.

    Each replication simulates a baseline data set with ``sigma_base`` and a new
    one of the same size whose yearly survival ``exp(-1/sigma)`` is larger by
    ``delta``, fits both exponential models and tests equality of ``sigma``.
    Without ``scenario`` the samples are untruncated; otherwise they follow the
    scenario's sampling scheme.  The same seed reuses the same uniforms for
    every ``delta``, which keeps power curves smooth in ``delta``.
    """
    from truncevt.fit import fit_gp
    from truncevt.hypotest import wald_test_halves

    if not delta >= 0:
        raise ParameterDomainError("delta must be >= 0")
    if not 0 < level < 1:
        raise ParameterDomainError("level must lie in (0, 1)")
    if reps < 1:
        raise ParameterDomainError("reps must be >= 1")
    s0 = math.exp(-1.0 / sigma_base)
    s1 = s0 + delta
    if s1 >= 1:
        raise ParameterDomainError(f"implied yearly survival {s1} >= 1")
    sigma_new = -1.0 / math.log(s1)

    def draw(sigma, rng):
        if scenario is None:
            x = np.asarray(gp_quantile(GpParams(0.0, sigma), rng.random(n)))
            return TruncatedSample(x, np.zeros(n), np.full(n, np.inf))
        sc = SchemeScenario(GpParams(0.0, sigma), scenario.window, scenario.scheme,
                            scenario.rate, scenario.growth, scenario.arrival_span)
        return simulate_sample(sc, n, rng)

    rejections = failures = 0
    for rng in rep_generators(seed, reps):
        base_rng, new_rng = (np.random.default_rng(ss) for ss in rng.bit_generator.seed_seq.spawn(2))
        try:
            report = wald_test_halves(
                fit_gp(draw(sigma_base, base_rng), "exponential"),
                fit_gp(draw(sigma_new, new_rng), "exponential"),
            )
        except TruncEVTError:
            failures += 1
            continue
        rejections += report.p_value < level
    done = reps - failures
    power = rejections / done if done else math.nan
    se = math.sqrt(power * (1 - power) / done) if done else math.nan
    return PowerResult(power, se, reps, level, delta, s0, s1, sigma_base, sigma_new, failures)


# --- calibration --------------------------------------------------------------


@dataclass
class CalibrationSummary:
    p_values: np.ndarray
    failures: int
    reps: int

    @property
    def ks(self) -> float | None:
        """Kolmogorov-Smirnov distance of the p-values from U(0, 1)."""
        if self.p_values.size < 2:
            return None
        return float(stats.kstest(self.p_values, "uniform").statistic)

    def size(self, level: float = 0.05) -> float:
        return float(np.mean(self.p_values < level))

    def summary(self) -> dict:
        return {
            "reps": self.reps,
            "failures": self.failures,
            "ks": self.ks,
            "size_05": self.size(0.05) if self.p_values.size else None,
            "mean_p": float(np.mean(self.p_values)) if self.p_values.size else None,
        }


def null_generator(s: SchemeScenario, n: int, groups: int = 1) -> Callable:
    """Generator of null data: one sample, or ``groups`` labeled samples, from ``s``."""
    if groups == 1:
        return lambda rng: simulate_sample(s, n, rng)
    labels = [f"g{i + 1}" for i in range(groups)]
    return lambda rng: {label: simulate_sample(s, n, rng) for label in labels}


def _named_tests() -> dict[str, Callable]:
    from truncevt import hypotest

    return {
        "lr_exponential": hypotest.lr_test_exponential,
        "lr_groups_exp": lambda d: hypotest.lr_test_groups(d, "exponential"),
        "lr_groups_gp": lambda d: hypotest.lr_test_groups(d, "gp"),
    }


def calibration_study(generator: Callable, test, reps: int, seed=0, failure_budget: float = 0.01) -> CalibrationSummary:
    """p-values of ``test`` over ``reps`` data sets from ``generator``.

    ``test`` is a callable returning a report with ``p_value`` (or a float), or
    the name of a built-in test (``lr_exponential``, ``lr_groups_exp``,
    ``lr_groups_gp``).  Failed replications are skipped and counted.

    Raises
    ------
    BudgetError
        If more than ``failure_budget`` of the replications fail.
    """
    if isinstance(test, str):
        test = _named_tests()[test]
    pvals, failures = [], 0
    for rng in rep_generators(seed, reps):
        try:
            out = test(generator(rng))
        except TruncEVTError:
            failures += 1
            continue
        pvals.append(out if isinstance(out, float) else out.p_value)
    if failures > failure_budget * reps:
        raise BudgetError(f"{failures} of {reps} replications failed")
    return CalibrationSummary(np.asarray(pvals, dtype=float), failures, reps)


# --- yearly counts ------------------------------------------------------------


def simulate_yearly_counts(years: Sequence[int], mean_fn: Callable[[np.ndarray], np.ndarray], seed=None, label: str = ""):
    """Poisson counts with mean ``mean_fn(years)``."""
    from truncevt.trend import YearlyCounts

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    yrs = np.asarray(list(years), dtype=int)
    mu = np.asarray(mean_fn(yrs.astype(float)), dtype=float)
    return YearlyCounts(tuple(yrs.tolist()), tuple(rng.poisson(mu).tolist()), label)


# --- synthetic validated-lifespan fixture ---------------------------------------

#: Level-A lives per country as (women, men) after exclusions.  Group totals
#: follow the usual supercentenarian table (e.g. North Europe 79/5, World
#: 507/59); the split into countries is a fixture choice.
FIXTURE_COMPOSITION = {
    "DK": (20, 2),
    "DE": (14, 1),
    "GB-EW": (45, 2),
    "IT": (40, 8),
    "FR": (42, 7),
    "ES": (15, 2),
    "US": (240, 25),
    "CA-QC": (32, 3),
    "JP": (55, 9),
    "AU": (4, 0),
}
#: Level-B lives per country (women, men); 32 in total.
FIXTURE_LEVEL_B = {"BE": (6, 1), "FI": (5, 0), "NO": (5, 1), "SE": (8, 1), "CH": (5, 0)}
#: Level-A lives the default exclusion rules remove, with the death-date span used.
FIXTURE_EXCLUDED = {
    "US": (6, ("2000-01-01", "2004-01-01")),
    "JP": (4, ("1996-01-01", "1997-01-01")),
    "JP-late": (4, ("2003-09-01", "2006-01-01")),
}
#: Countries that only publish the year of death.
YEAR_ONLY_COUNTRIES = ("US",)
FIXTURE_SEED = 20176
FIXTURE_SIGMA = 1.34
FIXTURE_THRESHOLD = 110.0


def _fixture_lives(rng, country, gender, validation, count, begin, end, used, ids):
    import datetime as dt

    from truncevt.dataio import LifespanRecord, date_to_time, time_to_date

    b, e = date_to_time(begin), date_to_time(end)
    min_days = math.ceil(FIXTURE_THRESHOLD * 365.25)
    out, budget = [], DRAW_BUDGET_FACTOR * max(count, 1)
    while len(out) < count:
        budget -= 1
        if budget < 0:
            raise BudgetError(f"cannot place {count} distinct deaths in {country} {begin}..{end}")
        t = rng.uniform(b - 30.0, e)
        x = rng.exponential(FIXTURE_SIGMA)
        birth = time_to_date(t - FIXTURE_THRESHOLD)
        death = time_to_date(t + x)
        days = (death - birth).days
        # keep two days away from the window edges so date rounding never matters
        if days < min_days or not (begin + dt.timedelta(days=2) <= death < end - dt.timedelta(days=2)):
            continue
        if death in used:
            continue
        used.add(death)
        code = country.split("-late")[0]
        ids[code] = ids.get(code, 0) + 1
        exact = code not in YEAR_ONLY_COUNTRIES
        out.append(
            LifespanRecord(
                id=f"{code}-{ids[code]:04d}",
                country=code,
                gender=gender,
                validation=validation,
                birth_date=birth,
                death_year=death.year,
                age_at_death_days=days,
                death_date=death if exact else None,
            )
        )
    return out


def idl_fixture_records(seed=FIXTURE_SEED, config_path=None):
    """Synthetic validated-lifespan records with a fixed, known composition.

    Lives cross the threshold uniformly over a span starting 30 years before
    each country's window, have exponential excesses with scale 1.34, and are
    kept when the death date falls in the window.  Death dates are distinct
    apart from year-only countries.  Deterministic given ``seed``.
    """
    import datetime as dt

    from truncevt.dataio import default_config_path, load_group_config

    cfg = load_group_config(config_path or default_config_path())
    rng = np.random.default_rng(seed)
    used, ids, records = set(), {}, []
    plan = []
    for country, (w, m) in FIXTURE_COMPOSITION.items():
        begin, end = cfg.window_dates[country]
        plan += [(country, "female", "A", w, begin, end), (country, "male", "A", m, begin, end)]
    for country, (w, m) in FIXTURE_LEVEL_B.items():
        begin, end = cfg.window_dates[country]
        plan += [(country, "female", "B", w, begin, end), (country, "male", "B", m, begin, end)]
    for country, (count, (lo, hi)) in FIXTURE_EXCLUDED.items():
        plan.append((country, "female", "A", count, dt.date.fromisoformat(lo), dt.date.fromisoformat(hi)))
    for country, gender, validation, count, begin, end in plan:
        records += _fixture_lives(rng, country, gender, validation, count, begin, end, used, ids)
    return records


def idl_fixture_manifest(config_path=None) -> dict:
    """Expected composition of :func:`idl_fixture_records`, derived from the tables above."""
    from truncevt.dataio import default_config_path, load_group_config

    cfg = load_group_config(config_path or default_config_path())
    groups = {}
    for name, g in cfg.groups.items():
        groups[name] = {
            "women": sum(FIXTURE_COMPOSITION.get(c, (0, 0))[0] for c in g.countries),
            "men": sum(FIXTURE_COMPOSITION.get(c, (0, 0))[1] for c in g.countries),
            "level_b": sum(sum(FIXTURE_LEVEL_B.get(c, (0, 0))) for c in g.countries),
        }
    n_a = sum(map(sum, FIXTURE_COMPOSITION.values()))
    n_b = sum(map(sum, FIXTURE_LEVEL_B.values()))
    n_x = sum(c for c, _ in FIXTURE_EXCLUDED.values())
    return {
        "seed": FIXTURE_SEED,
        "sigma": FIXTURE_SIGMA,
        "threshold": FIXTURE_THRESHOLD,
        "rows": n_a + n_b + n_x,
        "level_a_kept": n_a,
        "level_b": n_b,
        "excluded": n_x,
        "countries": {c: {"women": w, "men": m} for c, (w, m) in FIXTURE_COMPOSITION.items()},
        "groups": groups,
    }


def write_idl_fixture(directory, seed=FIXTURE_SEED, config_path=None):
    """Write ``idl_synthetic.csv`` and ``idl_synthetic_manifest.json`` into ``directory``."""
    import json
    from pathlib import Path

    from truncevt.dataio import write_records

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    records = sorted(idl_fixture_records(seed, config_path), key=lambda r: (r.country, r.id))
    write_records(d / "idl_synthetic.csv", records)
    manifest = idl_fixture_manifest(config_path)
    manifest["seed"] = seed
    (d / "idl_synthetic_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d / "idl_synthetic.csv"
