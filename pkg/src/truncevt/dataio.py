"""Ingestion of validated lifespan records.

Canonical CSV schema, version 1 (one row per person, header required)::

    id,country,gender,validation,birth_date,death_date,age_at_death_days

``gender`` is ``female`` or ``male``; ``validation`` is ``A`` or ``B``;
``birth_date`` is ISO-8601 (``YYYY-MM-DD``); ``death_date`` is ISO-8601 or a
bare year ``YYYY`` when only the year of death is published;
``age_at_death_days`` is the integer age at death in days.

Calendar times are fractional years measured in days of 365.25 from
2000-01-01 (so 1980-01-01 is exactly 1980.0); ages are ``days / 365.25``.

Country windows and groups live in an INI-style config file, see
:func:`load_group_config`.
"""

from __future__ import annotations

import configparser
import csv
import datetime as dt
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from truncevt.errors import InconsistencyError, SchemaError, UnsplittableError
from truncevt.trunclik import SamplingWindow, TruncatedObservation

SCHEMA_VERSION = 1
COLUMNS = ("id", "country", "gender", "validation", "birth_date", "death_date", "age_at_death_days")
GENDERS = ("female", "male")
VALIDATION_LEVELS = ("A", "B")
DAYS_PER_YEAR = 365.25
EPOCH = dt.date(2000, 1, 1)
DEFAULT_THRESHOLD = 110.0
#: Day of the year assumed for year-only death dates, keyed by config name.
IMPUTATION_DAYS = {"jan1": (1, 1), "jul2": (7, 2), "dec31": (12, 31)}


def date_to_time(d: dt.date) -> float:
    """Fractional calendar year of a date."""
    return 2000.0 + (d - EPOCH).days / DAYS_PER_YEAR


def time_to_date(t: float) -> dt.date:
    return EPOCH + dt.timedelta(days=round((t - 2000.0) * DAYS_PER_YEAR))


@dataclass(frozen=True)
class LifespanRecord:
    """One validated life.  ``death_date`` is ``None`` when only ``death_year`` is known."""

    id: str
    country: str
    gender: str
    validation: str
    birth_date: dt.date
    death_year: int
    age_at_death_days: int
    death_date: dt.date | None = None

    @property
    def age_at_death(self) -> float:
        return self.age_at_death_days / DAYS_PER_YEAR

    @property
    def exact_death_date(self) -> bool:
        return self.death_date is not None

    def death_date_or_imputed(self, imputation: str = "jul2") -> dt.date:
        if self.death_date is not None:
            return self.death_date
        month, day = IMPUTATION_DAYS[imputation]
        return dt.date(self.death_year, month, day)


class Reject(NamedTuple):
    line: int | None
    record_id: str
    reason: str


class LoadResult(NamedTuple):
    records: list[LifespanRecord]
    rejects: list[Reject]


def _parse_row(row: dict) -> LifespanRecord:
    if None in row:
        raise ValueError("unknown columns: row has more fields than the header")
    missing = [c for c in COLUMNS if not (row.get(c) or "").strip()]
    if missing:
        raise ValueError(f"missing values for {', '.join(missing)}")
    gender = row["gender"].strip().lower()
    if gender not in GENDERS:
        raise ValueError(f"unknown gender {row['gender']!r}")
    validation = row["validation"].strip().upper()
    if validation not in VALIDATION_LEVELS:
        raise ValueError(f"unknown validation level {row['validation']!r}")
    try:
        birth = dt.date.fromisoformat(row["birth_date"].strip())
    except ValueError:
        raise ValueError(f"bad birth_date {row['birth_date']!r}") from None
    raw_death = row["death_date"].strip()
    try:
        if len(raw_death) == 4 and raw_death.isdigit():
            death, death_year = None, int(raw_death)
        else:
            death = dt.date.fromisoformat(raw_death)
            death_year = death.year
    except ValueError:
        raise ValueError(f"bad death_date {raw_death!r}") from None
    try:
        age_days = int(row["age_at_death_days"].strip())
    except ValueError:
        raise ValueError(f"bad age_at_death_days {row['age_at_death_days']!r}") from None
    if age_days < 0:
        raise ValueError("negative age_at_death_days")
    if death is not None:
        if death < birth:
            raise ValueError("death_date before birth_date")
        if abs((death - birth).days - age_days) > 1:
            raise ValueError(f"age_at_death_days {age_days} inconsistent with dates ({(death - birth).days} days)")
    elif death_year < birth.year:
        raise ValueError("death year before birth year")
    return LifespanRecord(
        id=row["id"].strip(),
        country=row["country"].strip(),
        gender=gender,
        validation=validation,
        birth_date=birth,
        death_year=death_year,
        age_at_death_days=age_days,
        death_date=death,
    )


def load_records(path, schema_version: int = SCHEMA_VERSION) -> LoadResult:
    """Read and validate a records CSV.

    Malformed rows are returned in ``rejects`` with a reason; they never abort
    the load.

    Raises
    ------
    SchemaError
        Unsupported schema version, or a header that lacks required columns
        or names unknown ones.
    OSError
        The file cannot be read.
    """
    if schema_version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {schema_version}")
    records, rejects = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if header or Path(path).stat().st_size:
            unknown = sorted(set(header) - set(COLUMNS))
            missing = [c for c in COLUMNS if c not in header]
            if unknown or missing:
                raise SchemaError(f"bad header: unknown columns {unknown}, missing columns {missing}")
        for row in reader:
            try:
                records.append(_parse_row(row))
            except ValueError as exc:
                rejects.append(Reject(reader.line_num, (row.get("id") or "").strip(), str(exc)))
    return LoadResult(records, rejects)


def write_records(path, records: Iterable[LifespanRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            death = r.death_date.isoformat() if r.death_date else f"{r.death_year:04d}"
            w.writerow([r.id, r.country, r.gender, r.validation, r.birth_date.isoformat(), death, r.age_at_death_days])


def write_rejects(path, rejects: Iterable[Reject]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "id", "reason"])
        for r in rejects:
            w.writerow(["" if r.line is None else r.line, r.record_id, r.reason])


# --- exclusions -------------------------------------------------------------


@dataclass(frozen=True)
class ExclusionRule:
    """Exclude deaths in ``country`` on or after ``start`` and before ``stop``."""

    country: str
    start: dt.date | None
    stop: dt.date | None
    reason: str

    def matches(self, r: LifespanRecord) -> bool:
        if r.country != self.country:
            return False
        if r.death_date is None:
            # year-only dates match when the whole year lies inside the rule
            first, last = dt.date(r.death_year, 1, 1), dt.date(r.death_year, 12, 31)
        else:
            first = last = r.death_date
        return (self.start is None or first >= self.start) and (self.stop is None or last < self.stop)


#: Deaths whose sampling plan is not documented well enough to model.
DEFAULT_EXCLUSIONS = (
    ExclusionRule("US", dt.date(2000, 1, 1), None, "USA post-1999 scheme"),
    ExclusionRule("JP", dt.date(1996, 1, 1), dt.date(1997, 1, 1), "Japan 1996"),
    ExclusionRule("JP", dt.date(2003, 9, 1), None, "Japan after 2003-08-31"),
)


def apply_exclusions(records: Iterable[LifespanRecord], rules: Sequence[ExclusionRule] = DEFAULT_EXCLUSIONS):
    """Split records into ``(kept, excluded)``; ``excluded`` pairs each record with its reason."""
    kept, excluded = [], []
    for r in records:
        rule = next((rule for rule in rules if rule.matches(r)), None)
        if rule is None:
            kept.append(r)
        else:
            excluded.append((r, rule.reason))
    return kept, excluded


# --- groups and windows -----------------------------------------------------


@dataclass(frozen=True)
class GroupSpec:
    name: str
    countries: tuple[str, ...]
    windows: dict = field(compare=False, hash=False)
    threshold: float = DEFAULT_THRESHOLD
    report: bool = True

    def window_for(self, country: str) -> SamplingWindow:
        return self.windows[country]

    def with_threshold(self, threshold: float) -> "GroupSpec":
        return replace(self, threshold=threshold)


@dataclass
class GroupConfig:
    """Parsed group/window config: every country's window, groups and comparisons."""

    windows: dict[str, SamplingWindow]
    window_dates: dict[str, tuple[dt.date, dt.date]]
    groups: dict[str, GroupSpec]
    comparisons: list[tuple[str, str]]
    trend_countries: tuple[str, ...] = ()
    threshold: float = DEFAULT_THRESHOLD
    trend_years: tuple[int, int] | None = None
    forecast_years: tuple[int, int] | None = None
    ratio: float | None = None

    def group(self, name: str) -> GroupSpec:
        return self.groups[name]

    def reported_groups(self) -> list[GroupSpec]:
        return [g for g in self.groups.values() if g.report]

    def with_threshold(self, threshold: float) -> "GroupConfig":
        groups = {k: g.with_threshold(threshold) for k, g in self.groups.items()}
        return replace(self, groups=groups, threshold=threshold)


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.replace("\n", ",").split(",") if v.strip()]


def parse_year_range(value: str) -> tuple[int, int]:
    """``"2018-2042"`` -> ``(2018, 2042)``, both ends inclusive."""
    try:
        first, last = (int(v) for v in value.strip().split("-"))
    except ValueError:
        raise SchemaError(f"bad year range {value!r}, expected YYYY-YYYY") from None
    if last < first:
        raise SchemaError(f"empty year range {value!r}")
    return first, last


def load_group_config(path, threshold: float | None = None) -> GroupConfig:
    """Read a group config file.

    Format (INI)::

        [settings]
        threshold = 110
        trend_countries = IT, GB-EW, US
        trend_years = 1980-1999
        forecast_years = 2018-2042
        ratio = 1.76

        [window US]
        begin = 1980-01-01     ; first day of the death window
        end = 2000-01-01       ; first day after it

        [group North Europe]
        countries = DK, DE, GB-EW
        report = yes           ; optional, "no" keeps the group out of tables

        [comparison North Europe vs South Europe]
        groups = North Europe, South Europe

    Group members may name other groups; they are expanded recursively.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise SchemaError(f"cannot read group config {path}")
    settings = cp["settings"] if cp.has_section("settings") else {}
    thr = float(threshold if threshold is not None else settings.get("threshold", DEFAULT_THRESHOLD))
    windows, dates = {}, {}
    raw_groups, comparisons, report = {}, [], {}
    for section in cp.sections():
        if section.startswith("window "):
            country = section[len("window "):].strip()
            try:
                begin = dt.date.fromisoformat(cp[section]["begin"])
                end = dt.date.fromisoformat(cp[section]["end"])
            except (KeyError, ValueError) as exc:
                raise SchemaError(f"[{section}]: {exc}") from exc
            dates[country] = (begin, end)
            windows[country] = SamplingWindow(date_to_time(begin), date_to_time(end))
        elif section.startswith("group "):
            name = section[len("group "):].strip()
            raw_groups[name] = _split_list(cp[section]["countries"])
            try:
                report[name] = cp[section].getboolean("report", True)
            except ValueError as exc:
                raise SchemaError(f"[{section}]: {exc}") from exc
        elif section.startswith("comparison "):
            names = _split_list(cp[section]["groups"])
            if len(names) != 2:
                raise SchemaError(f"[{section}] must name exactly two groups")
            comparisons.append((names[0], names[1]))

    def expand(name, seen=()):
        if name in seen:
            raise SchemaError(f"group cycle through {name!r}")
        out = []
        for member in raw_groups[name]:
            if member in raw_groups:
                out.extend(expand(member, seen + (name,)))
            elif member in windows:
                out.append(member)
            else:
                raise SchemaError(f"group {name!r}: unknown country or group {member!r}")
        return out

    groups = {}
    for name in raw_groups:
        members = tuple(dict.fromkeys(expand(name)))
        groups[name] = GroupSpec(name, members, {c: windows[c] for c in members}, thr, report[name])
    for a, b in comparisons:
        for g in (a, b):
            if g not in groups:
                raise SchemaError(f"comparison names unknown group {g!r}")
    trend = tuple(_split_list(settings.get("trend_countries", "")))
    trend_years = parse_year_range(settings["trend_years"]) if "trend_years" in settings else None
    forecast_years = parse_year_range(settings["forecast_years"]) if "forecast_years" in settings else None
    ratio = float(settings["ratio"]) if "ratio" in settings else None
    return GroupConfig(windows, dates, groups, comparisons, trend, thr, trend_years, forecast_years, ratio)


def default_config_path() -> Path:
    """Bundled fixture config (plausible windows, not official registry windows)."""
    return Path(__file__).parent / "data" / "groups.ini"


def default_records_path() -> Path:
    """Bundled synthetic records fixture."""
    return Path(__file__).parent / "data" / "idl_synthetic.csv"


# --- observations -----------------------------------------------------------


class Conversion(NamedTuple):
    observations: list[TruncatedObservation]
    rejected: list[Reject]
    inconsistent: list[Reject]


def to_truncated_observations(
    records: Iterable[LifespanRecord],
    spec: GroupSpec,
    validation: Sequence[str] = ("A",),
    imputation: str = "jul2",
) -> Conversion:
    """Turn records of the group's countries into truncated observations.

    ``excess`` is ``age_at_death - threshold`` and the crossing time is
    ``birth + threshold`` years.  For year-only death dates the death is put
    on the imputed day (July 2 by default) and the crossing time is set so that
    crossing plus excess lands on it.  Records below the threshold go to
    ``rejected``; records whose death misses the country window go to
    ``inconsistent``.
    """
    if imputation not in IMPUTATION_DAYS:
        raise SchemaError(f"imputation must be one of {sorted(IMPUTATION_DAYS)}")
    allowed = set(validation)
    obs, rejected, inconsistent = [], [], []
    for r in records:
        if r.country not in spec.countries or r.validation not in allowed:
            continue
        excess = r.age_at_death - spec.threshold
        if excess < 0:
            rejected.append(Reject(None, r.id, f"age {r.age_at_death:.3f} below threshold {spec.threshold:g}"))
            continue
        if r.exact_death_date:
            crossing = date_to_time(r.birth_date) + spec.threshold
        else:
            crossing = date_to_time(r.death_date_or_imputed(imputation)) - excess
        try:
            obs.append(
                TruncatedObservation(
                    crossing, excess, spec.window_for(r.country), record_id=r.id, country=r.country, gender=r.gender
                )
            )
        except InconsistencyError as exc:
            inconsistent.append(Reject(None, r.id, str(exc)))
    return Conversion(obs, rejected, inconsistent)


def _restrict(o: TruncatedObservation, begin: float, end: float) -> TruncatedObservation:
    w = o.window
    window = SamplingWindow(max(w.begin, begin), min(w.end, end))
    return replace(o, window=window)


def split_halves(observations: Sequence[TruncatedObservation], split_time: float | None = None,
                 restrict_windows: bool = True):
    """Split observations by death time into an earlier and a later part.

    By default the later part is the larger one, with the smallest possible
    size difference.  Deaths tied across the split point all go to the later
    part (or, if that empties the earlier part, all to the earlier part).
    With ``split_time``, deaths before it form the first part.

    A part selected by death time was only observable on its side of the split,
    so with ``restrict_windows`` each observation's window is cut at the split
    time (the first death of the later part): ``[b, s)`` for the earlier part
    and ``[s, e)`` for the later one.  Without the cut, the truncated
    likelihood of each part is misspecified.

    Raises
    ------
    UnsplittableError
        Fewer than two observations, all deaths at the same time, or a
        ``split_time`` leaving one part empty.
    """
    ordered = sorted(observations, key=lambda o: o.death_time)
    n = len(ordered)
    if n < 2:
        raise UnsplittableError("need at least two observations")
    deaths = [o.death_time for o in ordered]
    if split_time is not None:
        k = sum(d < split_time for d in deaths)
        if k in (0, n):
            raise UnsplittableError(f"split time {split_time} leaves one part empty")
        cut = float(split_time)
    else:
        if deaths[0] == deaths[-1]:
            raise UnsplittableError("all death times are identical")
        k = (n - 1) // 2
        if k == 0:
            k = 1
        if deaths[k - 1] == deaths[k]:
            tie = deaths[k]
            start = k
            while start > 0 and deaths[start - 1] == tie:
                start -= 1
            if start > 0:
                k = start
            else:
                while k < n and deaths[k] == tie:
                    k += 1
        cut = deaths[k]
    first, second = ordered[:k], ordered[k:]
    if restrict_windows:
        first = [_restrict(o, -math.inf, cut) for o in first]
        second = [_restrict(o, cut, math.inf) for o in second]
    return first, second


def yearly_death_counts(records: Iterable[LifespanRecord], countries: Sequence[str], first: int, last: int,
                        threshold: float = DEFAULT_THRESHOLD, validation: Sequence[str] = ("A",), label: str = ""):
    """Deaths per calendar year (inclusive range) of persons past the threshold."""
    from truncevt.trend import YearlyCounts

    counts = {y: 0 for y in range(first, last + 1)}
    wanted, allowed = set(countries), set(validation)
    for r in records:
        if r.country in wanted and r.validation in allowed and r.age_at_death >= threshold and r.death_year in counts:
            counts[r.death_year] += 1
    return YearlyCounts(tuple(counts), tuple(counts.values()), label)
