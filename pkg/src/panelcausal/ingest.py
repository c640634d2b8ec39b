"""Loaders for the three raw input families and the dense country-by-day join.

All files are CSV with ISO-8601 dates (the JHU wide adapter excepted).  Loaders
validate and reject; nothing is clamped, imputed or fuzzily matched.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Optional

from ._io import atomic_write_text, csv_text, fmt_float
from .errors import (
    DateGap,
    DuplicateCountry,
    MalformedCsv,
    MissingCountry,
    MissingDateCoverage,
    NonMonotoneCumulative,
    OutOfRangeFraction,
    SentimentOutOfRange,
)

EPIDEMIC_HEADER = ["country", "date", "cumulative_infections", "cumulative_deaths"]
STATS_HEADER = [
    "country",
    "population",
    "pct_over_65",
    "pct_single_households",
    "pct_twitter_users",
    "lockdown_date",
]
ATTENTION_HEADER = ["country", "date", "tweet_count", "avg_sentiment"]
JHU_FIXED = ["Province/State", "Country/Region", "Lat", "Long"]


@dataclass(frozen=True)
class EpidemicSeries:
    country: str
    dates: tuple[date, ...]
    cumulative_infections: tuple[int, ...]
    cumulative_deaths: tuple[int, ...]


@dataclass(frozen=True)
class CountryStats:
    country: str
    population: int
    pct_over_65: float
    pct_single_households: float
    pct_twitter_users: float
    lockdown_date: Optional[date] = None


@dataclass(frozen=True)
class AttentionSeries:
    country: str
    dates: tuple[date, ...]
    tweet_counts: tuple[int, ...]
    avg_sentiment: tuple[float, ...]


@dataclass(frozen=True)
class PanelRow:
    country: str
    date: date
    cumulative_infections: int
    cumulative_deaths: int
    tweet_count: int
    avg_sentiment: float


@dataclass(frozen=True)
class RawPanel:
    rows: tuple[PanelRow, ...]
    stats: dict[str, CountryStats]
    countries: tuple[str, ...]
    date_range: tuple[date, date]

    @property
    def dates(self) -> list[date]:
        return date_span(*self.date_range)


def date_span(start: date, end: date) -> list[date]:
    """Inclusive list of days from ``start`` to ``end``."""
    if end < start:
        raise ValueError(f"empty date range {start}..{end}")
    return [start + timedelta(days=k) for k in range((end - start).days + 1)]


# -- parsing helpers ---------------------------------------------------------

def _read_rows(path, header):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        if [h.strip() for h in found] != header:
            raise MalformedCsv(f"{path}: expected header {','.join(header)}, got {','.join(found)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _parse(conv, text, path, lineno, field):
    try:
        return conv(text)
    except ValueError:
        raise MalformedCsv(f"{path}:{lineno}: bad {field} {text!r}") from None


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise ValueError(text)
    return value


def _finite_float(text):
    value = float(text)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError(text)
    return value


def _check_dense(country, dates):
    for prev, cur in zip(dates, dates[1:]):
        if cur == prev:
            raise MalformedCsv(f"duplicate date {cur} for {country}")
        if cur != prev + timedelta(days=1):
            raise DateGap(country, prev + timedelta(days=1))


def _check_monotone(country, dates, values, what):
    for k in range(1, len(values)):
        if values[k] < values[k - 1]:
            raise NonMonotoneCumulative(country, dates[k], what)


def _group(records: Iterable[tuple]) -> dict[str, list[tuple]]:
    grouped: dict[str, list[tuple]] = defaultdict(list)
    for rec in records:
        grouped[rec[0]].append(rec)
    for recs in grouped.values():
        recs.sort(key=lambda r: r[1])
    return grouped


# -- loaders -----------------------------------------------------------------

def load_epidemic_series(path, format: str = "tidy", deaths_path=None) -> list[EpidemicSeries]:
    """Load cumulative infection/death counts per country.

    ``format="jhu_wide"`` reads the wide layout (one column per M/D/YY date,
    province rows summed per Country/Region).  In that layout infections and
    deaths live in separate files; ``deaths_path`` names the deaths file, and
    when omitted the deaths series is all zeros.
    """
    if format == "tidy":
        records = []
        for lineno, row in _read_rows(path, EPIDEMIC_HEADER):
            country = row[0]
            if not country:
                raise MalformedCsv(f"{path}:{lineno}: empty country")
            day = _parse(date.fromisoformat, row[1], path, lineno, "date")
            inf = _parse(_nonneg_int, row[2], path, lineno, "cumulative_infections")
            dth = _parse(_nonneg_int, row[3], path, lineno, "cumulative_deaths")
            records.append((country, day, inf, dth))
        grouped = _group(records)
    elif format == "jhu_wide":
        infections = _load_jhu_wide(path)
        deaths = _load_jhu_wide(deaths_path) if deaths_path is not None else None
        grouped = {}
        for country, per_day in infections.items():
            if deaths is not None and country not in deaths:
                raise MissingCountry(country, str(deaths_path))
            recs = []
            for day, inf in sorted(per_day.items()):
                if deaths is None:
                    dth = 0
                elif day in deaths[country]:
                    dth = deaths[country][day]
                else:
                    raise MissingDateCoverage(country, day, str(deaths_path))
                recs.append((country, day, inf, dth))
            grouped[country] = recs
    else:
        raise ValueError(f"unknown epidemic format {format!r}")

    out = []
    for country, recs in grouped.items():
        dates = tuple(r[1] for r in recs)
        _check_dense(country, dates)
        inf = tuple(r[2] for r in recs)
        dth = tuple(r[3] for r in recs)
        _check_monotone(country, dates, inf, "cumulative infections")
        _check_monotone(country, dates, dth, "cumulative deaths")
        out.append(EpidemicSeries(country, dates, inf, dth))
    return out


def _load_jhu_wide(path) -> dict[str, dict[date, int]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedCsv(f"{path}: empty file") from None
        if header[:4] != JHU_FIXED or len(header) < 5:
            raise MalformedCsv(f"{path}: not a JHU wide file")
        try:
            days = [datetime.strptime(h, "%m/%d/%y").date() for h in header[4:]]
        except ValueError as exc:
            raise MalformedCsv(f"{path}: bad date column ({exc})") from None
        totals: dict[str, dict[date, int]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            country = row[1].strip()
            acc = totals.setdefault(country, dict.fromkeys(days, 0))
            for day, cell in zip(days, row[4:]):
                acc[day] += _parse(_nonneg_int, cell.strip(), path, lineno, str(day))
    return totals


def load_country_stats(path) -> list[CountryStats]:
    out, seen = [], set()
    for lineno, row in _read_rows(path, STATS_HEADER):
        country = row[0]
        if country in seen:
            raise DuplicateCountry(f"{path}:{lineno}: duplicate row for {country}")
        seen.add(country)
        population = _parse(int, row[1], path, lineno, "population")
        if population <= 0:
            raise MalformedCsv(f"{path}:{lineno}: population must be positive")
        fractions = []
        for name, text in zip(STATS_HEADER[2:5], row[2:5]):
            value = _parse(_finite_float, text, path, lineno, name)
            if not 0.0 <= value <= 1.0:
                raise OutOfRangeFraction(f"{path}:{lineno}: {name}={value} outside [0, 1]")
            fractions.append(value)
        lockdown = _parse(date.fromisoformat, row[5], path, lineno, "lockdown_date") if row[5] else None
        out.append(CountryStats(country, population, *fractions, lockdown_date=lockdown))
    return out


def load_attention_series(path) -> list[AttentionSeries]:
    records = []
    for lineno, row in _read_rows(path, ATTENTION_HEADER):
        day = _parse(date.fromisoformat, row[1], path, lineno, "date")
        count = _parse(_nonneg_int, row[2], path, lineno, "tweet_count")
        sentiment = _parse(_finite_float, row[3], path, lineno, "avg_sentiment")
        if not -1.0 <= sentiment <= 1.0:
            raise SentimentOutOfRange(f"{path}:{lineno}: avg_sentiment={sentiment} outside [-1, 1]")
        records.append((row[0], day, count, sentiment))
    out = []
    for country, recs in _group(records).items():
        dates = tuple(r[1] for r in recs)
        _check_dense(country, dates)
        out.append(AttentionSeries(country, dates, tuple(r[2] for r in recs), tuple(r[3] for r in recs)))
    return out


# -- join --------------------------------------------------------------------

def _index(series, countries, source):
    by_country = {s.country: s for s in series}
    for c in countries:
        if c not in by_country:
            raise MissingCountry(c, source)
    return by_country


def _slice(s, days, source):
    pos = {d: k for k, d in enumerate(s.dates)}
    for d in days:
        if d not in pos:
            raise MissingDateCoverage(s.country, d, source)
    return [pos[d] for d in days]


def assemble_panel(epidemic, stats, attention, countries, date_range) -> RawPanel:
    """Join the three inputs into a dense panel ordered by (countries order, date)."""
    start, end = date_range
    days = date_span(start, end)
    countries = tuple(countries)
    epi = _index(epidemic, countries, "epidemic")
    att = _index(attention, countries, "attention")
    st = _index(stats, countries, "country stats")

    rows = []
    for c in countries:
        e, a = epi[c], att[c]
        ei = _slice(e, days, "epidemic")
        ai = _slice(a, days, "attention")
        for d, i, j in zip(days, ei, ai):
            rows.append(PanelRow(
                c, d, e.cumulative_infections[i], e.cumulative_deaths[i],
                a.tweet_counts[j], a.avg_sentiment[j],
            ))
    return RawPanel(tuple(rows), {c: st[c] for c in countries}, countries, (start, end))


# -- writers -----------------------------------------------------------------

def write_epidemic_csv(series: Iterable[EpidemicSeries], path):
    rows = [
        (s.country, d.isoformat(), i, k)
        for s in series
        for d, i, k in zip(s.dates, s.cumulative_infections, s.cumulative_deaths)
    ]
    atomic_write_text(path, csv_text(EPIDEMIC_HEADER, rows))


def write_country_stats_csv(stats: Iterable[CountryStats], path):
    rows = [
        (
            s.country, s.population, fmt_float(s.pct_over_65), fmt_float(s.pct_single_households),
            fmt_float(s.pct_twitter_users), s.lockdown_date.isoformat() if s.lockdown_date else "",
        )
        for s in stats
    ]
    atomic_write_text(path, csv_text(STATS_HEADER, rows))


def write_attention_csv(series: Iterable[AttentionSeries], path):
    rows = [
        (s.country, d.isoformat(), n, fmt_float(v))
        for s in series
        for d, n, v in zip(s.dates, s.tweet_counts, s.avg_sentiment)
    ]
    atomic_write_text(path, csv_text(ATTENTION_HEADER, rows))


def split_panel(panel: RawPanel):
    """Inverse of :func:`assemble_panel`: (epidemic, stats, attention) lists."""
    by_country = defaultdict(list)
    for r in panel.rows:
        by_country[r.country].append(r)
    epidemic, attention = [], []
    for c in panel.countries:
        rs = by_country[c]
        dates = tuple(r.date for r in rs)
        epidemic.append(EpidemicSeries(
            c, dates, tuple(r.cumulative_infections for r in rs), tuple(r.cumulative_deaths for r in rs)))
        attention.append(AttentionSeries(
            c, dates, tuple(r.tweet_count for r in rs), tuple(r.avg_sentiment for r in rs)))
    return epidemic, [panel.stats[c] for c in panel.countries], attention


def write_panel(panel: RawPanel, directory) -> dict[str, Path]:
    """Write the panel as the three tidy CSVs; returns their paths."""
    directory = Path(directory)
    epidemic, stats, attention = split_panel(panel)
    paths = {
        "epidemic": directory / "epidemic.csv",
        "stats": directory / "country_stats.csv",
        "attention": directory / "attention.csv",
    }
    write_epidemic_csv(epidemic, paths["epidemic"])
    write_country_stats_csv(stats, paths["stats"])
    write_attention_csv(attention, paths["attention"])
    return paths


def load_panel(epidemic_path, stats_path, attention_path, countries, date_range,
               epidemic_format="tidy", deaths_path=None) -> RawPanel:
    return assemble_panel(
        load_epidemic_series(epidemic_path, epidemic_format, deaths_path),
        load_country_stats(stats_path),
        load_attention_series(attention_path),
        countries,
        date_range,
    )
