"""Feature engineering, percentile discretization and standardization.

The numeric matrix feeds structure learning; the discretized table feeds the
Bayesian network.  Column order is fixed by :data:`FEATURES`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Optional

import numpy as np

from ._io import atomic_write_text, csv_text, fmt_float
from .errors import ColumnMismatch, EmptyMatrix, MalformedCsv, NegativeNewCount
from .ingest import RawPanel

PANDEMIC = (
    "total_infections_pc",
    "new_infections_pc",
    "pct_change_infections",
    "total_deaths_pc",
    "new_deaths_pc",
    "pct_change_deaths",
)
COUNTRY_STATIC = ("pct_over_65", "pct_single_households", "pct_twitter_users")
INTERVENTION = ("lockdown_announced",)
ATTENTION = ("tweets_pc", "avg_sentiment")
FEATURES = PANDEMIC + COUNTRY_STATIC + INTERVENTION + ATTENTION

FAMILIES = {
    **dict.fromkeys(PANDEMIC, "pandemic"),
    **dict.fromkeys(COUNTRY_STATIC, "country-static"),
    **dict.fromkeys(INTERVENTION, "intervention"),
    **dict.fromkeys(ATTENTION, "attention"),
}

LOCKDOWN_WINDOW_DAYS = 3

PERCENTILE, SIGN, BINARY = "percentile_cutoff", "sign_split", "passthrough_binary"
LEVELS_BY_KIND = {
    PERCENTILE: ("Low", "High"),
    SIGN: ("Negative", "Positive"),
    BINARY: ("No", "Yes"),
}


@dataclass(frozen=True)
class ColumnRule:
    kind: str
    q: Optional[float] = None

    def __post_init__(self):
        if self.kind not in LEVELS_BY_KIND:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind == PERCENTILE and not (self.q is not None and 0.0 < self.q < 1.0):
            raise ValueError(f"percentile q must lie in (0, 1), got {self.q}")

    @property
    def levels(self):
        return LEVELS_BY_KIND[self.kind]


DEFAULT_RULES = {
    **{c: ColumnRule(PERCENTILE, 0.75) for c in PANDEMIC},
    **{c: ColumnRule(PERCENTILE, 0.5) for c in COUNTRY_STATIC},
    "lockdown_announced": ColumnRule(BINARY),
    "tweets_pc": ColumnRule(PERCENTILE, 0.75),
    "avg_sentiment": ColumnRule(SIGN),
}


@dataclass(frozen=True)
class NumericFeatureMatrix:
    row_keys: tuple[tuple[str, date], ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.row_keys), len(self.columns)):
            raise ValueError("values shape does not match row keys / columns")

    @property
    def countries(self) -> list[str]:
        return [k[0] for k in self.row_keys]

    def take(self, rows) -> "NumericFeatureMatrix":
        rows = np.asarray(rows, dtype=int)
        return NumericFeatureMatrix(tuple(self.row_keys[i] for i in rows), self.columns, self.values[rows])

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


@dataclass(frozen=True)
class DiscretizationPolicy:
    rules: dict[str, ColumnRule]
    cutoffs: Optional[dict[str, float]] = None

    @property
    def fitted(self) -> bool:
        return self.cutoffs is not None


@dataclass(frozen=True)
class DiscreteObservationTable:
    row_keys: tuple[tuple[str, date], ...]
    columns: tuple[str, ...]
    levels: dict[str, tuple[str, ...]]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (len(self.row_keys), len(self.columns)):
            raise ValueError("values shape does not match row keys / columns")
        for j, c in enumerate(self.columns):
            col = self.values[:, j]
            if col.size and (col.min() < 0 or col.max() >= len(self.levels[c])):
                raise ValueError(f"column {c} holds an invalid level index")

    @property
    def countries(self) -> list[str]:
        return [k[0] for k in self.row_keys]

    def take(self, rows) -> "DiscreteObservationTable":
        rows = np.asarray(rows, dtype=int)
        return replace(self, row_keys=tuple(self.row_keys[i] for i in rows), values=self.values[rows])

    def column(self, name) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def labels(self, row: int) -> dict[str, str]:
        return {c: self.levels[c][self.values[row, j]] for j, c in enumerate(self.columns)}


# -- engineering ---------------------------------------------------------------

def _daily_new(cumulative):
    new = np.diff(cumulative, prepend=0)
    return new


def _pct_change(cumulative, new):
    prev = np.concatenate([[0], cumulative[:-1]]).astype(float)
    out = np.zeros(len(cumulative))
    nz = prev > 0
    out[nz] = new[nz] / prev[nz] * 100.0
    return out


def engineer(panel: RawPanel) -> NumericFeatureMatrix:
    """Compute the 12 per-day features for every (country, day) row of ``panel``."""
    blocks, keys = [], []
    rows_by_country: dict[str, list] = {c: [] for c in panel.countries}
    for r in panel.rows:
        rows_by_country[r.country].append(r)

    for country in panel.countries:
        rows = rows_by_country[country]
        st = panel.stats[country]
        pop = float(st.population)
        inf = np.array([r.cumulative_infections for r in rows], dtype=np.int64)
        dth = np.array([r.cumulative_deaths for r in rows], dtype=np.int64)
        new_inf, new_dth = _daily_new(inf), _daily_new(dth)
        for name, new in (("infections", new_inf), ("deaths", new_dth)):
            if (new < 0).any():
                k = int(np.argmax(new < 0))
                raise NegativeNewCount(f"new {name} negative for {country} on {rows[k].date}")

        days = [r.date for r in rows]
        lockdown = np.zeros(len(rows))
        if st.lockdown_date is not None:
            window = {st.lockdown_date + timedelta(days=k) for k in range(LOCKDOWN_WINDOW_DAYS)}
            lockdown = np.array([1.0 if d in window else 0.0 for d in days])

        m = len(rows)
        block = np.column_stack([
            inf / pop,
            new_inf / pop,
            _pct_change(inf, new_inf),
            dth / pop,
            new_dth / pop,
            _pct_change(dth, new_dth),
            np.full(m, st.pct_over_65),
            np.full(m, st.pct_single_households),
            np.full(m, st.pct_twitter_users),
            lockdown,
            np.array([r.tweet_count for r in rows], dtype=float) / pop,
            np.array([r.avg_sentiment for r in rows], dtype=float),
        ])
        blocks.append(block)
        keys.extend((country, d) for d in days)

    values = np.vstack(blocks) if blocks else np.zeros((0, len(FEATURES)))
    return NumericFeatureMatrix(tuple(keys), FEATURES, values)


# -- discretization ----------------------------------------------------------

def _rules_for(columns, rules):
    rules = DEFAULT_RULES if rules is None else rules
    return {c: rules.get(c, ColumnRule(PERCENTILE, 0.5)) for c in columns}


def fit_discretization(matrix: NumericFeatureMatrix, rules=None) -> DiscretizationPolicy:
    """Learn percentile cutoffs pooled over all rows.

    Percentiles use linear interpolation between closest ranks.  ``rules``
    overrides :data:`DEFAULT_RULES`; unknown columns default to a median split.
    """
    if matrix.values.shape[0] == 0:
        raise EmptyMatrix("cannot fit discretization on an empty matrix")
    rules = _rules_for(matrix.columns, rules)
    cutoffs = {}
    for j, c in enumerate(matrix.columns):
        rule = rules[c]
        if rule.kind == PERCENTILE:
            cutoffs[c] = float(np.percentile(matrix.values[:, j], rule.q * 100.0, method="linear"))
    return DiscretizationPolicy(rules, cutoffs)


def discretize(matrix: NumericFeatureMatrix, policy: DiscretizationPolicy) -> DiscreteObservationTable:
    if not policy.fitted:
        raise ValueError("policy has not been fitted")
    if tuple(matrix.columns) != tuple(policy.rules):
        raise ColumnMismatch(
            f"policy columns {list(policy.rules)} do not match matrix columns {list(matrix.columns)}")
    out = np.empty(matrix.values.shape, dtype=np.int64)
    levels = {}
    for j, c in enumerate(matrix.columns):
        rule = policy.rules[c]
        col = matrix.values[:, j]
        if rule.kind == PERCENTILE:
            out[:, j] = col >= policy.cutoffs[c]
        elif rule.kind == SIGN:
            out[:, j] = col >= 0.0
        else:
            out[:, j] = col == 1.0
        levels[c] = rule.levels
    return DiscreteObservationTable(matrix.row_keys, matrix.columns, levels, out)


def standardize(matrix: NumericFeatureMatrix) -> NumericFeatureMatrix:
    """Center every column; scale those with nonzero variance to unit sample variance."""
    if matrix.values.shape[0] == 0:
        raise EmptyMatrix("cannot standardize an empty matrix")
    return replace(matrix, values=standardize_array(matrix.values))


def standardize_array(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    centered = values - mean
    std = centered.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1])
    # constant columns: rounding in the mean leaves ~1e-17 residue; flatten it
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    centered[:, flat] = 0.0
    std[flat] = 1.0
    return centered / std


# -- CSV ---------------------------------------------------------------------

def _key_cells(key):
    return [key[0], key[1].isoformat() if isinstance(key[1], date) else str(key[1])]


def write_numeric_csv(matrix: NumericFeatureMatrix, path):
    rows = [_key_cells(k) + [fmt_float(v) for v in row] for k, row in zip(matrix.row_keys, matrix.values)]
    atomic_write_text(path, csv_text(["country", "date", *matrix.columns], rows))


def write_discrete_csv(table: DiscreteObservationTable, path):
    rows = [
        _key_cells(k) + [table.levels[c][v] for c, v in zip(table.columns, row)]
        for k, row in zip(table.row_keys, table.values)
    ]
    atomic_write_text(path, csv_text(["country", "date", *table.columns], rows))


def _read_keyed_csv(path):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["country", "date"] or len(header) < 3:
            raise MalformedCsv(f"{path}: expected header country,date,<columns...>")
        keys, cells = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedCsv(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                day = date.fromisoformat(row[1])
            except ValueError:
                raise MalformedCsv(f"{path}:{lineno}: bad date {row[1]!r}") from None
            keys.append((row[0], day))
            cells.append(row[2:])
    return tuple(header[2:]), tuple(keys), cells


def load_numeric_csv(path) -> NumericFeatureMatrix:
    columns, keys, cells = _read_keyed_csv(path)
    try:
        values = np.array(cells, dtype=float).reshape(len(keys), len(columns))
    except ValueError as exc:
        raise MalformedCsv(f"{path}: {exc}") from None
    return NumericFeatureMatrix(keys, columns, values)


def load_discrete_csv(path, levels: Optional[dict[str, tuple[str, ...]]] = None) -> DiscreteObservationTable:
    """Read a labeled table.  Level order comes from ``levels``, then the default
    rules for known feature names, then sorted unique labels."""
    columns, keys, cells = _read_keyed_csv(path)
    levels = dict(levels or {})
    for j, c in enumerate(columns):
        if c not in levels:
            if c in DEFAULT_RULES:
                levels[c] = DEFAULT_RULES[c].levels
            else:
                levels[c] = tuple(sorted({row[j] for row in cells}))
    values = np.empty((len(keys), len(columns)), dtype=np.int64)
    for i, row in enumerate(cells):
        for j, (c, label) in enumerate(zip(columns, row)):
            try:
                values[i, j] = levels[c].index(label)
            except ValueError:
                raise MalformedCsv(f"{path}:{i + 2}: {label!r} is not a level of {c}") from None
    return DiscreteObservationTable(keys, columns, {c: tuple(levels[c]) for c in columns}, values)
