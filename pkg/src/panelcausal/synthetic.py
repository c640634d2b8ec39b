"""Synthetic data generators used to validate every pipeline stage.

* :func:`generate_synthetic_sem` - linear Gaussian SEM samples for the
  structure learner.
* :func:`paperlike_network` / :func:`generate_paperlike_bn_data` - a binary
  ground-truth network over the 12 study features, sampled into a discrete
  table shaped like the study panel.
* :func:`generate_paperlike_panel` - raw epidemic/stats/attention series in
  the ingest schemas, for exercising the full file-based pipeline.
"""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
from scipy.special import expit

from .bayesnet import BayesianNetwork, Cpt
from .errors import CyclicSpec
from .features import DEFAULT_RULES, FEATURES, DiscreteObservationTable
from .ingest import CountryStats, PanelRow, RawPanel, date_span
from .notears import DagStructure, is_acyclic

STUDY_COUNTRIES = ("AT", "BE", "DK", "FR", "DE", "IT", "NL", "NO", "ES", "SE", "CH", "GB")
STUDY_START = date(2020, 1, 22)
STUDY_END = date(2020, 3, 18)

TARGET_PARENTS = ("pct_twitter_users", "new_infections_pc", "new_deaths_pc", "lockdown_announced")
SENTIMENT_PARENTS = ("new_infections_pc", "new_deaths_pc", "total_deaths_pc", "lockdown_announced")


# -- linear SEM ------------------------------------------------------------------

def _weight_dag(W):
    n = W.shape[0]
    labels = tuple(range(n))
    return DagStructure(labels, {(i, j): W[i, j] for i in range(n) for j in range(n) if W[i, j] != 0})


def generate_synthetic_sem(W, m: int, noise_sd: float = 1.0, seed: int = 0) -> np.ndarray:
    """Sample x_j = sum_i W[i, j] x_i + N(0, noise_sd^2) in topological order."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    if np.any(np.diag(W) != 0):
        raise CyclicSpec("self-loop in SEM spec")
    dag = _weight_dag(W)
    if not is_acyclic(dag):
        raise CyclicSpec("SEM weight matrix has a cycle")
    rng = np.random.default_rng(seed)
    noise = rng.normal(scale=noise_sd, size=(m, W.shape[0]))
    X = np.zeros_like(noise)
    for j in dag.topological_order():
        X[:, j] = X @ W[:, j] + noise[:, j]
    return X


def random_er_weights(n: int, expected_degree: float, seed: int,
                      weight_range=(0.5, 2.0)) -> np.ndarray:
    """Erdos-Renyi DAG with random signs; each node has ``expected_degree``
    neighbours on average (n * expected_degree / 2 edges)."""
    rng = np.random.default_rng(seed)
    p = min(1.0, expected_degree / (n - 1))
    upper = np.triu(rng.random((n, n)) < p, k=1)
    perm = rng.permutation(n)
    A = upper[np.ix_(perm, perm)]
    lo, hi = weight_range
    W = rng.uniform(lo, hi, size=(n, n)) * rng.choice([-1.0, 1.0], size=(n, n))
    return np.where(A, W, 0.0)


def chain_weights(n: int = 2, weight: float = 2.0) -> np.ndarray:
    W = np.zeros((n, n))
    for k in range(n - 1):
        W[k, k + 1] = weight
    return W


# -- study-shaped ground-truth BN --------------------------------------------------

def _logistic_table(bias, coefs):
    """P(level 1) = sigmoid(bias + coefs . parent_states) for all binary parent states."""
    k = len(coefs)
    states = np.indices((2,) * k).reshape(k, -1).T
    p1 = expit(bias + states @ np.asarray(coefs, dtype=float)).reshape((2,) * k)
    return np.stack([1.0 - p1, p1], axis=-1)


def _binary(p_high):
    return np.array([1.0 - p_high, p_high])


def paperlike_network() -> BayesianNetwork:
    """Ground truth with twitter activity caused by usage, new infections,
    new deaths and lockdown announcements.

    Level index 1 is High / Yes / Positive for every variable.  CPTs (P of
    level 1 given parents, parent states in listed order):

    ==========================  ==============================================
    pct_over_65                 0.5
    pct_single_households       0.5
    pct_twitter_users           0.5
    lockdown_announced          0.12
    total_infections_pc         | over_65, single_hh: LL .30 LH .10 HL .45 HH .20
    new_infections_pc           | total_infections: L .08 H .70
    pct_change_infections       | new_infections:   L .15 H .60
    total_deaths_pc             | total_inf, over_65: LL .05 LH .10 HL .55 HH .80
    new_deaths_pc               | total_deaths:     L .06 H .75
    pct_change_deaths           | new_deaths:       L .12 H .65
    tweets_pc                   sigmoid(-3.0 + 1.9 usage + 1.6 new_inf
                                + 1.4 new_deaths + 1.8 lockdown)
    avg_sentiment (Positive)    sigmoid(1.2 - 0.7 new_inf - 1.4 new_deaths
                                - 0.5 total_deaths - 1.1 lockdown)
    ==========================  ==============================================
    """
    edges = [
        ("pct_over_65", "total_infections_pc"),
        ("pct_single_households", "total_infections_pc"),
        ("total_infections_pc", "new_infections_pc"),
        ("new_infections_pc", "pct_change_infections"),
        ("total_infections_pc", "total_deaths_pc"),
        ("pct_over_65", "total_deaths_pc"),
        ("total_deaths_pc", "new_deaths_pc"),
        ("new_deaths_pc", "pct_change_deaths"),
        *[(p, "tweets_pc") for p in TARGET_PARENTS],
        *[(p, "avg_sentiment") for p in SENTIMENT_PARENTS],
    ]
    dag = DagStructure(FEATURES, {e: None for e in edges})
    tables = {
        "pct_over_65": _binary(0.5),
        "pct_single_households": _binary(0.5),
        "pct_twitter_users": _binary(0.5),
        "lockdown_announced": _binary(0.12),
        "total_infections_pc": np.array([[_binary(0.30), _binary(0.10)],
                                         [_binary(0.45), _binary(0.20)]]),
        "new_infections_pc": np.array([_binary(0.08), _binary(0.70)]),
        "pct_change_infections": np.array([_binary(0.15), _binary(0.60)]),
        # parents in FEATURES order: total_infections_pc, pct_over_65
        "total_deaths_pc": np.array([[_binary(0.05), _binary(0.10)],
                                     [_binary(0.55), _binary(0.80)]]),
        "new_deaths_pc": np.array([_binary(0.06), _binary(0.75)]),
        "pct_change_deaths": np.array([_binary(0.12), _binary(0.65)]),
        # parents in FEATURES order: new_inf, new_deaths, usage, lockdown
        "tweets_pc": _logistic_table(-3.0, [1.6, 1.4, 1.9, 1.8]),
        # parents in FEATURES order: new_inf, total_deaths, new_deaths, lockdown
        "avg_sentiment": _logistic_table(1.2, [-0.7, -0.5, -1.4, -1.1]),
    }
    cpts = {v: Cpt(v, tuple(dag.parents(v)), tables[v]) for v in FEATURES}
    levels = {v: DEFAULT_RULES[v].levels for v in FEATURES}
    return BayesianNetwork(dag, cpts, levels)


def sample_network(bn: BayesianNetwork, rows: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral sampling; returns level indices with columns in ``bn.variables`` order."""
    col = {v: k for k, v in enumerate(bn.variables)}
    out = np.zeros((rows, len(col)), dtype=np.int64)
    u = rng.random((rows, len(col)))
    for v in bn.dag.topological_order():
        cpt = bn.cpts[v]
        probs = cpt.table[tuple(out[:, col[p]] for p in cpt.parents)] if cpt.parents else \
            np.broadcast_to(cpt.table, (rows, cpt.table.shape[-1]))
        cdf = np.cumsum(probs, axis=1)
        out[:, col[v]] = np.minimum((u[:, [col[v]]] > cdf).sum(axis=1), cdf.shape[1] - 1)
    return out


def _country_codes(countries: int):
    if countries <= len(STUDY_COUNTRIES):
        return STUDY_COUNTRIES[:countries]
    return tuple(f"C{k:02d}" for k in range(1, countries + 1))


def generate_paperlike_bn_data(seed: int = 0, rows: int = 684, countries: int = 12) -> DiscreteObservationTable:
    """Sample ``rows`` observations from :func:`paperlike_network`.

    Countries get contiguous blocks of rows; dates within a block start at
    2020-01-22.
    """
    if countries < 1 or rows % countries:
        raise ValueError("rows must be divisible by countries")
    bn = paperlike_network()
    values = sample_network(bn, rows, np.random.default_rng(seed))
    per = rows // countries
    keys = tuple((c, STUDY_START + timedelta(days=d)) for c in _country_codes(countries) for d in range(per))
    return DiscreteObservationTable(keys, bn.variables, dict(bn.levels), values)


# -- raw panel -----------------------------------------------------------------

def generate_paperlike_panel(seed: int = 0, countries: int = 12,
                             start: date = STUDY_START, end: date = STUDY_END) -> RawPanel:
    """Raw per-country series with epidemic growth, lagged deaths, a lockdown
    triggered by case load, and tweet volume/sentiment driven by new cases,
    new deaths, twitter usage and the lockdown window."""
    rng = np.random.default_rng(seed)
    days = date_span(start, end)
    T = len(days)
    t = np.arange(T)
    rows, stats = [], {}
    codes = _country_codes(countries)
    for c in codes:
        pop = int(rng.integers(5_000_000, 80_000_000))
        over65 = round(float(rng.uniform(0.15, 0.23)), 4)
        single = round(float(rng.uniform(0.25, 0.45)), 4)
        usage = round(float(rng.uniform(0.05, 0.25)), 4)
        onset = int(rng.integers(5, T - 10))
        growth = rng.uniform(0.15, 0.35) * (1.0 + 2.0 * (over65 - 0.19)) * (1.3 - single)
        rate = np.where(t >= onset, np.exp(growth * (t - onset)), 0.0)
        new_inf = rng.poisson(rate)
        cfr = 0.01 + 0.2 * (over65 - 0.15)
        lagged = np.concatenate([np.zeros(5), new_inf[:-5]])
        new_dth = rng.binomial(lagged.astype(np.int64), cfr)
        cum_inf, cum_dth = np.cumsum(new_inf), np.cumsum(new_dth)

        over = np.flatnonzero(cum_inf / pop > 2e-6)
        lockdown = days[min(over[0] + 3, T - 1)] if over.size else None
        in_window = np.zeros(T)
        if lockdown is not None:
            k = days.index(lockdown)
            in_window[k:k + 3] = 1.0

        drive = 1.0 + 4e5 * new_inf / pop + 3e7 * new_dth / pop + 1.5 * in_window
        tweets = rng.poisson(pop * usage * 2e-6 * drive)
        mood = 0.15 - 0.05 * np.log1p(new_inf) - 0.15 * np.log1p(new_dth) - 0.2 * in_window
        sentiment = np.clip(np.round(mood + rng.normal(0, 0.08, T), 6), -1.0, 1.0)

        stats[c] = CountryStats(c, pop, over65, single, usage, lockdown)
        for k, d in enumerate(days):
            rows.append(PanelRow(c, d, int(cum_inf[k]), int(cum_dth[k]), int(tweets[k]), float(sentiment[k])))
    return RawPanel(tuple(rows), stats, codes, (start, end))
