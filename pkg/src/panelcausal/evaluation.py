"""Leave-one-country-out cross-validation, AUROC, and query batteries."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from . import bayesnet
from .errors import DegenerateLabels, InconsistentEvidence, MalformedCsv, SingleCountry, UnknownVariable
from .features import (
    DiscreteObservationTable,
    DiscretizationPolicy,
    NumericFeatureMatrix,
    discretize,
    fit_discretization,
    standardize_array,
)
from .notears import (
    DagStructure,
    EdgeConstraintMask,
    LearnResult,
    OptimizerOptions,
    learn_structure,
    threshold_to_dag,
)

DEFAULT_TARGET = "tweets_pc"


@dataclass(frozen=True)
class Fold:
    held_out_country: str
    train_row_indices: np.ndarray
    test_row_indices: np.ndarray


def loco_split(table) -> list[Fold]:
    """One fold per country, in order of first appearance.

    ``table`` is anything with ``row_keys`` of (country, date).
    """
    countries = [k[0] for k in table.row_keys]
    order = list(dict.fromkeys(countries))
    if len(order) < 2:
        raise SingleCountry(f"need at least two countries, got {order}")
    arr = np.array(countries, dtype=object)
    folds = []
    for c in order:
        test = arr == c
        folds.append(Fold(c, np.flatnonzero(~test), np.flatnonzero(test)))
    return folds


def auroc(scores, labels) -> float:
    """Area under the ROC curve as the normalized Mann-Whitney U statistic.

    Ties between a positive and a negative count one half.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"{n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# -- per-fold pipeline --------------------------------------------------------------

@dataclass
class FoldModel:
    policy: Optional[DiscretizationPolicy]
    dag: DagStructure
    bn: bayesnet.BayesianNetwork
    learn: Optional[LearnResult] = None


def learn_dag(X: np.ndarray, labels: Sequence[str], mask: Optional[EdgeConstraintMask],
              opts: OptimizerOptions) -> tuple[DagStructure, LearnResult]:
    """Standardize ``X``, run the structure learner and threshold the result."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = learn_structure(standardize_array(X), opts.lambda1, mask, opts, labels)
    return threshold_to_dag(result.W, opts.omega), result


def fit_fold(train_table: Optional[DiscreteObservationTable] = None,
             train_numeric: Optional[NumericFeatureMatrix] = None,
             mask: Optional[EdgeConstraintMask] = None,
             opts: Optional[OptimizerOptions] = None,
             alpha: float = 1.0,
             policy: Optional[DiscretizationPolicy] = None,
             structure: Optional[DagStructure] = None,
             rules=None) -> FoldModel:
    """Learn cutoffs, structure and CPTs from training rows only.

    With numeric rows, cutoffs come from them (unless ``policy`` is given) and
    the structure learner sees the standardized numeric values.  With only a
    discrete table the learner sees its standardized level indices.
    """
    opts = opts or OptimizerOptions()
    if train_numeric is not None:
        policy = policy or fit_discretization(train_numeric, rules)
        train_table = discretize(train_numeric, policy)
        X, labels = train_numeric.values, train_numeric.columns
    elif train_table is not None:
        X, labels = train_table.values.astype(float), train_table.columns
    else:
        raise ValueError("need a discrete table or a numeric matrix")
    learned = None
    if structure is None:
        structure, learned = learn_dag(X, labels, mask, opts)
    bn = bayesnet.fit(structure, train_table, alpha)
    return FoldModel(policy, structure, bn, learned)


@dataclass
class CvReport:
    per_country: dict[str, float]
    average: float
    target_variable: str
    excluded: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["country,auroc"]
        lines += [f"{c},{v!r}" for c, v in self.per_country.items()]
        lines.append(f"average,{self.average!r}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "target_variable": self.target_variable,
            "per_country": self.per_country,
            "average": self.average,
            "excluded": self.excluded,
            "metadata": self.metadata,
        }


def cross_validate(table: Optional[DiscreteObservationTable] = None,
                   numeric: Optional[NumericFeatureMatrix] = None,
                   mask: Optional[EdgeConstraintMask] = None,
                   opts: Optional[OptimizerOptions] = None,
                   alpha: float = 1.0,
                   target: str = DEFAULT_TARGET,
                   global_cutoffs: bool = False,
                   structure: Optional[DagStructure] = None,
                   rules=None,
                   positive_level: Optional[str] = None,
                   models: Optional[dict] = None) -> CvReport:
    """Leave-one-country-out AUROC for predicting ``target`` from all other variables.

    Every fold refits cutoffs, structure and CPTs on its training rows unless
    ``global_cutoffs`` (cutoffs from all rows) or ``structure`` (fixed graph)
    say otherwise.  Folds whose test labels are single-class are dropped from
    the average with a warning.  Pass a dict as ``models`` to collect each
    fold's :class:`FoldModel`.
    """
    source = numeric if numeric is not None else table
    if source is None:
        raise ValueError("need a discrete table or a numeric matrix")
    if target not in source.columns:
        raise UnknownVariable(target)
    opts = opts or OptimizerOptions()
    shared_policy = fit_discretization(numeric, rules) if (numeric is not None and global_cutoffs) else None

    per_country, excluded = {}, []
    for fold in loco_split(source):
        if numeric is not None:
            model = fit_fold(train_numeric=numeric.take(fold.train_row_indices), mask=mask, opts=opts,
                             alpha=alpha, policy=shared_policy, structure=structure, rules=rules)
            test = discretize(numeric.take(fold.test_row_indices), model.policy)
        else:
            model = fit_fold(train_table=table.take(fold.train_row_indices), mask=mask, opts=opts,
                             alpha=alpha, structure=structure)
            test = table.take(fold.test_row_indices)
        if models is not None:
            models[fold.held_out_country] = model
        levels = test.levels[target]
        pos = levels.index(positive_level) if positive_level is not None else len(levels) - 1
        others = [c for c in test.columns if c != target]
        probs = bayesnet.predict_proba_indices(
            model.bn, test.values[:, [test.columns.index(c) for c in others]], others, target)
        labels = (test.column(target) == pos).astype(int)
        try:
            per_country[fold.held_out_country] = auroc(probs[:, pos], labels)
        except DegenerateLabels as exc:
            warnings.warn(f"fold {fold.held_out_country} excluded: {exc}", stacklevel=2)
            excluded.append(fold.held_out_country)
    if not per_country:
        raise DegenerateLabels("every fold has single-class test labels")
    average = float(np.mean(list(per_country.values())))
    meta = {
        "global_cutoffs": bool(global_cutoffs),
        "fixed_structure": structure is not None,
        "structure_input": "numeric" if numeric is not None else "discrete",
        "lambda1": opts.lambda1,
        "omega": opts.omega,
        "alpha": alpha,
    }
    return CvReport(per_country, average, target, excluded, meta)


# -- query batteries --------------------------------------------------------------

@dataclass(frozen=True)
class QuerySpec:
    evidence: Mapping[str, str]
    target: str
    target_state: str
    interventions: Mapping[str, str] = field(default_factory=dict)


@dataclass
class QueryReport:
    rows: list  # of (QuerySpec, float)


def run_query_battery(bn: bayesnet.BayesianNetwork, queries: Sequence[QuerySpec]) -> QueryReport:
    rows = []
    for q in queries:
        if q.interventions:
            dist = bayesnet.do_query(bn, q.interventions, q.evidence, q.target)
        else:
            dist = bayesnet.query(bn, q.evidence, q.target)
        if q.target_state not in dist.probabilities:
            raise UnknownVariable(f"{q.target}={q.target_state}")
        rows.append((q, dist[q.target_state]))
    return QueryReport(rows)


def parse_battery(text: str, source: str = "<battery>") -> list[QuerySpec]:
    """Parse a JSON list of {"evidence": {var: level}, "target", "state"}
    (optionally "do": {var: level})."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCsv(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise MalformedCsv(f"{source}: expected a JSON list of queries")
    out = []
    for k, item in enumerate(doc):
        try:
            out.append(QuerySpec(dict(item.get("evidence", {})), item["target"], item["state"],
                                 dict(item.get("do", {}))))
        except (KeyError, TypeError, AttributeError, ValueError):
            raise MalformedCsv(f"{source}: query #{k} needs 'target' and 'state'") from None
    return out


def load_battery(path) -> list[QuerySpec]:
    return parse_battery(Path(path).read_text(encoding="utf-8"), str(path))


def default_battery() -> list[QuerySpec]:
    from importlib import resources

    text = resources.files("panelcausal.data").joinpath("default_battery.json").read_text()
    return parse_battery(text, "default_battery.json")
