"""Discrete Bayesian networks: CPT fitting, exact inference, interventions.

Inference is variable elimination with a min-degree order (ties broken by
name).  :func:`joint_brute_force` enumerates the full joint and serves as the
reference semantics for :func:`query`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    IncompleteRow,
    InconsistentEvidence,
    StateSpaceTooLarge,
    UnknownVariable,
)
from .features import DiscreteObservationTable
from .notears import DagStructure, is_acyclic

MAX_BRUTE_FORCE_STATES = 2 ** 20


@dataclass(frozen=True)
class Cpt:
    """P(child | parents) as an array of shape (*parent_cards, child_card)."""

    child: str
    parents: tuple[str, ...]
    table: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return self.table.reshape(-1, self.table.shape[-1])


@dataclass(frozen=True)
class BayesianNetwork:
    dag: DagStructure
    cpts: dict[str, Cpt]
    levels: dict[str, tuple[str, ...]]

    def __post_init__(self):
        if not is_acyclic(self.dag):
            raise ValueError("network graph has a cycle")
        for v in self.dag.labels:
            cpt = self.cpts[v]
            if tuple(cpt.parents) != tuple(self.dag.parents(v)):
                raise ValueError(f"CPT parents of {v} do not match the graph")
            shape = tuple(len(self.levels[p]) for p in cpt.parents) + (len(self.levels[v]),)
            if cpt.table.shape != shape:
                raise ValueError(f"CPT of {v} has shape {cpt.table.shape}, expected {shape}")

    @property
    def variables(self) -> tuple[str, ...]:
        return self.dag.labels

    def level_index(self, var: str, label: str) -> int:
        if var not in self.levels:
            raise UnknownVariable(var)
        try:
            return self.levels[var].index(label)
        except ValueError:
            raise UnknownVariable(f"{var}={label}") from None


@dataclass(frozen=True)
class Distribution:
    variable: str
    probabilities: dict[str, float]

    def __getitem__(self, level: str) -> float:
        return self.probabilities[level]

    def as_array(self) -> np.ndarray:
        return np.array(list(self.probabilities.values()))


# -- fitting ---------------------------------------------------------------------

def fit(dag: DagStructure, data: DiscreteObservationTable, alpha: float = 1.0) -> BayesianNetwork:
    """Estimate CPTs by (count + alpha) / (row total + alpha * k).

    A parent configuration with no observations and ``alpha == 0`` gets a
    uniform row.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    cols = {c: j for j, c in enumerate(data.columns)}
    for v in dag.labels:
        if v not in cols:
            raise UnknownVariable(v)
    levels = {v: tuple(data.levels[v]) for v in dag.labels}
    cpts = {}
    for v in dag.labels:
        parents = tuple(dag.parents(v))
        shape = tuple(len(levels[p]) for p in parents) + (len(levels[v]),)
        counts = np.zeros(shape)
        index = tuple(data.values[:, cols[p]] for p in parents) + (data.values[:, cols[v]],)
        np.add.at(counts, index, 1.0)
        counts += alpha
        totals = counts.sum(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            table = np.where(totals > 0, counts / totals, 1.0 / shape[-1])
        cpts[v] = Cpt(v, parents, table)
    return BayesianNetwork(dag, cpts, levels)


# -- factors -------------------------------------------------------------------

@dataclass(frozen=True)
class _Factor:
    variables: tuple[str, ...]
    values: np.ndarray

    def reduce(self, var: str, idx: int) -> "_Factor":
        axis = self.variables.index(var)
        return _Factor(self.variables[:axis] + self.variables[axis + 1:], np.take(self.values, idx, axis=axis))


def _product(factors: Sequence[_Factor], keep: Sequence[str]) -> _Factor:
    """Multiply factors and sum out every variable not in ``keep``."""
    names = sorted({v for f in factors for v in f.variables})
    ids = {v: k for k, v in enumerate(names)}
    operands = []
    for f in factors:
        operands += [f.values, [ids[v] for v in f.variables]]
    out = [v for v in names if v in keep]
    return _Factor(tuple(out), np.einsum(*operands, [ids[v] for v in out]))


def _cpt_factors(bn: BayesianNetwork) -> list[_Factor]:
    return [_Factor(c.parents + (c.child,), c.table) for c in (bn.cpts[v] for v in bn.variables)]


def _check_evidence(bn: BayesianNetwork, evidence: Mapping[str, str], target: str) -> dict[str, int]:
    if target not in bn.levels:
        raise UnknownVariable(target)
    if target in evidence:
        raise ValueError(f"target {target} is also observed")
    return {v: bn.level_index(v, lab) for v, lab in evidence.items()}


def min_degree_order(factors: Sequence[_Factor], eliminate: Sequence[str]) -> list[str]:
    """Greedy min-degree elimination order, ties broken lexicographically."""
    scopes = [set(f.variables) for f in factors]
    pending = set(eliminate)
    order = []
    while pending:
        def neighbours(v):
            return set().union(*[s for s in scopes if v in s]) - {v}

        v = min(sorted(pending), key=lambda u: len(neighbours(u)))
        merged = neighbours(v)
        scopes = [s for s in scopes if v not in s] + [merged]
        pending.remove(v)
        order.append(v)
    return order


def _distribution(bn, target, values) -> Distribution:
    total = float(values.sum())
    if not total > 0.0:
        raise InconsistentEvidence(f"evidence has probability zero (query on {target})")
    return Distribution(target, {lab: float(p) / total for lab, p in zip(bn.levels[target], values)})


def query(bn: BayesianNetwork, evidence: Optional[Mapping[str, str]], target: str,
          order: Optional[Sequence[str]] = None) -> Distribution:
    """Exact P(target | evidence) by variable elimination.

    ``order`` optionally fixes the elimination order; it must list every
    variable other than the target and the evidence.
    """
    evidence = dict(evidence or {})
    ev = _check_evidence(bn, evidence, target)
    factors = _cpt_factors(bn)
    for var, idx in ev.items():
        factors = [f.reduce(var, idx) if var in f.variables else f for f in factors]
    hidden = [v for v in bn.variables if v != target and v not in ev]
    if order is None:
        order = min_degree_order(factors, hidden)
    elif sorted(order) != sorted(hidden):
        raise ValueError("elimination order must cover exactly the hidden variables")

    for var in order:
        touching = [f for f in factors if var in f.variables]
        if not touching:
            continue
        rest = [f for f in factors if var not in f.variables]
        scope = {v for f in touching for v in f.variables} - {var}
        factors = rest + [_product(touching, scope)]
    final = _product(factors, [target])
    return _distribution(bn, target, final.values)


def mutilate(bn: BayesianNetwork, interventions: Mapping[str, str]) -> BayesianNetwork:
    """Cut incoming edges of intervened variables and clamp them to a point mass."""
    clamp = {v: bn.level_index(v, lab) for v, lab in interventions.items()}
    edges = {e: w for e, w in bn.dag.edges.items() if e[1] not in clamp}
    dag = DagStructure(bn.dag.labels, edges)
    cpts = dict(bn.cpts)
    for v, idx in clamp.items():
        table = np.zeros(len(bn.levels[v]))
        table[idx] = 1.0
        cpts[v] = Cpt(v, (), table)
    return BayesianNetwork(dag, cpts, bn.levels)


def do_query(bn: BayesianNetwork, interventions: Mapping[str, str],
             evidence: Optional[Mapping[str, str]], target: str) -> Distribution:
    """P(target | do(interventions), evidence) on the mutilated network."""
    evidence = dict(evidence or {})
    overlap = set(interventions) & set(evidence)
    if overlap:
        raise ValueError(f"variables both intervened on and observed: {sorted(overlap)}")
    if target in interventions:
        raise ValueError(f"target {target} is intervened on")
    return query(mutilate(bn, interventions), {**evidence, **interventions}, target)


def joint_brute_force(bn: BayesianNetwork, evidence: Optional[Mapping[str, str]], target: str) -> Distribution:
    """Posterior by summing the full joint over every assignment."""
    evidence = dict(evidence or {})
    ev = _check_evidence(bn, evidence, target)
    names = list(bn.variables)
    cards = [len(bn.levels[v]) for v in names]
    if int(np.prod(cards, dtype=float)) > MAX_BRUTE_FORCE_STATES:
        raise StateSpaceTooLarge(f"{int(np.prod(cards, dtype=float))} joint states")
    states = np.indices(cards).reshape(len(names), -1).T
    col = {v: k for k, v in enumerate(names)}
    prob = np.ones(len(states))
    for v in names:
        cpt = bn.cpts[v]
        idx = tuple(states[:, col[p]] for p in cpt.parents) + (states[:, col[v]],)
        prob *= cpt.table[idx]
    keep = np.ones(len(states), dtype=bool)
    for v, i in ev.items():
        keep &= states[:, col[v]] == i
    t = states[keep, col[target]]
    sums = np.bincount(t, weights=prob[keep], minlength=cards[col[target]])
    return _distribution(bn, target, sums)


# -- prediction ------------------------------------------------------------------

def predict_proba_indices(bn: BayesianNetwork, rows: np.ndarray, columns: Sequence[str], target: str) -> np.ndarray:
    """Vectorized P(target | all other variables) for each row of level indices.

    Uses the Markov blanket: P(t | pa(t)) times P(c | pa(c)) over children c.
    Returns an array of shape (len(rows), target cardinality).
    """
    col = {c: k for k, c in enumerate(columns)}
    for v in bn.variables:
        if v != target and v not in col:
            raise IncompleteRow(f"row lacks {v}")
    rows = np.asarray(rows, dtype=np.int64)
    k = len(bn.levels[target])
    scores = np.ones((len(rows), k))
    for t in range(k):
        fixed = np.full(len(rows), t)
        for v in [target, *bn.dag.children(target)]:
            cpt = bn.cpts[v]
            idx = tuple(fixed if name == target else rows[:, col[name]] for name in cpt.parents + (v,))
            scores[:, t] *= cpt.table[idx]
    totals = scores.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise InconsistentEvidence("a row has probability zero under the model")
    return scores / totals


def predict_proba(bn: BayesianNetwork, row: Mapping[str, str], target: str) -> Distribution:
    missing = [v for v in bn.variables if v != target and v not in row]
    if missing:
        raise IncompleteRow(f"row lacks {missing}")
    others = [v for v in bn.variables if v != target]
    idx = np.array([[bn.level_index(v, row[v]) for v in others]])
    probs = predict_proba_indices(bn, idx, others, target)[0]
    return Distribution(target, {lab: float(p) for lab, p in zip(bn.levels[target], probs)})


# -- model files -------------------------------------------------------------------

def model_to_json(bn: BayesianNetwork) -> dict:
    """Serialize; CPT rows are row-major over the parents in listed order."""
    cpts = []
    for v in bn.variables:
        c = bn.cpts[v]
        parent_states = [list(s) for s in np.ndindex(*c.table.shape[:-1])] if c.parents else [[]]
        cpts.append({
            "child": v,
            "parents": list(c.parents),
            "parent_states": [[bn.levels[p][i] for p, i in zip(c.parents, s)] for s in parent_states],
            "rows": [[float(x) for x in row] for row in c.rows],
        })
    return {
        "variables": list(bn.variables),
        "levels": {v: list(bn.levels[v]) for v in bn.variables},
        "edges": [{"from": p, "to": c} for p, c in bn.dag.sorted_edges()],
        "cpts": cpts,
    }


def model_from_json(doc: dict) -> BayesianNetwork:
    labels = tuple(doc["variables"])
    levels = {v: tuple(doc["levels"][v]) for v in labels}
    dag = DagStructure(labels, {(e["from"], e["to"]): None for e in doc["edges"]})
    cpts = {}
    for item in doc["cpts"]:
        parents = tuple(item["parents"])
        shape = tuple(len(levels[p]) for p in parents) + (len(levels[item["child"]]),)
        cpts[item["child"]] = Cpt(item["child"], parents, np.array(item["rows"], dtype=float).reshape(shape))
    return BayesianNetwork(dag, cpts, levels)


def save_model(bn: BayesianNetwork, path):
    from ._io import atomic_write_text

    atomic_write_text(path, json.dumps(model_to_json(bn), indent=1) + "\n")


def load_model(path) -> BayesianNetwork:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
