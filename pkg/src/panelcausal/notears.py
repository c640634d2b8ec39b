"""Continuous DAG learning: least squares + l1 subject to h(W) = 0.

h(W) = tr(exp(W * W)) - n is zero exactly when the weighted graph has no
cycles.  The equality constraint is handled by an augmented Lagrangian; each
subproblem splits W = W+ - W- so the l1 term becomes linear and the problem
is a smooth bound-constrained one, solved with L-BFGS-B.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as slin
import scipy.optimize as sopt

from .errors import DidNotConverge, DimensionMismatch, MalformedCsv


@dataclass(frozen=True)
class WeightedAdjacency:
    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise DimensionMismatch(f"W has shape {self.values.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("W has non-finite entries")
        if np.any(np.diag(self.values) != 0):
            raise ValueError("W has a nonzero diagonal")

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class EdgeConstraintMask:
    """Forbidden ordered pairs (i, j), meaning no edge i -> j."""

    forbidden: frozenset = frozenset()

    def __post_init__(self):
        for i, j in self.forbidden:
            if i == j:
                raise ValueError(f"self pair ({i}, {j}) in mask; the diagonal is always forbidden")

    def validate(self, n: int):
        for i, j in self.forbidden:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"mask pair ({i}, {j}) out of range for n={n}")

    def as_array(self, n: int) -> np.ndarray:
        """Boolean n x n array, True where the entry is fixed at zero."""
        self.validate(n)
        fixed = np.eye(n, dtype=bool)
        for i, j in self.forbidden:
            fixed[i, j] = True
        return fixed


@dataclass(frozen=True)
class OptimizerOptions:
    lambda1: float = 0.1
    h_tol: float = 1e-8
    rho_max: float = 1e16
    max_outer_iterations: int = 100
    omega: float = 0.3

    def __post_init__(self):
        if self.lambda1 < 0:
            raise ValueError("lambda1 must be nonnegative")
        if self.h_tol <= 0 or self.rho_max <= 0 or self.max_outer_iterations <= 0:
            raise ValueError("h_tol, rho_max and max_outer_iterations must be positive")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")


@dataclass(frozen=True)
class DagStructure:
    labels: tuple[str, ...]
    edges: dict = field(default_factory=dict)  # (parent, child) -> weight or None

    def __post_init__(self):
        names = set(self.labels)
        for p, c in self.edges:
            if p not in names or c not in names:
                raise ValueError(f"edge {p}->{c} references an unknown label")
            if p == c:
                raise ValueError(f"self-loop on {p}")

    def parents(self, node: str) -> list[str]:
        ps = {p for p, c in self.edges if c == node}
        return [v for v in self.labels if v in ps]

    def children(self, node: str) -> list[str]:
        cs = {c for p, c in self.edges if p == node}
        return [v for v in self.labels if v in cs]

    def sorted_edges(self) -> list[tuple[str, str]]:
        pos = {v: k for k, v in enumerate(self.labels)}
        return sorted(self.edges, key=lambda e: (pos[e[0]], pos[e[1]]))

    def topological_order(self) -> list[str]:
        order = _kahn(self.labels, self.edges)
        if len(order) != len(self.labels):
            raise ValueError("graph has a cycle")
        return order


@dataclass
class OuterStep:
    h: float
    rho: float
    alpha: float
    loss: float


@dataclass
class LearnResult:
    """Outcome of :func:`learn_structure`.  ``W`` is the best iterate even when
    ``converged`` is False."""

    W: WeightedAdjacency
    h: float
    converged: bool
    rho: float
    trace: list[OuterStep]


# -- objective pieces ----------------------------------------------------------

def acyclicity_h(W: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of tr(exp(W * W)) - n."""
    W = np.asarray(W, dtype=float)
    E = slin.expm(W * W)
    h = max(float(np.trace(E)) - W.shape[0], 0.0)
    return h, E.T * W * 2.0


def squared_loss(W: np.ndarray, X: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of ||X - XW||_F^2 / (2m)."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != W.shape[0] or W.shape[0] != W.shape[1]:
        raise DimensionMismatch(f"X has shape {X.shape} but W has shape {W.shape}")
    m = X.shape[0]
    R = X - X @ W
    return 0.5 / m * float((R ** 2).sum()), -1.0 / m * (X.T @ R)


# -- solver ----------------------------------------------------------------------

def learn_structure(X, lambda1: Optional[float] = None, mask: Optional[EdgeConstraintMask] = None,
                    opts: Optional[OptimizerOptions] = None,
                    labels: Optional[Sequence[str]] = None) -> LearnResult:
    """Learn a weighted adjacency matrix from data ``X`` (m x n).

    ``X`` is centered column-wise before fitting.  ``lambda1`` overrides
    ``opts.lambda1`` when given.  If ``rho_max`` is reached with h above
    ``h_tol`` a :class:`DidNotConverge` warning is issued and the result is
    flagged, never discarded.
    """
    opts = opts or OptimizerOptions()
    lam = opts.lambda1 if lambda1 is None else float(lambda1)
    if lam < 0:
        raise ValueError("lambda1 must be nonnegative")
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    m, n = X.shape
    if labels is None:
        labels = tuple(f"x{k}" for k in range(n))
    labels = tuple(labels)
    if len(labels) != n:
        raise DimensionMismatch(f"{len(labels)} labels for {n} columns")
    if m < 2:
        raise ValueError("need at least two rows")
    X = X - X.mean(axis=0, keepdims=True)

    fixed = (mask or EdgeConstraintMask()).as_array(n).ravel()
    bounds = [(0.0, 0.0) if f else (0.0, None) for f in fixed] * 2

    def adj(w):
        return (w[: n * n] - w[n * n:]).reshape(n, n)

    rho, alpha = 1.0, 0.0

    def objective(w):
        W = adj(w)
        loss, g_loss = squared_loss(W, X)
        h, g_h = acyclicity_h(W)
        obj = loss + 0.5 * rho * h * h + alpha * h + lam * w.sum()
        g_smooth = (g_loss + (rho * h + alpha) * g_h).ravel()
        return obj, np.concatenate([g_smooth + lam, -g_smooth + lam])

    w_est = np.zeros(2 * n * n)
    h = np.inf
    trace: list[OuterStep] = []
    for _ in range(opts.max_outer_iterations):
        w_new, h_new = w_est, h
        while rho < opts.rho_max:
            sol = sopt.minimize(objective, w_est, method="L-BFGS-B", jac=True, bounds=bounds)
            w_new = sol.x
            h_new, _ = acyclicity_h(adj(w_new))
            if h_new > 0.25 * h:
                rho *= 10.0
            else:
                break
        w_est, h = w_new, h_new
        alpha += rho * h
        trace.append(OuterStep(h, rho, alpha, squared_loss(adj(w_est), X)[0]))
        if h <= opts.h_tol or rho >= opts.rho_max:
            break

    W = adj(w_est)
    W[fixed.reshape(n, n)] = 0.0
    converged = bool(h <= opts.h_tol)
    if not converged:
        warnings.warn(
            f"acyclicity h={h:.3g} above tolerance {opts.h_tol:g} (rho={rho:.3g})",
            DidNotConverge, stacklevel=2)
    return LearnResult(WeightedAdjacency(labels, W), float(h), converged, rho, trace)


# -- graphs ----------------------------------------------------------------------

def _kahn(nodes, edges) -> list:
    indeg = {v: 0 for v in nodes}
    succ = {v: [] for v in nodes}
    for p, c in edges:
        indeg[c] += 1
        succ[p].append(c)
    ready = [v for v in nodes if indeg[v] == 0]
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in succ[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order


def is_acyclic(g: DagStructure) -> bool:
    return len(_kahn(g.labels, g.edges)) == len(g.labels)


def _find_cycle(nodes, edges) -> list[tuple]:
    """Edges of one directed cycle, or [] when acyclic."""
    done = set(_kahn(nodes, edges))
    rest = [v for v in nodes if v not in done]
    if not rest:
        return []
    pred = {v: sorted((p for p, c in edges if c == v and p not in done), key=nodes.index) for v in rest}
    # every leftover node has a leftover predecessor, so walking back must revisit
    path, seen = [rest[0]], {rest[0]: 0}
    while True:
        p = pred[path[-1]][0]
        if p in seen:
            loop = path[seen[p]:]
            return [(loop[k + 1], loop[k]) for k in range(len(loop) - 1)] + [(loop[0], loop[-1])]
        seen[p] = len(path)
        path.append(p)


def threshold_to_dag(W: WeightedAdjacency, omega: float) -> DagStructure:
    """Keep edges with |w| > omega, then break any cycle by dropping its weakest edge."""
    labels = list(W.labels)
    vals = W.values
    edges = {
        (labels[i], labels[j]): float(vals[i, j])
        for i in range(W.n) for j in range(W.n)
        if i != j and abs(vals[i, j]) > omega
    }
    while True:
        cycle = _find_cycle(labels, edges)
        if not cycle:
            break
        weakest = min(cycle, key=lambda e: (abs(edges[e]), labels.index(e[0]), labels.index(e[1])))
        del edges[weakest]
    dag = DagStructure(tuple(labels), edges)
    return DagStructure(dag.labels, {e: edges[e] for e in dag.sorted_edges()})


# -- constraint files and exports --------------------------------------------

def mask_from_pairs(labels: Sequence[str], pairs: Iterable[tuple[str, str]]) -> EdgeConstraintMask:
    pos = {v: k for k, v in enumerate(labels)}
    forbidden = set()
    for a, b in pairs:
        if a not in pos or b not in pos:
            raise ValueError(f"constraint {a}->{b} names an unknown feature")
        if a != b:
            forbidden.add((pos[a], pos[b]))
    return EdgeConstraintMask(frozenset(forbidden))


def load_constraints(path, labels: Sequence[str]) -> EdgeConstraintMask:
    """Read a forbidden-edge file: a JSON list of {"from", "to"} objects, or an
    object whose "forbidden" key holds that list."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedCsv(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    items = doc["forbidden"] if isinstance(doc, dict) else doc
    try:
        pairs = [(item["from"], item["to"]) for item in items]
    except (KeyError, TypeError):
        raise MalformedCsv(f"{path}: each constraint needs 'from' and 'to'") from None
    return mask_from_pairs(labels, pairs)


def default_constraints(labels: Sequence[str]) -> EdgeConstraintMask:
    from importlib import resources

    text = resources.files("panelcausal.data").joinpath("default_constraints.json").read_text()
    doc = json.loads(text)
    pairs = [(i["from"], i["to"]) for i in doc["forbidden"] if i["from"] in labels and i["to"] in labels]
    return mask_from_pairs(labels, pairs)


def adjacency_to_json(result: LearnResult, opts: OptimizerOptions, lambda1: float) -> dict:
    W = result.W
    return {
        "labels": list(W.labels),
        "values": [float(v) for v in W.values.ravel()],
        "omega": opts.omega,
        "lambda1": lambda1,
        "h_final": result.h,
        "converged": result.converged,
    }


def adjacency_from_json(doc: dict) -> WeightedAdjacency:
    labels = tuple(doc["labels"])
    n = len(labels)
    return WeightedAdjacency(labels, np.array(doc["values"], dtype=float).reshape(n, n))


def dag_to_json(dag: DagStructure) -> dict:
    return {
        "labels": list(dag.labels),
        "edges": [{"from": p, "to": c, "weight": dag.edges[(p, c)]} for p, c in dag.sorted_edges()],
    }


def dag_from_json(doc: dict) -> DagStructure:
    dag = DagStructure(tuple(doc["labels"]), {(e["from"], e["to"]): e.get("weight") for e in doc["edges"]})
    if not is_acyclic(dag):
        raise ValueError("DAG file contains a cycle")
    return dag
