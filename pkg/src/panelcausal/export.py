"""Graphviz DOT and JSON writers for learned graphs."""

from __future__ import annotations

import json

from ._io import atomic_write_text
from .features import FAMILIES
from .notears import DagStructure

FAMILY_COLORS = {
    "pandemic": "#9ecae1",
    "country-static": "#fee391",
    "intervention": "#a1d99b",
    "attention": "#fc9272",
    "other": "#d9d9d9",
}


def _q(label: str) -> str:
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(dag: DagStructure) -> str:
    """Render ``dag`` with one ``->`` line per edge, nodes styled by feature family."""
    lines = ["digraph G {", "  rankdir=LR;", '  node [shape=box, style="rounded,filled"];']
    for v in dag.labels:
        family = FAMILIES.get(v, "other")
        lines.append(f'  {_q(v)} [class="{family}", fillcolor="{FAMILY_COLORS[family]}"];')
    for p, c in dag.sorted_edges():
        w = dag.edges[(p, c)]
        attr = f' [label="{w:.2f}"]' if w is not None else ""
        lines.append(f"  {_q(p)} -> {_q(c)}{attr};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_json(doc, path):
    atomic_write_text(path, json.dumps(doc, indent=1) + "\n")
