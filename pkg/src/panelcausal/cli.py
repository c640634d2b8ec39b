"""Command-line entry point: ``panelcausal <command> [options]``.

Exit codes: 0 success, 1 input/validation error, 2 solver did not converge,
3 some queries failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import bayesnet, ingest
from ._io import atomic_write_text, csv_text
from .errors import InconsistentEvidence, PanelCausalError
from .evaluation import cross_validate, default_battery, learn_dag, load_battery
from .export import to_dot, write_json
from .features import (
    discretize,
    engineer,
    fit_discretization,
    load_discrete_csv,
    write_discrete_csv,
    write_numeric_csv,
)
from .notears import (
    OptimizerOptions,
    adjacency_from_json,
    adjacency_to_json,
    dag_from_json,
    dag_to_json,
    default_constraints,
    load_constraints,
    threshold_to_dag,
)
from .synthetic import (
    STUDY_COUNTRIES,
    STUDY_END,
    STUDY_START,
    chain_weights,
    generate_paperlike_bn_data,
    generate_paperlike_panel,
    generate_synthetic_sem,
)

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_PARTIAL = 0, 1, 2, 3
PATH_KEYS = ("epidemic", "deaths", "stats", "attention", "table", "constraints", "output_dir")


class CliError(Exception):
    def __init__(self, module, cause):
        super().__init__(f"{module}: {cause}")


@contextmanager
def stage(module):
    try:
        yield
    except (PanelCausalError, ValueError, KeyError, OSError) as exc:
        raise CliError(module, exc) from exc


@dataclass
class RunConfig:
    epidemic: Optional[Path] = None
    epidemic_format: str = "tidy"
    deaths: Optional[Path] = None
    stats: Optional[Path] = None
    attention: Optional[Path] = None
    table: Optional[Path] = None
    countries: list = field(default_factory=lambda: list(STUDY_COUNTRIES))
    start: date = STUDY_START
    end: date = STUDY_END
    lambda1: float = 0.1
    omega: float = 0.3
    alpha: float = 1.0
    h_tol: float = 1e-8
    seed: int = 0
    constraints: Optional[Path] = None
    output_dir: Path = Path("out")
    target: str = "tweets_pc"

    @property
    def options(self) -> OptimizerOptions:
        return OptimizerOptions(lambda1=self.lambda1, h_tol=self.h_tol, omega=self.omega)

    def validate(self, need_inputs=True):
        if self.end < self.start:
            raise CliError("config", f"date range {self.start}..{self.end} is empty")
        if self.lambda1 < 0 or self.omega < 0 or self.alpha < 0 or self.h_tol <= 0:
            raise CliError("config", "lambda1, omega, alpha must be >= 0 and h_tol > 0")
        if need_inputs:
            if self.table is None and None in (self.epidemic, self.stats, self.attention):
                raise CliError("config", "give either table or all of epidemic, stats, attention")
            for key in ("epidemic", "deaths", "stats", "attention", "table", "constraints"):
                p = getattr(self, key)
                if p is not None and not Path(p).is_file():
                    raise CliError("config", f"{key} file {p} does not exist")


def _coerce(key, value):
    if value is None:
        return None
    if key in PATH_KEYS:
        return Path(value)
    if key in ("start", "end"):
        return value if isinstance(value, date) else date.fromisoformat(str(value))
    if key == "countries":
        return [c.strip() for c in value.split(",")] if isinstance(value, str) else list(value)
    if key in ("lambda1", "omega", "alpha", "h_tol"):
        return float(value)
    if key == "seed":
        return int(value)
    return value


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise CliError("config", exc) from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise CliError("config", f"unknown keys {sorted(unknown)}")
    values = {}
    for key, value in doc.items():
        try:
            v = _coerce(key, value)
        except (ValueError, TypeError) as exc:
            raise CliError("config", f"{key}: {exc}") from exc
        if key in PATH_KEYS and v is not None and not v.is_absolute():
            v = path.parent / v
        values[key] = v
    return RunConfig(**values)


def build_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            try:
                overrides[f.name] = _coerce(f.name, value)
            except ValueError as exc:
                raise CliError("config", f"{f.name}: {exc}") from exc
    return replace(cfg, **overrides)


# -- data plumbing --------------------------------------------------------------

def load_inputs(cfg: RunConfig):
    """Return (numeric matrix or None, discrete table) for the configured inputs."""
    if cfg.table is not None:
        with stage("features"):
            return None, load_discrete_csv(cfg.table)
    with stage("ingest"):
        panel = ingest.load_panel(cfg.epidemic, cfg.stats, cfg.attention, cfg.countries,
                                  (cfg.start, cfg.end), cfg.epidemic_format, cfg.deaths)
    with stage("features"):
        numeric = engineer(panel)
        return numeric, discretize(numeric, fit_discretization(numeric))


def load_mask(cfg: RunConfig, labels):
    with stage("notears"):
        if cfg.constraints is None:
            return default_constraints(labels)
        return load_constraints(cfg.constraints, labels)


def _learn(cfg, numeric, table):
    source = numeric if numeric is not None else table
    mask = load_mask(cfg, source.columns)
    with stage("notears"):
        dag, result = learn_dag(source.values.astype(float), source.columns, mask, cfg.options)
    return dag, result


def _write_learned(cfg, dag, result):
    out = Path(cfg.output_dir)
    write_json(adjacency_to_json(result, cfg.options, cfg.lambda1), out / "learned_W.json")
    write_json(dag_to_json(dag), out / "dag.json")
    atomic_write_text(out / "dag.dot", to_dot(dag))


def _convergence_status(result):
    if result.converged:
        return EXIT_OK
    print(f"warning [notears]: did not converge, h={result.h:.3g}; artifacts written anyway",
          file=sys.stderr)
    return EXIT_NOT_CONVERGED


# -- commands -------------------------------------------------------------------

def cmd_learn(cfg: RunConfig) -> int:
    cfg.validate()
    numeric, table = load_inputs(cfg)
    dag, result = _learn(cfg, numeric, table)
    _write_learned(cfg, dag, result)
    return _convergence_status(result)


def cmd_fit(cfg: RunConfig, dag_path=None) -> int:
    cfg.validate()
    numeric, table = load_inputs(cfg)
    status = EXIT_OK
    if dag_path is not None:
        with stage("notears"):
            dag = dag_from_json(json.loads(Path(dag_path).read_text(encoding="utf-8")))
    else:
        dag, result = _learn(cfg, numeric, table)
        _write_learned(cfg, dag, result)
        status = _convergence_status(result)
    with stage("bayesnet"):
        bn = bayesnet.fit(dag, table, cfg.alpha)
        bayesnet.save_model(bn, Path(cfg.output_dir) / "model.json")
    return status


def _format_evidence(q):
    parts = [f"do({k}={v})" for k, v in q.interventions.items()]
    parts += [f"{k}={v}" for k, v in q.evidence.items()]
    return ";".join(parts)


def cmd_query(model_path, battery_path=None, fmt="csv", out=None) -> int:
    with stage("bayesnet"):
        bn = bayesnet.load_model(model_path)
    with stage("eval"):
        queries = load_battery(battery_path) if battery_path else default_battery()
    rows, failed = [], 0
    for q in queries:
        try:
            with warnings.catch_warnings():
                if q.interventions:
                    dist = bayesnet.do_query(bn, q.interventions, q.evidence, q.target)
                else:
                    dist = bayesnet.query(bn, q.evidence, q.target)
            value = f"{dist[q.target_state]:.3f}"
        except InconsistentEvidence:
            value, failed = "ERROR:InconsistentEvidence", failed + 1
        except (PanelCausalError, KeyError, ValueError) as exc:
            value, failed = f"ERROR:{type(exc).__name__}", failed + 1
        rows.append((_format_evidence(q), q.target, q.target_state, value))
    if fmt == "json":
        text = json.dumps([dict(zip(("evidence", "target", "state", "probability"), r)) for r in rows],
                          indent=1) + "\n"
    else:
        text = csv_text(["evidence", "target", "state", "probability"], rows)
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_crossval(cfg: RunConfig, global_cutoffs=False, fixed_structure=None) -> int:
    cfg.validate()
    numeric, table = load_inputs(cfg)
    source = numeric if numeric is not None else table
    mask = load_mask(cfg, source.columns)
    structure = None
    if fixed_structure is not None:
        with stage("notears"):
            structure = dag_from_json(json.loads(Path(fixed_structure).read_text(encoding="utf-8")))
    with stage("eval"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = cross_validate(table=table, numeric=numeric, mask=mask, opts=cfg.options, alpha=cfg.alpha,
                                target=cfg.target, global_cutoffs=global_cutoffs, structure=structure)
    for w in caught:
        if not issubclass(w.category, RuntimeWarning):
            print(f"warning [eval]: {w.message}", file=sys.stderr)
    report.metadata["variant"] = "global-cutoffs" if global_cutoffs else "per-fold-cutoffs"
    out = Path(cfg.output_dir)
    atomic_write_text(out / "cv_report.csv", report.to_csv())
    write_json(report.to_json(), out / "cv_report.json")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, kind: str, rows: Optional[int] = None, sem_spec=None,
                 noise_sd: float = 1.0) -> int:
    out = Path(cfg.output_dir)
    if kind == "sem":
        if sem_spec is not None:
            with stage("eval"):
                W = np.array(json.loads(Path(sem_spec).read_text(encoding="utf-8"))["weights"], dtype=float)
        else:
            W = chain_weights(2, 2.0)
        with stage("eval"):
            X = generate_synthetic_sem(W, rows or 1000, noise_sd, cfg.seed)
        header = [f"x{k}" for k in range(W.shape[0])]
        atomic_write_text(out / "sem.csv", csv_text(header, [[repr(float(v)) for v in r] for r in X]))
        return EXIT_OK
    if kind != "paperlike":
        raise CliError("simulate", f"unknown kind {kind!r}")
    n_countries = len(cfg.countries) if cfg.countries else 12
    table = generate_paperlike_bn_data(cfg.seed, rows or 684, n_countries)
    write_discrete_csv(table, out / "paperlike_table.csv")
    panel = generate_paperlike_panel(cfg.seed, n_countries, cfg.start, cfg.end)
    ingest.write_panel(panel, out)
    atomic_write_text(out / "panel.toml", "\n".join([
        'epidemic = "epidemic.csv"',
        'stats = "country_stats.csv"',
        'attention = "attention.csv"',
        f"countries = {json.dumps(list(panel.countries))}",
        f'start = "{panel.date_range[0].isoformat()}"',
        f'end = "{panel.date_range[1].isoformat()}"',
        f"seed = {cfg.seed}",
    ]) + "\n")
    atomic_write_text(out / "paperlike.toml", "\n".join([
        'table = "paperlike_table.csv"',
        "lambda1 = 0.02",
        "omega = 0.15",
        f"seed = {cfg.seed}",
    ]) + "\n")
    return EXIT_OK


def cmd_features_dump(cfg: RunConfig) -> int:
    cfg.validate()
    if cfg.table is not None:
        raise CliError("features", "features dump needs the raw epidemic/stats/attention inputs")
    numeric, table = load_inputs(cfg)
    out = Path(cfg.output_dir)
    write_numeric_csv(numeric, out / "numeric_features.csv")
    write_discrete_csv(table, out / "discrete_features.csv")
    return EXIT_OK


def cmd_export_dot(path, omega=None, out=None) -> int:
    with stage("notears"):
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if "values" in doc:
            dag = threshold_to_dag(adjacency_from_json(doc), doc.get("omega", 0.3) if omega is None else omega)
        else:
            dag = dag_from_json(doc)
    text = to_dot(dag)
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _run_options(p):
    p.add_argument("--config", help="TOML key = value run configuration")
    p.add_argument("--epidemic")
    p.add_argument("--epidemic-format", dest="epidemic_format", choices=["tidy", "jhu_wide"])
    p.add_argument("--deaths", help="JHU wide deaths file (jhu_wide format only)")
    p.add_argument("--stats")
    p.add_argument("--attention")
    p.add_argument("--table", help="discrete observation table CSV (skips ingest/features)")
    p.add_argument("--countries", help="comma-separated country identifiers")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--h-tol", dest="h_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--constraints")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--target")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panelcausal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    _run_options(sub.add_parser("learn", help="learn W and the thresholded DAG"))
    p = sub.add_parser("fit", help="learn (or load) a DAG and fit CPTs")
    _run_options(p)
    p.add_argument("--dag", help="use this DAG JSON instead of learning one")

    p = sub.add_parser("query", help="run a query battery against a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--battery", help="JSON battery (default: bundled marginal-probability battery)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")

    p = sub.add_parser("crossval", help="leave-one-country-out AUROC")
    _run_options(p)
    p.add_argument("--global-cutoffs", action="store_true", help="fit cutoffs on all rows (leaky)")
    p.add_argument("--fixed-structure", help="DAG JSON used for every fold")

    p = sub.add_parser("simulate", help="write synthetic fixtures")
    _run_options(p)
    p.add_argument("--kind", choices=["sem", "paperlike"], required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--sem-spec", help='JSON {"weights": n x n matrix}')
    p.add_argument("--noise-sd", type=float, default=1.0)

    p = sub.add_parser("features", help="feature matrices")
    fsub = p.add_subparsers(dest="features_command", required=True)
    _run_options(fsub.add_parser("dump", help="write numeric and discrete feature CSVs"))

    p = sub.add_parser("export-dot", help="render W or DAG JSON as Graphviz DOT")
    p.add_argument("input")
    p.add_argument("--omega", type=float)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "query":
            return cmd_query(args.model, args.battery, args.format, args.out)
        if args.command == "export-dot":
            return cmd_export_dot(args.input, args.omega, args.out)
        cfg = build_config(args)
        if args.command == "learn":
            return cmd_learn(cfg)
        if args.command == "fit":
            return cmd_fit(cfg, args.dag)
        if args.command == "crossval":
            return cmd_crossval(cfg, args.global_cutoffs, args.fixed_structure)
        if args.command == "simulate":
            cfg.validate(need_inputs=False)
            return cmd_simulate(cfg, args.kind, args.rows, args.sem_spec, args.noise_sd)
        if args.command == "features":
            return cmd_features_dump(cfg)
    except CliError as exc:
        print(f"error [{exc}]", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
