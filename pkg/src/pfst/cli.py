"""Command-line entry points: ``pfst select`` and ``pfst bench``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error, 5 no admissible feature.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing as mp
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

from . import __version__
from .engine import PfstConfig, pfst_select
from .errors import ConfigError, DataError, PfstError
from .evaluation import CvResult, kfold_cv
from .greedy import StopRule, backward_select, forward_select, stepwise_select
from .io import add_jitter, load_csv, standardize
from .report import SelectionReport
from .scatter import DEFAULT_SINGULAR_TOL, Dataset
from .synthetic import SyntheticTruth, make_blobs

log = logging.getLogger("pfst")

SCHEMA_VERSION = 1
METHODS = ("pfst", "forward", "backward", "stepwise")


@dataclass
class RunSpec:
    input: str | None = None
    label_column: str | int = -1
    method: str = "pfst"
    alpha: float = 0.05
    beta: float = 0.01
    gamma: float = 0.05
    blocks: int | None = None
    max_ref: int = 1
    max_features: int | None = None
    cv: int = 5
    seed: int = 0
    standardize: bool = True
    jitter: float = 0.0
    drop_null_rows: bool = False
    delimiter: str = ","
    tol: float = DEFAULT_SINGULAR_TOL
    output: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.cv and self.cv < 2:
            raise ConfigError("--cv must be 0 (skip) or at least 2")
        if self.jitter < 0:
            raise ConfigError("--jitter must be nonnegative")

    def pfst_config(self) -> PfstConfig:
        # preprocessing already happened in prepare_data
        return PfstConfig(alpha=self.alpha, beta=self.beta, gamma=self.gamma, blocks=self.blocks,
                          max_ref=self.max_ref, tol=self.tol, seed=self.seed, standardize=False,
                          max_features=self.max_features)

    def stop_rule(self) -> StopRule:
        return StopRule(self.alpha, self.beta, self.max_features)


@dataclass
class ReportDocument:
    """Versioned, JSON-serializable record of a ``select`` or ``bench`` run."""

    kind: str
    dataset: dict[str, Any]
    config: dict[str, Any]
    selection: SelectionReport | None = None
    cv: CvResult | None = None
    cells: list[dict[str, Any]] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "kind": self.kind,
            "dataset": self.dataset,
            "config": self.config,
            "selection": self.selection.to_dict() if self.selection else None,
            "cv": self.cv.to_dict() if self.cv else None,
            "cells": self.cells,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ReportDocument":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema version {d.get('schema_version')!r}")
        return cls(
            kind=d["kind"],
            dataset=d["dataset"],
            config=d["config"],
            selection=SelectionReport.from_dict(d["selection"]) if d.get("selection") else None,
            cv=CvResult.from_dict(d["cv"]) if d.get("cv") else None,
            cells=list(d.get("cells", [])),
            schema_version=d["schema_version"],
            tool_version=d["tool_version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        return cls.from_dict(json.loads(text))


def dataset_summary(data: Dataset, source: str | None) -> dict[str, Any]:
    return {"source": source, "n": data.n, "p": data.p, "classes": data.n_classes,
            "class_names": list(data.class_names)}


def prepare_data(data: Dataset, spec: RunSpec) -> Dataset:
    if spec.jitter > 0:
        data = add_jitter(data, spec.jitter, spec.seed)
    if spec.standardize:
        data = standardize(data)
    return data


def select_features(data: Dataset, spec: RunSpec) -> SelectionReport:
    """Run ``spec.method`` on already-prepared data."""
    if spec.method == "pfst":
        return pfst_select(data, spec.pfst_config())
    selector = {"forward": forward_select, "backward": backward_select, "stepwise": stepwise_select}[spec.method]
    return selector(data, None, spec.stop_rule(), tol=spec.tol)


def run_select(spec: RunSpec, data: Dataset | None = None) -> ReportDocument:
    """Load, select, cross-validate, and (if ``spec.output``) write the report."""
    if data is None:
        if spec.input is None:
            raise ConfigError("no input file given")
        if not os.path.exists(spec.input):
            raise DataError(f"{spec.input}: no such file")
        data = load_csv(spec.input, spec.label_column, delimiter=spec.delimiter,
                        drop_null_rows=spec.drop_null_rows)
    prepared = prepare_data(data, spec)
    report = select_features(prepared, spec)
    cv = kfold_cv(prepared, report.selected, spec.cv, spec.seed, tol=spec.tol) if spec.cv else None
    doc = ReportDocument("select", dataset_summary(data, spec.input), asdict(spec), report, cv)
    if spec.output:
        with open(spec.output, "w", encoding="utf-8") as fh:
            fh.write(doc.to_json())
    return doc


# ---------------------------------------------------------------------------
# benchmark


@dataclass
class BenchDataset:
    name: str
    data: Dataset
    truth: SyntheticTruth | None = None


def parse_synthetic(text: str) -> BenchDataset:
    """``"n=1000,p=500,informative=5,redundant=0,classes=2,separation=1,seed=0"``."""
    keys = {"n": int, "p": int, "informative": int, "redundant": int, "classes": int,
            "separation": float, "seed": int}
    kwargs: dict[str, Any] = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        k, _, v = part.partition("=")
        if k not in keys or not v:
            raise ConfigError(f"bad synthetic parameter {part!r}; known keys: {', '.join(keys)}")
        kwargs[k] = keys[k](v)
    rename = {"informative": "n_informative", "redundant": "n_redundant", "classes": "n_classes"}
    data, truth = make_blobs(**{rename.get(k, k): v for k, v in kwargs.items()})
    return BenchDataset(f"synthetic({text})", data, truth)


def _cell_child(conn, data: Dataset, spec: RunSpec, repeats: int):
    try:
        times, report = [], None
        for _ in range(repeats):
            t0 = time.perf_counter()
            report = select_features(data, spec)
            times.append(time.perf_counter() - t0)
        conn.send(("ok", times, report.selected))
    except PfstError as exc:
        conn.send(("error", f"{type(exc).__name__}: {exc}", None))
    finally:
        conn.close()


def _run_cell(data: Dataset, spec: RunSpec, repeats: int, timeout: float | None):
    """Run one (dataset, method) cell, in a child process when a timeout is set."""
    if timeout is None:
        try:
            times, report = [], None
            for _ in range(repeats):
                t0 = time.perf_counter()
                report = select_features(data, spec)
                times.append(time.perf_counter() - t0)
            return "ok", times, report.selected
        except PfstError as exc:
            return "error", f"{type(exc).__name__}: {exc}", None
    method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
    ctx = mp.get_context(method)
    parent, child = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_cell_child, args=(child, data, spec, repeats), daemon=True)
    proc.start()
    child.close()
    if parent.poll(timeout):
        result = parent.recv()
        proc.join()
        return result
    proc.terminate()
    proc.join()
    return "NA", None, None


def run_benchmark(datasets: Sequence[BenchDataset], methods: Sequence[str], repeats: int = 3, *,
                  base: RunSpec | None = None, timeout: float | None = None) -> ReportDocument:
    """Median wall-clock time, number selected and CV error per (dataset, method) cell.

    Cells run one after another.  A cell exceeding ``timeout`` seconds is
    recorded as ``NA`` and the benchmark moves on.
    """
    if not datasets or not methods:
        raise ConfigError("benchmark needs at least one dataset and one method")
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    base = base or RunSpec()
    cells = []
    for ds in datasets:
        prepared = prepare_data(ds.data, base)
        for method in methods:
            spec = RunSpec(**{**asdict(base), "method": method})
            status, times, selected = _run_cell(prepared, spec, repeats, timeout)
            cell: dict[str, Any] = {"dataset": ds.name, "method": method, "status": status}
            if status == "ok":
                cell["times"] = times
                cell["median_seconds"] = statistics.median(times)
                cell["selected"] = selected
                cell["n_selected"] = len(selected)
                if base.cv:
                    cell["cv_error"] = kfold_cv(prepared, selected, base.cv, base.seed, tol=base.tol).mean_error
                if ds.truth is not None:
                    hit = set(ds.truth.informative) & set(selected)
                    cell["recall"] = len(hit) / max(len(ds.truth.informative), 1)
            elif status == "error":
                cell["error"] = times
            cells.append(cell)
            log.info("%s / %s: %s", ds.name, method, cell.get("median_seconds", status))
    summary = {"datasets": [dataset_summary(ds.data, ds.name) for ds in datasets]}
    config = {**asdict(base), "methods": list(methods), "repeats": repeats, "timeout": timeout}
    return ReportDocument("bench", summary, config, cells=cells)


# ---------------------------------------------------------------------------
# formatting and argument parsing


def format_table(doc: ReportDocument) -> str:
    if doc.kind == "bench":
        w = max([len("dataset"), *(len(c["dataset"]) for c in doc.cells)])
        head = f"{'dataset':<{w}} {'method':<9} {'time (s)':>10} {'#sel':>5} {'cv err':>7}"
        lines = [head, "-" * len(head)]
        for c in doc.cells:
            t = f"{c['median_seconds']:.4f}" if c["status"] == "ok" else c["status"]
            nsel = str(c.get("n_selected", "-"))
            err = f"{c['cv_error']:.3f}" if "cv_error" in c else "-"
            lines.append(f"{c['dataset']:<{w}} {c['method']:<9} {t:>10} {nsel:>5} {err:>7}")
        return "\n".join(lines)
    sel = doc.selection
    ds = doc.dataset
    lines = [
        f"dataset   : {ds['source']} (n={ds['n']}, p={ds['p']}, classes={ds['classes']})",
        f"method    : {sel.method}",
        f"selected  : {len(sel.selected)} feature(s), trace criterion {sel.t:.6g}",
    ]
    lines += [f"  {i + 1:>3}. [{f}] {name}" for i, (f, name) in enumerate(zip(sel.selected, sel.names))]
    if doc.cv:
        folds = ", ".join(f"{e:.3f}" for e in doc.cv.fold_errors)
        lines.append(f"{doc.cv.k}-fold LDA error: {doc.cv.mean_error:.4f}  (folds: {folds})")
    lines.append("timings   : " + ", ".join(f"{k}={v:.4f}s" for k, v in sel.timings.items()))
    return "\n".join(lines)


def _label_arg(s: str) -> str | int:
    try:
        return int(s)
    except ValueError:
        return s


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=float, default=0.05, help="forward threshold (minimum criterion gain)")
    p.add_argument("--beta", type=float, default=0.01, help="backward threshold (maximum tolerated loss)")
    p.add_argument("--gamma", type=float, default=0.05, help="early-dropping threshold")
    p.add_argument("--blocks", type=int, default=None, help="feature blocks / workers (default: CPU count)")
    p.add_argument("--max-ref", type=int, default=1, help="maximum re-forward rounds")
    p.add_argument("--max-features", type=int, default=None)
    p.add_argument("--cv", type=int, default=5, help="folds for LDA cross-validation (0 to skip)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--jitter", type=float, default=0.0, help="add Gaussian noise with this std before selection")
    p.add_argument("--tol", type=float, default=DEFAULT_SINGULAR_TOL, help="relative singularity tolerance")
    p.add_argument("--label-column", type=_label_arg, default=-1, help="label column name or 0-based index")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--drop-null-rows", action="store_true", help="skip rows whose feature cells are all empty")
    p.add_argument("--output", "-o", default=None, help="write the JSON report here")
    p.add_argument("--format", choices=("json", "table"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfst", description="Trace-criterion feature selection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sel = sub.add_parser("select", help="select features from a CSV file and cross-validate LDA on them")
    sel.add_argument("input")
    sel.add_argument("--method", choices=METHODS, default="pfst")
    _add_common(sel)

    bench = sub.add_parser("bench", help="time several methods on several datasets")
    bench.add_argument("--dataset", action="append", default=[], help="CSV path (repeatable)")
    bench.add_argument("--synthetic", action="append", default=[],
                       help='generated dataset, e.g. "n=1000,p=500,informative=5,seed=0" (repeatable)')
    bench.add_argument("--methods", default="pfst,forward,backward,stepwise")
    bench.add_argument("--repeats", type=int, default=3)
    bench.add_argument("--timeout", type=float, default=None, help="seconds per cell before recording NA")
    _add_common(bench)
    return parser


def _spec_from_args(args, **extra) -> RunSpec:
    names = {f.name for f in fields(RunSpec)}
    values = {k: v for k, v in vars(args).items() if k in names}
    values.update(extra)
    return RunSpec(**values)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "select":
            doc = run_select(_spec_from_args(args))
        else:
            methods = [m.strip() for m in args.methods.split(",") if m.strip()]
            bad = [m for m in methods if m not in METHODS]
            if bad:
                raise ConfigError(f"unknown methods {bad}")
            base = _spec_from_args(args, input=None)
            datasets = [BenchDataset(path, load_csv(path, args.label_column, delimiter=args.delimiter,
                                                    drop_null_rows=args.drop_null_rows))
                        for path in args.dataset]
            datasets += [parse_synthetic(s) for s in args.synthetic]
            doc = run_benchmark(datasets, methods, args.repeats, base=base, timeout=args.timeout)
            if args.output:
                with open(args.output, "w", encoding="utf-8") as fh:
                    fh.write(doc.to_json())
    except PfstError as exc:
        print(f"pfst: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"pfst: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    print(format_table(doc) if args.format == "table" else doc.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
