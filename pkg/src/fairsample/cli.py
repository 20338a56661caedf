"""Command-line front end.

Subcommands:

* ``simulate``  generate a synthetic collection (runs, qrels, annotations)
* ``sample``    draw an annotation sample under a budget
* ``estimate``  estimate metrics for every system from a sample
* ``sweep``     run a full rate x repetition experiment, with reports/plots
* ``report``    re-render plots from a sweep's CSV outputs

Exit codes: 0 success, 1 data or contract error, 2 usage or I/O error.
Config files are YAML with the same field names as the dataclasses they
mirror; unknown keys are rejected and command-line flags override file
values. Every randomized command takes a seed and echoes the resolved
configuration into a manifest, so reruns reproduce outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import IO, Any, Mapping, Sequence

import numpy as np
import yaml

from . import plots
from .corpus import (
    AnnotationSet,
    parse_annotations,
    parse_qrels,
    parse_run_file,
    write_annotations,
    write_qrels,
)
from .errors import FairsampleError
from .estimators import EstimatorKind
from .evaluation import (
    DEFAULT_ESTIMATORS,
    DEFAULT_METRICS,
    DEFAULT_RATES,
    CellResult,
    DataPaths,
    ExperimentConfig,
    ExperimentReport,
    RankingPanel,
    run_experiment,
)
from .metrics import MetricKind, MetricSpec, TargetKind
from .sampling import (
    BudgetSpec,
    pooled_distribution,
    restrict_pool,
    stratified_sample,
    stratify,
    uniform_sample,
)
from .simulator import SimConfig, paper_scale_config, simulate


class UsageError(Exception):
    """Bad flags or config contents; exits with code 2."""


def _check_keys(mapping: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise UsageError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _load_yaml(path: str) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


def _as_pair(value: Any, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise UsageError(f"{where} must be a two-element list")
    return float(value[0]), float(value[1])


_SIM_KEYS = {f.name for f in dataclasses.fields(SimConfig)}


def _sim_config_from_dict(data: Mapping[str, Any], where: str) -> SimConfig:
    _check_keys(data, _SIM_KEYS, where)
    kwargs: dict[str, Any] = dict(data)
    for name in ("easiness_prior", "goodness_range", "beta_prior"):
        if name in kwargs:
            kwargs[name] = _as_pair(kwargs[name], f"{where}.{name}")
    if kwargs.get("group_bias_range") is not None:
        kwargs["group_bias_range"] = _as_pair(
            kwargs["group_bias_range"], f"{where}.group_bias_range"
        )
    missing = {"num_queries", "corpus_size", "num_systems",
               "retrieved_per_query"} - set(kwargs)
    if missing:
        raise UsageError(f"{where}: missing key(s): {', '.join(sorted(missing))}")
    return SimConfig(**kwargs)


_METRIC_KEYS = {"kind", "cutoff_k", "patience", "target", "target_value"}


def _metric_spec_from_dict(data: Mapping[str, Any], where: str) -> MetricSpec:
    _check_keys(data, _METRIC_KEYS, where)
    if "kind" not in data:
        raise UsageError(f"{where}: missing key: kind")
    try:
        kind = MetricKind(data["kind"])
    except ValueError:
        raise UsageError(f"{where}: unknown metric kind {data['kind']!r}") from None
    kwargs: dict[str, Any] = {"kind": kind}
    if "cutoff_k" in data:
        kwargs["cutoff_k"] = int(data["cutoff_k"])
    if "patience" in data:
        kwargs["patience"] = float(data["patience"])
    if "target" in data:
        try:
            kwargs["target_kind"] = TargetKind(data["target"])
        except ValueError:
            raise UsageError(
                f"{where}: unknown target {data['target']!r}"
            ) from None
    if "target_value" in data:
        kwargs["target_value"] = float(data["target_value"])
    return MetricSpec(**kwargs)


_SWEEP_KEYS = {"seed", "repetitions", "rates", "estimators", "protected_group",
               "simulation", "data", "metrics"}
_DATA_KEYS = {"runs", "annotations", "qrels"}


def _experiment_config_from_file(path: str, seed_override: int | None,
                                 reps_override: int | None) -> ExperimentConfig:
    data = _load_yaml(path)
    _check_keys(data, _SWEEP_KEYS, path)
    if ("simulation" in data) == ("data" in data):
        raise UsageError(f"{path}: specify exactly one of `simulation` and `data`")

    source: SimConfig | DataPaths
    if "simulation" in data:
        source = _sim_config_from_dict(data["simulation"], f"{path}:simulation")
    else:
        _check_keys(data["data"], _DATA_KEYS, f"{path}:data")
        if "runs" not in data["data"] or "annotations" not in data["data"]:
            raise UsageError(f"{path}:data needs `runs` and `annotations`")
        source = DataPaths(
            runs=data["data"]["runs"],
            annotations=data["data"]["annotations"],
            qrels=data["data"].get("qrels"),
        )

    metrics = DEFAULT_METRICS
    if "metrics" in data:
        if not isinstance(data["metrics"], list) or not data["metrics"]:
            raise UsageError(f"{path}: metrics must be a non-empty list")
        metrics = tuple(
            _metric_spec_from_dict(entry, f"{path}:metrics[{i}]")
            for i, entry in enumerate(data["metrics"])
        )

    estimators = DEFAULT_ESTIMATORS
    if "estimators" in data:
        try:
            estimators = tuple(EstimatorKind(e) for e in data["estimators"])
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from None

    rates = tuple(float(r) for r in data.get("rates", DEFAULT_RATES))
    seed = seed_override if seed_override is not None else int(data.get("seed", 0))
    repetitions = (reps_override if reps_override is not None
                   else int(data.get("repetitions", 10)))
    return ExperimentConfig(
        source=source,
        metrics=metrics,
        estimators=estimators,
        rates=rates,
        repetitions=repetitions,
        seed=seed,
        protected_group=data.get("protected_group"),
    )


def _experiment_config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    if isinstance(config.source, SimConfig):
        source: dict[str, Any] = {"simulation": dataclasses.asdict(config.source)}
    else:
        source = {"data": {
            "runs": str(config.source.runs),
            "annotations": str(config.source.annotations),
            "qrels": None if config.source.qrels is None
            else str(config.source.qrels),
        }}
    return {
        **source,
        "metrics": [dataclasses.asdict(spec) for spec in config.metrics],
        "estimators": [kind.value for kind in config.estimators],
        "rates": list(config.rates),
        "repetitions": config.repetitions,
        "seed": config.seed,
        "protected_group": config.protected_group,
    }


def _write_manifest(path: Path, payload: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")


# -- simulate ---------------------------------------------------------------


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.paper_scale:
        base = paper_scale_config()
        config_dict = dataclasses.asdict(base)
    elif args.config:
        config_dict = dataclasses.asdict(
            _sim_config_from_dict(_load_yaml(args.config), args.config)
        )
    else:
        config_dict = {}

    overrides = {
        "num_queries": args.num_queries,
        "corpus_size": args.corpus_size,
        "num_systems": args.num_systems,
        "retrieved_per_query": args.retrieved_per_query,
        "group_bias": args.group_bias,
        "score_noise": args.score_noise,
        "seed": args.seed,
    }
    config_dict.update({k: v for k, v in overrides.items() if v is not None})
    config = _sim_config_from_dict(config_dict, "simulate configuration")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    collection = simulate(config)

    with open(out / "runs.txt", "w", encoding="utf-8") as f:
        for ranking in collection.iter_rankings():
            for e in ranking.entries:
                f.write(f"{ranking.query_id} Q0 {e.doc_id} {e.rank} "
                        f"{e.score!r} {ranking.system_id}\n")
    with open(out / "qrels.txt", "w", encoding="utf-8") as f:
        write_qrels(collection.qrels, f)
    with open(out / "annotations.txt", "w", encoding="utf-8") as f:
        write_annotations(collection.group_labels, f)
    _write_manifest(out / "manifest.json", {
        "command": "simulate",
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "files": ["runs.txt", "qrels.txt", "annotations.txt"],
    })
    print(f"wrote {len(collection.system_ids)} systems, "
          f"{len(collection.query_ids)} queries, "
          f"{len(collection.doc_ids)} documents to {out}")
    return 0


# -- sample -----------------------------------------------------------------


def _cmd_sample(args: argparse.Namespace) -> int:
    if (args.rate is None) == (args.budget is None):
        raise UsageError("specify exactly one of --rate and --budget")
    if args.rate is not None and not (0.0 < args.rate <= 1.0):
        raise UsageError(f"--rate {args.rate} outside (0, 1]")
    if args.budget is not None and args.budget < 1:
        raise UsageError("--budget must be a positive integer")
    budget = (BudgetSpec(rate=args.rate) if args.rate is not None
              else BudgetSpec(count=args.budget))

    with open(args.runs, encoding="utf-8") as f:
        runset = parse_run_file(f)
    with open(args.annotations, encoding="utf-8") as f:
        ground_truth = parse_annotations(f)

    design = restrict_pool(pooled_distribution(runset), ground_truth.labels)
    m = budget.resolve(len(design.pool))
    if args.design == "weighted":
        design_m = stratify(design, m)
        assert design_m.buckets is not None
        sampled = stratified_sample(design_m, m, ground_truth, args.seed)
        print(f"budget m={m}, pool={len(design.pool)}, "
              f"buckets={len(design_m.buckets)}")
    else:
        pool = sorted(design.pool)
        sampled = uniform_sample(pool, m, ground_truth, args.seed)
        print(f"budget m={m}, pool={len(pool)}, uniform")

    with open(args.out, "w", encoding="utf-8") as f:
        write_annotations(sampled, f)
    return 0


# -- estimate ---------------------------------------------------------------


def _cmd_estimate(args: argparse.Namespace) -> int:
    kind = EstimatorKind(args.estimator)
    with open(args.runs, encoding="utf-8") as f:
        runset = parse_run_file(f)
    with open(args.sample, encoding="utf-8") as f:
        sample = parse_annotations(f)
    if kind is EstimatorKind.HORVITZ_THOMPSON and sample.inclusion is None:
        raise UsageError(
            f"{args.sample}: horvitz_thompson needs the third column "
            f"(inclusion probability), which this file lacks"
        )

    ground_truth: AnnotationSet | None = None
    if args.ground_truth:
        with open(args.ground_truth, encoding="utf-8") as f:
            ground_truth = parse_annotations(f)
    qrels = None
    if args.qrels:
        with open(args.qrels, encoding="utf-8") as f:
            qrels = parse_qrels(f)

    try:
        target_kind = TargetKind(args.target)
    except ValueError:
        raise UsageError(f"unknown target {args.target!r}") from None
    if target_kind is not TargetKind.PARITY and target_kind is not \
            TargetKind.FIXED_VALUE and ground_truth is None:
        raise UsageError(f"target {args.target} needs --ground-truth")
    if target_kind is TargetKind.RELEVANCE_PROPORTION and qrels is None:
        raise UsageError("target relevance_proportion needs --qrels")

    specs = []
    for name in args.metric or [k.value for k in
                                (MetricKind.ABSOLUTE_DIFFERENCE,
                                 MetricKind.SQUARED_DIFFERENCE,
                                 MetricKind.KL_DIVERGENCE,
                                 MetricKind.EXPOSURE)]:
        try:
            metric_kind = MetricKind(name)
        except ValueError:
            raise UsageError(f"unknown metric kind {name!r}") from None
        specs.append(MetricSpec(
            kind=metric_kind,
            cutoff_k=args.k,
            patience=args.patience,
            target_kind=target_kind,
            target_value=args.target_value,
        ))

    panel = RankingPanel.from_rankings(iter(runset))
    reference = ground_truth if ground_truth is not None else sample
    groups = list(reference.groups())
    protected = args.protected or groups[0]

    writer = csv.writer(sys.stdout, lineterminator="\n")
    header = ["system_id", "metric", "estimated"]
    if ground_truth is not None:
        header.append("actual")
    writer.writerow(header)
    for spec in specs:
        targets = panel.target_arrays(spec, reference, qrels, protected, groups)
        estimated = panel.estimate_per_system(
            spec, kind, sample, targets, protected, groups
        )
        actual = None
        if ground_truth is not None:
            actual = panel.exact_per_system(spec, ground_truth, qrels, protected)
        for i, system_id in enumerate(panel.system_ids):
            row = [system_id, spec.name, repr(float(estimated[i]))]
            if actual is not None:
                row.append(repr(float(actual[i])))
            writer.writerow(row)
    return 0


# -- sweep and report -------------------------------------------------------


def _plot_slug(metric: str, estimator: str) -> str:
    return f"{metric.replace('@', '_k')}_{estimator}"


def render_plots(report: ExperimentReport, out_dir: Path) -> list[Path]:
    """Write the scatter and tau-trend SVGs for every metric x estimator."""
    plots_dir = out_dir / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    written = []
    scatter_rate = min(report.rates)
    for metric in report.metric_names:
        for estimator in report.estimator_names:
            slug = _plot_slug(metric, estimator)
            key = (metric, estimator, scatter_rate, 0)
            if key in report.estimated:
                path = plots_dir / f"scatter_{slug}.svg"
                with open(path, "w", encoding="utf-8") as f:
                    plots.scatter_svg(
                        f,
                        [float(v) for v in report.actual[metric]],
                        [float(v) for v in report.estimated[key]],
                        title=f"{metric} via {estimator} (p={scatter_rate:g})",
                    )
                written.append(path)
            xs = [1.0 - rate for rate in report.rates]
            ys = [report.mean_tau(metric, estimator, rate)
                  for rate in report.rates]
            path = plots_dir / f"tau_{slug}.svg"
            with open(path, "w", encoding="utf-8") as f:
                plots.line_chart_svg(
                    f, xs, ys,
                    title=f"{metric} via {estimator}",
                    xlabel="unjudged rate (1 - p)",
                    ylabel="mean Kendall tau",
                )
            written.append(path)
    return written


def _write_outputs(report: ExperimentReport, out: Path) -> None:
    with open(out / "report.csv", "w", encoding="utf-8") as f:
        report.write_report_csv(f)
    with open(out / "detail.csv", "w", encoding="utf-8") as f:
        report.write_detail_csv(f)
    with open(out / "summary.csv", "w", encoding="utf-8") as f:
        report.write_summary_csv(f)
    render_plots(report, out)


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment_config_from_file(args.config, args.seed, args.repetitions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(config)
    _write_outputs(report, out)
    _write_manifest(out / "manifest.json", {
        "command": "sweep",
        "config": _experiment_config_to_dict(config),
        "seed": config.seed,
        "cells": len(report.cells),
    })
    for row in report.summary():
        tau = "" if row.mean_tau is None else f"{row.mean_tau:.4f}"
        err = "" if row.mean_rmse is None else f"{row.mean_rmse:.4f}"
        print(f"{row.metric:28s} {row.estimator:26s} p={row.rate:<4g} "
              f"tau={tau:8s} rmse={err}")
    return 0


def _read_report_csv(stream: IO[str]) -> list[CellResult]:
    cells = []
    for row in csv.DictReader(stream):
        cells.append(CellResult(
            metric=row["metric"],
            estimator=row["estimator"],
            rate=float(row["rate"]),
            repetition=int(row["repetition"]),
            tau=float(row["tau"]) if row["tau"] else None,
            rmse=float(row["rmse"]) if row["rmse"] else None,
            n_systems=int(row["n_systems"]),
        ))
    return cells


def _cmd_report(args: argparse.Namespace) -> int:
    with open(args.report_csv, encoding="utf-8") as f:
        cells = _read_report_csv(f)
    if not cells:
        raise UsageError(f"{args.report_csv} holds no result rows")

    metric_names = list(dict.fromkeys(c.metric for c in cells))
    estimator_names = list(dict.fromkeys(c.estimator for c in cells))
    rates = list(dict.fromkeys(c.rate for c in cells))
    repetitions = max(c.repetition for c in cells) + 1
    n_systems = cells[0].n_systems

    # Detail rows come in per-cell blocks of n_systems rows, systems in a
    # fixed order; the actual column repeats per metric across blocks.
    actual: dict[str, list[float]] = {}
    estimated: dict[tuple[str, str, float, int], list[float]] = {}
    system_ids: list[str] = []
    with open(args.detail_csv, encoding="utf-8") as f:
        for row in csv.DictReader(f):
            key = (row["metric"], row["estimator"], float(row["rate"]),
                   int(row["repetition"]))
            estimated.setdefault(key, []).append(float(row["estimated"]))
            if len(system_ids) < n_systems:
                system_ids.append(row["system_id"])
            block = actual.setdefault(row["metric"], [])
            if len(block) < n_systems:
                block.append(float(row["actual"]))

    report = ExperimentReport(
        system_ids=system_ids,
        metric_names=metric_names,
        estimator_names=estimator_names,
        rates=rates,
        repetitions=repetitions,
        actual={k: np.asarray(v) for k, v in actual.items()},
        estimated={k: np.asarray(v) for k, v in estimated.items()},
        cells=cells,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = render_plots(report, out)
    print(f"rendered {len(written)} plots to {out / 'plots'}")
    return 0


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairsample",
        description="Budgeted annotation sampling and estimation of "
                    "group-fairness metrics for ranked outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic collection")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="YAML file mirroring the simulator fields")
    p.add_argument("--paper-scale", action="store_true",
                   help="start from the 800-system benchmark configuration")
    p.add_argument("--num-queries", type=int)
    p.add_argument("--corpus-size", type=int)
    p.add_argument("--num-systems", type=int)
    p.add_argument("--retrieved-per-query", type=int)
    p.add_argument("--group-bias", type=float)
    p.add_argument("--score-noise", type=float)
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sample", help="draw an annotation sample")
    p.add_argument("--runs", required=True)
    p.add_argument("--annotations", required=True,
                   help="ground-truth annotation file")
    p.add_argument("--out", required=True, help="sampled annotation file")
    p.add_argument("--rate", type=float, help="sampling rate in (0, 1]")
    p.add_argument("--budget", type=int, help="absolute annotation budget")
    p.add_argument("--design", choices=["weighted", "uniform"],
                   default="weighted")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("estimate", help="estimate metrics from a sample")
    p.add_argument("--runs", required=True)
    p.add_argument("--sample", required=True, help="sampled annotation file")
    p.add_argument("--qrels")
    p.add_argument("--ground-truth",
                   help="complete annotations; adds the actual column")
    p.add_argument("--estimator", default=EstimatorKind.HORVITZ_THOMPSON.value,
                   choices=[k.value for k in EstimatorKind])
    p.add_argument("--metric", action="append",
                   choices=[k.value for k in MetricKind],
                   help="repeatable; defaults to the four benchmark metrics")
    p.add_argument("--k", type=int, default=30, help="metric cutoff")
    p.add_argument("--patience", type=float, default=0.5)
    p.add_argument("--target", default=TargetKind.PARITY.value,
                   choices=[t.value for t in TargetKind])
    p.add_argument("--target-value", type=float)
    p.add_argument("--protected", help="protected group label")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("sweep", help="run a rate x repetition experiment")
    p.add_argument("--config", required=True, help="experiment YAML")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--repetitions", type=int,
                   help="override the config repetitions")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="re-render plots from sweep CSVs")
    p.add_argument("--report-csv", required=True)
    p.add_argument("--detail-csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FairsampleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
