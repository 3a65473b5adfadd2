"""Command-line surface: ingest, train, check, simulate, evaluate, hist.

Exit codes: 0 success (check: all pass), 2 at least one flagged verdict,
1 operational error, 64 usage error, 66 missing input file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .detector import (
    detect,
    load_params_json,
    params_for_technique,
    verdict_to_dict,
    write_params_json,
)
from .distance import pairwise_histograms, write_histogram_csv
from .evaluate import (
    BEST_CASE,
    WORST_CASE,
    confusion,
    consensus_analysis,
    emit_report,
    macro_metrics,
    read_predictions_csv,
)
from .ingest import (
    CohortConfig,
    build_historical_db,
    filter_cohort,
    normalize_dataset,
    parse_dataset,
)
from .ranges import Boundaries, Quantile, derive_boundaries, load_boundaries
from .records import MODELED_TECHNIQUES, write_records_csv
from .seeding import substream
from .simulate import KIND_FEATURE, KIND_RX_SWAP, generate_sa_set, write_sa_set
from .train import SearchSpace, search_parameters, split_holdout, write_trace_csv

EX_OK = 0
EX_ERROR = 1
EX_FLAGGED = 2
EX_USAGE = 64
EX_NOINPUT = 66

DEFAULT_SA_COUNTS = {KIND_RX_SWAP: 10, KIND_FEATURE: 10}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


@dataclass
class RunConfig:
    """Optional JSON config carrying default paths and settings; explicit
    flags always win."""

    historical: str | None = None
    cohort_config: str | None = None
    boundaries: str | None = None
    params: str | None = None
    out: str | None = None
    seed: int | None = None
    technique: str | None = None

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        with open(path) as handle:
            payload = json.load(handle)
        known = {k: payload.get(k) for k in cls.__dataclass_fields__ if k in payload}
        return cls(**known)


def build_parser() -> _Parser:
    parser = _Parser(prog="rxcheck", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rxcheck {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="run-config JSON with default paths")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--technique", choices=MODELED_TECHNIQUES, default=None)

    p = sub.add_parser("ingest", help="filter a raw export and build reference databases")
    p.add_argument("--input", required=True, help="raw records CSV")
    common(p, out_required=True)

    p = sub.add_parser("train", help="optimize detector parameters per technique")
    p.add_argument("--input", required=True, help="historical records CSV")
    p.add_argument("--budget", type=int, default=100, help="search evaluations")
    p.add_argument("--runs", type=int, default=50, help="objective resampling runs")
    p.add_argument("--strategy", choices=("grid", "random", "adaptive"), default="adaptive")
    p.add_argument("--sn", type=int, default=20, help="holdout normals per run")
    p.add_argument("--rarity-threshold", type=int, default=1)
    common(p, out_required=True)

    p = sub.add_parser("check", help="emit a verdict for each input record")
    p.add_argument("--input", required=True, help="records CSV to check")
    p.add_argument("--historical", help="historical records CSV (or set in --config)")
    p.add_argument("--params", help="trained parameters JSON (or set in --config)")
    p.add_argument("--boundaries", help="explicit boundaries preset JSON; omitted = no range check")
    p.add_argument(
        "--quantile-boundaries",
        metavar="LOW,HIGH",
        help="derive boundaries as empirical quantiles of the reference set "
             "instead of an explicit preset",
    )
    common(p)

    p = sub.add_parser("simulate", help="forge simulated anomalies from a historical set")
    p.add_argument("--input", required=True, help="historical records CSV")
    p.add_argument("--rarity-threshold", type=int, default=1)
    common(p, out_required=True)

    p = sub.add_parser("evaluate", help="score labeled predictions and write a report bundle")
    p.add_argument("--input", required=True, help="predictions CSV (record_id,truth,prediction,source)")
    common(p, out_required=True)

    p = sub.add_parser("hist", help="export pairwise-distance histograms")
    p.add_argument("--input", required=True, help="historical records CSV")
    p.add_argument("--bin-width", type=float, default=0.05)
    common(p, out_required=True)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"rxcheck: {exc}", file=sys.stderr)
        return EX_USAGE
    try:
        handler = _HANDLERS[args.command]
        return handler(args)
    except FileNotFoundError as exc:
        print(f"rxcheck: missing file: {exc.filename or exc}", file=sys.stderr)
        return EX_NOINPUT
    except UsageError as exc:
        print(f"rxcheck: {exc}", file=sys.stderr)
        return EX_USAGE
    except Exception as exc:  # operational failures map to exit 1
        print(f"rxcheck: error: {exc}", file=sys.stderr)
        return EX_ERROR


def main() -> None:
    sys.exit(run())


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------

def _resolve(flag_value, config_value, default=None):
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default


def _load_cohort(config: RunConfig) -> CohortConfig:
    if config.cohort_config:
        return CohortConfig.from_json(config.cohort_config)
    return CohortConfig()


def _build_dbs(input_path: str, cohort: CohortConfig, technique: str | None):
    records, diagnostics = parse_dataset(input_path)
    normalized, norm_report = normalize_dataset(records, cohort.label_mappings)
    kept, log = filter_cohort(normalized, cohort)
    dbs = {}
    for tech, rows in kept.items():
        if technique is not None and tech != technique:
            continue
        if len(rows) >= 2:
            dbs[tech] = build_historical_db(rows)
    return dbs, kept, log, diagnostics, norm_report


def _load_new_records(input_path: str, cohort: CohortConfig):
    records, diagnostics = parse_dataset(input_path)
    normalized, _ = normalize_dataset(records, cohort.label_mappings)
    return normalized, diagnostics


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_ingest(args) -> int:
    config = RunConfig.load(args.config)
    cohort = _load_cohort(config)
    out = Path(_resolve(args.out, config.out))
    out.mkdir(parents=True, exist_ok=True)
    dbs, kept, log, diagnostics, norm_report = _build_dbs(args.input, cohort, args.technique)

    log.write_csv(out / "exclusions.csv")
    meta = {}
    for tech, db in sorted(dbs.items()):
        write_records_csv(out / f"db_{tech}.csv", db.records)
        meta[tech] = {
            "size": db.size,
            "theta": db.theta,
            "tau": db.tau,
            "rx_scaler": {
                "f_min": db.rx_scaler.f_min,
                "f_max": db.rx_scaler.f_max,
                "d_min": db.rx_scaler.d_min,
                "d_max": db.rx_scaler.d_max,
            },
        }
    (out / "db_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(
        f"ingest: kept {sum(len(v) for v in kept.values())} records, "
        f"excluded {len(log)}, parse diagnostics {len(diagnostics)}, "
        f"unmapped labels {sum(norm_report.unmapped.values())}"
    )
    return EX_OK


def _cmd_train(args) -> int:
    config = RunConfig.load(args.config)
    cohort = _load_cohort(config)
    seed = _resolve(args.seed, config.seed, 0)
    out = Path(_resolve(args.out, config.out))
    out.mkdir(parents=True, exist_ok=True)
    dbs, kept, _, _, _ = _build_dbs(args.input, cohort, args.technique)
    if not dbs:
        raise UsageError("no technique had enough records to train on")

    space = SearchSpace(budget=args.budget, runs_per_point=args.runs, strategy=args.strategy)
    params_by_technique = {}
    for tech in sorted(dbs):
        rows = kept[tech]
        reference, pool = split_holdout(rows, args.sn, substream(seed, f"split:{tech}"))
        reference_db = build_historical_db(reference)
        sa_set = generate_sa_set(
            reference_db,
            DEFAULT_SA_COUNTS,
            threshold=args.rarity_threshold,
            rng=substream(seed, f"forge:{tech}"),
        )
        outcome = search_parameters(
            space, reference_db, pool, sa_set, seed=seed, s_n=args.sn
        )
        params_by_technique[tech] = outcome.best_params
        write_trace_csv(out / f"trace_{tech}.csv", outcome)
        write_sa_set(out / f"sa_{tech}.csv", out / f"sa_{tech}.json", sa_set)
        print(
            f"train[{tech}]: best f1 {outcome.best_f1_mean:.3f} "
            f"+/- {outcome.best_f1_std:.3f} at a={outcome.best_params.a:.3f} "
            f"b={outcome.best_params.b:.3f} mu={outcome.best_params.mu:.4f} "
            f"nu={outcome.best_params.nu:.4f}"
        )
    write_params_json(out / "params.json", params_by_technique)
    return EX_OK


def _cmd_check(args) -> int:
    config = RunConfig.load(args.config)
    cohort = _load_cohort(config)
    historical = _resolve(args.historical, config.historical)
    params_path = _resolve(args.params, config.params)
    if historical is None:
        raise UsageError("check needs --historical (or a config with one)")
    if params_path is None:
        raise UsageError("check needs --params (or a config with one)")
    if args.boundaries and args.quantile_boundaries:
        raise UsageError("--boundaries and --quantile-boundaries are mutually exclusive")
    boundaries_path = _resolve(args.boundaries, config.boundaries)
    boundaries = load_boundaries(boundaries_path) if boundaries_path else None
    params_by_technique = load_params_json(params_path)
    dbs, _, _, _, _ = _build_dbs(historical, cohort, args.technique)
    if args.quantile_boundaries:
        try:
            low, high = (float(q) for q in args.quantile_boundaries.split(","))
        except ValueError:
            raise UsageError("--quantile-boundaries expects LOW,HIGH") from None
        merged = {}
        for db in dbs.values():
            merged.update(derive_boundaries(db, Quantile(low, high)).by_technique)
        boundaries = Boundaries(by_technique=merged, check_bed=True)

    records, diagnostics = _load_new_records(args.input, cohort)
    if args.technique is not None:
        records = [r for r in records if r.technique == args.technique]
    for diagnostic in diagnostics:
        print(f"rxcheck: row {diagnostic.row}: {diagnostic.reason}", file=sys.stderr)

    verdicts = []
    for record in records:
        db = dbs.get(record.technique)
        if db is None:
            raise UsageError(
                f"no reference database for technique {record.technique!r} "
                f"(record {record.record_id})"
            )
        params = params_for_technique(params_by_technique, record.technique)
        verdicts.append(detect(record, db, params, boundaries))

    out = _resolve(args.out, config.out)
    lines = [json.dumps(verdict_to_dict(v), sort_keys=True) for v in verdicts]
    if out is None:
        for line in lines:
            print(line)
    else:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "verdicts.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    return EX_FLAGGED if any(v.flagged for v in verdicts) else EX_OK


def _cmd_simulate(args) -> int:
    config = RunConfig.load(args.config)
    cohort = _load_cohort(config)
    seed = _resolve(args.seed, config.seed, 0)
    out = Path(_resolve(args.out, config.out))
    out.mkdir(parents=True, exist_ok=True)
    dbs, _, _, _, _ = _build_dbs(args.input, cohort, args.technique)
    if not dbs:
        raise UsageError("no technique had enough records to simulate from")
    for tech, db in sorted(dbs.items()):
        sa_set = generate_sa_set(
            db,
            DEFAULT_SA_COUNTS,
            threshold=args.rarity_threshold,
            rng=substream(seed, f"forge:{tech}"),
        )
        write_sa_set(out / f"sa_{tech}.csv", out / f"sa_{tech}.json", sa_set)
        print(f"simulate[{tech}]: wrote {len(sa_set)} anomalies")
    return EX_OK


def _cmd_evaluate(args) -> int:
    config = RunConfig.load(args.config)
    out = Path(_resolve(args.out, config.out))
    raters = read_predictions_csv(args.input)
    cms = {source: confusion(preds) for source, preds in raters.items()}
    metrics = {source: macro_metrics(cm) for source, cm in cms.items()}
    venn = None
    if len(raters) >= 2:
        best, venn = consensus_analysis(raters, BEST_CASE)
        worst, _ = consensus_analysis(raters, WORST_CASE)
        for consolidated in (best, worst):
            source = consolidated[0].source
            cms[source] = confusion(consolidated)
            metrics[source] = macro_metrics(cms[source])
    written = emit_report(cms, metrics, out, venn=venn)
    print(f"evaluate: wrote {len(written)} files to {out}")
    return EX_OK


def _cmd_hist(args) -> int:
    config = RunConfig.load(args.config)
    cohort = _load_cohort(config)
    out = Path(_resolve(args.out, config.out))
    out.mkdir(parents=True, exist_ok=True)
    dbs, _, _, _, _ = _build_dbs(args.input, cohort, args.technique)
    if not dbs:
        raise UsageError("no technique had enough records for histograms")
    for tech, db in sorted(dbs.items()):
        rx_hist, feature_hist = pairwise_histograms(db, args.bin_width)
        write_histogram_csv(out / f"hist_rx_{tech}.csv", rx_hist)
        write_histogram_csv(out / f"hist_feature_{tech}.csv", feature_hist)
        print(f"hist[{tech}]: wrote 2 histograms")
    return EX_OK


_HANDLERS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "check": _cmd_check,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "hist": _cmd_hist,
}


if __name__ == "__main__":
    main()
