"""Scoring against truth labels: confusion matrices, macro-averaged metrics,
multi-rater consensus analysis, and a plot-ready report bundle."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .distance import Histogram, write_histogram_csv

BEST_CASE = "BestCase"
WORST_CASE = "WorstCase"


class MismatchedRecords(ValueError):
    """Raters do not cover the same record set with consistent truth labels."""


class UndefinedMacro(ValueError):
    """A class is absent from the truth labels; macro averages are undefined."""


@dataclass(frozen=True)
class LabeledPrediction:
    record_id: str
    truth: int          # 1 = anomaly, 0 = normal
    prediction: int
    source: str

    def __post_init__(self) -> None:
        if self.truth not in (0, 1) or self.prediction not in (0, 1):
            raise ValueError("truth and prediction must be binary")

    @property
    def correct(self) -> bool:
        return self.truth == self.prediction


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion cells must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(predictions: Sequence[LabeledPrediction]) -> ConfusionMatrix:
    """Standard cell counts with anomaly as the positive class."""
    if not predictions:
        raise ValueError("no predictions to score")
    tp = sum(1 for p in predictions if p.truth == 1 and p.prediction == 1)
    fp = sum(1 for p in predictions if p.truth == 0 and p.prediction == 1)
    fn = sum(1 for p in predictions if p.truth == 1 and p.prediction == 0)
    tn = sum(1 for p in predictions if p.truth == 0 and p.prediction == 0)
    return ConfusionMatrix(tp, fp, fn, tn)


@dataclass(frozen=True)
class MacroMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.precision, self.recall, self.f1, self.accuracy)


def _safe_div(num: float, den: float) -> float:
    # Zero-denominator per-class metrics are defined as 0, so degenerate
    # raters score poorly instead of undefined.
    return num / den if den else 0.0


def macro_metrics(cm: ConfusionMatrix) -> MacroMetrics:
    """Unweighted mean of the per-class precision / recall / f1 over both
    classes, plus plain accuracy."""
    if cm.tp + cm.fn == 0 or cm.fp + cm.tn == 0:
        raise UndefinedMacro("both classes must be present in the truth labels")
    # Anomaly as positive.
    p1 = _safe_div(cm.tp, cm.tp + cm.fp)
    r1 = _safe_div(cm.tp, cm.tp + cm.fn)
    f1_1 = _safe_div(2 * p1 * r1, p1 + r1)
    # Normal as positive.
    p0 = _safe_div(cm.tn, cm.tn + cm.fn)
    r0 = _safe_div(cm.tn, cm.tn + cm.fp)
    f1_0 = _safe_div(2 * p0 * r0, p0 + r0)
    return MacroMetrics(
        precision=(p1 + p0) / 2,
        recall=(r1 + r0) / 2,
        f1=(f1_1 + f1_0) / 2,
        accuracy=(cm.tp + cm.tn) / cm.total,
    )


# ---------------------------------------------------------------------------
# Consensus analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapSummary:
    """Venn-style region counts. Sets are each rater's flagged records plus
    the ground-truth anomaly set; region keys join member names with '&',
    records in no set count under 'none'."""

    region_counts: Mapping[str, int]


def consensus_analysis(
    raters: Mapping[str, Sequence[LabeledPrediction]],
    mode: str,
) -> tuple[list[LabeledPrediction], OverlapSummary]:
    """Consolidate >= 2 raters into a best- or worst-case consensus.

    BestCase: the consensus is correct on a record iff any rater was correct.
    WorstCase: the consensus is incorrect iff any rater was wrong.
    """
    if mode not in (BEST_CASE, WORST_CASE):
        raise ValueError(f"mode must be {BEST_CASE!r} or {WORST_CASE!r}")
    if len(raters) < 2:
        raise MismatchedRecords("consensus needs at least two raters")

    by_record: dict[str, dict[str, LabeledPrediction]] = {}
    record_sets = {}
    for source, predictions in raters.items():
        record_sets[source] = {p.record_id for p in predictions}
        for p in predictions:
            by_record.setdefault(p.record_id, {})[source] = p
    reference_ids = next(iter(record_sets.values()))
    for source, ids in record_sets.items():
        if ids != reference_ids:
            raise MismatchedRecords(f"rater {source!r} covers a different record set")
    for record_id, per_source in by_record.items():
        truths = {p.truth for p in per_source.values()}
        if len(truths) > 1:
            raise MismatchedRecords(f"inconsistent truth for record {record_id!r}")

    label = "consensus-best" if mode == BEST_CASE else "consensus-worst"
    consensus: list[LabeledPrediction] = []
    for record_id in sorted(by_record):
        per_source = by_record[record_id]
        truth = next(iter(per_source.values())).truth
        any_correct = any(p.correct for p in per_source.values())
        any_wrong = any(not p.correct for p in per_source.values())
        if mode == BEST_CASE:
            prediction = truth if any_correct else 1 - truth
        else:
            prediction = 1 - truth if any_wrong else truth
        consensus.append(LabeledPrediction(record_id, truth, prediction, label))

    return consensus, _overlap_summary(raters, by_record)


def _overlap_summary(raters, by_record) -> OverlapSummary:
    counts: dict[str, int] = {}
    sources = sorted(raters)
    for record_id, per_source in by_record.items():
        members = [s for s in sources if per_source[s].prediction == 1]
        truth = next(iter(per_source.values())).truth
        if truth == 1:
            members.append("truth")
        key = "&".join(members) if members else "none"
        counts[key] = counts.get(key, 0) + 1
    return OverlapSummary(dict(sorted(counts.items())))


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------

def emit_report(
    cms: Mapping[str, ConfusionMatrix],
    metrics: Mapping[str, MacroMetrics],
    destination: str | Path,
    venn: OverlapSummary | None = None,
    traces: Mapping[str, Sequence] | None = None,
    histograms: Mapping[str, Histogram] | None = None,
) -> list[Path]:
    """Write summary.json, confusion.csv, metrics.csv, venn.csv (and any
    histogram CSVs) under destination. Byte-stable for identical inputs."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary = {
        "sources": sorted(set(cms) | set(metrics)),
        "confusion": {
            source: {"tp": cm.tp, "fp": cm.fp, "fn": cm.fn, "tn": cm.tn}
            for source, cm in sorted(cms.items())
        },
        "metrics": {
            source: {
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "accuracy": m.accuracy,
            }
            for source, m in sorted(metrics.items())
        },
    }
    if venn is not None:
        summary["venn"] = dict(venn.region_counts)
    summary_path = destination / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(summary_path)

    confusion_path = destination / "confusion.csv"
    with open(confusion_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("source", "tp", "fp", "fn", "tn"))
        for source, cm in sorted(cms.items()):
            writer.writerow((source, cm.tp, cm.fp, cm.fn, cm.tn))
    written.append(confusion_path)

    metrics_path = destination / "metrics.csv"
    with open(metrics_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("source", "precision", "recall", "f1", "accuracy"))
        for source, m in sorted(metrics.items()):
            writer.writerow(
                (source, repr(m.precision), repr(m.recall), repr(m.f1), repr(m.accuracy))
            )
    written.append(metrics_path)

    venn_path = destination / "venn.csv"
    with open(venn_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("region", "count"))
        if venn is not None:
            for region, count in sorted(venn.region_counts.items()):
                writer.writerow((region, count))
    written.append(venn_path)

    if traces:
        from .train import write_trace_csv  # local import avoids a cycle

        for name, outcome in sorted(traces.items()):
            trace_path = destination / f"trace_{name}.csv"
            write_trace_csv(trace_path, outcome)
            written.append(trace_path)

    if histograms:
        for name, histogram in sorted(histograms.items()):
            hist_path = destination / f"hist_{name}.csv"
            write_histogram_csv(hist_path, histogram)
            written.append(hist_path)

    return written


def read_predictions_csv(source: str | Path) -> dict[str, list[LabeledPrediction]]:
    """Read rater predictions (columns record_id, truth, prediction, source),
    grouped by source."""
    grouped: dict[str, list[LabeledPrediction]] = {}
    with open(source, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"record_id", "truth", "prediction", "source"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"prediction file must have columns {sorted(required)}")
        for row in reader:
            prediction = LabeledPrediction(
                record_id=row["record_id"],
                truth=int(row["truth"]),
                prediction=int(row["prediction"]),
                source=row["source"],
            )
            grouped.setdefault(prediction.source, []).append(prediction)
    return grouped
