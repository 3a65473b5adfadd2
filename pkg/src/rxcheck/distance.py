"""Dissimilarity metrics between treatment records and their group aggregations.

Two metrics drive the detector. The prescription distance is the Euclidean
distance between min-max scaled (fractions, dose per fraction) pairs, so it
lies in [0, sqrt(2)] for any pair inside the reference range. The feature
distance is a Gower distance over the non-prescription features: numeric
features contribute |difference| / range (clamped to 1 for out-of-range
queries), categorical features contribute 0 on match and 1 on mismatch, and
features missing on either side drop out of both numerator and denominator.

Group distances average each metric over the closest reference neighbors.
The feature group orders candidates by prescription distance first, feature
distance second, and stable input order last, so records sharing the query's
exact prescription are consumed before more distant prescriptions.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TYPE_CHECKING, Sequence

import numpy as np

from .records import CATEGORICAL, NUMERIC, FeatureSchema, Prescription, TreatmentRecord

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .ingest import HistoricalDB

RX_DISTANCE_MAX = math.sqrt(2.0)

_PAIR_BLOCK = 256


class IncomparablePair(ValueError):
    """Two records share no non-missing feature; no feature distance exists."""


class InsufficientNeighbors(ValueError):
    """A group size larger than the usable reference set was requested."""


class InsufficientData(ValueError):
    """Fewer than two records; pairwise characteristics are undefined."""


# ---------------------------------------------------------------------------
# Prescription distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledRx:
    """Dimensionless prescription coordinates. Values inside the reference
    range land in [0, 1]; a new record may scale outside (allowed, reported
    by the detector as a warning)."""

    f: float
    d: float


@dataclass(frozen=True)
class RxScaler:
    """Per-dimension min and max of (fractions, dose per fraction) over a
    reference set. A degenerate dimension (min == max) contributes 0."""

    f_min: float
    f_max: float
    d_min: float
    d_max: float

    @classmethod
    def fit(cls, prescriptions: Sequence[Prescription]) -> "RxScaler":
        if not prescriptions:
            raise InsufficientData("cannot fit a scaler to zero prescriptions")
        fs = [p.fractions for p in prescriptions]
        ds = [p.dose_per_fraction for p in prescriptions]
        scaler = cls(float(min(fs)), float(max(fs)), float(min(ds)), float(max(ds)))
        if scaler.f_min == scaler.f_max or scaler.d_min == scaler.d_max:
            warnings.warn(
                "degenerate prescription dimension: it will contribute 0 to "
                "all prescription distances",
                stacklevel=2,
            )
        return scaler

    def scale(self, p: Prescription) -> ScaledRx:
        return ScaledRx(
            _scale_component(p.fractions, self.f_min, self.f_max),
            _scale_component(p.dose_per_fraction, self.d_min, self.d_max),
        )


def _scale_component(value: float, lo: float, hi: float) -> float:
    width = hi - lo
    if width <= 0:
        return 0.0
    return (value - lo) / width


def scale_rx(p: Prescription, scaler: RxScaler) -> ScaledRx:
    return scaler.scale(p)


def rx_distance(i: ScaledRx, j: ScaledRx) -> float:
    """Euclidean distance between two scaled prescriptions."""
    df = i.f - j.f
    dd = i.d - j.d
    return math.sqrt(df * df + dd * dd)


# ---------------------------------------------------------------------------
# Gower feature distance
# ---------------------------------------------------------------------------

def gower_distance(i: TreatmentRecord, j: TreatmentRecord, schema: FeatureSchema) -> float:
    """Weighted Gower dissimilarity over the schema's comparable features.

    Raises IncomparablePair when every feature is missing on one side or the
    other. Requires a schema with bound numeric ranges.
    """
    num = 0.0
    den = 0.0
    for spec in schema.features:
        a = getattr(i, spec.name)
        b = getattr(j, spec.name)
        if a is None or b is None:
            continue
        if spec.kind == NUMERIC:
            contribution = _numeric_contribution(float(a), float(b), spec)
        else:
            contribution = 0.0 if a == b else 1.0
        num += spec.weight * contribution
        den += spec.weight
    if den == 0.0:
        raise IncomparablePair(
            f"records {i.record_id!r} and {j.record_id!r} share no non-missing feature"
        )
    return num / den


def _numeric_contribution(a: float, b: float, spec) -> float:
    if spec.value_range is None:
        raise ValueError(
            f"numeric feature {spec.name!r} has no bound range; "
            "bind the schema to a reference set first"
        )
    lo, hi = spec.value_range
    width = hi - lo
    if width <= 0:
        # Degenerate reference range: any difference is maximal.
        return 0.0 if a == b else 1.0
    return min(abs(a - b) / width, 1.0)


# ---------------------------------------------------------------------------
# Columnar encoding for query-vs-reference and pairwise computation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Column:
    name: str
    kind: str
    weight: float
    values: np.ndarray          # float64 values or int64 category codes
    missing: np.ndarray         # bool mask
    lo: float = 0.0
    width: float = 0.0
    codes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EncodedFeatures:
    """Columnar view of a record list under a bound schema."""

    columns: tuple[_Column, ...]
    size: int


def encode_features(records: Sequence[TreatmentRecord], schema: FeatureSchema) -> EncodedFeatures:
    columns: list[_Column] = []
    for spec in schema.features:
        raw = [getattr(r, spec.name) for r in records]
        missing = np.array([v is None for v in raw], dtype=bool)
        if spec.kind == NUMERIC:
            if spec.value_range is None:
                raise ValueError(f"numeric feature {spec.name!r} has no bound range")
            lo, hi = spec.value_range
            values = np.array([0.0 if v is None else float(v) for v in raw], dtype=np.float64)
            columns.append(
                _Column(spec.name, NUMERIC, spec.weight, values, missing, lo=lo, width=hi - lo)
            )
        else:
            codes: dict[str, int] = {}
            encoded = np.empty(len(raw), dtype=np.int64)
            for k, v in enumerate(raw):
                if v is None:
                    encoded[k] = -1
                else:
                    encoded[k] = codes.setdefault(str(v), len(codes))
            columns.append(_Column(spec.name, CATEGORICAL, spec.weight, encoded, missing, codes=codes))
    return EncodedFeatures(tuple(columns), len(records))


def gower_to_all(record: TreatmentRecord, encoded: EncodedFeatures) -> np.ndarray:
    """Gower distance from one record to every encoded record.

    Entries are NaN where the pair is incomparable. Accumulates features in
    schema order so results match the scalar gower_distance bit for bit.
    """
    num = np.zeros(encoded.size, dtype=np.float64)
    den = np.zeros(encoded.size, dtype=np.float64)
    for col in encoded.columns:
        value = getattr(record, col.name)
        if value is None:
            continue
        valid = ~col.missing
        if col.kind == NUMERIC:
            if col.width <= 0:
                contribution = (col.values != float(value)).astype(np.float64)
            else:
                contribution = np.minimum(np.abs(col.values - float(value)) / col.width, 1.0)
        else:
            code = col.codes.get(str(value), -2)
            contribution = (col.values != code).astype(np.float64)
        num = np.where(valid, num + col.weight * contribution, num)
        den = np.where(valid, den + col.weight, den)
    return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.nan)


def scaled_rx_arrays(records: Sequence[TreatmentRecord], scaler: RxScaler) -> tuple[np.ndarray, np.ndarray]:
    f = np.array(
        [_scale_component(r.prescription.fractions, scaler.f_min, scaler.f_max) for r in records],
        dtype=np.float64,
    )
    d = np.array(
        [
            _scale_component(r.prescription.dose_per_fraction, scaler.d_min, scaler.d_max)
            for r in records
        ],
        dtype=np.float64,
    )
    return f, d


def rx_to_all(p: Prescription, scaler: RxScaler, rx_f: np.ndarray, rx_d: np.ndarray) -> np.ndarray:
    scaled = scaler.scale(p)
    df = rx_f - scaled.f
    dd = rx_d - scaled.d
    return np.sqrt(df * df + dd * dd)


# ---------------------------------------------------------------------------
# Group distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupDistanceResult:
    """Mean distance over the selected neighbor group.

    members lists (record_id, rx_distance, feature_distance) for exactly the
    averaged records, in selection order; the feature distance is None for an
    incomparable pair. warning flags a feature group padded beyond the
    same-prescription records.
    """

    value: float
    members: tuple[tuple[str, float, float | None], ...]
    same_rx_count: int
    warning: bool


def _query_vectors(record: TreatmentRecord, db: "HistoricalDB") -> tuple[np.ndarray, np.ndarray]:
    rho = rx_to_all(record.prescription, db.rx_scaler, db.rx_f, db.rx_d)
    g = gower_to_all(record, db.encoded)
    return rho, g


def _neighbor_order(rho: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Primary key rho, secondary g (NaN sorts last within ties), tertiary
    # stable input order. lexsort's last key is the primary one.
    return np.lexsort((g, rho))


def closest_m_rx_distance(record: TreatmentRecord, db: "HistoricalDB", m: int) -> GroupDistanceResult:
    """Mean prescription distance over the m nearest reference records."""
    size = db.size
    if not 1 <= m <= size:
        raise InsufficientNeighbors(f"m={m} outside [1, {size}]")
    rho, g = _query_vectors(record, db)
    order = _neighbor_order(rho, g)
    take = order[:m]
    value = math.fsum(float(rho[k]) for k in take) / m
    members = tuple(
        (
            db.records[k].record_id,
            float(rho[k]),
            None if math.isnan(g[k]) else float(g[k]),
        )
        for k in take
    )
    return GroupDistanceResult(
        value=value,
        members=members,
        same_rx_count=db.rx_index.get(record.rx, 0),
        warning=False,
    )


def closest_n_feature_distance(record: TreatmentRecord, db: "HistoricalDB", n: int) -> GroupDistanceResult:
    """Mean feature distance over the n closest-prescription reference records.

    Candidates sort by prescription distance, then feature distance, then
    stable input order; incomparable candidates are skipped. The warning flag
    is set when fewer than n reference records share the query's exact
    prescription, in which case the group is filled from the next-closest
    prescriptions.
    """
    size = db.size
    if not 1 <= n <= size:
        raise InsufficientNeighbors(f"n={n} outside [1, {size}]")
    rho, g = _query_vectors(record, db)
    order = _neighbor_order(rho, g)
    take = [int(k) for k in order if not math.isnan(g[k])][:n]
    if len(take) < n:
        raise InsufficientNeighbors(
            f"only {len(take)} comparable reference records for n={n}"
        )
    value = math.fsum(float(g[k]) for k in take) / n
    members = tuple(
        (db.records[k].record_id, float(rho[k]), float(g[k])) for k in take
    )
    same_rx = db.rx_index.get(record.rx, 0)
    return GroupDistanceResult(
        value=value,
        members=members,
        same_rx_count=same_rx,
        warning=same_rx < n,
    )


# ---------------------------------------------------------------------------
# Pairwise characteristics and histograms
# ---------------------------------------------------------------------------

def pairwise_means(
    records: Sequence[TreatmentRecord],
    schema: FeatureSchema,
    scaler: RxScaler,
    *,
    encoded: EncodedFeatures | None = None,
) -> tuple[float, float, int]:
    """Mean prescription and feature distance over ordered pairs j != k.

    Returns (theta, tau, incomparable_pairs). Incomparable pairs are skipped
    from tau's average and counted; theta always averages over S*(S-1) pairs.
    """
    size = len(records)
    if size < 2:
        raise InsufficientData(f"need at least 2 records, got {size}")
    if encoded is None:
        encoded = encode_features(records, schema)
    rx_f, rx_d = scaled_rx_arrays(records, scaler)

    rho_sums: list[float] = []
    g_sums: list[float] = []
    comparable = 0
    for lo in range(0, size, _PAIR_BLOCK):
        hi = min(lo + _PAIR_BLOCK, size)
        rows = np.arange(lo, hi)
        rho = _rho_block(rx_f, rx_d, lo, hi)
        g = _gower_block(encoded, lo, hi)
        rho[rows - lo, rows] = 0.0
        comp = ~np.isnan(g)
        comp[rows - lo, rows] = False
        rho_sums.append(float(np.sum(rho)))
        g_sums.append(float(np.sum(np.where(comp, g, 0.0))))
        comparable += int(comp.sum())
    theta = math.fsum(rho_sums) / (size * (size - 1))
    if comparable == 0:
        raise IncomparablePair("no comparable pair in the reference set")
    tau = math.fsum(g_sums) / comparable
    return theta, tau, size * (size - 1) - comparable


def _rho_block(rx_f: np.ndarray, rx_d: np.ndarray, lo: int, hi: int) -> np.ndarray:
    df = rx_f[lo:hi, None] - rx_f[None, :]
    dd = rx_d[lo:hi, None] - rx_d[None, :]
    return np.sqrt(df * df + dd * dd)


def _gower_block(encoded: EncodedFeatures, lo: int, hi: int) -> np.ndarray:
    rows = slice(lo, hi)
    num = np.zeros((hi - lo, encoded.size), dtype=np.float64)
    den = np.zeros((hi - lo, encoded.size), dtype=np.float64)
    for col in encoded.columns:
        valid = ~col.missing[rows, None] & ~col.missing[None, :]
        if col.kind == NUMERIC:
            if col.width <= 0:
                contribution = (col.values[rows, None] != col.values[None, :]).astype(np.float64)
            else:
                contribution = np.minimum(
                    np.abs(col.values[rows, None] - col.values[None, :]) / col.width, 1.0
                )
        else:
            contribution = (col.values[rows, None] != col.values[None, :]).astype(np.float64)
        num = np.where(valid, num + col.weight * contribution, num)
        den = np.where(valid, den + col.weight, den)
    return np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.nan)


def characteristic_distances(db: "HistoricalDB") -> tuple[float, float]:
    """The reference set's typical pairwise distances (theta, tau).

    These are fixed at build time; incomparable pairs were skipped from tau
    and counted in db.incomparable_pairs.
    """
    if db.size < 2:
        raise InsufficientData(f"need at least 2 records, got {db.size}")
    return db.theta, db.tau


@dataclass(frozen=True)
class Histogram:
    """Normalized histogram: mass[i] is the fraction of pairs whose distance
    falls in [bin_edges[i], bin_edges[i+1]) (last bin right-inclusive)."""

    bin_edges: np.ndarray
    mass: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), float(self.mass[i]))
            for i in range(len(self.mass))
        ]


def pairwise_histograms(db: "HistoricalDB", bin_width: float) -> tuple[Histogram, Histogram]:
    """Normalized histograms of pairwise prescription and feature distances.

    Bins cover [0, sqrt(2)] and [0, 1]; each histogram's masses sum to 1 over
    the unordered reference pairs (comparable pairs only, for features).
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    size = db.size
    rho_edges = _edges(RX_DISTANCE_MAX, bin_width)
    g_edges = _edges(1.0, bin_width)
    rho_counts = np.zeros(len(rho_edges) - 1, dtype=np.int64)
    g_counts = np.zeros(len(g_edges) - 1, dtype=np.int64)
    cols = np.arange(size)
    for lo in range(0, size, _PAIR_BLOCK):
        hi = min(lo + _PAIR_BLOCK, size)
        rows = np.arange(lo, hi)
        upper = cols[None, :] > rows[:, None]
        rho = _rho_block(db.rx_f, db.rx_d, lo, hi)
        g = _gower_block(db.encoded, lo, hi)
        rho_counts += np.histogram(rho[upper], bins=rho_edges)[0]
        g_vals = g[upper & ~np.isnan(g)]
        g_counts += np.histogram(g_vals, bins=g_edges)[0]
    return (
        Histogram(rho_edges, _normalize(rho_counts)),
        Histogram(g_edges, _normalize(g_counts)),
    )


def _edges(upper: float, bin_width: float) -> np.ndarray:
    count = max(1, math.ceil(upper / bin_width - 1e-12))
    return bin_width * np.arange(count + 1, dtype=np.float64)


def _normalize(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        return counts.astype(np.float64)
    return counts / float(total)


def write_histogram_csv(destination: str | Path | IO[str], histogram: Histogram) -> None:
    """Plot-ready export: columns bin_low, bin_high, mass."""
    if isinstance(destination, (str, Path)):
        with open(destination, "w", newline="") as handle:
            write_histogram_csv(handle, histogram)
        return
    writer = csv.writer(destination, lineterminator="\n")
    writer.writerow(("bin_low", "bin_high", "mass"))
    for low, high, mass in histogram.rows():
        writer.writerow((f"{low:.10g}", f"{high:.10g}", repr(mass)))
