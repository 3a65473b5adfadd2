"""First-layer statistical range checking of prescription numerics.

Fractions, dose per fraction, and biologically effective dose (BED) are
compared against per-technique boundaries, either supplied explicitly or
derived as empirical quantiles of a historical database. Bounds are
inclusive on both ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Mapping, TYPE_CHECKING, Union

import numpy as np

from .records import TECH_3D, TECH_IMRT, TECH_SBRT, TreatmentRecord

if TYPE_CHECKING:  # pragma: no cover
    from .ingest import HistoricalDB

# Linear-quadratic alpha/beta ratio, in cGy to match integer-cGy doses.
DEFAULT_ALPHA_BETA = 1000.0


class InvalidParameter(ValueError):
    pass


class UnsupportedTechnique(KeyError):
    pass


def compute_bed(fractions: int, dose_per_fraction: float, alpha_beta: float = DEFAULT_ALPHA_BETA) -> float:
    """Biologically effective dose, linear-quadratic form:
    fractions * d * (1 + d / (alpha/beta)), in cGy."""
    if alpha_beta <= 0:
        raise InvalidParameter(f"alpha_beta must be positive, got {alpha_beta}")
    return fractions * dose_per_fraction * (1.0 + dose_per_fraction / alpha_beta)


@dataclass(frozen=True)
class QuantityBounds:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"lower bound {self.lo} exceeds upper bound {self.hi}")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


@dataclass(frozen=True)
class TechniqueBounds:
    bed: QuantityBounds
    fractions: QuantityBounds
    dose_per_fraction: QuantityBounds


@dataclass(frozen=True)
class Boundaries:
    """Per-technique boundaries. check_bed disables the BED comparison when
    the boundary table's BED convention has not been confirmed against the
    configured alpha/beta."""

    by_technique: Mapping[str, TechniqueBounds]
    check_bed: bool = True


@dataclass(frozen=True)
class Quantile:
    """Derive boundaries as empirical quantiles of the reference set."""

    low_q: float
    high_q: float
    alpha_beta: float = DEFAULT_ALPHA_BETA

    def __post_init__(self) -> None:
        if not (0.0 <= self.low_q <= self.high_q <= 1.0):
            raise ValueError(f"need 0 <= low_q <= high_q <= 1, got {self.low_q}, {self.high_q}")


# Published per-technique boundary table. Its BED column's units and formula
# convention are not reconstructible from the configured linear-quadratic
# default, so the preset ships with the BED comparison disabled.
_TABLE_PRESET = {
    TECH_3D: ((16400, 292800), (1, 35), (150, 850)),
    TECH_IMRT: ((24000, 497000), (7, 47), (150, 700)),
    TECH_SBRT: ((82000, 903000), (1, 5), (400, 3000)),
}


def table_preset() -> Boundaries:
    return Boundaries(
        by_technique={
            technique: TechniqueBounds(
                bed=QuantityBounds(*bed),
                fractions=QuantityBounds(*fx),
                dose_per_fraction=QuantityBounds(*dpf),
            )
            for technique, (bed, fx, dpf) in _TABLE_PRESET.items()
        },
        check_bed=False,
    )


def derive_boundaries(db: "HistoricalDB", method: Union[Boundaries, Quantile]) -> Boundaries:
    """Explicit boundaries pass through; a Quantile method yields empirical
    quantiles of fractions, dose per fraction, and BED over the database."""
    if isinstance(method, Boundaries):
        return method
    if not isinstance(method, Quantile):
        raise TypeError(f"method must be Boundaries or Quantile, got {type(method)!r}")
    fractions = np.array([r.prescription.fractions for r in db.records], dtype=np.float64)
    doses = np.array([r.prescription.dose_per_fraction for r in db.records], dtype=np.float64)
    beds = np.array(
        [
            compute_bed(r.prescription.fractions, r.prescription.dose_per_fraction, method.alpha_beta)
            for r in db.records
        ],
        dtype=np.float64,
    )

    def bounds(values: np.ndarray) -> QuantityBounds:
        return QuantityBounds(
            float(np.quantile(values, method.low_q)),
            float(np.quantile(values, method.high_q)),
        )

    return Boundaries(
        by_technique={
            db.technique: TechniqueBounds(
                bed=bounds(beds),
                fractions=bounds(fractions),
                dose_per_fraction=bounds(doses),
            )
        },
        check_bed=True,
    )


@dataclass(frozen=True)
class RangeViolation:
    quantity: str
    value: float
    low: float
    high: float

    def as_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "value": self.value,
            "low": self.low,
            "high": self.high,
        }


def check_range(
    record: TreatmentRecord,
    boundaries: Boundaries,
    alpha_beta: float = DEFAULT_ALPHA_BETA,
) -> list[RangeViolation]:
    """Empty list iff fractions, dose per fraction, and (when enabled) BED all
    lie inside their inclusive bounds for the record's technique."""
    bounds = boundaries.by_technique.get(record.technique)
    if bounds is None:
        raise UnsupportedTechnique(record.technique)
    p = record.prescription
    violations: list[RangeViolation] = []
    if not bounds.fractions.contains(p.fractions):
        violations.append(
            RangeViolation("fractions", float(p.fractions), bounds.fractions.lo, bounds.fractions.hi)
        )
    if not bounds.dose_per_fraction.contains(p.dose_per_fraction):
        violations.append(
            RangeViolation(
                "dose_per_fraction",
                float(p.dose_per_fraction),
                bounds.dose_per_fraction.lo,
                bounds.dose_per_fraction.hi,
            )
        )
    if boundaries.check_bed:
        bed = compute_bed(p.fractions, p.dose_per_fraction, alpha_beta)
        if not bounds.bed.contains(bed):
            violations.append(RangeViolation("bed", bed, bounds.bed.lo, bounds.bed.hi))
    return violations


# ---------------------------------------------------------------------------
# JSON preset files (one object per technique, mirroring the boundary table)
# ---------------------------------------------------------------------------

def write_boundaries(destination: str | Path | IO[str], boundaries: Boundaries) -> None:
    payload = {
        "check_bed": boundaries.check_bed,
        "techniques": {
            technique: {
                "min_bed": bounds.bed.lo,
                "max_bed": bounds.bed.hi,
                "min_fractions": bounds.fractions.lo,
                "max_fractions": bounds.fractions.hi,
                "min_dose_per_fraction": bounds.dose_per_fraction.lo,
                "max_dose_per_fraction": bounds.dose_per_fraction.hi,
            }
            for technique, bounds in sorted(boundaries.by_technique.items())
        },
    }
    if isinstance(destination, (str, Path)):
        with open(destination, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return
    json.dump(payload, destination, indent=2, sort_keys=True)
    destination.write("\n")


def load_boundaries(source: str | Path | IO[str]) -> Boundaries:
    if isinstance(source, (str, Path)):
        with open(source) as handle:
            return load_boundaries(handle)
    payload = json.load(source)
    return Boundaries(
        by_technique={
            technique: TechniqueBounds(
                bed=QuantityBounds(row["min_bed"], row["max_bed"]),
                fractions=QuantityBounds(row["min_fractions"], row["max_fractions"]),
                dose_per_fraction=QuantityBounds(
                    row["min_dose_per_fraction"], row["max_dose_per_fraction"]
                ),
            )
            for technique, row in payload["techniques"].items()
        },
        check_bed=bool(payload.get("check_bed", True)),
    )
