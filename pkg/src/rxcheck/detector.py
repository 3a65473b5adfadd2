"""Decision logic: range check, then prescription distance, then feature
distance, with one status per verdict and a full numeric explanation.

The flag thresholds scale the reference set's characteristic distances:
t_Rx = a * theta and t_F = b * tau. Group sizes scale with the reference set:
m = max(1, round(mu * S)) and n = max(1, round(nu * S)), halves rounding up.
Comparisons are strict: a distance exactly at its threshold passes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, TYPE_CHECKING

from .distance import (
    GroupDistanceResult,
    closest_m_rx_distance,
    closest_n_feature_distance,
    scale_rx,
)
from .ranges import (
    DEFAULT_ALPHA_BETA,
    Boundaries,
    RangeViolation,
    UnsupportedTechnique,
    check_range,
)
from .records import TreatmentRecord, validate_record

if TYPE_CHECKING:  # pragma: no cover
    from .ingest import HistoricalDB

STATUS_PASS = "Pass"
STATUS_RANGE = "RangeFlag"
STATUS_TYPE1 = "Type1Flag"
STATUS_TYPE2 = "Type2Flag"

WARN_INSUFFICIENT_SAME_RX = "InsufficientSameRx"
WARN_RX_SCALED_OUT_OF_RANGE = "RxScaledOutOfRange"


@dataclass(frozen=True)
class ModelParams:
    """The four trained parameters: threshold multipliers a, b and group-size
    fractions mu, nu (each in (0, 0.1], i.e. at most 10% of the reference)."""

    a: float
    b: float
    mu: float
    nu: float

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if not (0.0 < self.mu <= 0.1) or not (0.0 < self.nu <= 0.1):
            raise ValueError(
                f"mu and nu must lie in (0, 0.1], got mu={self.mu}, nu={self.nu}"
            )

    def group_sizes(self, size: int) -> tuple[int, int]:
        """(m, n) for a reference set of the given size, floored at 1."""
        return (
            max(1, math.floor(self.mu * size + 0.5)),
            max(1, math.floor(self.nu * size + 0.5)),
        )

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "mu": self.mu, "nu": self.nu}

    @classmethod
    def from_dict(cls, payload: Mapping[str, float]) -> "ModelParams":
        return cls(
            a=float(payload["a"]),
            b=float(payload["b"]),
            mu=float(payload["mu"]),
            nu=float(payload["nu"]),
        )


def thresholds(params: ModelParams, db: "HistoricalDB") -> tuple[float, float]:
    """(t_Rx, t_F) = (a * theta, b * tau) for this reference set."""
    return params.a * db.theta, params.b * db.tau


@dataclass(frozen=True)
class Verdict:
    """Pass/flag outcome with full diagnostics.

    r and t_rx are always present; f is None when the prescription comparison
    already flagged (the feature step never ran). Exactly one status holds:
    RangeFlag on any boundary violation, else Type1Flag iff r > t_rx, else
    Type2Flag iff f > t_f, else Pass.
    """

    record_id: str
    status: str
    r: float
    t_rx: float
    f: float | None
    t_f: float
    same_rx_count: int
    warnings: tuple[str, ...]
    range_violations: tuple[RangeViolation, ...]
    r_group: GroupDistanceResult
    f_group: GroupDistanceResult | None

    @property
    def flagged(self) -> bool:
        return self.status != STATUS_PASS


def detect(
    record: TreatmentRecord,
    db: "HistoricalDB",
    params: ModelParams,
    boundaries: Boundaries | None = None,
    alpha_beta: float = DEFAULT_ALPHA_BETA,
) -> Verdict:
    """Classify one record against its technique's reference set.

    The range check runs first and short-circuits classification but not
    diagnostics: distances are still computed so the verdict stays
    explainable. Pure and deterministic for identical inputs.
    """
    if record.technique != db.technique:
        raise UnsupportedTechnique(
            f"record technique {record.technique!r} does not match reference {db.technique!r}"
        )
    t_rx, t_f = thresholds(params, db)
    m, n = params.group_sizes(db.size)

    violations = tuple(check_range(record, boundaries, alpha_beta)) if boundaries else ()

    warnings = [v.kind for v in validate_record(record).violations]
    scaled = scale_rx(record.prescription, db.rx_scaler)
    if not (0.0 <= scaled.f <= 1.0 and 0.0 <= scaled.d <= 1.0):
        warnings.append(WARN_RX_SCALED_OUT_OF_RANGE)

    r_group = closest_m_rx_distance(record, db, m)
    f_group = None
    if r_group.value <= t_rx:
        f_group = closest_n_feature_distance(record, db, n)
        if f_group.warning:
            warnings.append(WARN_INSUFFICIENT_SAME_RX)

    if violations:
        status = STATUS_RANGE
    elif r_group.value > t_rx:
        status = STATUS_TYPE1
    elif f_group.value > t_f:
        status = STATUS_TYPE2
    else:
        status = STATUS_PASS

    return Verdict(
        record_id=record.record_id,
        status=status,
        r=r_group.value,
        t_rx=t_rx,
        f=None if f_group is None else f_group.value,
        t_f=t_f,
        same_rx_count=r_group.same_rx_count,
        warnings=tuple(warnings),
        range_violations=violations,
        r_group=r_group,
        f_group=f_group,
    )


def explain(verdict: Verdict) -> list[str]:
    """Human-readable lines: the triggered (or satisfied) comparisons with
    their numbers, the same-prescription count, and every violation/warning."""
    lines: list[str] = []
    if verdict.status == STATUS_RANGE:
        lines.append("Range anomaly.")
    for violation in verdict.range_violations:
        lines.append(
            f"Range violation: {violation.quantity} = {violation.value:g} "
            f"outside [{violation.low:g}, {violation.high:g}]"
        )
    if verdict.status == STATUS_TYPE1:
        lines.append(f"Type 1 anomaly. R = {verdict.r:.3f}, t_Rx = {verdict.t_rx:.3f}")
    elif verdict.status == STATUS_TYPE2:
        lines.append(f"Type 2 anomaly. F = {verdict.f:.3f}, t_F = {verdict.t_f:.3f}")
    else:
        op = "<=" if verdict.r <= verdict.t_rx else ">"
        lines.append(f"R = {verdict.r:.3f} {op} t_Rx = {verdict.t_rx:.3f}")
        if verdict.f is not None:
            op = "<=" if verdict.f <= verdict.t_f else ">"
            lines.append(f"F = {verdict.f:.3f} {op} t_F = {verdict.t_f:.3f}")
    lines.append(f"Same-prescription records in history: {verdict.same_rx_count}")
    for warning in verdict.warnings:
        lines.append(f"Warning: {warning}")
    return lines


def verdict_to_dict(verdict: Verdict) -> dict:
    """Wire format: one JSON object per record."""
    return {
        "record_id": verdict.record_id,
        "status": verdict.status,
        "R": verdict.r,
        "t_rx": verdict.t_rx,
        "F": verdict.f,
        "t_f": verdict.t_f,
        "same_rx_count": verdict.same_rx_count,
        "warnings": list(verdict.warnings),
        "range_violations": [v.as_dict() for v in verdict.range_violations],
        "explanation": explain(verdict),
    }


def write_verdicts_jsonl(destination: IO[str], verdicts: Iterable[Verdict]) -> None:
    for verdict in verdicts:
        destination.write(json.dumps(verdict_to_dict(verdict), sort_keys=True))
        destination.write("\n")


def load_params_json(source) -> dict[str, ModelParams]:
    """Read trained parameters: either one flat object or a mapping keyed by
    technique. A flat object is returned under the wildcard key '*'."""
    if isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        with open(source) as handle:
            return load_params_json(handle)
    payload = json.load(source)
    if set(payload) >= {"a", "b", "mu", "nu"}:
        return {"*": ModelParams.from_dict(payload)}
    return {technique: ModelParams.from_dict(entry) for technique, entry in payload.items()}


def params_for_technique(params_by_technique: Mapping[str, ModelParams], technique: str) -> ModelParams:
    if technique in params_by_technique:
        return params_by_technique[technique]
    if "*" in params_by_technique:
        return params_by_technique["*"]
    raise UnsupportedTechnique(f"no trained parameters for technique {technique!r}")


def write_params_json(destination, params_by_technique: Mapping[str, ModelParams]) -> None:
    payload = {
        technique: params.as_dict()
        for technique, params in sorted(params_by_technique.items())
    }
    if isinstance(destination, (str,)) or hasattr(destination, "__fspath__"):
        with open(destination, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")
        return
    json.dump(payload, destination, indent=2, sort_keys=True)
    destination.write("\n")
