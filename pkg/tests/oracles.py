"""Independent brute-force reference implementations used to cross-check the
library. Plain Python loops and sorts only; no shared code paths with the
package internals beyond the record dataclasses."""

from __future__ import annotations

import math

from rxcheck.records import NUMERIC


def oracle_scale(value, lo, hi):
    width = hi - lo
    if width <= 0:
        return 0.0
    return (value - lo) / width


def oracle_rho(p1, p2, f_lo, f_hi, d_lo, d_hi):
    df = oracle_scale(p1.fractions, f_lo, f_hi) - oracle_scale(p2.fractions, f_lo, f_hi)
    dd = oracle_scale(p1.dose_per_fraction, d_lo, d_hi) - oracle_scale(
        p2.dose_per_fraction, d_lo, d_hi
    )
    return math.sqrt(df * df + dd * dd)


def oracle_gower(r1, r2, schema):
    """Returns None for an incomparable pair."""
    num = 0.0
    den = 0.0
    for spec in schema.features:
        a = getattr(r1, spec.name)
        b = getattr(r2, spec.name)
        if a is None or b is None:
            continue
        if spec.kind == NUMERIC:
            lo, hi = spec.value_range
            width = hi - lo
            if width <= 0:
                c = 0.0 if a == b else 1.0
            else:
                c = min(abs(float(a) - float(b)) / width, 1.0)
        else:
            c = 0.0 if a == b else 1.0
        num += spec.weight * c
        den += spec.weight
    if den == 0.0:
        return None
    return num / den


def _scaler_bounds(records):
    fs = [r.prescription.fractions for r in records]
    ds = [r.prescription.dose_per_fraction for r in records]
    return min(fs), max(fs), min(ds), max(ds)


def _ranked(query, records, schema):
    """(rho, gower-or-inf, index) for each reference record, in query order."""
    f_lo, f_hi, d_lo, d_hi = _scaler_bounds(records)
    ranked = []
    for idx, record in enumerate(records):
        rho = oracle_rho(query.prescription, record.prescription, f_lo, f_hi, d_lo, d_hi)
        g = oracle_gower(query, record, schema)
        ranked.append((rho, math.inf if g is None else g, idx, g))
    return ranked


def oracle_closest_m(query, records, schema, m):
    ranked = sorted(_ranked(query, records, schema), key=lambda t: (t[0], t[1], t[2]))
    take = ranked[:m]
    return sum(t[0] for t in take) / m, [t[2] for t in take]


def oracle_closest_n(query, records, schema, n):
    ranked = sorted(_ranked(query, records, schema), key=lambda t: (t[0], t[1], t[2]))
    comparable = [t for t in ranked if t[3] is not None]
    take = comparable[:n]
    if len(take) < n:
        return None, []
    return sum(t[3] for t in take) / n, [t[2] for t in take]


def oracle_theta_tau(records, schema):
    """Means over ordered pairs j != k; tau averages comparable pairs only."""
    f_lo, f_hi, d_lo, d_hi = _scaler_bounds(records)
    size = len(records)
    rho_sum = 0.0
    g_sum = 0.0
    comparable = 0
    for j in range(size):
        for k in range(size):
            if j == k:
                continue
            rho_sum += oracle_rho(
                records[j].prescription, records[k].prescription, f_lo, f_hi, d_lo, d_hi
            )
            g = oracle_gower(records[j], records[k], schema)
            if g is not None:
                g_sum += g
                comparable += 1
    theta = rho_sum / (size * (size - 1))
    tau = g_sum / comparable if comparable else None
    return theta, tau


def oracle_confusion(predictions):
    tp = fp = fn = tn = 0
    for p in predictions:
        if p.truth == 1 and p.prediction == 1:
            tp += 1
        elif p.truth == 0 and p.prediction == 1:
            fp += 1
        elif p.truth == 1 and p.prediction == 0:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def close(a, b, tol=1e-12):
    """Relative comparison with an absolute floor for zeros."""
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)
