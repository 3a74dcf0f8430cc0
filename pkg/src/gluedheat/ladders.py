"""Refinement-ladder extrapolation for positive scale quantities.

Gaps, capacities and crossing rates at a zero-capacity junction decay like
1/ln(refinement), so their reciprocals are affine in ln(refinement).  The
fit below classifies a ladder by the slope of that line: flat means the
quantity has a positive limit (the intercept's reciprocal), a significantly
positive slope means the reciprocal grows without bound and the limit is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass
class LadderFit:
    levels: list
    values: list
    intercept: float          # a in 1/value = a + b ln(level)
    slope: float              # b
    r2: float
    rel_growth: float         # b * ln(level span) / (1/value at finest)
    decreasing: bool          # the raw values, up to 1e-6 wiggle
    limit: float              # model limit; NaN when the trend is unclear
    note: str

    def to_dict(self):
        return {
            "levels": list(self.levels),
            "values": [float(v) for v in self.values],
            "intercept": self.intercept,
            "slope": self.slope,
            "r2": self.r2,
            "rel_growth": self.rel_growth,
            "decreasing": self.decreasing,
            "limit": self.limit,
            "note": self.note,
        }


def reciprocal_affine_fit(levels, values, slope_tol: float = 0.1) -> LadderFit:
    levels = [float(x) for x in levels]
    values = [float(v) for v in values]
    if len(levels) < 3 or len(levels) != len(values):
        raise InvalidParameterError("ladder fit needs >= 3 (level, value) pairs")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidParameterError("ladder levels must increase")
    if any(v <= 0 or not np.isfinite(v) for v in values):
        raise InvalidParameterError("ladder values must be positive and finite")

    lnm = np.log(np.asarray(levels))
    R = 1.0 / np.asarray(values)
    A = np.vstack([np.ones_like(lnm), lnm]).T
    (a, b), *_ = np.linalg.lstsq(A, R, rcond=None)
    fitted = A @ np.array([a, b])
    denom = float(np.sum((R - R.mean()) ** 2))
    r2 = 1.0 - float(np.sum((R - fitted) ** 2)) / denom if denom > 0 else 1.0
    growth = float(b * (lnm[-1] - lnm[0]) / R[-1])
    decreasing = all(y <= x * (1 + 1e-6) for x, y in zip(values, values[1:]))

    if abs(growth) <= slope_tol:
        if a > 0:
            limit = 1.0 / a
            note = "flat reciprocal line: positive limit"
        else:
            limit = values[-1]
            note = "flat fit with nonpositive intercept; using finest value"
    elif growth > slope_tol and decreasing and r2 > 0.9:
        limit = 0.0
        note = (f"reciprocal grows {growth:.3f} per ladder span "
                f"(r2={r2:.4f}): value vanishes in the limit")
    elif growth < -slope_tol:
        limit = values[-1]
        note = "value increases along the ladder"
    else:
        limit = float("nan")
        note = "trend unclear: neither flat nor cleanly vanishing"
    return LadderFit(levels, values, float(a), float(b), r2, growth,
                     decreasing, float(limit), note)
