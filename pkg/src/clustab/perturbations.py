"""Time and population perturbation plans.

Time perturbations return a :class:`SampleSplit`: labeled column-index sets
over a variation matrix on which clustering is re-run independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import PricePanel, VariationMatrix, variations
from .errors import (
    AlignmentError,
    DegenerateSplitError,
    InsufficientDataError,
    ScaleTooLargeError,
    ValidationError,
)

MIN_PART = 3
DEFAULT_SCALES = (1, 2, 4, 8, 16, 32)
TENOR_ORDER = ("1y", "3y", "5y", "7y", "10y")
# pre-crisis 2006-07 | subprime 2008-09 | European debt 2010-12 | QE 2013-
CRISIS_BREAKPOINTS = (date(2008, 1, 1), date(2010, 1, 1), date(2013, 1, 1))


@dataclass(frozen=True)
class Part:
    label: str
    indices: tuple[int, ...]


@dataclass(frozen=True)
class SampleSplit:
    name: str
    parts: tuple[Part, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        for part in self.parts:
            idx = part.indices
            if len(idx) < MIN_PART:
                raise InsufficientDataError(
                    f"{self.name}: part {part.label!r} has {len(idx)} columns, need {MIN_PART}"
                )
            if idx[0] < 0 or any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValidationError(f"{self.name}: part {part.label!r} indices not strictly increasing")

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.parts]

    def check_bounds(self, t_count: int) -> None:
        for part in self.parts:
            if part.indices[-1] >= t_count:
                raise ValidationError(
                    f"{self.name}: part {part.label!r} reaches column {part.indices[-1]} >= {t_count}"
                )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "parts": [{"label": p.label, "indices": list(p.indices)} for p in self.parts],
        }


def _part(label: str, indices: Iterable[int]) -> Part:
    return Part(label, tuple(int(i) for i in indices))


def full_range(t_count: int) -> SampleSplit:
    return SampleSplit("full", (_part("full", range(t_count)),))


def sliding_windows(t_count: int, window: int, step: int) -> SampleSplit:
    """Windows ``[t, t + window)`` for ``t = 0, step, 2 * step, ...`` that fit in ``t_count``."""
    if window < MIN_PART:
        raise ValidationError(f"window must be >= {MIN_PART}, got {window}")
    if window > t_count:
        raise ValidationError(f"window {window} exceeds the {t_count} available columns")
    if step < 1:
        raise ValidationError(f"step must be >= 1, got {step}")
    starts = range(0, t_count - window + 1, step)
    return SampleSplit("sliding_window", tuple(_part(f"win@{t}", range(t, t + window)) for t in starts))


def odd_even(t_count: int) -> SampleSplit:
    """1st, 3rd, 5th... trading days vs 2nd, 4th, 6th...

    Counting days from one, "odd" holds zero-based columns 0, 2, 4, ...
    """
    if t_count < 2 * MIN_PART:
        raise ValidationError(f"odd/even split needs at least {2 * MIN_PART} columns")
    return SampleSplit(
        "odd_even",
        (_part("odd", range(0, t_count, 2)), _part("even", range(1, t_count, 2))),
    )


def regimes(
    t_count: int,
    breakpoints: Sequence[int],
    column_dates: Sequence[date] | None = None,
) -> SampleSplit:
    """Contiguous regimes ``[t_i, t_{i+1})``; outer bounds 0 and ``t_count`` are added if absent."""
    points = [int(b) for b in breakpoints]
    if not points or points[0] != 0:
        points.insert(0, 0)
    if points[-1] != t_count:
        points.append(t_count)
    for a, b in zip(points, points[1:]):
        if b <= a:
            raise ValidationError(f"breakpoints must be strictly increasing within [0, {t_count}]: {points}")
        if b - a < MIN_PART:
            raise ValidationError(f"regime [{a}, {b}) is shorter than {MIN_PART} columns")
    parts = []
    for a, b in zip(points, points[1:]):
        if column_dates is not None:
            label = f"{column_dates[a].isoformat()}..{column_dates[b - 1].isoformat()}"
        else:
            label = f"[{a},{b})"
        parts.append(_part(label, range(a, b)))
    return SampleSplit("regimes", tuple(parts))


def date_breakpoints(column_dates: Sequence[date], breaks: Sequence[date | str]) -> list[int]:
    """Map calendar breakpoints to the first column dated on or after each of them."""
    cols = np.array([np.datetime64(d, "D") for d in column_dates])
    out = []
    for b in breaks:
        b = date.fromisoformat(b) if isinstance(b, str) else b
        idx = int(np.searchsorted(cols, np.datetime64(b, "D"), side="left"))
        if 0 < idx < len(cols):
            out.append(idx)
    return out


def regimes_by_date(
    column_dates: Sequence[date], breaks: Sequence[date | str] = CRISIS_BREAKPOINTS
) -> SampleSplit:
    return regimes(len(column_dates), date_breakpoints(column_dates, breaks), column_dates)


def quartiles(x: np.ndarray) -> tuple[float, float]:
    # linear interpolation between order statistics (type 7)
    q1, q3 = np.quantile(x, [0.25, 0.75], method="linear")
    return float(q1), float(q3)


def heart_tails(v: VariationMatrix) -> SampleSplit:
    """Split columns by whether the cross-sectional mean move lies beyond its quartiles.

    Tails are the columns with mean at or below Q1 or at or above Q3; the heart
    is everything else.
    """
    if v.n_columns < 8:
        raise ValidationError(f"heart/tails split needs at least 8 columns, got {v.n_columns}")
    market = v.values.mean(axis=0)
    if np.ptp(market) == 0:
        raise DegenerateSplitError("mean market series is constant")
    q1, q3 = quartiles(market)
    tails = (market <= q1) | (market >= q3)
    return SampleSplit(
        "heart_tails",
        (_part("tails", np.flatnonzero(tails)), _part("heart", np.flatnonzero(~tails))),
    )


def multiscale_plan(
    panel: PricePanel, scales: Sequence[int] = DEFAULT_SCALES, kind: str = "log_diff"
) -> list[VariationMatrix]:
    out = []
    for k in scales:
        v = variations(panel, kind, int(k))
        if v.n_columns < MIN_PART:
            raise ScaleTooLargeError(
                f"scale {k} leaves {v.n_columns} columns from {panel.n_dates} dates; need {MIN_PART}"
            )
        out.append(v)
    return out


def _tenor_key(maturity: str) -> tuple:
    if maturity in TENOR_ORDER:
        return (0, TENOR_ORDER.index(maturity), maturity)
    digits = "".join(ch for ch in maturity if ch.isdigit() or ch == ".")
    unit = maturity.rstrip("0123456789.").lower()[-1:] if maturity else ""
    try:
        years = float(digits) / (12 if unit == "m" else 1)
    except ValueError:
        return (2, 0, maturity)
    return (1, years, maturity)


def maturity_split(panels: Mapping[str, PricePanel]) -> list[tuple[str, PricePanel]]:
    """Order per-maturity panels by tenor after checking they are aligned."""
    if not panels:
        raise InsufficientDataError("no maturity panels given")
    ordered = sorted(panels.items(), key=lambda kv: _tenor_key(kv[0]))
    ref_name, ref = ordered[0]
    problems = []
    for name, panel in ordered[1:]:
        only_ref = sorted(set(ref.asset_ids) - set(panel.asset_ids))
        only_this = sorted(set(panel.asset_ids) - set(ref.asset_ids))
        if only_ref:
            problems.append(f"assets missing from {name}: {only_ref}")
        if only_this:
            problems.append(f"assets missing from {ref_name}: {only_this}")
        if not only_ref and not only_this and panel.asset_ids != ref.asset_ids:
            problems.append(f"asset order differs between {ref_name} and {name}")
        if panel.dates != ref.dates:
            diff = sorted(set(ref.dates) ^ set(panel.dates))
            problems.append(
                f"dates differ between {ref_name} and {name}"
                + (f": {[d.isoformat() for d in diff[:5]]}" if diff else "")
            )
    if problems:
        raise AlignmentError("; ".join(problems))
    return ordered


def population_resample(asset_ids: Sequence[str], keep_fraction: float, seed: int) -> list[str]:
    """Uniform subset without replacement, kept in original order."""
    n = len(asset_ids)
    if not 0 < keep_fraction <= 1:
        raise ValidationError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if keep_fraction * n < 4:
        raise InsufficientDataError(f"keeping {keep_fraction} of {n} assets leaves fewer than 4")
    size = max(4, int(math.floor(keep_fraction * n + 0.5)))
    if size >= n:
        return list(asset_ids)
    chosen = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))
    return [asset_ids[i] for i in chosen]
