"""Pairwise asset distances and the CDS term-structure angle."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

from .data import VariationMatrix
from .errors import DegenerateSeriesError, InvertedCurveError, ValidationError

METHODS = ("pearson", "spearman", "euclidean", "gnpr")
# variation kind each distance works on unless overridden
DEFAULT_KIND = {"pearson": "log_diff", "euclidean": "log_diff", "spearman": "diff", "gnpr": "diff"}
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    asset_ids: tuple[str, ...]
    values: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        n = len(self.asset_ids)
        if values.shape != (n, n):
            raise ValidationError(f"distance matrix shape {values.shape} does not match {n} assets")
        if not np.all(np.isfinite(values)):
            raise ValidationError("distance matrix has non-finite entries")
        if np.any(np.abs(values - values.T) > SYMMETRY_TOL):
            raise ValidationError("distance matrix is not symmetric")
        if np.any(np.diag(values) != 0):
            raise ValidationError("distance matrix diagonal must be zero")
        if np.any(values < 0):
            raise ValidationError("distance matrix has negative entries")
        if self.method in ("pearson", "spearman", "gnpr") and np.any(values > 1):
            raise ValidationError(f"{self.method} distances must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "params": dict(self.params),
            "asset_ids": list(self.asset_ids),
            "values": self.values.tolist(),
        }

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.asset_ids)
            for row in self.values:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path: str | Path, method: str = "pearson") -> "DistanceMatrix":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return cls(tuple(rows[0]), np.array(rows[1:], dtype=float), method)


def _finish(v: VariationMatrix, d: np.ndarray, method: str, params: dict) -> DistanceMatrix:
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(v.asset_ids, d, method, params)


def _check_nondegenerate(values: np.ndarray, asset_ids: Sequence[str]) -> None:
    for i, row in enumerate(values):
        if np.ptp(row) == 0:
            raise DegenerateSeriesError(asset_ids[i])


def _correlation(values: np.ndarray) -> np.ndarray:
    centered = values - values.mean(axis=1, keepdims=True)
    norm = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    rho = (centered @ centered.T) / np.outer(norm, norm)
    return np.clip(rho, -1.0, 1.0)


def _require_columns(v: VariationMatrix, minimum: int) -> None:
    if v.n_columns < minimum:
        raise ValidationError(f"need at least {minimum} columns, got {v.n_columns}")


def pearson_distance(v: VariationMatrix) -> DistanceMatrix:
    _require_columns(v, 3)
    _check_nondegenerate(v.values, v.asset_ids)
    return _finish(v, (1 - _correlation(v.values)) / 2, "pearson", {})


def spearman_rho(values: np.ndarray) -> np.ndarray:
    """Spearman correlation matrix of the rows (average ranks for ties)."""
    return _correlation(rankdata(values, axis=1, method="average"))


def spearman_distance(v: VariationMatrix) -> DistanceMatrix:
    _require_columns(v, 3)
    _check_nondegenerate(v.values, v.asset_ids)
    return _finish(v, (1 - spearman_rho(v.values)) / 2, "spearman", {})


def euclidean_distance(v: VariationMatrix) -> DistanceMatrix:
    """Root mean squared difference, normalized by the number of columns."""
    _require_columns(v, 2)
    d = squareform(pdist(v.values, metric="euclidean")) / math.sqrt(v.n_columns)
    return _finish(v, d, "euclidean", {})


def default_bins(n_columns: int) -> int:
    return max(2, min(100, math.ceil(math.sqrt(n_columns))))


def hellinger_sq(p: Sequence[float], q: Sequence[float]) -> float:
    """Squared Hellinger distance ``0.5 * sum((sqrt(p) - sqrt(q))**2)`` of two histograms."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValidationError(f"histograms must be 1-d and of equal length: {p.shape} vs {q.shape}")
    for name, h in (("p", p), ("q", q)):
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValidationError(f"histogram {name} has negative or non-finite mass")
        if abs(h.sum() - 1.0) > 1e-9:
            raise ValidationError(f"histogram {name} sums to {h.sum():.12g}, not 1")
    h2 = 0.5 * float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2))
    return min(max(h2, 0.0), 1.0)


def _pair_histograms(x: np.ndarray, y: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    edges = np.linspace(lo, hi, bins + 1)
    hx, _ = np.histogram(x, bins=edges)
    hy, _ = np.histogram(y, bins=edges)
    return hx / hx.sum(), hy / hy.sum()


def distribution_distance_sq(values: np.ndarray, bins: int) -> np.ndarray:
    """Matrix of squared Hellinger distances between row histograms on pooled-pair bins."""
    n = values.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            p, q = _pair_histograms(values[i], values[j], bins)
            out[i, j] = out[j, i] = hellinger_sq(p, q)
    return out


def gnpr_distance(v: VariationMatrix, theta: float = 0.5, bins: int | None = None) -> DistanceMatrix:
    """``sqrt(theta * spearman_part + (1 - theta) * hellinger_part)``.

    The correlation part is the Spearman distance ``(1 - rho_S) / 2``; the
    distribution part is the squared Hellinger distance between equal-width
    histograms of the two rows over their pooled range.
    """
    _require_columns(v, 3)
    if not 0.0 <= theta <= 1.0:
        raise ValidationError(f"theta must be in [0, 1], got {theta}")
    if bins is None:
        bins = default_bins(v.n_columns)
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    _check_nondegenerate(v.values, v.asset_ids)
    corr_part = (1 - spearman_rho(v.values)) / 2
    np.fill_diagonal(corr_part, 0.0)
    corr_part = (corr_part + corr_part.T) / 2
    dist_part = distribution_distance_sq(v.values, bins) if theta < 1 else np.zeros_like(corr_part)
    d = np.sqrt(np.clip(theta * corr_part + (1 - theta) * dist_part, 0.0, None))
    return _finish(v, d, "gnpr", {"theta": float(theta), "bins": int(bins)})


def compute_distance(v: VariationMatrix, method: str, **params) -> DistanceMatrix:
    if method == "pearson":
        return pearson_distance(v)
    if method == "spearman":
        return spearman_distance(v)
    if method == "euclidean":
        return euclidean_distance(v)
    if method == "gnpr":
        return gnpr_distance(v, theta=params.get("theta", 0.5), bins=params.get("bins"))
    raise ValidationError(f"unknown distance method {method!r}; expected one of {METHODS}")


@dataclass(frozen=True, eq=False)
class HazardCurve:
    """Piecewise-constant default intensity.

    ``hazards[k]`` applies on ``[tenors[k-1], tenors[k])`` (with ``tenors[-1] = 0``);
    the last hazard is extended flat to infinity.
    """

    tenors: tuple[float, ...]
    hazards: tuple[float, ...]
    recovery: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "tenors", tuple(float(t) for t in self.tenors))
        object.__setattr__(self, "hazards", tuple(float(h) for h in self.hazards))
        if not self.tenors or len(self.tenors) != len(self.hazards):
            raise ValidationError("need one hazard per tenor and at least one tenor")
        if self.tenors[0] <= 0 or any(b <= a for a, b in zip(self.tenors, self.tenors[1:])):
            raise ValidationError("tenors must be positive and strictly increasing")
        if any(not math.isfinite(h) or h <= 0 for h in self.hazards):
            raise ValidationError("hazards must be finite and strictly positive")
        if not 0.0 <= self.recovery < 1.0:
            raise ValidationError("recovery must be in [0, 1)")

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate([[0.0], self.tenors])

    def hazard(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.tenors, t, side="right")
        return np.asarray(self.hazards)[np.minimum(idx, len(self.hazards) - 1)]

    def cumulative_hazard(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        knots = self.knots
        lam = np.asarray(self.hazards)
        at_knots = np.concatenate([[0.0], np.cumsum(lam * np.diff(knots))])
        idx = np.minimum(np.searchsorted(knots, t, side="right") - 1, len(lam) - 1)
        idx = np.maximum(idx, 0)
        return at_knots[idx] + lam[idx] * (t - knots[idx])

    def survival(self, t) -> np.ndarray:
        return np.exp(-self.cumulative_hazard(t))

    def density(self, t) -> np.ndarray:
        return self.hazard(t) * self.survival(t)


def spreads_to_hazard(
    spreads_bp: Sequence[float],
    tenors: Sequence[float],
    recovery: float = 0.4,
    floor: float | None = None,
) -> HazardCurve:
    """Bootstrap piecewise hazards from CDS quotes with the credit triangle.

    The average hazard up to tenor ``tau_k`` is ``s_k / (1 - R)``; interval
    hazards are recovered from differences of ``average * tenor``. An
    inverted curve that would need a non-positive hazard raises unless
    ``floor`` is given, in which case the hazard is floored at that value.
    """
    spreads = np.asarray(spreads_bp, dtype=float) / 1e4
    tenors = np.asarray(tenors, dtype=float)
    if spreads.shape != tenors.shape or spreads.ndim != 1 or spreads.size == 0:
        raise ValidationError("spreads and tenors must be 1-d and of equal length")
    if np.any(spreads <= 0) or not np.all(np.isfinite(spreads)):
        raise ValidationError("spreads must be finite and > 0")
    if tenors[0] <= 0 or np.any(np.diff(tenors) <= 0):
        raise ValidationError("tenors must be positive and strictly increasing")
    if not 0.0 <= recovery < 1.0:
        raise ValidationError("recovery must be in [0, 1)")
    average = spreads / (1 - recovery)
    integrated = np.concatenate([[0.0], average * tenors])
    hazards = np.diff(integrated) / np.diff(np.concatenate([[0.0], tenors]))
    for tau, lam in zip(tenors, hazards):
        if lam <= 0 and floor is None:
            raise InvertedCurveError(float(tau), float(lam))
    if floor is not None:
        hazards = np.maximum(hazards, floor)
    return HazardCurve(tuple(tenors), tuple(hazards), recovery)


def bhattacharyya_coefficient(a: HazardCurve, b: HazardCurve) -> float:
    """Closed-form ``integral_0^inf sqrt(f_a f_b) dt`` for piecewise-constant hazards."""
    knots = np.union1d(a.knots, b.knots)
    total = 0.0
    for k, t0 in enumerate(knots):
        la = float(a.hazard(t0))
        lb = float(b.hazard(t0))
        rate = (la + lb) / 2
        amplitude = math.sqrt(la * lb * float(a.survival(t0)) * float(b.survival(t0)))
        if k + 1 < len(knots):
            total += amplitude / rate * -math.expm1(-rate * (knots[k + 1] - t0))
        else:
            total += amplitude / rate
    return total


def term_structure_distance(a: HazardCurve, b: HazardCurve) -> float:
    """Angle in [0, pi/2] between the square-root default densities of two curves."""
    knots = np.union1d(a.knots, b.knots)
    if np.array_equal(a.hazard(knots), b.hazard(knots)):
        return 0.0
    cos_phi = min(max(bhattacharyya_coefficient(a, b), 0.0), 1.0)
    return math.acos(cos_phi)


def term_structure_matrix(curves: Mapping[str, HazardCurve]) -> DistanceMatrix:
    ids = tuple(curves)
    n = len(ids)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = term_structure_distance(curves[ids[i]], curves[ids[j]])
    return DistanceMatrix(ids, d, "term_structure", {})
