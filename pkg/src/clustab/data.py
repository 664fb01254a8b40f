"""Price panels: ingestion, validation, synthesis and preprocessing into variations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    ImputationError,
    InsufficientDataError,
    ParseError,
    ScaleTooLargeError,
    ValidationError,
)

KINDS = ("diff", "log_diff")
MAX_REDRAWS = 100


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def business_dates(start: str | date, n: int) -> tuple[date, ...]:
    """``n`` consecutive weekdays starting at ``start`` (rolled forward)."""
    first = np.datetime64(str(start), "D")
    days = np.busday_offset(first, np.arange(n), roll="forward")
    return tuple(d.astype(object) for d in days)


@dataclass(frozen=True, eq=False)
class PricePanel:
    """N x T matrix of strictly positive prices (or spreads) indexed by asset and date."""

    asset_ids: tuple[str, ...]
    dates: tuple[date, ...]
    values: np.ndarray
    maturity: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "asset_ids", tuple(str(a) for a in self.asset_ids))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", _frozen_array(self.values))
        n, t = len(self.asset_ids), len(self.dates)
        if self.values.shape != (n, t):
            raise ValidationError(
                f"values shape {self.values.shape} does not match {n} assets x {t} dates"
            )
        if n < 2:
            raise InsufficientDataError(f"a panel needs at least 2 assets, got {n}")
        if t < 3:
            raise InsufficientDataError(f"a panel needs at least 3 dates, got {t}")
        if len(set(self.asset_ids)) != n:
            raise ValidationError("duplicate asset ids in panel")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if not cur > prev:
                raise ValidationError(f"dates must be strictly increasing: {prev} then {cur}")
        if not np.all(np.isfinite(self.values)):
            i, j = np.argwhere(~np.isfinite(self.values))[0]
            raise ValidationError(
                f"non-finite value for asset {self.asset_ids[i]!r} on {self.dates[j]}"
            )
        if np.any(self.values <= 0):
            i, j = np.argwhere(self.values <= 0)[0]
            raise ValidationError(
                f"non-positive price {self.values[i, j]:g} for asset "
                f"{self.asset_ids[i]!r} on {self.dates[j]}"
            )

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    def rows(self, asset_ids: Sequence[str]) -> np.ndarray:
        """Price rows of ``asset_ids``, in that order."""
        index = {a: i for i, a in enumerate(self.asset_ids)}
        missing = [a for a in asset_ids if a not in index]
        if missing:
            raise ValidationError(f"unknown asset ids: {missing}")
        return self.values[[index[a] for a in asset_ids]]

    def subset(self, asset_ids: Sequence[str]) -> "PricePanel":
        return PricePanel(tuple(asset_ids), self.dates, self.rows(asset_ids), self.maturity)

    def __eq__(self, other):
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (
            self.asset_ids == other.asset_ids
            and self.dates == other.dates
            and self.maturity == other.maturity
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VariationMatrix:
    """Per-asset variations at a given horizon.

    Column ``j`` holds the move ending at source column ``time_indices[j]`` of the
    panel it was built from.
    """

    asset_ids: tuple[str, ...]
    time_indices: tuple[int, ...]
    values: np.ndarray
    kind: str = "diff"
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(self, "asset_ids", tuple(str(a) for a in self.asset_ids))
        object.__setattr__(self, "time_indices", tuple(int(t) for t in self.time_indices))
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.kind not in KINDS:
            raise ValidationError(f"unknown variation kind {self.kind!r}; expected one of {KINDS}")
        if self.scale < 1:
            raise ValidationError(f"scale must be >= 1, got {self.scale}")
        n, t = len(self.asset_ids), len(self.time_indices)
        if self.values.shape != (n, t):
            raise ValidationError(
                f"values shape {self.values.shape} does not match {n} assets x {t} columns"
            )
        if t < 2:
            raise InsufficientDataError(f"a variation matrix needs at least 2 columns, got {t}")
        if not np.all(np.isfinite(self.values)):
            i = int(np.argwhere(~np.isfinite(self.values))[0, 0])
            raise ValidationError(f"non-finite variation for asset {self.asset_ids[i]!r}")

    @property
    def n_assets(self) -> int:
        return len(self.asset_ids)

    @property
    def n_columns(self) -> int:
        return len(self.time_indices)

    def columns(self, indices: Sequence[int]) -> "VariationMatrix":
        idx = np.asarray(indices, dtype=int)
        return VariationMatrix(
            self.asset_ids,
            tuple(self.time_indices[i] for i in idx),
            self.values[:, idx],
            self.kind,
            self.scale,
        )

    def rows(self, asset_ids: Sequence[str]) -> "VariationMatrix":
        index = {a: i for i, a in enumerate(self.asset_ids)}
        try:
            rows = [index[a] for a in asset_ids]
        except KeyError as exc:
            raise ValidationError(f"unknown asset id {exc.args[0]!r}") from None
        return VariationMatrix(
            tuple(asset_ids), self.time_indices, self.values[rows], self.kind, self.scale
        )


class LoadResult(NamedTuple):
    panel: PricePanel
    excluded: list[str]
    # raw rows of the excluded assets, aligned with panel.dates, NaN where missing
    partial: dict[str, np.ndarray]


def _parse_float(text: str, row: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", row, column)
    return value


def load_csv(path: str | Path, maturity: str | None = None) -> LoadResult:
    """Read a ``date,<id1>,<id2>,...`` price file.

    Assets with any empty cell are left out of the panel and reported in
    ``excluded``; their raw series are kept in ``partial`` for imputation.
    Rows are re-sorted by date.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file", 1)
    header = [cell.strip() for cell in rows[0]]
    if not header or header[0].lstrip("﻿").lower() != "date":
        raise ParseError(f"{path}: first header cell must be 'date'", 1, 1)
    ids = header[1:]
    if not ids:
        raise ParseError(f"{path}: no asset columns", 1)
    if len(set(ids)) != len(ids) or any(not a for a in ids):
        raise ParseError(f"{path}: asset ids must be non-empty and unique", 1)

    dates: list[date] = []
    body: list[list[float]] = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(
                f"{path}: expected {len(header)} cells, found {len(row)}", r
            )
        try:
            d = date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(f"{path}: bad date {row[0]!r}", r, 1) from None
        values = []
        for c, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            values.append(math.nan if cell == "" else _parse_float(cell, r, c))
        dates.append(d)
        body.append(values)

    if len(set(dates)) != len(dates):
        dup = sorted(d for d in set(dates) if dates.count(d) > 1)[0]
        raise ParseError(f"{path}: duplicate date {dup}")
    order = sorted(range(len(dates)), key=dates.__getitem__)
    dates = [dates[i] for i in order]
    matrix = np.array([body[i] for i in order], dtype=float).T.reshape(len(ids), len(dates))

    for i, asset in enumerate(ids):
        bad = np.flatnonzero(matrix[i] <= 0)
        if bad.size:
            j = bad[0]
            raise ValidationError(
                f"non-positive price {matrix[i, j]:g} for asset {asset!r} on {dates[j]}"
            )

    complete = ~np.isnan(matrix).any(axis=1)
    excluded = [a for a, ok in zip(ids, complete) if not ok]
    if complete.sum() < 2:
        raise InsufficientDataError(
            f"{path}: only {int(complete.sum())} asset(s) without missing values; need 2"
        )
    kept = [a for a, ok in zip(ids, complete) if ok]
    panel = PricePanel(tuple(kept), tuple(dates), matrix[complete], maturity)
    partial = {a: matrix[i].copy() for i, a in enumerate(ids) if not complete[i]}
    return LoadResult(panel, excluded, partial)


def load_maturity_panels(stem: str | Path) -> dict[str, PricePanel]:
    """Load every ``<stem>_<maturity>.csv`` next to ``stem``."""
    stem = Path(stem)
    panels = {}
    for path in sorted(stem.parent.glob(f"{stem.name}_*.csv")):
        maturity = path.stem[len(stem.name) + 1 :]
        panels[maturity] = load_csv(path, maturity=maturity).panel
    if not panels:
        raise InsufficientDataError(f"no files matching {stem.name}_<maturity>.csv in {stem.parent}")
    return panels


def write_csv(panel: PricePanel, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *panel.asset_ids])
        for j, d in enumerate(panel.dates):
            writer.writerow([d.isoformat(), *(repr(float(x)) for x in panel.values[:, j])])


def variations(panel: PricePanel, kind: str = "log_diff", scale: int = 1) -> VariationMatrix:
    """Non-overlapping ``scale``-step variations taken at stride ``scale`` from column 0."""
    if kind not in KINDS:
        raise ValidationError(f"unknown variation kind {kind!r}; expected one of {KINDS}")
    scale = int(scale)
    if scale < 1:
        raise ValidationError(f"scale must be >= 1, got {scale}")
    t = panel.n_dates
    if scale > t - 1:
        raise ScaleTooLargeError(f"scale {scale} exceeds T-1 = {t - 1}")
    n_cols = (t - 1) // scale
    if n_cols < 2:
        raise ScaleTooLargeError(f"scale {scale} leaves {n_cols} column(s) from {t} dates")
    sampled = panel.values[:, : n_cols * scale + 1 : scale]
    if kind == "log_diff":
        sampled = np.log(sampled)
    values = np.diff(sampled, axis=1)
    ends = tuple(range(scale, n_cols * scale + 1, scale))
    return VariationMatrix(panel.asset_ids, ends, values, kind, scale)


def prices_from_variations(
    v: VariationMatrix,
    base: float | Sequence[float] = 100.0,
    dates: Sequence[date] | None = None,
) -> PricePanel:
    """Rebuild a price panel whose scale-1 variations are ``v``."""
    base_arr = np.broadcast_to(np.asarray(base, dtype=float), (v.n_assets,)).reshape(-1, 1)
    steps = np.cumsum(v.values, axis=1)
    if v.kind == "log_diff":
        prices = np.hstack([base_arr, base_arr * np.exp(steps)])
    else:
        prices = np.hstack([base_arr, base_arr + steps])
    if dates is None:
        dates = business_dates("2006-01-02", v.n_columns + 1)
    return PricePanel(v.asset_ids, tuple(dates), prices)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the factor-model price generator.

    Each variation is ``mean + scale_c * (beta_t * F + gamma * G_c + sigma * eps)``
    where ``beta_t`` switches to ``stress_factor_weight`` inside
    ``stress_segments`` (half-open ranges over variation columns) and each
    ``eps`` draw is multiplied by ``tail_scale`` with probability ``tail_prob``.
    """

    n_assets: int
    n_days: int
    n_clusters: int
    common_factor_weight: float = 0.0
    cluster_factor_weight: float = 0.5
    idiosyncratic_sigma: float = 0.5
    mean: float | tuple[float, ...] = 0.0
    tail_prob: float = 0.0
    tail_scale: float = 1.0
    stress_segments: tuple[tuple[int, int], ...] = ()
    stress_factor_weight: float | None = None
    cluster_scales: tuple[float, ...] | None = None
    base_level: float = 100.0
    start_date: str = "2006-01-02"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "stress_segments", tuple(tuple(int(x) for x in s) for s in self.stress_segments)
        )
        if self.cluster_scales is not None:
            object.__setattr__(self, "cluster_scales", tuple(float(x) for x in self.cluster_scales))
        if not isinstance(self.mean, (int, float)):
            object.__setattr__(self, "mean", tuple(float(x) for x in self.mean))
        self.validate()

    def validate(self) -> None:
        if self.n_assets < 2 or self.n_days < 3:
            raise ValidationError("need n_assets >= 2 and n_days >= 3")
        if not 1 <= self.n_clusters <= self.n_assets:
            raise ValidationError(f"n_clusters must be in 1..{self.n_assets}")
        weights = {
            "common_factor_weight": self.common_factor_weight,
            "cluster_factor_weight": self.cluster_factor_weight,
            "idiosyncratic_sigma": self.idiosyncratic_sigma,
            "tail_prob": self.tail_prob,
            "tail_scale": self.tail_scale,
            "base_level": self.base_level,
        }
        if self.stress_factor_weight is not None:
            weights["stress_factor_weight"] = self.stress_factor_weight
        for name, w in weights.items():
            if not math.isfinite(w) or w < 0:
                raise ValidationError(f"{name} must be finite and non-negative, got {w}")
        if not self.common_factor_weight < 1:
            raise ValidationError("common_factor_weight must be < 1")
        if self.cluster_factor_weight > 1:
            raise ValidationError("cluster_factor_weight must be <= 1")
        for beta in (self.common_factor_weight, self.stress_factor_weight):
            if beta is not None and beta + self.cluster_factor_weight > 1 + 1e-12:
                raise ValidationError(
                    f"infeasible spec: factor weight {beta} + cluster weight "
                    f"{self.cluster_factor_weight} exceeds 1"
                )
        if self.idiosyncratic_sigma <= 0:
            raise ValidationError("idiosyncratic_sigma must be > 0")
        if self.tail_prob > 1:
            raise ValidationError("tail_prob must be a probability")
        if self.base_level <= 0:
            raise ValidationError("base_level must be > 0")
        if isinstance(self.mean, tuple) and len(self.mean) != self.n_assets:
            raise ValidationError("per-asset mean must have one entry per asset")
        if self.cluster_scales is not None:
            if len(self.cluster_scales) != self.n_clusters:
                raise ValidationError("cluster_scales must have one entry per cluster")
            if any(not math.isfinite(s) or s <= 0 for s in self.cluster_scales):
                raise ValidationError("cluster_scales must be finite and positive")
        if self.stress_segments and self.stress_factor_weight is None:
            raise ValidationError("stress_segments given without stress_factor_weight")
        prev_end = 0
        for start, end in sorted(self.stress_segments):
            if not 0 <= start < end <= self.n_days:
                raise ValidationError(f"stress segment [{start}, {end}) outside [0, {self.n_days})")
            if start < prev_end:
                raise ValidationError("stress segments overlap")
            prev_end = end

    def labels(self) -> np.ndarray:
        """Balanced contiguous assignment of assets to clusters."""
        return np.arange(self.n_assets) * self.n_clusters // self.n_assets


def synthesize(spec: SyntheticSpec) -> tuple[PricePanel, np.ndarray]:
    """Generate a price panel and its ground-truth cluster labels.

    Prices are ``base_level`` plus cumulative variations. An asset whose path
    touches zero gets its idiosyncratic draws redrawn (up to ``MAX_REDRAWS``
    times) instead of being clamped, so the variation law is left intact.
    """
    rng = np.random.default_rng(spec.seed)
    n, k, steps = spec.n_assets, spec.n_clusters, spec.n_days - 1
    labels = spec.labels()

    beta = np.full(steps, spec.common_factor_weight)
    for start, end in spec.stress_segments:
        beta[start:min(end, steps)] = spec.stress_factor_weight
    common = rng.standard_normal(steps)
    cluster = rng.standard_normal((k, steps))
    mean = np.broadcast_to(np.asarray(spec.mean, dtype=float), (n,))
    scales = np.ones(k) if spec.cluster_scales is None else np.asarray(spec.cluster_scales)

    def idio(size):
        eps = rng.standard_normal(size)
        if spec.tail_prob > 0:
            eps = np.where(rng.random(size) < spec.tail_prob, eps * spec.tail_scale, eps)
        return eps

    def build(i, eps_row):
        shock = beta * common + spec.cluster_factor_weight * cluster[labels[i]]
        shock = shock + spec.idiosyncratic_sigma * eps_row
        return mean[i] + scales[labels[i]] * shock

    eps = idio((n, steps))
    moves = np.vstack([build(i, eps[i]) for i in range(n)])
    prices = spec.base_level + np.hstack([np.zeros((n, 1)), np.cumsum(moves, axis=1)])
    for i in range(n):
        attempts = 0
        while np.any(prices[i] <= 0):
            if attempts == MAX_REDRAWS:
                raise ValidationError(
                    f"infeasible spec: asset {i} path hit zero after {MAX_REDRAWS} redraws"
                )
            attempts += 1
            moves[i] = build(i, idio(steps))
            prices[i, 1:] = spec.base_level + np.cumsum(moves[i])

    ids = tuple(f"A{i:03d}" for i in range(n))
    dates = business_dates(spec.start_date, spec.n_days)
    return PricePanel(ids, dates, prices), labels


def impute_proxy(
    panel: PricePanel,
    asset_id: str,
    partial: Sequence[float],
    donor_cluster: Sequence[str],
    noise_sigma: float = 0.0,
    seed: int | None = None,
) -> PricePanel:
    """Append ``asset_id`` with its missing history filled from a donor cluster.

    Missing daily variations are the equal-weight mean variation of the donors
    plus N(0, noise_sigma^2) noise. The observed suffix is kept as is and the
    prefix is rebuilt backwards from the first observed price. A fully missing
    series is anchored at the donors' mean first price and built forwards.
    """
    donors = list(donor_cluster)
    if not donors:
        raise ImputationError("donor cluster is empty")
    if asset_id in panel.asset_ids:
        raise ImputationError(f"asset {asset_id!r} already in panel")
    series = np.asarray(partial, dtype=float)
    if series.shape != (panel.n_dates,):
        raise ImputationError(
            f"partial series for {asset_id!r} has {series.size} values, panel has {panel.n_dates} dates"
        )
    observed = ~np.isnan(series)
    first = int(np.argmax(observed)) if observed.any() else panel.n_dates
    if observed.any() and not observed[first:].all():
        raise ImputationError(
            f"observed values of {asset_id!r} do not form a contiguous suffix of the panel dates"
        )
    if noise_sigma < 0:
        raise ImputationError("noise_sigma must be non-negative")

    donor_prices = panel.rows(donors)
    fill = np.diff(donor_prices, axis=1).mean(axis=0)
    if noise_sigma > 0:
        fill = fill + np.random.default_rng(seed).normal(0.0, noise_sigma, fill.shape)

    prices = series.copy()
    if first == panel.n_dates:
        prices[0] = donor_prices[:, 0].mean()
        prices[1:] = prices[0] + np.cumsum(fill)
    else:
        # prices[t] = prices[t+1] - fill[t], walking back from the anchor
        back = np.cumsum(fill[:first][::-1])[::-1]
        prices[:first] = series[first] - back
    if np.any(prices <= 0):
        raise ImputationError(f"imputed prices for {asset_id!r} are not strictly positive")
    values = np.vstack([panel.values, prices])
    return PricePanel((*panel.asset_ids, asset_id), panel.dates, values, panel.maturity)
