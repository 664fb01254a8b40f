"""Partition comparison (ARI), experiment orchestration and the mean-correlation diagnostic."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from .clustering import Partition, cluster
from .config import validate_config
from .data import (
    PricePanel,
    SyntheticSpec,
    VariationMatrix,
    impute_proxy,
    load_csv,
    load_maturity_panels,
    synthesize,
    variations,
)
from .distances import (
    DEFAULT_KIND,
    compute_distance,
    spreads_to_hazard,
    term_structure_matrix,
)
from .errors import ClustabError, ValidationError
from .perturbations import (
    CRISIS_BREAKPOINTS,
    SampleSplit,
    date_breakpoints,
    full_range,
    heart_tails,
    maturity_split,
    multiscale_plan,
    odd_even,
    population_resample,
    regimes,
    sliding_windows,
)

log = logging.getLogger(__name__)


class ExperimentError(ClustabError):
    """A module error raised while processing one part of an experiment."""

    def __init__(self, part: str, cause: Exception):
        super().__init__(f"part {part!r}: {cause}")
        self.part = part


def _pairs(n: np.ndarray) -> np.ndarray:
    return n * (n - 1) / 2


def _check_same_assets(p: Partition, q: Partition) -> None:
    if p.asset_ids != q.asset_ids:
        only_p = sorted(set(p.asset_ids) - set(q.asset_ids))
        only_q = sorted(set(q.asset_ids) - set(p.asset_ids))
        detail = f"only left: {only_p[:5]}, only right: {only_q[:5]}" if (only_p or only_q) else "order differs"
        raise ValidationError(f"partitions cover different assets ({detail})")


def contingency(p: Partition, q: Partition) -> np.ndarray:
    _check_same_assets(p, q)
    table = np.zeros((p.k, q.k), dtype=np.int64)
    np.add.at(table, (np.asarray(p.labels), np.asarray(q.labels)), 1)
    return table


def ari(p: Partition, q: Partition) -> float:
    """Adjusted Rand Index (Hubert and Arabie).

    When the expected and maximum index coincide (e.g. both partitions all
    singletons) the result is 1 for identical partitions and 0 otherwise.
    """
    table = contingency(p, q)
    n = p.n
    if n < 2:
        raise ValidationError("ARI needs at least 2 assets")
    index = float(_pairs(table).sum())
    sum_a = float(_pairs(table.sum(axis=1)).sum())
    sum_b = float(_pairs(table.sum(axis=0)).sum())
    expected = sum_a * sum_b / (n * (n - 1) / 2)
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        same = p.k == q.k and np.count_nonzero(table) == p.k
        return 1.0 if same else 0.0
    return (index - expected) / (maximum - expected)


def ari_matrix(partitions: Sequence[Partition]) -> np.ndarray:
    """Pairwise ARI, each pair compared on the assets both partitions contain."""
    m = len(partitions)
    out = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            p, q = partitions[i], partitions[j]
            if p.asset_ids != q.asset_ids:
                in_q = set(q.asset_ids)
                common = [a for a in p.asset_ids if a in in_q]
                p, q = p.restrict(common), q.restrict(common)
            out[i, j] = out[j, i] = ari(p, q)
    return out


@dataclass
class StabilityReport:
    experiment: str
    distance: dict
    clustering: dict
    asset_ids: tuple[str, ...]
    parts: list[dict]
    partitions: dict[str, Partition]
    ari: np.ndarray
    ground_truth_ari: dict[str, float] | None = None
    provenance: dict = field(default_factory=dict)
    # distance matrices per part; not serialized
    distances: dict = field(default_factory=dict, repr=False)

    @property
    def labels(self) -> list[str]:
        return list(self.partitions)

    def to_json(self) -> dict:
        payload = {
            "experiment": self.experiment,
            "distance": self.distance,
            "clustering": self.clustering,
            "asset_ids": list(self.asset_ids),
            "parts": self.parts,
            "partitions": {label: list(p.labels) for label, p in self.partitions.items()},
            "ari": {"labels": self.labels, "matrix": self.ari.tolist()},
        }
        if self.ground_truth_ari is not None:
            payload["ground_truth_ari"] = self.ground_truth_ari
        payload["provenance"] = self.provenance
        return payload

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, payload: dict) -> "StabilityReport":
        universe = tuple(payload["asset_ids"])
        ids_by_label = {
            part["label"]: tuple(part.get("asset_ids", universe)) for part in payload["parts"]
        }
        partitions = {
            label: Partition(ids_by_label.get(label, universe), tuple(labels))
            for label, labels in payload["partitions"].items()
        }
        return cls(
            experiment=payload["experiment"],
            distance=payload["distance"],
            clustering=payload["clustering"],
            asset_ids=universe,
            parts=payload["parts"],
            partitions=partitions,
            ari=np.array(payload["ari"]["matrix"], dtype=float),
            ground_truth_ari=payload.get("ground_truth_ari"),
            provenance=payload.get("provenance", {}),
        )


def panel_hash(panels: Sequence[PricePanel]) -> str:
    h = hashlib.sha256()
    for panel in panels:
        h.update(json.dumps([panel.maturity, list(panel.asset_ids)]).encode())
        h.update(",".join(d.isoformat() for d in panel.dates).encode())
        h.update(np.ascontiguousarray(panel.values, dtype="<f8").tobytes())
    return h.hexdigest()


def tenor_years(label: str) -> float:
    unit = label[-1].lower()
    value = float(label[:-1])
    if unit == "y":
        return value
    if unit == "m":
        return value / 12
    raise ValidationError(f"cannot read a tenor from maturity label {label!r}")


def choose_donor_cluster(
    panel: PricePanel, partition: Partition, series: np.ndarray, min_overlap: int = 4
) -> list[str] | None:
    """Cluster whose members' observed-period moves correlate best on average with ``series``."""
    observed = ~np.isnan(series)
    if observed.sum() < min_overlap:
        return None
    first = int(np.argmax(observed))
    target = np.diff(series[first:])
    if np.ptp(target) == 0:
        return None
    moves = np.diff(panel.rows(partition.asset_ids)[:, first:], axis=1)
    best, best_score = None, -np.inf
    for members in partition.clusters():
        rows = [partition.asset_ids.index(a) for a in members]
        scores = [
            np.corrcoef(moves[r], target)[0, 1] for r in rows if np.ptp(moves[r]) > 0
        ]
        if scores and np.mean(scores) > best_score:
            best, best_score = members, float(np.mean(scores))
    return best


def _augment(panel: PricePanel, partial: dict, method: str, params: dict, k: int, cfg: dict):
    kind = cfg["preprocessing"]["kind"] or DEFAULT_KIND[method]
    base = cluster(compute_distance(variations(panel, kind), method, **params), min(k, panel.n_assets))
    noise = cfg["population"]["noise_sigma"]
    seed = cfg["population"]["seed"]
    added, skipped = [], []
    for n, (asset, series) in enumerate(sorted(partial.items())):
        donors = choose_donor_cluster(panel, base, series)
        if donors is None:
            skipped.append(asset)
            continue
        panel = impute_proxy(panel, asset, series, donors, noise, seed + n)
        added.append(asset)
    return panel, added, skipped


class _Job(NamedTuple):
    label: str
    part: dict
    build: object  # () -> DistanceMatrix


def _load_input(cfg: dict, base_dir: Path):
    spec = cfg["input"]
    truth = None
    partial: dict = {}
    maturities = None
    if "synthetic" in spec:
        syn = dict(spec["synthetic"])
        if "stress_segments" in syn:
            syn["stress_segments"] = tuple(tuple(s) for s in syn["stress_segments"])
        panel, labels = synthesize(SyntheticSpec(**syn))
        truth = Partition(panel.asset_ids, tuple(int(x) for x in labels))
    elif "csv" in spec:
        loaded = load_csv(base_dir / spec["csv"])
        panel, partial = loaded.panel, loaded.partial
    else:
        source = spec["maturities"]
        if isinstance(source, str):
            panels = load_maturity_panels(base_dir / source)
        else:
            panels = {m: load_csv(base_dir / p, maturity=m).panel for m, p in source.items()}
        maturities = maturity_split(panels)
        panel = maturities[0][1]
    return panel, truth, partial, maturities


def run_experiment(config: dict, base_dir: str | Path = ".") -> StabilityReport:
    """Cluster every part of the configured perturbation and score pairwise stability."""
    cfg = validate_config(config)
    base_dir = Path(base_dir)
    panel, truth, partial, maturities = _load_input(cfg, base_dir)

    method = cfg["distance"]["method"]
    dparams = {k: v for k, v in cfg["distance"]["params"].items() if v is not None}
    k = cfg["clustering"]["k"]
    kind = cfg["preprocessing"]["kind"] or DEFAULT_KIND[method]
    scale = cfg["preprocessing"]["scale"]
    ptype = cfg["perturbation"]["type"]
    pparams = cfg["perturbation"]["params"]
    provenance_extra: dict = {}

    if cfg["population"]["impute_excluded"] and partial:
        panel, added, skipped = _augment(panel, partial, method, dparams, k, cfg)
        provenance_extra["imputed"] = added
        provenance_extra["imputation_skipped"] = skipped

    def distance_job(label, part, v: VariationMatrix):
        return _Job(label, part, lambda: compute_distance(v, method, **dparams))

    jobs: list[_Job] = []
    distance_info = {"method": method, "params": dparams}
    hashed = [panel]

    if ptype in ("none", "sliding_window", "odd_even", "regimes", "heart_tails"):
        v = variations(panel, kind, scale)
        column_dates = [panel.dates[t] for t in v.time_indices]
        split = _time_split(ptype, pparams, v, column_dates)
        split.check_bounds(v.n_columns)
        for part in split.parts:
            entry = {
                "label": part.label,
                "indices": list(part.indices),
                "date_range": [column_dates[part.indices[0]].isoformat(), column_dates[part.indices[-1]].isoformat()],
            }
            jobs.append(distance_job(part.label, entry, v.columns(part.indices)))
        split_name = split.name
    elif ptype == "multiscale":
        for v in multiscale_plan(panel, pparams["scales"], kind):
            label = f"scale={v.scale}"
            jobs.append(distance_job(label, {"label": label, "scale": v.scale, "n_columns": v.n_columns}, v))
        split_name = "multiscale"
    elif ptype == "maturities":
        hashed = [p for _, p in maturities]
        for maturity, mpanel in maturities:
            v = variations(mpanel, kind, scale)
            jobs.append(distance_job(maturity, {"label": maturity, "maturity": maturity}, v))
        split_name = "maturities"
    elif ptype == "term_structure":
        hashed = [p for _, p in maturities]
        jobs = _term_structure_jobs(maturities, pparams)
        distance_info = {
            "method": "term_structure",
            "params": {"recovery": pparams["recovery"], "floor": pparams["floor"]},
        }
        split_name = "term_structure"
    elif ptype == "population_resample":
        v = variations(panel, kind, scale)
        jobs.append(distance_job("full", {"label": "full", "asset_ids": list(v.asset_ids)}, v))
        for i in range(pparams["draws"]):
            ids = population_resample(v.asset_ids, pparams["keep_fraction"], pparams["seed"] + i)
            label = f"draw@{i}"
            jobs.append(distance_job(label, {"label": label, "asset_ids": ids}, v.rows(ids)))
        split_name = "population_resample"
    elif ptype == "population_augment":
        complete = panel.subset([a for a in panel.asset_ids if a not in partial])
        augmented, added, skipped = _augment(complete, partial, method, dparams, k, cfg)
        provenance_extra["imputed"] = added
        provenance_extra["imputation_skipped"] = skipped
        for label, p in (("complete", complete), ("augmented", augmented)):
            v = variations(p, kind, scale)
            jobs.append(distance_job(label, {"label": label, "asset_ids": list(v.asset_ids)}, v))
        panel = augmented
        hashed = [augmented]
        split_name = "population_augment"
    else:  # pragma: no cover - schema rejects other values
        raise ValidationError(f"unknown perturbation {ptype!r}")

    partitions: dict[str, Partition] = {}
    matrices = {}
    for job in jobs:
        try:
            d = job.build()
            matrices[job.label] = d
            if k > d.n_assets:
                raise ValidationError(f"k={k} exceeds the {d.n_assets} assets available")
            partitions[job.label] = cluster(d, k)
        except ClustabError as exc:
            raise ExperimentError(job.label, exc) from exc
        log.debug("clustered part %s", job.label)

    parts = [job.part for job in jobs]
    universe = panel.asset_ids if ptype not in ("maturities", "term_structure") else maturities[0][1].asset_ids
    for entry in parts:
        if entry.get("asset_ids") == list(universe):
            del entry["asset_ids"]

    ground_truth = None
    if truth is not None:
        ground_truth = {
            label: ari(p, truth.restrict(p.asset_ids)) for label, p in partitions.items()
        }

    provenance = {
        "input_hash": panel_hash(hashed),
        "seed": cfg["input"].get("synthetic", {}).get("seed"),
        "split": split_name,
        "package_version": __version__,
        "config": config,
        **provenance_extra,
    }
    return StabilityReport(
        experiment=cfg["experiment"],
        distance=distance_info,
        clustering={"linkage": "wpgma", "k": k},
        asset_ids=tuple(universe),
        parts=parts,
        partitions=partitions,
        ari=ari_matrix(list(partitions.values())),
        ground_truth_ari=ground_truth,
        provenance=provenance,
        distances=matrices,
    )


def _time_split(ptype: str, params: dict, v: VariationMatrix, column_dates: list[date]) -> SampleSplit:
    t = v.n_columns
    if ptype == "none":
        return full_range(t)
    if ptype == "sliding_window":
        return sliding_windows(t, int(params["window"]), int(params["step"]))
    if ptype == "odd_even":
        return odd_even(t)
    if ptype == "heart_tails":
        return heart_tails(v)
    # regimes: explicit column breakpoints win over calendar dates
    if params.get("breakpoints") is not None:
        return regimes(t, params["breakpoints"], column_dates)
    breaks = params.get("dates") or [d.isoformat() for d in CRISIS_BREAKPOINTS]
    return regimes(t, date_breakpoints(column_dates, breaks), column_dates)


def _term_structure_jobs(maturities, params) -> list[_Job]:
    labels = [m for m, _ in maturities]
    tenors = [tenor_years(m) for m in labels]
    ref = maturities[0][1]
    if params.get("dates"):
        wanted = [date.fromisoformat(d) for d in params["dates"]]
        missing = [d for d in wanted if d not in ref.dates]
        if missing:
            raise ValidationError(f"term-structure dates not in panel: {[d.isoformat() for d in missing]}")
        columns = [ref.dates.index(d) for d in wanted]
    else:
        n = max(2, int(params["n_dates"]))
        columns = sorted(set(np.linspace(0, ref.n_dates - 1, n).round().astype(int).tolist()))
    stack = np.stack([p.values for _, p in maturities])  # maturity x asset x date
    jobs = []
    for col in columns:
        label = ref.dates[col].isoformat()

        def build(col=col):
            curves = {}
            for i, asset in enumerate(ref.asset_ids):
                try:
                    curves[asset] = spreads_to_hazard(
                        stack[:, i, col], tenors, params["recovery"], params["floor"]
                    )
                except ClustabError as exc:
                    raise ValidationError(f"asset {asset!r}: {exc}") from exc
            return term_structure_matrix(curves)

        jobs.append(_Job(label, {"label": label, "date": label, "maturities": labels}, build))
    return jobs


class MeanCorrelation(NamedTuple):
    start: int
    end: int
    value: float
    n_pairs: int


def mean_correlation_series(v: VariationMatrix, window: int, step: int) -> list[MeanCorrelation]:
    """Mean upper-triangle Pearson correlation over sliding windows of the columns.

    Pairs involving an asset that is constant inside a window are skipped.
    """
    out = []
    for part in sliding_windows(v.n_columns, window, step).parts:
        block = v.values[:, part.indices[0] : part.indices[-1] + 1]
        live = block[np.ptp(block, axis=1) > 0]
        if live.shape[0] < 2:
            raise ValidationError(
                f"window [{part.indices[0]}, {part.indices[-1] + 1}) has fewer than 2 non-constant series"
            )
        rho = np.corrcoef(live)
        upper = rho[np.triu_indices(live.shape[0], k=1)]
        out.append(MeanCorrelation(part.indices[0], part.indices[-1] + 1, float(upper.mean()), upper.size))
    return out
