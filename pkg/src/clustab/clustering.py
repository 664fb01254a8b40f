"""Weighted-linkage (WPGMA) agglomerative clustering and flat cuts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .distances import DistanceMatrix
from .errors import ValidationError


class Merge(NamedTuple):
    left: int
    right: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge tree over ``n_leaves`` leaves; merge ``s`` creates node ``n_leaves + s``."""

    n_leaves: int
    merges: tuple[Merge, ...]

    def __post_init__(self):
        merges = tuple(Merge(int(a), int(b), float(h), int(s)) for a, b, h, s in self.merges)
        object.__setattr__(self, "merges", merges)
        n = self.n_leaves
        if n < 1 or len(merges) != n - 1:
            raise ValidationError(f"a dendrogram over {n} leaves needs {n - 1} merges")
        seen = set()
        for step, (a, b, h, _) in enumerate(merges):
            for child in (a, b):
                if not 0 <= child < n + step or child in seen:
                    raise ValidationError(f"invalid or reused child {child} at merge {step}")
                seen.add(child)
            if not math.isfinite(h) or h < 0:
                raise ValidationError(f"merge height must be finite and >= 0, got {h}")

    def to_json(self) -> dict:
        return {"n_leaves": self.n_leaves, "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_json(cls, payload: dict) -> "Dendrogram":
        return cls(payload["n_leaves"], tuple(Merge(*m) for m in payload["merges"]))


@dataclass(frozen=True)
class Partition:
    asset_ids: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        if len(self.asset_ids) != len(self.labels):
            raise ValidationError("one label per asset required")
        if not self.labels:
            raise ValidationError("empty partition")
        if sorted(set(self.labels)) != list(range(max(self.labels) + 1)):
            raise ValidationError("labels must cover 0..K-1 without gaps")

    @property
    def k(self) -> int:
        return max(self.labels) + 1

    @property
    def n(self) -> int:
        return len(self.labels)

    def clusters(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.k)]
        for asset, label in zip(self.asset_ids, self.labels):
            groups[label].append(asset)
        return groups

    def restrict(self, asset_ids: Sequence[str]) -> "Partition":
        """Partition induced on ``asset_ids``, canonically relabeled."""
        index = {a: i for i, a in enumerate(self.asset_ids)}
        missing = [a for a in asset_ids if a not in index]
        if missing:
            raise ValidationError(f"assets not in partition: {missing}")
        return canonical(tuple(asset_ids), [self.labels[index[a]] for a in asset_ids])

    def to_json(self) -> dict:
        return {"asset_ids": list(self.asset_ids), "labels": list(self.labels)}

    @classmethod
    def from_json(cls, payload: dict) -> "Partition":
        if "asset_ids" in payload:
            return cls(tuple(payload["asset_ids"]), tuple(payload["labels"]))
        # {asset_id: label} mapping, any hashable label values
        return canonical(tuple(payload), list(payload.values()))


def canonical(asset_ids: Sequence[str], raw_labels: Sequence) -> Partition:
    """Relabel clusters 0..K-1 in order of first appearance (smallest member index)."""
    mapping: dict = {}
    labels = []
    for raw in raw_labels:
        if raw not in mapping:
            mapping[raw] = len(mapping)
        labels.append(mapping[raw])
    return Partition(tuple(asset_ids), tuple(labels))


def wpgma_linkage(d: DistanceMatrix | np.ndarray) -> Dendrogram:
    """Agglomerate with the WPGMA update ``d(u+v, x) = (d(u, x) + d(v, x)) / 2``.

    Among pairs at the minimum distance the lexicographically smallest pair of
    node ids is merged first.
    """
    values = d.values if isinstance(d, DistanceMatrix) else np.asarray(d, dtype=float)
    n = values.shape[0]
    if values.ndim != 2 or values.shape != (n, n):
        raise ValidationError("distance matrix must be square")
    if n < 2:
        raise ValidationError("need at least 2 items to cluster")
    if not np.all(np.isfinite(values)):
        raise ValidationError("distance matrix has non-finite entries")

    dist = values.astype(float, copy=True)
    np.fill_diagonal(dist, np.inf)
    node = np.arange(n)  # node id held by each slot
    size = np.ones(n, dtype=int)
    active = np.ones(n, dtype=bool)
    merges = []
    for step in range(n - 1):
        live = np.flatnonzero(active)
        sub = dist[np.ix_(live, live)]
        lowest = sub.min()
        rows, cols = np.nonzero(np.triu(sub == lowest, k=1))
        pairs = sorted(
            (min(node[live[r]], node[live[c]]), max(node[live[r]], node[live[c]]), live[r], live[c])
            for r, c in zip(rows, cols)
        )
        left, right, a, b = pairs[0]
        merged = (dist[a] + dist[b]) / 2
        dist[a, :] = merged
        dist[:, a] = merged
        dist[a, a] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        active[b] = False
        size[a] += size[b]
        node[a] = n + step
        merges.append(Merge(int(left), int(right), float(lowest), int(size[a])))
    return Dendrogram(n, tuple(merges))


def _leaf_roots(dend: Dendrogram, n_merges: int) -> list[int]:
    parent = list(range(dend.n_leaves + n_merges))
    for step, m in enumerate(dend.merges[:n_merges]):
        parent[m.left] = parent[m.right] = dend.n_leaves + step

    def root(x):
        while parent[x] != x:
            x = parent[x]
        return x

    return [root(leaf) for leaf in range(dend.n_leaves)]


def cut_to_k(dend: Dendrogram, k: int, asset_ids: Sequence[str] | None = None) -> Partition:
    """Flat partition with ``k`` clusters obtained by undoing the last ``k - 1`` merges."""
    n = dend.n_leaves
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in 1..{n}, got {k}")
    ids = tuple(asset_ids) if asset_ids is not None else tuple(str(i) for i in range(n))
    if len(ids) != n:
        raise ValidationError("asset_ids length does not match dendrogram leaves")
    return canonical(ids, _leaf_roots(dend, n - k))


def cut_at_height(dend: Dendrogram, height: float, asset_ids: Sequence[str] | None = None) -> Partition:
    """Apply merges in order until the first one above ``height``."""
    n_merges = 0
    for m in dend.merges:
        if m.height > height:
            break
        n_merges += 1
    return cut_to_k(dend, dend.n_leaves - n_merges, asset_ids)


def cluster(d: DistanceMatrix, k: int) -> Partition:
    return cut_to_k(wpgma_linkage(d), k, d.asset_ids)
