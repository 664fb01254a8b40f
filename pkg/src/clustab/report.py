"""Sankey layouts of partition sequences and their static SVG rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .clustering import Partition
from .errors import ValidationError

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
)
LINK_COLOR = "#999999"


@dataclass(frozen=True)
class SankeyNode:
    column: int
    cluster: int
    size: int


@dataclass(frozen=True)
class SankeyLink:
    column: int  # links go from ``column`` to ``column + 1``
    source: int
    target: int
    weight: int
    assets: tuple[str, ...]


@dataclass(frozen=True)
class SankeyDiagram:
    columns: tuple[str, ...]
    nodes: tuple[tuple[SankeyNode, ...], ...]  # per column, in drawing order
    links: tuple[SankeyLink, ...]
    n_assets: int

    def position(self, column: int, cluster: int) -> int:
        for pos, node in enumerate(self.nodes[column]):
            if node.cluster == cluster:
                return pos
        raise KeyError((column, cluster))

    def links_between(self, column: int) -> list[SankeyLink]:
        return [link for link in self.links if link.column == column]

    def check_flows(self) -> None:
        """Raise unless every node's in-flow and out-flow equal its size."""
        for c, column_nodes in enumerate(self.nodes):
            for node in column_nodes:
                if c + 1 < len(self.nodes):
                    out = sum(l.weight for l in self.links if l.column == c and l.source == node.cluster)
                    if out != node.size:
                        raise ValidationError(f"out-flow {out} != size {node.size} at column {c}")
                if c > 0:
                    inflow = sum(l.weight for l in self.links if l.column == c - 1 and l.target == node.cluster)
                    if inflow != node.size:
                        raise ValidationError(f"in-flow {inflow} != size {node.size} at column {c}")
        for c in range(len(self.nodes) - 1):
            total = sum(l.weight for l in self.links_between(c))
            if total != self.n_assets:
                raise ValidationError(f"links between columns {c} and {c + 1} carry {total} assets")

    def crossings(self, column: int) -> int:
        links = self.links_between(column)
        pos = [(self.position(column, l.source), self.position(column + 1, l.target)) for l in links]
        count = 0
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if (pos[i][0] - pos[j][0]) * (pos[i][1] - pos[j][1]) < 0:
                    count += 1
        return count


def sankey_layout(partitions: Sequence[Partition], labels: Sequence[str] | None = None) -> SankeyDiagram:
    """Columns of clusters joined by shared-asset links, ordered by barycenters.

    The first column keeps label order; every later cluster sits at the
    weighted mean position of the clusters feeding it.
    """
    if len(partitions) < 2:
        raise ValidationError("a Sankey diagram needs at least 2 partitions")
    ref = partitions[0]
    aligned = []
    for p in partitions:
        if set(p.asset_ids) != set(ref.asset_ids) or p.n != ref.n:
            raise ValidationError("all partitions must cover the same assets")
        aligned.append(p if p.asset_ids == ref.asset_ids else p.restrict(ref.asset_ids))
    labels = tuple(labels) if labels is not None else tuple(f"P{i}" for i in range(len(partitions)))
    if len(labels) != len(partitions):
        raise ValidationError("one label per partition required")

    sizes = [np.bincount(p.labels, minlength=p.k) for p in aligned]
    order = [list(range(aligned[0].k))]
    links: list[SankeyLink] = []
    for c in range(len(aligned) - 1):
        left, right = aligned[c], aligned[c + 1]
        pos = {cl: i for i, cl in enumerate(order[c])}
        members: dict[tuple[int, int], list[str]] = {}
        for asset, a, b in zip(ref.asset_ids, left.labels, right.labels):
            members.setdefault((a, b), []).append(asset)
        weighted = np.zeros(right.k)
        for (a, b), assets in members.items():
            weighted[b] += pos[a] * len(assets)
        bary = weighted / sizes[c + 1]
        order.append(sorted(range(right.k), key=lambda b: (bary[b], b)))
        rpos = {cl: i for i, cl in enumerate(order[c + 1])}
        for (a, b) in sorted(members, key=lambda ab: (pos[ab[0]], rpos[ab[1]])):
            assets = members[(a, b)]
            links.append(SankeyLink(c, a, b, len(assets), tuple(assets)))

    nodes = tuple(
        tuple(SankeyNode(c, cl, int(sizes[c][cl])) for cl in column_order)
        for c, column_order in enumerate(order)
    )
    return SankeyDiagram(labels, nodes, tuple(links), ref.n)


def _f(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


@dataclass(frozen=True)
class SvgStyle:
    width: int = 960
    height: int = 600
    margin: float = 20.0
    header: float = 24.0
    node_width: float = 14.0
    gap: float = 8.0
    font_size: int = 12
    link_opacity: float = 0.45


def layout_unit(diagram: SankeyDiagram, style: SvgStyle = SvgStyle()) -> float:
    """Pixels per asset, shared by every column."""
    max_nodes = max(len(col) for col in diagram.nodes)
    usable = style.height - 2 * style.margin - style.header - (max_nodes - 1) * style.gap
    if usable <= 0:
        raise ValidationError("canvas too small for the number of clusters")
    return usable / diagram.n_assets


def render_svg(diagram: SankeyDiagram, style: SvgStyle = SvgStyle()) -> str:
    unit = layout_unit(diagram, style)
    ncol = len(diagram.nodes)
    span = style.width - 2 * style.margin - style.node_width
    xs = [style.margin + c * span / (ncol - 1) for c in range(ncol)]
    top = style.margin + style.header

    node_y: dict[tuple[int, int], float] = {}
    for c, column_nodes in enumerate(diagram.nodes):
        y = top
        for node in column_nodes:
            node_y[(c, node.cluster)] = y
            y += node.size * unit + style.gap

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" '
        f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
        f'data-unit="{unit:.6f}" data-assets="{diagram.n_assets}">',
        f'<rect width="{style.width}" height="{style.height}" fill="#ffffff"/>',
        f'<g font-family="sans-serif" font-size="{style.font_size}">',
    ]
    for c, label in enumerate(diagram.columns):
        anchor = "start" if c == 0 else ("end" if c == ncol - 1 else "middle")
        x = xs[c] + (0 if c == 0 else style.node_width if c == ncol - 1 else style.node_width / 2)
        out.append(
            f'<text class="column" x="{_f(x)}" y="{_f(style.margin + style.font_size)}" '
            f'text-anchor="{anchor}">{escape(label)}</text>'
        )
    out.append("</g>")

    out.append(f'<g class="links" fill="none" stroke="{LINK_COLOR}" stroke-opacity="{style.link_opacity}">')
    out_offset: dict[tuple[int, int], float] = {}
    in_offset: dict[tuple[int, int], float] = {}
    for link in diagram.links:
        c = link.column
        w = link.weight * unit
        src, dst = (c, link.source), (c + 1, link.target)
        y0 = node_y[src] + out_offset.get(src, 0.0) + w / 2
        y1 = node_y[dst] + in_offset.get(dst, 0.0) + w / 2
        out_offset[src] = out_offset.get(src, 0.0) + w
        in_offset[dst] = in_offset.get(dst, 0.0) + w
        x0 = xs[c] + style.node_width
        x1 = xs[c + 1]
        xm = (x0 + x1) / 2
        title = (
            f"{diagram.columns[c]}:{link.source} -> {diagram.columns[c + 1]}:{link.target} "
            f"({link.weight}): {', '.join(link.assets)}"
        )
        out.append(
            f'<path class="link" data-weight="{link.weight}" stroke-width="{_f(w)}" '
            f'd="M{_f(x0)},{_f(y0)} C{_f(xm)},{_f(y0)} {_f(xm)},{_f(y1)} {_f(x1)},{_f(y1)}">'
            f"<title>{escape(title)}</title></path>"
        )
    out.append("</g>")

    out.append('<g class="nodes">')
    for c, column_nodes in enumerate(diagram.nodes):
        for node in column_nodes:
            y = node_y[(c, node.cluster)]
            color = PALETTE[node.cluster % len(PALETTE)]
            out.append(
                f'<rect class="node" x="{_f(xs[c])}" y="{_f(y)}" width="{_f(style.node_width)}" '
                f'height="{_f(node.size * unit)}" fill="{color}">'
                f"<title>{escape(f'{diagram.columns[c]} cluster {node.cluster} ({node.size})')}</title></rect>"
            )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=@-]+", "_", label)


def report_svgs(report, style: SvgStyle = SvgStyle()) -> dict[str, str]:
    """One SVG per adjacent pair of partitions in report order, keyed by file name."""
    items = list(report.partitions.items())
    out = {}
    for (la, pa), (lb, pb) in zip(items, items[1:]):
        if pa.asset_ids != pb.asset_ids:
            in_b = set(pb.asset_ids)
            common = [a for a in pa.asset_ids if a in in_b]
            pa, pb = pa.restrict(common), pb.restrict(common)
        diagram = sankey_layout([pa, pb], [la, lb])
        out[f"sankey_{_slug(la)}__{_slug(lb)}.svg"] = render_svg(diagram, style)
    return out
