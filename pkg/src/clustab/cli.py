"""Command-line entry point: ``clustab {gen,distances,run,compare,meancorr}``."""

from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .clustering import Partition
from .config import load_config
from .data import SyntheticSpec, load_csv, synthesize, variations, write_csv
from .distances import DEFAULT_KIND, METHODS, compute_distance
from .errors import ClustabError, ConfigError
from .report import report_svgs, render_svg, sankey_layout
from .stability import ari, mean_correlation_series, run_experiment

log = logging.getLogger("clustab")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


def cmd_gen(args) -> int:
    raw = _read_json(args.spec)
    known = {f.name for f in fields(SyntheticSpec)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown synthetic spec fields: {unknown}")
    if "stress_segments" in raw:
        raw["stress_segments"] = tuple(tuple(s) for s in raw["stress_segments"])
    try:
        spec = SyntheticSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic spec: {exc}") from None
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    panel, labels = synthesize(spec)
    write_csv(panel, args.out)
    if args.labels_out:
        mapping = {a: int(c) for a, c in zip(panel.asset_ids, labels)}
        Path(args.labels_out).write_text(json.dumps(mapping, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %d assets x %d dates to %s", panel.n_assets, panel.n_dates, args.out)
    return EXIT_OK


def cmd_distances(args) -> int:
    loaded = load_csv(args.input)
    if loaded.excluded:
        log.warning("excluded incomplete assets: %s", ", ".join(loaded.excluded))
    kind = args.kind or DEFAULT_KIND[args.method]
    v = variations(loaded.panel, kind, args.scale)
    params = {"theta": args.theta, "bins": args.bins}
    d = compute_distance(v, args.method, **params)
    d.to_csv(args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg, base_dir = load_config(args.config)
    report = run_experiment(cfg, base_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps(), encoding="utf-8")
    for name, svg in report_svgs(report).items():
        (out / name).write_text(svg, encoding="utf-8")
    partitions = {
        label: dict(zip(p.asset_ids, p.labels)) for label, p in report.partitions.items()
    }
    (out / "partitions.json").write_text(json.dumps(partitions, indent=2) + "\n", encoding="utf-8")
    for i, (label, d) in enumerate(report.distances.items()):
        d.to_csv(out / f"distances_{i:02d}.csv")
    log.info("wrote report for %d parts to %s", len(report.partitions), out)
    return EXIT_OK


def _load_partition(path: str) -> Partition:
    payload = _read_json(path)
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return Partition.from_json(payload)


def cmd_compare(args) -> int:
    left = _load_partition(args.left)
    right = _load_partition(args.right)
    if set(left.asset_ids) == set(right.asset_ids) and left.asset_ids != right.asset_ids:
        right = right.restrict(left.asset_ids)
    print(f"{ari(left, right):.6f}")
    if args.svg:
        diagram = sankey_layout([left, right], [Path(args.left).stem, Path(args.right).stem])
        Path(args.svg).write_text(render_svg(diagram), encoding="utf-8")
    return EXIT_OK


def cmd_meancorr(args) -> int:
    loaded = load_csv(args.input)
    v = variations(loaded.panel, args.kind, 1)
    series = mean_correlation_series(v, args.window, args.step)
    dates = loaded.panel.dates
    with Path(args.out).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start_date", "end_date", "mean_correlation", "n_pairs"])
        for point in series:
            start = dates[v.time_indices[point.start]].isoformat()
            end = dates[v.time_indices[point.end - 1]].isoformat()
            writer.writerow([start, end, repr(point.value), point.n_pairs])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="synthesize a price panel")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("distances", help="pairwise distance matrix of a price file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--bins", type=int)
    p.add_argument("--kind", choices=("diff", "log_diff"))
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("run", help="run a perturbation experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="ARI between two partition files")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("meancorr", help="rolling mean pairwise correlation")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--window", type=int, required=True)
    p.add_argument("--step", type=int, required=True)
    p.add_argument("--kind", choices=("diff", "log_diff"), default="log_diff")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_meancorr)
    return parser


def _origin(exc: BaseException) -> str:
    """Name of the library module an exception was raised from."""
    root = exc
    while root.__cause__ is not None:
        root = root.__cause__
    frames = inspect.getinnerframes(root.__traceback__) if root.__traceback__ else []
    for frame in reversed(frames):
        name = frame.frame.f_globals.get("__name__", "")
        if name.startswith("clustab."):
            return name.split(".", 1)[1]
    return "clustab"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"clustab {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ClustabError, OSError) as exc:
        print(f"clustab {args.command}: error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
