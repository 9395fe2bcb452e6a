"""Command-line front end.

Every command is deterministic: identical inputs and flags give
byte-identical output, whatever ``--workers`` is set to.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import clutter as cl
from .errors import ClutterPropError
from .evaluation import read_measurements, report_json, report_table, run_evaluation
from .geodesy import EARTH_RADIUS_M, GeoPoint
from .kernel import LinkSpec, predict
from .profile import ClutterSampling, ClutterSource, extract_profile, format_profile
from .raster import (DEFAULT_NODATA, Raster, RasterKind, ResampleMethod, read_raster, resample,
                     write_ascii_grid)

HEIGHT_SOURCES = ("defaults",) + tuple(s.value for s in cl.Stat)


class CliError(Exception):
    pass


def _read(path: str, kind: RasterKind, what: str) -> Raster:
    try:
        return read_raster(path, kind)
    except OSError as exc:
        raise CliError(f"cannot read {what} file {path!r}: {exc.strerror or exc}") from None
    except ClutterPropError as exc:
        raise CliError(f"{what} file {path!r}: {exc}") from None


def _read_text(path: str, what: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {what} file {path!r}: {exc.strerror or exc}") from None


def _scheme(spec: str) -> cl.ClutterScheme:
    if spec in cl.BUILTIN_SCHEMES:
        return cl.BUILTIN_SCHEMES[spec]
    try:
        return cl.parse_scheme(_read_text(spec, "scheme"))
    except ClutterPropError as exc:
        raise CliError(f"scheme file {spec!r}: {exc}") from None


def _heights(path: Optional[str]) -> cl.HeightTable:
    if path is None:
        return cl.HeightTable()
    try:
        return cl.parse_height_table(_read_text(path, "heights"))
    except ClutterPropError as exc:
        raise CliError(f"heights file {path!r}: {exc}") from None


def _emit(args, payload: bytes) -> None:
    if getattr(args, "out", None):
        try:
            with open(args.out, "wb") as fh:
                fh.write(payload)
        except OSError as exc:
            raise CliError(f"cannot write {args.out!r}: {exc.strerror or exc}") from None
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()


# --- run configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    """A fully resolved clutter strategy, sampling resolution and resampling."""

    terrain: Raster
    clutter: ClutterSource
    strategy: str
    spacing_m: float
    clutter_sampling: ClutterSampling = ClutterSampling.NEAREST


def _height_table(args, height_source: str, landcover: Raster, scheme: cl.ClutterScheme,
                  cache: dict) -> cl.HeightTable:
    base = _heights(args.heights)
    if height_source == "defaults":
        return base
    if not args.hag:
        raise CliError(f"height source {height_source!r} requires --hag")
    if "hag" not in cache:
        cache["hag"] = _read(args.hag, RasterKind.HEIGHT, "HAG")
    categories = args.stat_category or [cl.ClutterCategory.URBAN_TREES_FOREST.value]
    try:
        return cl.stat_height_table(cache["hag"], landcover, scheme, height_source,
                                    categories, per_code=args.per_code, base=base)
    except ClutterPropError as exc:
        raise CliError(f"HAG statistics: {exc}") from None


def _maybe_resample(args, r: Raster) -> Raster:
    if not args.resample_factor:
        return r
    try:
        return resample(r, args.resample_factor, args.resample_method)
    except ClutterPropError as exc:
        raise CliError(f"resampling: {exc}") from None


def build_clutter_sources(args, height_sources: Sequence[str]) -> list[tuple[str, ClutterSource]]:
    """(strategy label, clutter source) for every requested height source."""
    if args.clutter and args.landcover:
        raise CliError("--clutter and --landcover are mutually exclusive")
    if args.clutter:
        r = _maybe_resample(args, _read(args.clutter, RasterKind.HEIGHT, "clutter"))
        label = "surface" + (f"-{args.resample_method}{args.resample_factor}"
                             if args.resample_factor else "")
        return [(label, ClutterSource(r))]
    if args.landcover:
        landcover = _read(args.landcover, RasterKind.CLASS_CODE, "land cover")
        scheme = _scheme(args.scheme)
        cache: dict = {}
        out = []
        for source in height_sources:
            table = _height_table(args, source, landcover, scheme, cache)
            try:
                heights = cl.build_height_raster(landcover, scheme, table)
            except ClutterPropError as exc:
                raise CliError(f"land cover file {args.landcover!r}: {exc}") from None
            out.append((f"{scheme.name}-{source}", ClutterSource(_maybe_resample(args, heights))))
        return out
    return [("none", ClutterSource.none())]


def _height_source(args) -> str:
    return args.stat if args.stat else "defaults"


def run_config(args) -> RunConfig:
    if not args.spacing > 0:
        raise CliError(f"--spacing must be positive, got {args.spacing}")
    terrain = _read(args.terrain, RasterKind.ELEVATION, "terrain")
    (label, source), = build_clutter_sources(args, [_height_source(args)])
    return RunConfig(terrain, source, label, args.spacing, ClutterSampling(args.clutter_sampling))


def _point(text: str) -> GeoPoint:
    try:
        return GeoPoint.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in HEIGHT_SOURCES]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown height source(s) {', '.join(bad)}; choose from {', '.join(HEIGHT_SOURCES)}")
    return names


# --- commands --------------------------------------------------------------------

def cmd_profile(args) -> None:
    cfg = run_config(args)
    try:
        p = extract_profile(cfg.terrain, cfg.clutter, args.tx, args.rx, cfg.spacing_m,
                            cfg.clutter_sampling)
    except ClutterPropError as exc:
        raise CliError(f"profile: {exc}") from None
    _emit(args, format_profile(p).encode("utf-8"))


def _predict_one(cfg: RunConfig, link: LinkSpec):
    p = extract_profile(cfg.terrain, cfg.clutter, link.tx, link.rx, cfg.spacing_m,
                        cfg.clutter_sampling)
    return predict(p, link)


def _link(args, rx: GeoPoint) -> LinkSpec:
    try:
        return LinkSpec(args.tx, rx, args.tx_height, args.rx_height, args.freq)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_predict(args) -> None:
    cfg = run_config(args)
    try:
        res = _predict_one(cfg, _link(args, args.rx))
    except ClutterPropError as exc:
        raise CliError(f"predict: {exc}") from None
    text = (f"loss_db={res.loss_db:.2f}\n"
            f"fspl_db={res.fspl_db:.2f}\n"
            f"diffraction_db={res.diffraction_db:.2f}\n"
            f"regime={res.regime.value}\n")
    _emit(args, text.encode("utf-8"))


def grid_geometry(bbox: Sequence[float], cell_m: float) -> tuple[int, int, float]:
    """(ncols, nrows, cellsize_deg) covering ``lat_min,lon_min,lat_max,lon_max``."""
    lat_min, lon_min, lat_max, lon_max = bbox
    if not (lat_max > lat_min and lon_max > lon_min):
        raise CliError("--bbox must be lat_min,lon_min,lat_max,lon_max with max > min")
    if not cell_m > 0:
        raise CliError(f"--cell-m must be positive, got {cell_m}")
    cs = math.degrees(cell_m / EARTH_RADIUS_M)
    ncols = max(1, math.ceil((lon_max - lon_min) / cs - 1e-9))
    nrows = max(1, math.ceil((lat_max - lat_min) / cs - 1e-9))
    return ncols, nrows, cs


def cmd_grid(args) -> None:
    if len(args.bbox) != 4:
        raise CliError("--bbox needs four numbers: lat_min,lon_min,lat_max,lon_max")
    cfg = run_config(args)
    ncols, nrows, cs = grid_geometry(args.bbox, args.cell_m)
    lat_min, lon_min = args.bbox[0], args.bbox[1]
    _link(args, args.tx)  # validate heights and frequency up front
    shell = Raster(ncols, nrows, lon_min, lat_min, cs, np.zeros((nrows, ncols)),
                   DEFAULT_NODATA, RasterKind.HEIGHT)

    def cell(idx: int) -> float:
        i, j = divmod(idx, ncols)
        try:
            return _predict_one(cfg, _link(args, shell.cell_center(i, j))).loss_db
        except (ClutterPropError, ValueError, CliError):
            return DEFAULT_NODATA

    cells = range(nrows * ncols)
    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            values = list(pool.map(cell, cells))
    else:
        values = [cell(k) for k in cells]
    out = shell.replace(np.array(values).reshape(nrows, ncols))
    _emit(args, write_ascii_grid(out))


def _sweep(args) -> tuple[list[str], list[float]]:
    sources = args.sweep_strategies
    spacings = args.sweep_spacings
    if args.manifest:
        try:
            kv = cl.parse_kv(_read_text(args.manifest, "manifest"))
            if sources is None and "sweep.strategies" in kv:
                sources = _names(kv["sweep.strategies"])
            if spacings is None and "sweep.spacings" in kv:
                spacings = _floats(kv["sweep.spacings"])
        except (ClutterPropError, argparse.ArgumentTypeError) as exc:
            raise CliError(f"manifest {args.manifest!r}: {exc}") from None
    sources = sources or [_height_source(args)]
    spacings = spacings or [args.spacing]
    if any(not s > 0 for s in spacings):
        raise CliError("sweep spacings must be positive")
    if not args.landcover and sources != [_height_source(args)]:
        raise CliError("a height-source sweep requires --landcover")
    return sources, spacings


def cmd_evaluate(args) -> None:
    sources, spacings = _sweep(args)
    terrain = _read(args.terrain, RasterKind.ELEVATION, "terrain")
    try:
        records = read_measurements(args.measurements)
    except OSError as exc:
        raise CliError(f"cannot read measurements file {args.measurements!r}: "
                       f"{exc.strerror or exc}") from None
    except ClutterPropError as exc:
        raise CliError(f"measurements file {args.measurements!r}: {exc}") from None

    reports = []
    for label, source in build_clutter_sources(args, sources):
        for spacing in spacings:
            try:
                reports.append(run_evaluation(
                    records, terrain, source, label, spacing, args.clutter_sampling,
                    bin_width=args.bin_width, split_by_frequency=args.split_frequency,
                    workers=args.workers))
            except (ClutterPropError, ValueError) as exc:
                raise CliError(f"evaluate: {exc}") from None
    _emit(args, report_json(reports).encode("utf-8"))
    table = report_table(reports)
    if args.table:
        try:
            with open(args.table, "w", encoding="utf-8") as fh:
                fh.write(table)
        except OSError as exc:
            raise CliError(f"cannot write {args.table!r}: {exc.strerror or exc}") from None
    elif args.out:
        sys.stdout.write(table)


def cmd_cluttermap(args) -> None:
    (_, source), = build_clutter_sources(args, [_height_source(args)])
    _emit(args, write_ascii_grid(source.raster))


def cmd_resample(args) -> None:
    r = _read(args.input, RasterKind(args.kind), "input")
    if not args.resample_factor:
        raise CliError("--resample-factor is required")
    _emit(args, write_ascii_grid(_maybe_resample(args, r)))


def cmd_stats(args) -> None:
    hag = _read(args.hag, RasterKind.HEIGHT, "HAG")
    landcover = _read(args.landcover, RasterKind.CLASS_CODE, "land cover")
    scheme = _scheme(args.scheme)
    lines = []
    for stat in (args.stat or [s.value for s in cl.Stat]):
        try:
            v = cl.class_stat(hag, landcover, scheme, args.category, stat)
        except ClutterPropError as exc:
            raise CliError(f"stats: {exc}") from None
        lines.append(f"{args.category}.{stat}_m={v:.3f}\n")
    _emit(args, "".join(lines).encode("utf-8"))


# --- parser --------------------------------------------------------------------------

def _add_strategy(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("clutter strategy")
    g.add_argument("--clutter", metavar="PATH",
                   help="clutter height raster (canopy height, HAG) used directly")
    g.add_argument("--landcover", metavar="PATH", help="land cover class raster")
    g.add_argument("--scheme", default="esa", metavar="NAME|PATH",
                   help="land cover scheme: esa, nrcan, osm, or a scheme file (default: esa)")
    g.add_argument("--heights", metavar="PATH", help="height table file (default: built-in defaults)")
    g.add_argument("--hag", metavar="PATH", help="height-above-ground raster for --stat")
    g.add_argument("--stat", choices=[s.value for s in cl.Stat],
                   help="replace category heights by this HAG statistic")
    g.add_argument("--stat-category", action="append", choices=[c.value for c in cl.ClutterCategory],
                   help="category receiving the statistic (repeatable; default: trees)")
    g.add_argument("--per-code", action="store_true",
                   help="compute the statistic separately for every class code of the category")
    g.add_argument("--clutter-sampling", choices=[s.value for s in ClutterSampling],
                   default=ClutterSampling.NEAREST.value)
    _add_resample(g)


def _add_resample(g) -> None:
    g.add_argument("--resample-factor", type=int, metavar="N",
                   help="coarsen the clutter height raster by an N x N block")
    g.add_argument("--resample-method", choices=[m.value for m in ResampleMethod],
                   default=ResampleMethod.MEAN.value)


def _add_common(p: argparse.ArgumentParser, terrain: bool = True) -> None:
    if terrain:
        p.add_argument("--terrain", required=True, metavar="PATH", help="terrain elevation raster")
        p.add_argument("--spacing", type=float, default=30.0, metavar="M",
                       help="maximum profile spacing in meters (default: 30)")
    p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")


def _add_link(p: argparse.ArgumentParser, rx: bool = True) -> None:
    p.add_argument("--tx", type=_point, required=True, metavar="LAT,LON")
    if rx:
        p.add_argument("--rx", type=_point, required=True, metavar="LAT,LON")
    p.add_argument("--tx-height", type=float, default=30.0, metavar="M")
    p.add_argument("--rx-height", type=float, default=1.5, metavar="M")
    p.add_argument("--freq", type=float, default=755.0, metavar="MHZ")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clutterprop",
                                     description="Clutter-aware median path loss prediction.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="print the path profile between two points")
    _add_common(p)
    _add_strategy(p)
    p.add_argument("--tx", type=_point, required=True, metavar="LAT,LON")
    p.add_argument("--rx", type=_point, required=True, metavar="LAT,LON")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("predict", help="predict path loss for one link")
    _add_common(p)
    _add_strategy(p)
    _add_link(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grid", help="predict path loss over a bounding box")
    _add_common(p)
    _add_strategy(p)
    _add_link(p, rx=False)
    p.add_argument("--bbox", type=_floats, required=True, metavar="LAT0,LON0,LAT1,LON1")
    p.add_argument("--cell-m", type=float, default=100.0, metavar="M")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="compare predictions against measurements")
    _add_common(p)
    _add_strategy(p)
    p.add_argument("--measurements", required=True, metavar="PATH")
    p.add_argument("--sweep-strategies", type=_names, metavar="LIST",
                   help=f"height sources to sweep, from {','.join(HEIGHT_SOURCES)}")
    p.add_argument("--sweep-spacings", type=_floats, metavar="LIST", help="spacings to sweep, meters")
    p.add_argument("--manifest", metavar="PATH",
                   help="key=value file with sweep.strategies and sweep.spacings")
    p.add_argument("--table", metavar="PATH", help="write the RMSE table here")
    p.add_argument("--bin-width", type=float, default=2.0, metavar="DB")
    p.add_argument("--split-frequency", action="store_true",
                   help="compute RMSE per dataset and frequency")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cluttermap", help="build a clutter height raster from land cover")
    _add_common(p, terrain=False)
    _add_strategy(p)
    p.set_defaults(func=cmd_cluttermap)

    p = sub.add_parser("resample", help="coarsen a raster")
    p.add_argument("input", metavar="PATH")
    p.add_argument("--kind", choices=[k.value for k in RasterKind], default=RasterKind.HEIGHT.value)
    _add_resample(p)
    _add_common(p, terrain=False)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("stats", help="HAG statistics over a land cover category")
    p.add_argument("--hag", required=True, metavar="PATH")
    p.add_argument("--landcover", required=True, metavar="PATH")
    p.add_argument("--scheme", default="esa", metavar="NAME|PATH")
    p.add_argument("--category", default="trees", choices=[c.value for c in cl.ClutterCategory])
    p.add_argument("--stat", action="append", choices=[s.value for s in cl.Stat])
    _add_common(p, terrain=False)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "cluttermap" and not args.landcover:
        print("error: cluttermap requires --landcover", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
