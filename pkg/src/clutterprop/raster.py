"""Georeferenced grids: ESRI ASCII I/O, point sampling, HAG and block resampling.

Grids are stored north row first, in geographic coordinates. Cells are
treated as square in degree space.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import BinaryIO, Union

import numpy as np

from .errors import FactorTooLarge, GeometryMismatch, KindError, NoData, OutOfBounds, ParseError
from .geodesy import GeoPoint

DEFAULT_NODATA = -9999.0

# Fractional cell coordinates are snapped to this many decimals so that
# points placed exactly on centers or edges are not perturbed by rounding.
_SNAP_DECIMALS = 9


class RasterKind(str, Enum):
    ELEVATION = "elevation_m"
    HEIGHT = "height_m"
    CLASS_CODE = "class_code"


class ResampleMethod(str, Enum):
    BILINEAR = "bilinear"
    MEAN = "mean"
    MAX = "max"


@dataclass(frozen=True, eq=False)
class Raster:
    ncols: int
    nrows: int
    xll_deg: float
    yll_deg: float
    cellsize_deg: float
    values: np.ndarray
    nodata: float = DEFAULT_NODATA
    kind: RasterKind = RasterKind.ELEVATION

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise ValueError(f"raster must have at least one cell, got {self.ncols}x{self.nrows}")
        if not self.cellsize_deg > 0:
            raise ValueError(f"cellsize must be positive, got {self.cellsize_deg}")
        values = np.array(self.values, dtype=np.float64).reshape(self.nrows, self.ncols)
        values.setflags(write=False)
        kind = RasterKind(self.kind)
        if kind is RasterKind.CLASS_CODE:
            valid = values[values != self.nodata]
            if not np.all(np.isfinite(valid)) or not np.all(valid == np.round(valid)):
                raise KindError("class_code rasters may only hold integer codes or nodata")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "nodata", float(self.nodata))

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return (
            self.same_geometry(other, tol=0.0)
            and self.nodata == other.nodata
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def xur_deg(self) -> float:
        return self.xll_deg + self.ncols * self.cellsize_deg

    @property
    def yur_deg(self) -> float:
        return self.yll_deg + self.nrows * self.cellsize_deg

    @property
    def mask(self) -> np.ndarray:
        """True where the cell holds data."""
        return self.values != self.nodata

    def replace(self, values: np.ndarray, kind: RasterKind | None = None) -> "Raster":
        return Raster(self.ncols, self.nrows, self.xll_deg, self.yll_deg, self.cellsize_deg,
                      values, self.nodata, self.kind if kind is None else kind)

    def same_geometry(self, other: "Raster", tol: float = 1e-9) -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and abs(self.xll_deg - other.xll_deg) <= tol
            and abs(self.yll_deg - other.yll_deg) <= tol
            and abs(self.cellsize_deg - other.cellsize_deg) <= tol
        )

    def cell_center(self, row: int, col: int) -> GeoPoint:
        lon = self.xll_deg + (col + 0.5) * self.cellsize_deg
        lat = self.yll_deg + (self.nrows - row - 0.5) * self.cellsize_deg
        return GeoPoint(lat, lon)

    def contains(self, p: GeoPoint) -> bool:
        ex = 1e-12 * max(1.0, abs(self.xll_deg), abs(self.xur_deg))
        ey = 1e-12 * max(1.0, abs(self.yll_deg), abs(self.yur_deg))
        return (self.xll_deg - ex <= p.lon_deg <= self.xur_deg + ex
                and self.yll_deg - ey <= p.lat_deg <= self.yur_deg + ey)

    def _fractional_index(self, p: GeoPoint) -> tuple[float, float]:
        """Continuous (row, col) coordinates; integers fall on cell centers."""
        if not self.contains(p):
            raise OutOfBounds(
                f"point ({p.lat_deg}, {p.lon_deg}) outside raster bounds "
                f"lat [{self.yll_deg}, {self.yur_deg}] lon [{self.xll_deg}, {self.xur_deg}]")
        col = round((p.lon_deg - self.xll_deg) / self.cellsize_deg - 0.5, _SNAP_DECIMALS)
        row = round((self.yur_deg - p.lat_deg) / self.cellsize_deg - 0.5, _SNAP_DECIMALS)
        return row, col


def sample_nearest(r: Raster, p: GeoPoint) -> float:
    """Value of the cell whose center is nearest ``p``; ties go to the lower index."""
    row, col = r._fractional_index(p)
    i = min(max(math.ceil(row - 0.5), 0), r.nrows - 1)
    j = min(max(math.ceil(col - 0.5), 0), r.ncols - 1)
    v = float(r.values[i, j])
    if v == r.nodata:
        raise NoData(f"cell ({i}, {j}) holds nodata at ({p.lat_deg}, {p.lon_deg})")
    return v


def sample_bilinear(r: Raster, p: GeoPoint) -> float:
    """Bilinear blend of the four surrounding cell centers.

    Falls back to :func:`sample_nearest` in the half-cell border and where
    any neighbor is nodata.
    """
    if r.kind is RasterKind.CLASS_CODE:
        raise KindError("bilinear sampling is undefined for class_code rasters")
    row, col = r._fractional_index(p)
    if not (0.0 <= row <= r.nrows - 1 and 0.0 <= col <= r.ncols - 1) or r.nrows < 2 or r.ncols < 2:
        return sample_nearest(r, p)
    i0 = min(int(math.floor(row)), r.nrows - 2)
    j0 = min(int(math.floor(col)), r.ncols - 2)
    ty, tx = row - i0, col - j0
    block = r.values[i0:i0 + 2, j0:j0 + 2]
    if np.any(block == r.nodata):
        return sample_nearest(r, p)
    top = block[0, 0] * (1.0 - tx) + block[0, 1] * tx
    bottom = block[1, 0] * (1.0 - tx) + block[1, 1] * tx
    v = top * (1.0 - ty) + bottom * ty
    # the blend can stray one ulp outside its inputs
    return float(min(max(v, block.min()), block.max()))


def hag(dsm: Raster, dtm: Raster) -> Raster:
    """Height above ground, ``max(0, dsm - dtm)`` per cell."""
    if not dsm.same_geometry(dtm):
        raise GeometryMismatch("DSM and DTM grids differ in shape, corner or cell size")
    valid = dsm.mask & dtm.mask
    diff = np.maximum(dsm.values - dtm.values, 0.0)
    out = np.where(valid, diff, dsm.nodata)
    return dsm.replace(out, kind=RasterKind.HEIGHT)


def resample(r: Raster, factor: int, method: Union[ResampleMethod, str]) -> Raster:
    """Coarsen ``r`` by an integer block ``factor``.

    Blocks are aligned to the lower-left corner; trailing partial blocks at
    the north and east edges aggregate over the cells they contain. ``mean``
    and ``max`` ignore nodata; ``bilinear`` samples the input at the centre
    of the covered part of each block.
    """
    method = ResampleMethod(method)
    if int(factor) != factor or factor < 2:
        raise ValueError(f"factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    if r.ncols < factor or r.nrows < factor:
        raise FactorTooLarge(f"factor {factor} exceeds raster size {r.ncols}x{r.nrows}")
    if r.kind is RasterKind.CLASS_CODE and method is not ResampleMethod.MAX:
        raise KindError(f"{method.value} resampling is undefined for class_code rasters")

    out_cols = -(-r.ncols // factor)
    out_rows = -(-r.nrows // factor)
    out = np.full((out_rows, out_cols), r.nodata)
    # work bottom-up so block edges align with the lower-left corner
    src = r.values[::-1]
    for bi in range(out_rows):
        r0, r1 = bi * factor, min((bi + 1) * factor, r.nrows)
        for bj in range(out_cols):
            c0, c1 = bj * factor, min((bj + 1) * factor, r.ncols)
            if method is ResampleMethod.BILINEAR:
                lon = r.xll_deg + 0.5 * (c0 + c1) * r.cellsize_deg
                lat = r.yll_deg + 0.5 * (r0 + r1) * r.cellsize_deg
                try:
                    v = sample_bilinear(r, GeoPoint(lat, lon))
                except NoData:
                    continue
            else:
                block = src[r0:r1, c0:c1]
                block = block[block != r.nodata]
                if block.size == 0:
                    continue
                lo, hi = block.min(), block.max()
                # clamp: summation rounding must not push a mean outside its block
                v = min(max(block.mean(), lo), hi) if method is ResampleMethod.MEAN else hi
            out[out_rows - 1 - bi, bj] = v
    return Raster(out_cols, out_rows, r.xll_deg, r.yll_deg, r.cellsize_deg * factor,
                  out, r.nodata, r.kind)


# --- ESRI ASCII grid ---------------------------------------------------------

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def _format_value(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _read_source(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def load_ascii_grid(source: Union[bytes, str, BinaryIO],
                    kind: Union[RasterKind, str] = RasterKind.ELEVATION) -> Raster:
    """Parse an ESRI ASCII grid from bytes, text, or a file object.

    ``kind`` is not stored in the format and must be supplied by the caller.
    """
    tokens = _read_source(source).split()
    header: dict[str, str] = {}
    pos = 0
    while pos + 1 < len(tokens) and tokens[pos][:1].isalpha():
        key = tokens[pos].lower()
        if key in header:
            raise ParseError(f"duplicate header key {tokens[pos]!r}")
        header[key] = tokens[pos + 1]
        pos += 2
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ParseError(f"missing header key(s): {', '.join(missing)}")
    unknown = set(header) - set(_HEADER_KEYS) - {"nodata_value"}
    if unknown:
        raise ParseError(f"unknown header key(s): {', '.join(sorted(unknown))}")
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        xll = float(header["xllcorner"])
        yll = float(header["yllcorner"])
        cellsize = float(header["cellsize"])
        nodata = float(header.get("nodata_value", DEFAULT_NODATA))
    except ValueError as exc:
        raise ParseError(f"malformed header value: {exc}") from None
    if ncols < 1 or nrows < 1 or not cellsize > 0:
        raise ParseError(f"invalid grid geometry ncols={ncols} nrows={nrows} cellsize={cellsize}")

    body = tokens[pos:]
    if len(body) != ncols * nrows:
        raise ParseError(f"expected {ncols * nrows} cell values ({ncols}x{nrows}), found {len(body)}")
    try:
        values = np.array([float(t) for t in body], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"non-numeric cell value: {exc}") from None
    try:
        return Raster(ncols, nrows, xll, yll, cellsize, values.reshape(nrows, ncols), nodata, kind)
    except KindError as exc:
        raise ParseError(str(exc)) from None


def write_ascii_grid(r: Raster) -> bytes:
    """Serialize ``r`` as an ESRI ASCII grid.

    Header coordinates use the shortest exact float representation; cell
    values are written with at most six decimals.
    """
    buf = io.StringIO()
    buf.write(f"ncols {r.ncols}\n")
    buf.write(f"nrows {r.nrows}\n")
    buf.write(f"xllcorner {r.xll_deg!r}\n")
    buf.write(f"yllcorner {r.yll_deg!r}\n")
    buf.write(f"cellsize {r.cellsize_deg!r}\n")
    nodata = _format_value(r.nodata) if r.nodata == round(r.nodata) else repr(r.nodata)
    buf.write(f"NODATA_value {nodata}\n")
    for row in r.values:
        buf.write(" ".join(nodata if v == r.nodata else _format_value(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue().encode("utf-8")


def read_raster(path, kind: Union[RasterKind, str] = RasterKind.ELEVATION) -> Raster:
    with open(path, "rb") as fh:
        return load_ascii_grid(fh, kind)


def write_raster(path, r: Raster) -> None:
    with open(path, "wb") as fh:
        fh.write(write_ascii_grid(r))
