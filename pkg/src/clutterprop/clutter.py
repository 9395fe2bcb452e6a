"""Land-cover to clutter-category mapping and representative clutter heights.

Schemes and height tables can be loaded from plain ``key=value`` files::

    # scheme file
    name=esa
    unmapped=open          # or: error
    code.10=trees
    code.50=suburban

    # height file (categories not listed keep their defaults)
    height.trees=15.0
    height.code.1=18.5     # per-code override, e.g. one NRCan forest type
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .errors import EmptyClass, GeometryDisjoint, KindError, NoData, ParseError, UnmappedCode
from .raster import Raster, RasterKind, sample_nearest


class ClutterCategory(str, Enum):
    WATER_OPEN_RURAL = "open"
    SUBURBAN = "suburban"
    URBAN_TREES_FOREST = "trees"
    DENSE_URBAN = "dense"


class Stat(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    P75 = "p75"


class UnmappedPolicy(str, Enum):
    ERROR = "error"
    TREAT_AS_OPEN = "open"


DEFAULT_HEIGHTS = {
    ClutterCategory.WATER_OPEN_RURAL: 0.0,
    ClutterCategory.SUBURBAN: 10.0,
    ClutterCategory.URBAN_TREES_FOREST: 15.0,
    ClutterCategory.DENSE_URBAN: 20.0,
}

# HAG values below this are bare-ground noise and excluded from statistics.
HAG_FLOOR_M = 1.0


@dataclass(frozen=True)
class HeightTable:
    """Representative height per category, with optional per-code overrides."""

    heights: Mapping[ClutterCategory, float] = field(default_factory=lambda: dict(DEFAULT_HEIGHTS))
    code_heights: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        heights = {ClutterCategory(k): float(v) for k, v in self.heights.items()}
        missing = set(ClutterCategory) - set(heights)
        if missing:
            raise ValueError(f"height table missing {sorted(c.value for c in missing)}")
        codes = {int(k): float(v) for k, v in self.code_heights.items()}
        for v in (*heights.values(), *codes.values()):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"clutter heights must be finite and >= 0, got {v}")
        object.__setattr__(self, "heights", heights)
        object.__setattr__(self, "code_heights", codes)

    def with_height(self, category: ClutterCategory, height: float) -> "HeightTable":
        return HeightTable({**self.heights, ClutterCategory(category): height}, self.code_heights)

    def with_code_heights(self, code_heights: Mapping[int, float]) -> "HeightTable":
        return HeightTable(self.heights, {**self.code_heights, **code_heights})

    def values(self) -> set[float]:
        return set(self.heights.values()) | set(self.code_heights.values())


def default_height(t: HeightTable, c: ClutterCategory) -> float:
    return t.heights[ClutterCategory(c)]


@dataclass(frozen=True)
class ClutterScheme:
    name: str
    code_map: Mapping[int, ClutterCategory]
    unmapped_policy: UnmappedPolicy = UnmappedPolicy.ERROR

    def __post_init__(self):
        if not self.code_map:
            raise ValueError(f"scheme {self.name!r} maps no codes")
        code_map = {int(k): ClutterCategory(v) for k, v in self.code_map.items()}
        object.__setattr__(self, "code_map", code_map)
        object.__setattr__(self, "unmapped_policy", UnmappedPolicy(self.unmapped_policy))


def map_code(s: ClutterScheme, code: int) -> ClutterCategory:
    try:
        return s.code_map[int(code)]
    except KeyError:
        if s.unmapped_policy is UnmappedPolicy.TREAT_AS_OPEN:
            return ClutterCategory.WATER_OPEN_RURAL
        raise UnmappedCode(f"code {int(code)} is not mapped by scheme {s.name!r}") from None


_O, _S, _T = (ClutterCategory.WATER_OPEN_RURAL, ClutterCategory.SUBURBAN,
              ClutterCategory.URBAN_TREES_FOREST)

# ESA WorldCover 2021 legend.
ESA_WORLDCOVER = ClutterScheme("esa", {
    10: _T,   # tree cover
    20: _O,   # shrubland
    30: _O,   # grassland
    40: _O,   # cropland
    50: _S,   # built-up
    60: _O,   # bare / sparse vegetation
    70: _O,   # snow and ice
    80: _O,   # permanent water bodies
    90: _O,   # herbaceous wetland
    95: _T,   # mangroves
    100: _O,  # moss and lichen
})

# NRCan Land Cover of Canada 2020 legend. The four forest classes share a
# category; use HeightTable.code_heights to give each its own height.
NRCAN_FOREST_CODES = (1, 2, 5, 6)
NRCAN_LANDCOVER = ClutterScheme("nrcan", {
    1: _T,    # temperate or sub-polar needleleaf forest
    2: _T,    # sub-polar taiga needleleaf forest
    5: _T,    # temperate or sub-polar broadleaf deciduous forest
    6: _T,    # mixed forest
    8: _O,    # temperate or sub-polar shrubland
    10: _O,   # temperate or sub-polar grassland
    11: _O,   # sub-polar or polar shrubland-lichen-moss
    12: _O,   # sub-polar or polar grassland-lichen-moss
    13: _O,   # sub-polar or polar barren-lichen-moss
    14: _O,   # wetland
    15: _O,   # cropland
    16: _O,   # barren land
    17: _S,   # urban and built-up
    18: _O,   # water
    19: _O,   # snow and ice
})

# OpenStreetMap landuse=wood, pre-rasterized to 1 (wood) / 0 (anything else).
OSM_WOOD = ClutterScheme("osm", {0: _O, 1: _T})

BUILTIN_SCHEMES = {s.name: s for s in (ESA_WORLDCOVER, NRCAN_LANDCOVER, OSM_WOOD)}


# --- key=value files ---------------------------------------------------------

def _parse_kv(text: str) -> list[tuple[int, str, str]]:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"line {lineno}: empty key")
        entries.append((lineno, key, value))
    return entries


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines into a dict; later keys override earlier ones."""
    return {key: value for _, key, value in _parse_kv(text)}


def _category(value: str, lineno: int) -> ClutterCategory:
    try:
        return ClutterCategory(value.lower())
    except ValueError:
        names = "|".join(c.value for c in ClutterCategory)
        raise ParseError(f"line {lineno}: unknown category {value!r} (expected {names})") from None


def _number(value: str, lineno: int, what: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"line {lineno}: {what} must be numeric, got {value!r}") from None


def _code(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"line {lineno}: class code must be an integer, got {text!r}") from None


def parse_scheme(text: str, default_name: str = "custom") -> ClutterScheme:
    name = default_name
    policy = UnmappedPolicy.ERROR
    code_map: dict[int, ClutterCategory] = {}
    for lineno, key, value in _parse_kv(text):
        if key == "name":
            name = value
        elif key == "unmapped":
            try:
                policy = UnmappedPolicy(value.lower())
            except ValueError:
                raise ParseError(f"line {lineno}: unmapped must be 'error' or 'open'") from None
        elif key.startswith("code."):
            code = _code(key[5:], lineno)
            if code in code_map:
                raise ParseError(f"line {lineno}: code {code} mapped twice")
            code_map[code] = _category(value, lineno)
        else:
            raise ParseError(f"line {lineno}: unknown scheme key {key!r}")
    if not code_map:
        raise ParseError("scheme maps no codes")
    return ClutterScheme(name, code_map, policy)


def format_scheme(s: ClutterScheme) -> str:
    lines = [f"name={s.name}", f"unmapped={s.unmapped_policy.value}"]
    lines += [f"code.{code}={cat.value}" for code, cat in sorted(s.code_map.items())]
    return "\n".join(lines) + "\n"


def parse_height_table(text: str, base: Optional[HeightTable] = None) -> HeightTable:
    table = base or HeightTable()
    heights = dict(table.heights)
    codes = dict(table.code_heights)
    for lineno, key, value in _parse_kv(text):
        if key.startswith("height.code."):
            codes[_code(key[12:], lineno)] = _number(value, lineno, key)
        elif key.startswith("height."):
            heights[_category(key[7:], lineno)] = _number(value, lineno, key)
        else:
            raise ParseError(f"line {lineno}: unknown height key {key!r}")
    try:
        return HeightTable(heights, codes)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def format_height_table(t: HeightTable) -> str:
    lines = [f"height.{c.value}={t.heights[c]!r}" for c in ClutterCategory]
    lines += [f"height.code.{k}={v!r}" for k, v in sorted(t.code_heights.items())]
    return "\n".join(lines) + "\n"


def load_scheme(spec: str) -> ClutterScheme:
    """Resolve a built-in scheme name (``esa``, ``nrcan``, ``osm``) or a file path."""
    if spec in BUILTIN_SCHEMES:
        return BUILTIN_SCHEMES[spec]
    with open(spec, encoding="utf-8") as fh:
        return parse_scheme(fh.read())


def load_height_table(path) -> HeightTable:
    with open(path, encoding="utf-8") as fh:
        return parse_height_table(fh.read())


# --- statistics --------------------------------------------------------------

def nearest_rank(values: Iterable[float], q: float) -> float:
    """Nearest-rank percentile, ``q`` in (0, 1]: sorted value at rank ceil(q*n)."""
    xs = sorted(values)
    if not xs:
        raise ValueError("percentile of an empty sequence")
    k = max(1, math.ceil(q * len(xs) - 1e-12))
    return xs[k - 1]


def _summarize(values: list[float], stat: Stat) -> float:
    if stat is Stat.MEAN:
        return math.fsum(values) / len(values)
    return nearest_rank(values, 0.5 if stat is Stat.MEDIAN else 0.75)


def _hag_samples(hag: Raster, landcover: Raster, select) -> list[float]:
    """HAG at the centre of every land-cover cell for which ``select(code)`` holds."""
    if landcover.kind is not RasterKind.CLASS_CODE:
        raise KindError("land cover raster must have kind class_code")
    if hag.kind is RasterKind.CLASS_CODE:
        raise KindError("HAG raster must hold heights, not class codes")
    overlap = False
    samples = []
    codes = landcover.values
    for i in range(landcover.nrows):
        for j in range(landcover.ncols):
            code = codes[i, j]
            if code == landcover.nodata:
                continue
            center = landcover.cell_center(i, j)
            if not hag.contains(center):
                continue
            overlap = True
            if not select(int(code)):
                continue
            try:
                h = sample_nearest(hag, center)
            except NoData:
                continue
            if h >= HAG_FLOOR_M:
                samples.append(h)
    if not overlap:
        raise GeometryDisjoint("land cover and HAG rasters do not overlap")
    return samples


def class_stat(hag: Raster, landcover: Raster, s: ClutterScheme, c: ClutterCategory,
               stat: Union[Stat, str]) -> float:
    """Statistic of HAG over land-cover cells mapped to category ``c``.

    Cells with HAG below 1 m are ignored; percentiles use nearest rank.
    """
    c, stat = ClutterCategory(c), Stat(stat)
    samples = _hag_samples(hag, landcover, lambda code: map_code(s, code) is c)
    if not samples:
        raise EmptyClass(f"no cells of category {c.value!r} with HAG >= {HAG_FLOOR_M} m")
    return _summarize(samples, stat)


def code_stat(hag: Raster, landcover: Raster, code: int, stat: Union[Stat, str]) -> float:
    """Like :func:`class_stat` but for one raw land-cover code."""
    samples = _hag_samples(hag, landcover, lambda k: k == code)
    if not samples:
        raise EmptyClass(f"no cells with code {code} and HAG >= {HAG_FLOOR_M} m")
    return _summarize(samples, Stat(stat))


def stat_height_table(hag: Raster, landcover: Raster, s: ClutterScheme, stat: Union[Stat, str],
                      categories: Iterable[ClutterCategory] = (ClutterCategory.URBAN_TREES_FOREST,),
                      per_code: bool = False, base: Optional[HeightTable] = None) -> HeightTable:
    """Height table whose listed categories take a HAG statistic.

    Categories with no contributing cells keep their ``base`` height. With
    ``per_code`` every raw code of those categories gets its own statistic,
    so e.g. each NRCan forest type receives its own height.
    """
    table = base or HeightTable()
    for c in categories:
        c = ClutterCategory(c)
        try:
            table = table.with_height(c, class_stat(hag, landcover, s, c, stat))
        except EmptyClass:
            continue
        if per_code:
            overrides = {}
            for code, cat in s.code_map.items():
                if cat is c:
                    try:
                        overrides[code] = code_stat(hag, landcover, code, stat)
                    except EmptyClass:
                        pass
            table = table.with_code_heights(overrides)
    return table


def build_height_raster(landcover: Raster, s: ClutterScheme, t: HeightTable) -> Raster:
    """Replace each land-cover code by its representative clutter height."""
    if landcover.kind is not RasterKind.CLASS_CODE:
        raise KindError("land cover raster must have kind class_code")
    lookup: dict[int, float] = {}
    out = np.full(landcover.values.shape, landcover.nodata)
    for code in np.unique(landcover.values[landcover.mask]):
        code = int(code)
        if code in t.code_heights:
            lookup[code] = t.code_heights[code]
        else:
            lookup[code] = t.heights[map_code(s, code)]
        out[landcover.values == code] = lookup[code]
    return landcover.replace(out, kind=RasterKind.HEIGHT)
