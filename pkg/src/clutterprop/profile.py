"""Path profiles: evenly spaced (distance, terrain, clutter) triplets between two terminals."""
from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import KindError, NoData, ParseError
from .geodesy import GeoPoint, sample_path
from .raster import Raster, RasterKind, sample_bilinear, sample_nearest


class ClutterSampling(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"


@dataclass(frozen=True)
class ClutterSource:
    """Where clutter heights come from: nothing, or a height raster.

    A height raster covers canopy height maps, HAG, and rasters built from
    land cover with :func:`clutterprop.clutter.build_height_raster`.
    """

    raster: Optional[Raster] = None

    def __post_init__(self):
        if self.raster is not None and self.raster.kind is not RasterKind.HEIGHT:
            raise KindError(f"clutter raster must have kind height_m, got {self.raster.kind.value}")

    @classmethod
    def none(cls) -> "ClutterSource":
        return cls(None)

    @property
    def is_none(self) -> bool:
        return self.raster is None


@dataclass(frozen=True, eq=False)
class PathProfile:
    spacing_m: float
    d_m: np.ndarray
    terrain_m: np.ndarray
    clutter_m: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("d_m", "terrain_m", "clutter_m"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        d, _, clutter = arrays
        if not (len(d) == len(arrays[1]) == len(clutter)):
            raise ValueError("profile columns differ in length")
        if len(d) < 3:
            raise ValueError(f"a profile needs at least 3 points, got {len(d)}")
        if d[0] != 0.0 or np.any(np.diff(d) <= 0):
            raise ValueError("profile distances must start at 0 and strictly increase")
        if np.any(clutter < 0):
            raise ValueError("clutter heights must be >= 0")

    def __len__(self):
        return len(self.d_m)

    def __eq__(self, other):
        if not isinstance(other, PathProfile):
            return NotImplemented
        return (self.spacing_m == other.spacing_m
                and np.array_equal(self.d_m, other.d_m)
                and np.array_equal(self.terrain_m, other.terrain_m)
                and np.array_equal(self.clutter_m, other.clutter_m))

    __hash__ = None

    @property
    def distance_m(self) -> float:
        return float(self.d_m[-1])


def extract_profile(terrain: Raster, clutter: ClutterSource, tx: GeoPoint, rx: GeoPoint,
                    max_spacing: float,
                    clutter_sampling: Union[ClutterSampling, str] = ClutterSampling.NEAREST
                    ) -> PathProfile:
    """Sample terrain (bilinear) and clutter along the great circle from ``tx`` to ``rx``.

    Clutter nodata reads as 0 m. The first and last points always carry zero
    clutter so the antennas stand on bare ground.
    """
    clutter_sampling = ClutterSampling(clutter_sampling)
    spacing, points = sample_path(tx, rx, max_spacing)
    n = len(points)
    terrain_m = np.array([sample_bilinear(terrain, p) for p in points])

    clutter_m = np.zeros(n)
    if not clutter.is_none:
        sample = sample_nearest if clutter_sampling is ClutterSampling.NEAREST else sample_bilinear
        for i in range(1, n - 1):
            try:
                clutter_m[i] = max(0.0, sample(clutter.raster, points[i]))
            except NoData:
                pass

    d_m = np.arange(n) * spacing
    return PathProfile(spacing, d_m, terrain_m, clutter_m)


def profile_surface(p: PathProfile) -> np.ndarray:
    """Terrain plus clutter at every point."""
    return p.terrain_m + p.clutter_m


def format_profile(p: PathProfile) -> str:
    """Three-column text table, meters to 3 decimals."""
    out = io.StringIO()
    out.write(f"# d_m terrain_m clutter_m  (n={len(p)}, spacing_m={p.spacing_m:.3f})\n")
    for d, t, c in zip(p.d_m, p.terrain_m, p.clutter_m):
        out.write(f"{d:.3f} {t:.3f} {c:.3f}\n")
    return out.getvalue()


def parse_profile(text: str) -> PathProfile:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 3 columns, got {len(parts)}")
        try:
            rows.append([float(x) for x in parts])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value in {line!r}") from None
    if len(rows) < 3:
        raise ParseError(f"profile table needs at least 3 rows, got {len(rows)}")
    a = np.array(rows)
    try:
        return PathProfile(a[-1, 0] / (len(a) - 1), a[:, 0], a[:, 1], a[:, 2])
    except ValueError as exc:
        raise ParseError(str(exc)) from None
