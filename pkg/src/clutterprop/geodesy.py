"""Great-circle geometry on a spherical earth."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AntipodalPoints, DegenerateLink

EARTH_RADIUS_M = 6_371_000.0

# Links shorter than this are treated as zero-length.
MIN_LINK_M = 1e-3


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        lat = float(self.lat_deg)
        lon = float(self.lon_deg)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon < 180.0:
            lon = (lon + 180.0) % 360.0 - 180.0
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", lon)

    @classmethod
    def parse(cls, text: str) -> "GeoPoint":
        """Parse ``"lat,lon"``."""
        try:
            lat, lon = (float(v) for v in text.split(","))
        except ValueError:
            raise ValueError(f"expected 'lat,lon', got {text!r}") from None
        return cls(lat, lon)


def _central_angle(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * math.asin(min(1.0, math.sqrt(h)))


def great_circle_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance in meters."""
    return EARTH_RADIUS_M * _central_angle(a, b)


def intermediate_point(a: GeoPoint, b: GeoPoint, f: float) -> GeoPoint:
    """Point at fraction ``f`` of the way from ``a`` to ``b`` along the great circle."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"fraction {f} outside [0, 1]")
    if f == 0.0:
        return a
    if f == 1.0:
        return b
    delta = _central_angle(a, b)
    if delta == 0.0:
        return a
    sin_delta = math.sin(delta)
    if abs(sin_delta) < 1e-12:
        raise AntipodalPoints(f"{a} and {b} are antipodal; the great circle is undefined")

    wa = math.sin((1.0 - f) * delta) / sin_delta
    wb = math.sin(f * delta) / sin_delta
    phi1, lam1 = math.radians(a.lat_deg), math.radians(a.lon_deg)
    phi2, lam2 = math.radians(b.lat_deg), math.radians(b.lon_deg)
    x = wa * math.cos(phi1) * math.cos(lam1) + wb * math.cos(phi2) * math.cos(lam2)
    y = wa * math.cos(phi1) * math.sin(lam1) + wb * math.cos(phi2) * math.sin(lam2)
    z = wa * math.sin(phi1) + wb * math.sin(phi2)
    lat = math.degrees(math.atan2(z, math.hypot(x, y)))
    lon = math.degrees(math.atan2(y, x))
    return GeoPoint(max(-90.0, min(90.0, lat)), lon)


def n_samples(distance_m: float, max_spacing_m: float) -> int:
    """Number of profile points so that spacing never exceeds ``max_spacing_m``."""
    # the small slack keeps exact multiples (90 m / 30 m) from gaining a point
    n = math.ceil(distance_m / max_spacing_m - 1e-9) + 1
    return max(n, 3)


def sample_path(a: GeoPoint, b: GeoPoint, max_spacing: float) -> tuple[float, list[GeoPoint]]:
    """Evenly spaced points from ``a`` to ``b`` inclusive.

    Returns the actual spacing in meters and the list of points. At least
    three points are always produced, so very short links get a spacing
    below ``max_spacing``.
    """
    if not max_spacing > 0:
        raise ValueError(f"max_spacing must be positive, got {max_spacing}")
    d = great_circle_distance(a, b)
    if d < MIN_LINK_M:
        raise DegenerateLink(f"link {a} -> {b} has zero length")
    n = n_samples(d, max_spacing)
    points = [a]
    points.extend(intermediate_point(a, b, i / (n - 1)) for i in range(1, n - 1))
    points.append(b)
    return d / (n - 1), points
