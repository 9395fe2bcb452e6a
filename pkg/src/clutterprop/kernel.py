"""Median path loss: free space plus Bullington diffraction over terrain and clutter.

Time and location percentages are fixed at 50 %, so no variability or
anomalous-propagation terms appear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ProfileMismatch
from .geodesy import GeoPoint, great_circle_distance
from .profile import PathProfile, profile_surface

SPEED_OF_LIGHT = 299_792_458.0
K_FACTOR = 4.0 / 3.0
EFFECTIVE_EARTH_RADIUS_M = K_FACTOR * 6_371_000.0

TIME_PERCENTAGE = 50.0
LOCATION_PERCENTAGE = 50.0

FREQ_MIN_MHZ = 30.0
FREQ_MAX_MHZ = 6000.0

NU_THRESHOLD = -0.78


class Regime(str, Enum):
    LINE_OF_SIGHT = "line_of_sight"
    TRANS_HORIZON = "trans_horizon"


@dataclass(frozen=True)
class LinkSpec:
    tx: GeoPoint
    rx: GeoPoint
    tx_height_agl_m: float
    rx_height_agl_m: float
    freq_mhz: float

    def __post_init__(self):
        if not (self.tx_height_agl_m > 0 and self.rx_height_agl_m > 0):
            raise ValueError("antenna heights above ground must be positive")
        if not FREQ_MIN_MHZ <= self.freq_mhz <= FREQ_MAX_MHZ:
            raise ValueError(
                f"frequency {self.freq_mhz} MHz outside [{FREQ_MIN_MHZ:g}, {FREQ_MAX_MHZ:g}] MHz")


@dataclass(frozen=True)
class PredictionResult:
    loss_db: float
    fspl_db: float
    diffraction_db: float
    regime: Regime


def fspl(freq_mhz: float, distance_m: float) -> float:
    """Free-space basic transmission loss in dB."""
    return 32.44 + 20.0 * math.log10(freq_mhz) + 20.0 * math.log10(distance_m / 1000.0)


def knife_edge_J(nu: float) -> float:
    """Single knife-edge diffraction loss in dB; zero for nu <= -0.78."""
    if nu <= NU_THRESHOLD:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((nu - 0.1) ** 2 + 1.0) + nu - 0.1)


def bullington_loss(profile: PathProfile, h_ts: float, h_rs: float,
                    freq_mhz: float) -> tuple[float, Regime]:
    """Bullington diffraction loss over the combined surface.

    ``h_ts`` and ``h_rs`` are antenna heights above sea level. Returns the
    loss in dB and whether the path is line-of-sight.
    """
    lam = SPEED_OF_LIGHT / (freq_mhz * 1e6)
    d = profile.distance_m
    di = profile.d_m[1:-1]
    rest = d - di
    surface = profile_surface(profile)[1:-1] + di * rest / (2.0 * EFFECTIVE_EARTH_RADIUS_M)

    s_tim = float(np.max((surface - h_ts) / di))
    s_tr = (h_rs - h_ts) / d

    if s_tim < s_tr:
        regime = Regime.LINE_OF_SIGHT
        nu = (surface - (h_ts * rest + h_rs * di) / d) * np.sqrt(2.0 * d / (lam * di * rest))
        nu_edge = float(np.max(nu))
    else:
        regime = Regime.TRANS_HORIZON
        s_rim = float(np.max((surface - h_rs) / rest))
        if s_tim + s_rim > 0:
            d_bp = (h_rs - h_ts + s_rim * d) / (s_tim + s_rim)
            nu_edge = ((h_ts + s_tim * d_bp - (h_ts * (d - d_bp) + h_rs * d_bp) / d)
                       * math.sqrt(2.0 * d / (lam * d_bp * (d - d_bp))))
        else:
            # an obstacle exactly grazing the chord: the slope lines coincide
            nu = (surface - (h_ts * rest + h_rs * di) / d) * np.sqrt(2.0 * d / (lam * di * rest))
            nu_edge = float(np.max(nu))

    l_uc = knife_edge_J(nu_edge)
    loss = l_uc + (1.0 - math.exp(-l_uc / 6.0)) * (10.0 + 0.02 * d / 1000.0)
    return loss, regime


def predict(profile: PathProfile, link: LinkSpec) -> PredictionResult:
    """Median basic transmission loss for ``link`` over ``profile``."""
    expected = great_circle_distance(link.tx, link.rx)
    if abs(profile.distance_m - expected) > 1e-3 * expected:
        raise ProfileMismatch(
            f"profile length {profile.distance_m:.3f} m does not match link length {expected:.3f} m")
    h_ts = float(profile.terrain_m[0]) + link.tx_height_agl_m
    h_rs = float(profile.terrain_m[-1]) + link.rx_height_agl_m
    free = fspl(link.freq_mhz, profile.distance_m)
    diff, regime = bullington_loss(profile, h_ts, h_rs, link.freq_mhz)
    return PredictionResult(free + diff, free, diff, regime)
