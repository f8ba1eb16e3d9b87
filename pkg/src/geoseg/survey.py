"""
Choosing a ground sampling distance from feature size, and sizing a survey.

The critical GSD of a feature lies in the open interval (smallest/3,
largest/3) of the measured sizes of its smallest visible attribute (SVA).
Survey estimates scale from a calibration flight: imaged area grows with
the square of GSD for a fixed pixel budget, altitude grows linearly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .errors import ConfigurationError, InputError
from .tiling import plan_grid

SHAPE_HINTS = ("rectangular-short-side", "circular-diameter", "irregular-mean-segment")
LEGAL_ALTITUDE_M = 120.0
DEFAULT_MIN_FRACTION = 0.30


@dataclass(frozen=True)
class SvaMeasurements:
    feature: str
    measurements: tuple
    shape_hint: str = "rectangular-short-side"

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if not self.measurements:
            raise InputError(f"no SVA measurements for {self.feature!r}")
        if any(not m > 0 for m in self.measurements):
            raise InputError("SVA measurements must be positive")
        if self.shape_hint not in SHAPE_HINTS:
            raise InputError(f"unknown shape hint {self.shape_hint!r}")


def irregular_size(segment_lengths):
    """SVA size of an irregular shape: the mean of its segment lengths."""
    if not segment_lengths:
        raise InputError("no segment lengths")
    return sum(segment_lengths) / len(segment_lengths)


@dataclass(frozen=True)
class CordingInterval:
    lower: float
    upper: float

    def __contains__(self, gsd):
        return self.lower < gsd < self.upper

    def rounded(self, digits=3):
        return round(self.lower, digits), round(self.upper, digits)


def cording_interval(m):
    """Critical GSD interval (m/px) for a set of SVA measurements (metres)."""
    if not isinstance(m, SvaMeasurements):
        m = SvaMeasurements("feature", tuple(m))
    # exact decimals, so 0.15 / 3 is 0.05 and not 0.049999...
    lo = _exact(min(m.measurements)) / 3
    hi = _exact(max(m.measurements)) / 3
    return CordingInterval(float(lo), float(hi))


_FIXTURES = (
    ("chayote leaves", (0.15, 0.35), "circular-diameter"),
    ("dirt-road tire tracks", (0.40, 0.85), "rectangular-short-side"),
    ("asphalt roads", (3.0, 8.0), "rectangular-short-side"),
    ("cows", (0.517, 0.69), "rectangular-short-side"),
    ("sheep", (0.44, 0.66), "rectangular-short-side"),
    ("vitis vinifera leaves", (0.05, 0.15), "circular-diameter"),
)


def cording_fixtures():
    """Named reference features with their SVA size ranges and intervals."""
    return {name: (SvaMeasurements(name, sizes, hint),
                   cording_interval(SvaMeasurements(name, sizes, hint)))
            for name, sizes, hint in _FIXTURES}


# ---------------------------------------------------------------------------
# survey planning


@dataclass(frozen=True)
class Calibration:
    """A reference flight: (gsd m/px, altitude m, area km^2, 8h workdays)."""

    gsd: float = 0.022
    altitude: float = 75.08
    area: float = 3.06
    workdays: float = 0.30


SHORTAGE_ACTIONS = (
    ("larger-area", "longer-survey-same-gsd"),
    ("decrease-gsd", "longer-survey-finer-detail"),
    ("smaller-tiles", "same-survey-smaller-model-context"),
    ("satellite", "no-flight-noisier-imagery"),
    ("none", "same-survey-overfitting-risk"),
)


@dataclass
class SurveyPlan:
    gsd: float
    area_km2: float
    pixels: float
    side_px: int
    tile_count: int
    altitude_m: float
    workdays: float
    min_train_tiles: int
    shortage: bool
    actions: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def report(self):
        lines = [
            f"target GSD        {self.gsd:g} m/px",
            f"area              {self.area_km2:.2f} km^2",
            f"square extent     {self.side_px} x {self.side_px} px",
            f"tiles             {self.tile_count}",
            f"altitude          {self.altitude_m:.2f} m",
            f"duration (approx) {self.workdays:.2f} workdays",
        ]
        if self.shortage:
            lines.append(f"data shortage: {self.tile_count} < {self.min_train_tiles} tiles")
            lines += [f"  - {a['action']}: {a['tradeoff']}" for a in self.actions]
        else:
            lines.append("tile count sufficient")
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def _exact(v):
    return Fraction(str(v)) if isinstance(v, float) else Fraction(v)


def equivalent_area(gsd, base=Calibration(), exact=False):
    """Area (km^2) imaged at ``gsd`` with the calibration flight's pixel count."""
    ratio = _exact(gsd) / _exact(base.gsd)
    area = _exact(base.area) * ratio * ratio
    return area if exact else float(area)


def altitude_for(gsd, base=Calibration()):
    return base.altitude * gsd / base.gsd


def shortage_menu():
    return [{"action": a, "tradeoff": t} for a, t in SHORTAGE_ACTIONS]


def plan_survey(area, gsd, tile=512, stride=0.5, min_train_tiles=0, base=Calibration()):
    """Estimate pixels, tiles, altitude and duration for imaging ``area`` km^2."""
    for name, value in (("area", area), ("gsd", gsd), ("tile", tile), ("stride", stride)):
        if not value > 0:
            raise InputError(f"{name} must be positive, got {value}")
    if min_train_tiles < 0:
        raise InputError("min_train_tiles must be >= 0")
    pixels = area * 1e6 / gsd**2
    side = int(math.floor(math.sqrt(pixels)))
    try:
        tiles = len(plan_grid(side, side, tile, tile, stride))
    except ConfigurationError:
        tiles = 0
    altitude = altitude_for(gsd, base)
    # swath width grows with altitude, so the covered rate scales linearly
    workdays = base.workdays * (area / base.area) * (base.altitude / altitude)
    warnings = []
    if altitude > LEGAL_ALTITUDE_M:
        warnings.append(f"altitude {altitude:.0f} m exceeds the common {LEGAL_ALTITUDE_M:.0f} m "
                        "legal limit; a coarser sensor is needed instead")
    shortage = tiles < min_train_tiles
    return SurveyPlan(gsd, area, pixels, side, tiles, altitude, workdays,
                      min_train_tiles, shortage, shortage_menu() if shortage else [],
                      warnings)


def min_train_tiles_for(reference_count, fraction=DEFAULT_MIN_FRACTION):
    return math.ceil(reference_count * _exact(fraction))


@dataclass
class SufficiencyResult:
    train_tiles: int
    threshold: int
    passed: bool
    actions: list

    def to_dict(self):
        return asdict(self)


def sufficiency_check(train_tiles, min_train_tiles):
    """Compare a train-set size (an int, a split dict or a dataset) to a threshold."""
    if isinstance(train_tiles, dict):
        n = len(train_tiles["train"])
    elif hasattr(train_tiles, "records"):
        n = len(train_tiles.records)
    else:
        n = int(train_tiles)
    passed = n >= min_train_tiles
    return SufficiencyResult(n, min_train_tiles, passed, [] if passed else shortage_menu())
