"""Spherical-earth distances, a small-area local frame, and the signed gap.

Local frames are east/north meters; headings are compass degrees
(0 = north, clockwise positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0
LOCAL_FRAME_MAX_M = 5_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not (math.isfinite(self.lat_deg) and -90.0 <= self.lat_deg <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat_deg!r}")
        if not (math.isfinite(self.lon_deg) and -180.0 <= self.lon_deg <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon_deg!r}")


@dataclass(frozen=True)
class LocalVec:
    east_m: float
    north_m: float

    def __post_init__(self):
        if not (math.isfinite(self.east_m) and math.isfinite(self.north_m)):
            raise ValueError(f"non-finite local vector ({self.east_m!r}, {self.north_m!r})")

    def __add__(self, other: LocalVec) -> LocalVec:
        return LocalVec(self.east_m + other.east_m, self.north_m + other.north_m)

    def __sub__(self, other: LocalVec) -> LocalVec:
        return LocalVec(self.east_m - other.east_m, self.north_m - other.north_m)

    def scaled(self, k: float) -> LocalVec:
        return LocalVec(self.east_m * k, self.north_m * k)

    def norm(self) -> float:
        return math.hypot(self.east_m, self.north_m)


@dataclass(frozen=True)
class Pose2D:
    position: LocalVec
    heading_deg: float

    def __post_init__(self):
        if not (0.0 <= self.heading_deg < 360.0):
            raise ValueError(f"heading must lie in [0, 360): {self.heading_deg!r}")


def wrap_heading(deg: float) -> float:
    """Wrap any angle into [0, 360)."""
    h = math.fmod(deg, 360.0)
    if h < 0.0:
        h += 360.0
    # fmod of a tiny negative can round up to exactly 360.0
    return 0.0 if h >= 360.0 else h


def wrap_signed(deg: float) -> float:
    """Wrap any angle into [-180, 180)."""
    return wrap_heading(deg + 180.0) - 180.0


def heading_unit(heading_deg: float) -> LocalVec:
    """Unit vector pointing along a compass heading."""
    rad = math.radians(heading_deg)
    return LocalVec(math.sin(rad), math.cos(rad))


def bearing_of(vec: LocalVec) -> float:
    """Compass heading of a local vector, in [0, 360)."""
    return wrap_heading(math.degrees(math.atan2(vec.east_m, vec.north_m)))


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius EARTH_RADIUS_M."""
    phi1, phi2 = math.radians(a.lat_deg), math.radians(b.lat_deg)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon_deg - a.lon_deg)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _delta_lon_deg(origin: GeoPoint, p: GeoPoint) -> float:
    return wrap_signed(p.lon_deg - origin.lon_deg)


def to_local_frame(origin: GeoPoint, p: GeoPoint) -> LocalVec:
    """Equirectangular projection of ``p`` about ``origin``.

    Raises ValueError when the points are more than LOCAL_FRAME_MAX_M apart.
    """
    if haversine_distance(origin, p) > LOCAL_FRAME_MAX_M:
        raise ValueError(
            f"point is more than {LOCAL_FRAME_MAX_M:.0f} m from the local-frame origin"
        )
    east = EARTH_RADIUS_M * math.cos(math.radians(origin.lat_deg)) * math.radians(
        _delta_lon_deg(origin, p)
    )
    north = EARTH_RADIUS_M * math.radians(p.lat_deg - origin.lat_deg)
    return LocalVec(east, north)


def from_local_frame(origin: GeoPoint, v: LocalVec) -> GeoPoint:
    """Inverse of :func:`to_local_frame`."""
    if v.norm() > LOCAL_FRAME_MAX_M * 1.01:
        raise ValueError(f"local vector exceeds the {LOCAL_FRAME_MAX_M:.0f} m frame")
    coslat = math.cos(math.radians(origin.lat_deg))
    if coslat < 1e-12:
        raise ValueError("local frame undefined at the poles")
    lat = origin.lat_deg + math.degrees(v.north_m / EARTH_RADIUS_M)
    lon = wrap_signed(origin.lon_deg + math.degrees(v.east_m / (EARTH_RADIUS_M * coslat)))
    return GeoPoint(lat, lon)


def signed_gap(sign_pos: LocalVec, agent_pos: LocalVec, travel_heading_deg: float) -> float:
    """Along-travel component of ``sign_pos - agent_pos``.

    Positive while the sign is still ahead, negative once the agent has
    overshot it.
    """
    u = heading_unit(travel_heading_deg)
    d = sign_pos - agent_pos
    return d.east_m * u.east_m + d.north_m * u.north_m
