import math

import hypothesis
import pytest

hypothesis.settings.register_profile("fast", max_examples=20)
hypothesis.settings.register_profile("ci", deadline=None)
hypothesis.settings.load_profile("ci")

from stopfinder.geo import EARTH_RADIUS_M, GeoPoint  # noqa: E402

BOSTON = GeoPoint(42.3555, -71.0605)


def offset_point(origin: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    """Exact spherical destination point, independent of the local-frame code."""
    dist = math.hypot(east_m, north_m)
    if dist == 0:
        return origin
    brg = math.atan2(east_m, north_m)
    phi1, lam1 = math.radians(origin.lat_deg), math.radians(origin.lon_deg)
    delta = dist / EARTH_RADIUS_M
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(brg))
    lam2 = lam1 + math.atan2(math.sin(brg) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    return GeoPoint(math.degrees(phi2), math.degrees(lam2))


def synthetic_feed(n_stops: int = 174, n_offset: int = 40, offset_m: float = 30.0):
    """stops.txt and ground-truth CSV text where the first ``n_offset`` stops are mapped ``offset_m`` off."""
    stops = ["stop_id,stop_code,stop_name,stop_desc,stop_lat,stop_lon,zone_id,location_type"]
    truth = ["stop_id,lat,lon,heading_deg"]
    for i in range(n_stops):
        surveyed = offset_point(BOSTON, 37.0 * (i % 20), 41.0 * (i // 20))
        mapped = offset_point(surveyed, offset_m * 0.6, offset_m * 0.8) if i < n_offset else surveyed
        sid = f"{1000 + i}"
        stops.append(f'{sid},{i},"Stop {i} @ Main, near side",,{mapped.lat_deg!r},{mapped.lon_deg!r},,0')
        truth.append(f"{sid},{surveyed.lat_deg!r},{surveyed.lon_deg!r},{(i * 17) % 360}")
    return "\n".join(stops) + "\n", "\n".join(truth) + "\n"


@pytest.fixture
def feed_174():
    return synthetic_feed()
