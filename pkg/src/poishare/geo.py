"""Great-circle distances and point-to-polyline snapping at city scale."""

from __future__ import annotations

import math

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray | float:
    """Great-circle distance in meters; accepts scalars or arrays."""

    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float))
                              for a in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    out = 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return float(out) if out.ndim == 0 else out


def point_segment_distance_m(plat, plon, alat: float, alon: float,
                             blat: float, blon: float) -> np.ndarray | float:
    """Distance from point(s) to one segment via a local equirectangular plane.

    Adequate at corridor scale (a few km): longitude is contracted by
    cos(latitude) at the segment's midpoint before planar projection.
    """

    plat = np.asarray(plat, dtype=float)
    plon = np.asarray(plon, dtype=float)
    lat0 = math.radians((alat + blat) / 2.0)
    kx = EARTH_RADIUS_M * math.cos(lat0) * math.pi / 180.0
    ky = EARTH_RADIUS_M * math.pi / 180.0
    px, py = plon * kx, plat * ky
    ax, ay = alon * kx, alat * ky
    bx, by = blon * kx, blat * ky
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / seg2, 0.0, 1.0)
    cx, cy = ax + t * dx, ay + t * dy
    out = np.hypot(px - cx, py - cy)
    return float(out) if out.ndim == 0 else out


def point_polyline_distance_m(plat, plon, polyline) -> np.ndarray | float:
    """Min distance from point(s) to a polyline given as [(lat, lon), ...]."""

    pts = list(polyline)
    if len(pts) < 2:
        raise ValueError("a polyline needs at least two waypoints")
    best = None
    for (alat, alon), (blat, blon) in zip(pts[:-1], pts[1:]):
        d = point_segment_distance_m(plat, plon, alat, alon, blat, blon)
        best = d if best is None else np.minimum(best, d)
    return best
