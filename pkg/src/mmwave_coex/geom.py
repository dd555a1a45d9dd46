"""Planar/3D geometry: directions, off-axis angles and building blockage.

Coordinates are local planar meters (x east, y north); heights are meters
above local ground. Azimuths are degrees counter-clockwise from +x. All
angles exchanged through this module are in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometry

_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Building:
    """Extruded building: a simple polygon footprint and a roof height."""

    footprint: np.ndarray
    height: float
    id: str = ""
    bbox: tuple[float, float, float, float] = field(init=False, repr=False)

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        if fp.ndim != 2 or fp.shape[1] != 2 or len(fp) < 3:
            raise DegenerateGeometry(f"building {self.id!r}: footprint needs >= 3 (x, y) vertices")
        if not np.all(np.isfinite(fp)):
            raise DegenerateGeometry(f"building {self.id!r}: non-finite vertex")
        if not self.height > 0:
            raise DegenerateGeometry(f"building {self.id!r}: height must be > 0")
        if np.allclose(fp[0], fp[-1]):
            fp = fp[:-1]
        fp.setflags(write=False)
        object.__setattr__(self, "footprint", fp)
        object.__setattr__(self, "bbox", (fp[:, 0].min(), fp[:, 1].min(), fp[:, 0].max(), fp[:, 1].max()))

    def contains(self, points) -> np.ndarray:
        """Strict-interior test for one or many 2D points (boundary is unspecified)."""
        return points_in_polygon(points, self.footprint)


def unit_vector(src, dst) -> np.ndarray:
    """Unit vector pointing from ``src`` to ``dst`` (2D)."""
    d = np.asarray(dst, dtype=float)[:2] - np.asarray(src, dtype=float)[:2]
    n = float(np.hypot(d[0], d[1]))
    if n == 0.0:
        raise DegenerateGeometry(f"coincident points {tuple(src)} and {tuple(dst)}")
    return d / n


def azimuth_unit(az_deg) -> np.ndarray:
    a = np.radians(az_deg)
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


def azimuth_of(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    return np.degrees(np.arctan2(v[..., 1], v[..., 0]))


def azimuth_off_axis(a, b):
    """Angle in [0, 180] degrees between two unit vectors (arccos of the dot)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    out = np.degrees(np.arccos(dot))
    return float(out) if np.ndim(out) == 0 else out


def azimuth_difference(az1_deg, az2_deg):
    """Same quantity as :func:`azimuth_off_axis` but from azimuths in degrees.

    Wrapping the difference is better conditioned near 0 than arccos.
    """
    d = np.abs((np.asarray(az1_deg, dtype=float) - az2_deg + 180.0) % 360.0 - 180.0)
    return float(d) if np.ndim(d) == 0 else d


def elevation_angle(h_from, h_to, d_2d):
    """Elevation (degrees) of a point at height ``h_to`` seen from ``h_from``."""
    d = np.asarray(d_2d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometry("zero horizontal distance")
    out = np.degrees(np.arctan((np.asarray(h_to, dtype=float) - h_from) / d))
    return float(out) if np.ndim(out) == 0 else out


def fs_elevation_off_axis(h_f, h_ue, d_2d, tilt_f):
    """Off-axis elevation at a fixed station: arctan((h_f - h_ue)/d) + tilt."""
    d = np.asarray(d_2d, dtype=float)
    if np.any(d <= 0):
        raise DegenerateGeometry("zero horizontal distance between FS and source")
    out = np.degrees(np.arctan((np.asarray(h_f, dtype=float) - h_ue) / d)) + tilt_f
    return float(out) if np.ndim(out) == 0 else out


def blockage_height_at(d_ue_to_bl, d_ue_to_fs, h_f, h_ue):
    """Rise of the UE-FS sight line above the UE at distance ``d_ue_to_bl``."""
    if not 0 < d_ue_to_bl <= d_ue_to_fs:
        raise DegenerateGeometry(
            f"need 0 < d_ue_to_bl <= d_ue_to_fs, got {d_ue_to_bl} and {d_ue_to_fs}"
        )
    return d_ue_to_bl * (h_f - h_ue) / d_ue_to_fs


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd ray casting; vectorized over points. Returns a bool array."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.asarray(poly, dtype=float)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x1, y1 = p[:, 0], p[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddle & (x < x_cross)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test, including collinear overlap."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) <= _EPS else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return min(a[0], b[0]) - _EPS <= c[0] <= max(a[0], b[0]) + _EPS and \
            min(a[1], b[1]) - _EPS <= c[1] <= max(a[1], b[1]) + _EPS

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2)) or \
        (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2))


def is_simple_polygon(poly) -> bool:
    """True when no two non-adjacent edges of the ring touch."""
    p = [tuple(v) for v in np.asarray(poly, dtype=float)]
    n = len(p)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = p[i], p[(i + 1) % n]
        if a1 == a2:
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if segments_intersect(a1, a2, p[j], p[(j + 1) % n]):
                return False
    return polygon_area(poly) > 0


def _blocked_by(building: Building, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    """Vectorized blockage of N 3D segments by one building."""
    n = len(tx)
    out = np.zeros(n, dtype=bool)
    xmin, ymin, xmax, ymax = building.bbox
    cand = ~(
        (np.maximum(tx[:, 0], rx[:, 0]) < xmin) | (np.minimum(tx[:, 0], rx[:, 0]) > xmax)
        | (np.maximum(tx[:, 1], rx[:, 1]) < ymin) | (np.minimum(tx[:, 1], rx[:, 1]) > ymax)
    )
    if not cand.any():
        return out
    idx = np.flatnonzero(cand)
    p0, p1 = tx[idx], rx[idx]
    h_bl = building.height
    r = p1[:, :2] - p0[:, :2]
    z0, dz = p0[:, 2], p1[:, 2] - p0[:, 2]
    hit = np.zeros(len(idx), dtype=bool)

    # Endpoint strictly inside the footprint and below the roof.
    for end in (p0, p1):
        hit |= points_in_polygon(end[:, :2], building.footprint) & (end[:, 2] <= h_bl)

    fp = building.footprint
    for a, b in zip(fp, np.roll(fp, -1, axis=0)):
        s = b - a
        denom = r[:, 0] * s[1] - r[:, 1] * s[0]
        qp = a - p0[:, :2]
        ok = np.abs(denom) > _EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[:, 0] * s[1] - qp[:, 1] * s[0]) / denom
            u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
        ok &= (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
        # Sight-line height at the crossing; equality counts as blocked.
        hit |= ok & (z0 + t * dz <= h_bl)
    out[idx] = hit
    return out


def blocked_mask(tx, rx, buildings: Sequence[Building]) -> np.ndarray:
    """Blockage state for N links at once. ``tx``/``rx`` are (N, 3) arrays."""
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    if np.any(np.hypot(*(rx[:, :2] - tx[:, :2]).T) == 0):
        raise DegenerateGeometry("link endpoints coincide in the ground plane")
    out = np.zeros(len(tx), dtype=bool)
    for b in buildings:
        open_ = ~out
        if not open_.any():
            break
        out[open_] = _blocked_by(b, tx[open_], rx[open_])
    return out


def is_link_blocked(p_tx, p_rx, buildings: Sequence[Building]) -> tuple[bool, Building | None]:
    """Check one 3D link against the building list.

    A building blocks when the sight line passes at or below its roof at any
    crossing of the footprint boundary, or when an endpoint sits inside the
    extruded footprint. The first blocker in input order is returned.
    """
    tx = np.asarray(p_tx, dtype=float).reshape(1, 3)
    rx = np.asarray(p_rx, dtype=float).reshape(1, 3)
    if np.hypot(*(rx[0, :2] - tx[0, :2])) == 0:
        raise DegenerateGeometry("link endpoints coincide in the ground plane")
    for b in buildings:
        if _blocked_by(b, tx, rx)[0]:
            return True, b
    return False, None
