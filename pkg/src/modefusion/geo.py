"""Small geodesy and planar-geometry helpers.

Everything here is deliberately dependency free. Distances are great-circle
on a spherical earth; local planar work uses an equirectangular projection
centred on the point of interest, which is accurate well beyond the few
kilometres we ever project.
"""

from __future__ import annotations

import math

EARTH_RADIUS_M = 6_371_000.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


class LocalProjection:
    """Equirectangular projection centred at (lat0, lon0), metres east/north."""

    def __init__(self, lat0: float, lon0: float):
        self.lat0 = lat0
        self.lon0 = lon0
        self._coslat = math.cos(math.radians(lat0))

    def to_xy(self, lat: float, lon: float) -> tuple[float, float]:
        x = math.radians(lon - self.lon0) * self._coslat * EARTH_RADIUS_M
        y = math.radians(lat - self.lat0) * EARTH_RADIUS_M
        return x, y

    def to_latlon(self, x: float, y: float) -> tuple[float, float]:
        lat = self.lat0 + math.degrees(y / EARTH_RADIUS_M)
        lon = self.lon0 + math.degrees(x / (EARTH_RADIUS_M * self._coslat))
        return lat, lon


def ring_area(ring: list[tuple[float, float]]) -> float:
    """Unsigned shoelace area of a planar ring (first point need not repeat)."""
    n = len(ring)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


def point_on_segment(px, py, ax, ay, bx, by, eps: float = 1e-9) -> bool:
    """True when (px,py) lies on segment a-b within eps (planar)."""
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > eps * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    if dot < -eps:
        return False
    sq = (bx - ax) ** 2 + (by - ay) ** 2
    return dot <= sq + eps


def point_in_ring(px: float, py: float, ring: list[tuple[float, float]]) -> bool:
    """Ray-casting containment test; points on the boundary count as inside.

    Classic even-odd rule with the half-open rule on vertices so that a
    vertex is not counted twice. Boundary points are handled explicitly
    first because the even-odd rule is unreliable exactly on edges.
    """
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        if point_on_segment(px, py, ax, ay, bx, by):
            return True
    inside = False
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        if (ay > py) != (by > py):
            xcross = ax + (py - ay) * (bx - ax) / (by - ay)
            if xcross > px:
                inside = not inside
    return inside


def clip_polygon(subject: list[tuple[float, float]], clip: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clip of `subject` against CONVEX ring `clip`.

    Both rings are open (no repeated first point). Returns the clipped ring,
    possibly empty. The clip ring must be convex; orientation can be either
    way, we normalise to counter-clockwise first.
    """
    if len(clip) < 3 or len(subject) < 3:
        return []
    area2 = 0.0
    for i in range(len(clip)):
        x1, y1 = clip[i]
        x2, y2 = clip[(i + 1) % len(clip)]
        area2 += x1 * y2 - x2 * y1
    if area2 < 0:
        clip = list(reversed(clip))

    out = list(subject)
    for i in range(len(clip)):
        if not out:
            return []
        cx1, cy1 = clip[i]
        cx2, cy2 = clip[(i + 1) % len(clip)]
        inp = out
        out = []

        def side(px, py):
            return (cx2 - cx1) * (py - cy1) - (cy2 - cy1) * (px - cx1)

        for j in range(len(inp)):
            sx, sy = inp[j - 1]
            ex, ey = inp[j]
            s_in = side(sx, sy) >= 0
            e_in = side(ex, ey) >= 0
            if e_in:
                if not s_in:
                    out.append(_intersect(sx, sy, ex, ey, cx1, cy1, cx2, cy2))
                out.append((ex, ey))
            elif s_in:
                out.append(_intersect(sx, sy, ex, ey, cx1, cy1, cx2, cy2))
    return out


def _intersect(sx, sy, ex, ey, cx1, cy1, cx2, cy2):
    dcx, dcy = cx1 - cx2, cy1 - cy2
    dpx, dpy = sx - ex, sy - ey
    n1 = cx1 * cy2 - cy1 * cx2
    n2 = sx * ey - sy * ex
    den = dcx * dpy - dcy * dpx
    return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)


def circle_ring(cx: float, cy: float, radius: float, segments: int = 64) -> list[tuple[float, float]]:
    """Regular polygon approximating a circle, counter-clockwise."""
    pts = []
    for k in range(segments):
        ang = 2.0 * math.pi * k / segments
        pts.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
    return pts


def segment_length_in_circle(ax, ay, bx, by, cx, cy, radius) -> float:
    """Length of the part of segment a-b inside the circle at (cx,cy)."""
    dx, dy = bx - ax, by - ay
    seg_len = math.hypot(dx, dy)
    if seg_len == 0.0:
        return 0.0
    fx, fy = ax - cx, ay - cy
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 0.0
    sq = math.sqrt(disc)
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    lo = max(0.0, min(t1, t2))
    hi = min(1.0, max(t1, t2))
    if hi <= lo:
        return 0.0
    return (hi - lo) * seg_len
