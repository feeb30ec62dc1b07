"""Planar geometry helpers for polylines, polygons and rigid frames."""
from __future__ import annotations

import math

import numpy as np


def cum_arclength(points: np.ndarray) -> np.ndarray:
    """Cumulative arc length along a polyline, starting at 0."""
    points = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample at fixed arc-length spacing; first and last points kept."""
    points = np.asarray(points, dtype=np.float64)
    arcs = cum_arclength(points)
    total = arcs[-1]
    if total <= 0:
        return points[:1].copy()
    targets = np.arange(0.0, total, spacing)
    if total - targets[-1] > 1e-9:
        targets = np.append(targets, total)
    x = np.interp(targets, arcs, points[:, 0])
    y = np.interp(targets, arcs, points[:, 1])
    return np.stack([x, y], axis=1)


def point_at_arc(points: np.ndarray, arc: float) -> np.ndarray:
    arcs = cum_arclength(points)
    arc = min(max(arc, 0.0), arcs[-1])
    x = np.interp(arc, arcs, points[:, 0])
    y = np.interp(arc, arcs, points[:, 1])
    return np.array([x, y])


def polyline_yaw(points: np.ndarray) -> np.ndarray:
    """Tangent heading per vertex (last vertex repeats the final segment)."""
    points = np.asarray(points, dtype=np.float64)
    d = np.diff(points, axis=0)
    yaw = np.arctan2(d[:, 1], d[:, 0])
    return np.append(yaw, yaw[-1])


def project_to_polyline(points: np.ndarray, q) -> tuple[float, float]:
    """Distance from ``q`` to the polyline and the arc position of the foot."""
    points = np.asarray(points, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if len(points) == 1:
        return float(np.linalg.norm(q - points[0])), 0.0
    a = points[:-1]
    b = points[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.maximum(seg_len2, 1e-18), 0.0, 1.0)
    foot = a + t[:, None] * ab
    dist = np.linalg.norm(foot - q, axis=1)
    i = int(np.argmin(dist))
    arcs = cum_arclength(points)
    return float(dist[i]), float(arcs[i] + t[i] * math.sqrt(seg_len2[i]))


def point_in_polygon(polygon: np.ndarray, q) -> bool:
    """Ray-casting test; boundary points count as inside."""
    polygon = np.asarray(polygon, dtype=np.float64)
    x, y = float(q[0]), float(q[1])
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if min(y1, y2) <= y <= max(y1, y2):
            if abs(y2 - y1) < 1e-18:
                if abs(y - y1) < 1e-12 and min(x1, x2) - 1e-12 <= x <= max(x1, x2) + 1e-12:
                    return True
                continue
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if abs(xi - x) < 1e-12:
                return True
            if (y1 > y) != (y2 > y) and x < xi:
                inside = not inside
    return inside


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    wrapped = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    wrapped = np.where(wrapped == -math.pi, math.pi, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def rigid_transform(xy: np.ndarray, origin, angle: float) -> np.ndarray:
    """Map world points into the frame at ``origin`` rotated by ``angle``:
    q' = R(-angle) (q - origin)."""
    xy = np.asarray(xy, dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    shifted = xy - np.asarray(origin, dtype=np.float64)
    rot = np.array([[c, s], [-s, c]])
    return shifted @ rot.T
