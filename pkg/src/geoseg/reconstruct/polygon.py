"""Pixel components, boundary tracing, simplification and triangulation.

Polygons are (n, 2) float arrays of (x, y) pixel-corner coordinates with x the
column and y the row. They are oriented so the shoelace sum over (x, y) is
positive (counter-clockwise in a y-up frame) and are implicitly closed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import GeometryError

_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class Component:
    id: int
    mask: np.ndarray  # full-grid boolean mask
    area: int

    @property
    def bbox(self):
        """(y0, x0, y1, x1) with exclusive upper bounds."""
        ys, xs = np.nonzero(self.mask)
        return int(ys.min()), int(xs.min()), int(ys.max()) + 1, int(xs.max()) + 1

    @property
    def centroid(self):
        """(x, y) of the pixel centers' mean."""
        ys, xs = np.nonzero(self.mask)
        return float(xs.mean()) + 0.5, float(ys.mean()) + 0.5


def extract_components(labels, cls, min_area=25):
    """4-connected components of ``cls``; components smaller than ``min_area`` are dropped."""
    lab, count = ndimage.label(np.asarray(labels) == cls, structure=_FOUR)
    areas = np.bincount(lab.ravel(), minlength=count + 1)
    out = []
    for i in range(1, count + 1):
        if areas[i] >= min_area:
            out.append(Component(len(out), lab == i, int(areas[i])))
    return out


def signed_area(poly):
    x, y = np.asarray(poly, dtype=np.float64).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def trace_raw(mask):
    """Outer pixel outline of a 4-connected mask as turn vertices only.

    Holes are filled first, so the outline is a simple closed curve. The walk
    follows pixel edges with the inside on a fixed side.
    """
    m = ndimage.binary_fill_holes(np.asarray(mask, dtype=bool), structure=_FOUR)
    if not m.any():
        raise GeometryError("empty component")
    m = np.pad(m, 1)
    h, w = m.shape
    vw = w + 1
    nxt = np.full((h + 1) * vw, -1, dtype=np.int64)
    inside = m[1:-1, 1:-1]
    r, c = np.nonzero(inside)
    r = r + 1
    c = c + 1

    def link(sel, y0, x0, y1, x1):
        nxt[(y0[sel]) * vw + x0[sel]] = y1[sel] * vw + x1[sel]

    top = ~m[r - 1, c]
    right = ~m[r, c + 1]
    bottom = ~m[r + 1, c]
    left = ~m[r, c - 1]
    link(top, r, c, r, c + 1)
    link(right, r, c + 1, r + 1, c + 1)
    link(bottom, r + 1, c + 1, r + 1, c)
    link(left, r + 1, c, r, c)

    start = r[0] * vw + c[0]  # top-left corner of the first pixel in raster order
    path = [start]
    v = int(nxt[start])
    limit = 4 * inside.size + 4
    while v != start:
        path.append(v)
        v = int(nxt[v])
        if v < 0 or len(path) > limit:
            raise GeometryError("boundary walk did not close")
    pts = np.array([(p % vw - 1, p // vw - 1) for p in path], dtype=np.float64)
    return remove_collinear(pts)


def remove_collinear(poly):
    """Drop vertices whose neighbors are collinear with them."""
    pts = np.asarray(poly, dtype=np.float64)
    changed = True
    while changed and len(pts) >= 3:
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        cross = (pts[:, 0] - prev[:, 0]) * (nxt[:, 1] - pts[:, 1]) - (pts[:, 1] - prev[:, 1]) * (
            nxt[:, 0] - pts[:, 0]
        )
        keep = cross != 0
        changed = not keep.all()
        pts = pts[keep]
    return pts


def _point_segment_dist(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0:
        return np.hypot(*(p - a).T)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def _dp_open(pts, eps):
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        d = _point_segment_dist(pts[i + 1 : j], pts[i], pts[j])
        k = int(np.argmax(d))
        if d[k] > eps:
            k += i + 1
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return keep


def douglas_peucker(poly, epsilon):
    """Simplify a closed polygon; ``epsilon <= 0`` returns it unchanged."""
    pts = np.asarray(poly, dtype=np.float64)
    if epsilon <= 0 or len(pts) <= 3:
        return pts.copy()
    far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
    a = _dp_open(pts[: far + 1], epsilon)
    b = _dp_open(np.vstack([pts[far:], pts[:1]]), epsilon)
    keep = np.zeros(len(pts), dtype=bool)
    keep[: far + 1] |= a
    keep[far:] |= b[:-1]
    return pts[keep]


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return int(v > 0) - int(v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(
            a[1], b[1]
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    return o4 == 0 and on_seg(q1, q2, p2)


def is_simple(poly):
    """True when no two non-adjacent edges touch and no vertex repeats."""
    pts = [tuple(p) for p in np.asarray(poly, dtype=np.float64)]
    n = len(pts)
    if n < 3 or len(set(pts)) != n:
        return False
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_cross(a1, a2, pts[j], pts[(j + 1) % n]):
                return False
    return True


def simplify(poly, epsilon):
    """Douglas-Peucker, halving epsilon until the result is simple with positive area."""
    eps = float(epsilon)
    while eps > 1e-3:
        out = remove_collinear(douglas_peucker(poly, eps))
        if len(out) >= 3 and signed_area(out) > 0 and is_simple(out):
            return out
        eps /= 2
    return np.asarray(poly, dtype=np.float64).copy()


def trace_boundary(component, epsilon=2.0):
    """Closed outline of a component, simplified with tolerance ``epsilon``."""
    mask = component.mask if isinstance(component, Component) else component
    raw = trace_raw(mask)
    return simplify(raw, epsilon) if epsilon > 0 else raw


def ear_clip(poly):
    """Triangulate a simple positively oriented polygon; returns (n-2, 3) indices."""
    pts = np.asarray(poly, dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise GeometryError(f"polygon needs at least 3 vertices, got {n}")
    if signed_area(pts) <= 0:
        raise GeometryError("polygon must have positive orientation and non-zero area")
    idx = list(range(n))
    tris = []

    def cross(a, b, c):
        return (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])

    def inside(p, a, b, c):
        return cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0

    guard = 0
    while len(idx) > 3:
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if cross(a, b, c) <= 0:
                continue
            blocked = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = pts[j]
                if (p == a).all() or (p == b).all() or (p == c).all():
                    continue
                if inside(p, a, b, c):
                    blocked = True
                    break
            if not blocked:
                tris.append((i0, i1, i2))
                del idx[k]
                break
        else:
            raise GeometryError("ear clipping failed; polygon is not simple")
        guard += 1
        if guard > n * n:
            raise GeometryError("ear clipping did not terminate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=np.int64)
