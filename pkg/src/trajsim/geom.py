"""Planar geometry kernel: poses, oriented boxes, polygons, polylines, grids.

Conventions used throughout the package:
  * headings are radians in (-pi, pi], +x is "forward", angles grow CCW
  * points on polygon edges count as inside; touching boxes count as
    overlapping (a grazing contact is a collision)
  * all values are immutable after construction and every operation here is
    a pure function, so everything is safe to share across threads
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Pose",
    "OrientedBox",
    "Polygon",
    "Polyline",
    "OccupancyGrid",
    "wrap_angle",
    "obb_overlap",
    "obb_overlap_batch",
    "point_in_polygon",
    "points_in_polygon",
    "box_in_polygons",
    "buffer_rasterize",
    "grid_union",
    "grid_iou",
    "arc_length",
    "project_onto",
    "segments_intersect_batch",
]

_EDGE_EPS = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


@dataclass(frozen=True)
class Pose:
    """Planar pose (x, y, psi) in meters/radians; psi normalized to (-pi, pi]."""

    x: float
    y: float
    psi: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.psi)):
            raise ValueError(f"pose components must be finite, got ({self.x}, {self.y}, {self.psi})")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi], dtype=float)


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle given by center pose and half extents (both > 0)."""

    center: Pose
    half_length: float
    half_width: float

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("box extents must be positive")

    def corners(self) -> np.ndarray:
        """4x2 array of corners, CCW starting front-left."""
        c, s = math.cos(self.center.psi), math.sin(self.center.psi)
        hl, hw = self.half_length, self.half_width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])


class Polygon:
    """Simple polygon, stored CCW (input orientation is normalized).

    `vertices` is an (n, 2) float array, n >= 3.  Self-intersection is the
    caller's contract and is not checked.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 planar vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        area2 = float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))
        if abs(area2) < 1e-12:
            raise ValueError("polygon is degenerate (zero area)")
        if area2 < 0:
            v = v[::-1].copy()
        self.vertices = v
        self.vertices.setflags(write=False)

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def __repr__(self):
        return f"Polygon({len(self.vertices)} vertices, area={self.area:.3f})"


class Polyline:
    """Ordered point chain, >= 1 point, no consecutive duplicates (> 1e-9 m)."""

    __slots__ = ("points", "_cum")

    def __init__(self, points):
        p = np.asarray(points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 1:
            raise ValueError("polyline needs at least 1 planar point")
        if not np.all(np.isfinite(p)):
            raise ValueError("polyline points must be finite")
        if len(p) > 1:
            seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
            if np.any(seg <= _EDGE_EPS):
                raise ValueError("polyline has consecutive duplicate points")
            self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            self._cum = np.zeros(1)
        self.points = p
        self.points.setflags(write=False)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"Polyline({len(self.points)} points, length={self._cum[-1]:.3f})"


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy over a regular grid.

    `origin` is the world position of the corner of cell (0, 0); cell (ix, iy)
    covers [origin + i*cell, origin + (i+1)*cell).  `bits` is (height, width),
    indexed [iy, ix].
    """

    origin: tuple[float, float]
    cell_size: float
    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.bits.shape != (self.height, self.width):
            raise ValueError("bit array shape must be (height, width)")
        self.bits.setflags(write=False)

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))


# ---------------------------------------------------------------------------
# oriented-box overlap (separating axis test)


def _boxes_to_arrays(boxes):
    cx = np.array([b.center.x for b in boxes])
    cy = np.array([b.center.y for b in boxes])
    psi = np.array([b.center.psi for b in boxes])
    hl = np.array([b.half_length for b in boxes])
    hw = np.array([b.half_width for b in boxes])
    return cx, cy, psi, hl, hw


def obb_overlap_batch(ax, ay, apsi, ahl, ahw, bx, by, bpsi, bhl, bhw) -> np.ndarray:
    """Vectorized SAT overlap for paired boxes; touching counts as overlap.

    All arguments broadcast together; returns a bool array.
    """
    ax, ay, apsi, ahl, ahw, bx, by, bpsi, bhl, bhw = np.broadcast_arrays(
        ax, ay, apsi, ahl, ahw, bx, by, bpsi, bhl, bhw
    )
    dx = bx - ax
    dy = by - ay
    ca, sa = np.cos(apsi), np.sin(apsi)
    cb, sb = np.cos(bpsi), np.sin(bpsi)
    # relative heading terms reused across all four axes
    cab = ca * cb + sa * sb   # cos(b - a)
    sab = ca * sb - sa * cb   # sin(b - a)

    overlap = np.ones(ax.shape, dtype=bool)
    # axes of A: project center offset and B's extents onto A's long/lat axes
    t_lon = dx * ca + dy * sa
    t_lat = -dx * sa + dy * ca
    rb_lon = bhl * np.abs(cab) + bhw * np.abs(sab)
    rb_lat = bhl * np.abs(sab) + bhw * np.abs(cab)
    overlap &= np.abs(t_lon) <= ahl + rb_lon
    overlap &= np.abs(t_lat) <= ahw + rb_lat
    # axes of B, symmetric roles
    u_lon = dx * cb + dy * sb
    u_lat = -dx * sb + dy * cb
    ra_lon = ahl * np.abs(cab) + ahw * np.abs(sab)
    ra_lat = ahl * np.abs(sab) + ahw * np.abs(cab)
    overlap &= np.abs(u_lon) <= bhl + ra_lon
    overlap &= np.abs(u_lat) <= bhw + ra_lat
    return overlap


def obb_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Exact rectangle intersection test; closed boxes, edges touching count."""
    return bool(
        obb_overlap_batch(
            a.center.x, a.center.y, a.center.psi, a.half_length, a.half_width,
            b.center.x, b.center.y, b.center.psi, b.half_length, b.half_width,
        )
    )


# ---------------------------------------------------------------------------
# polygon containment


def points_in_polygon(points: np.ndarray, poly: Polygon) -> np.ndarray:
    """Even-odd containment for an (n, 2) array; boundary points are inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = poly.vertices
    a = v
    b = np.roll(v, -1, axis=0)

    px = pts[:, 0:1]  # (n, 1) against (edges,)
    py = pts[:, 1:2]
    ax_, ay = a[:, 0], a[:, 1]
    bx_, by = b[:, 0], b[:, 1]

    # crossing number: edge straddles the horizontal ray through the point
    cond = (ay > py) != (by > py)
    # x coordinate where the edge crosses the ray
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax_ + (py - ay) * (bx_ - ax_) / (by - ay)
    crossings = np.sum(cond & (px < x_cross), axis=1)
    inside = (crossings % 2) == 1

    # boundary inclusion: squared distance to each edge segment under tolerance
    ex = bx_ - ax_
    ey = by - ay
    seg_len2 = ex * ex + ey * ey
    t = ((px - ax_) * ex + (py - ay) * ey) / seg_len2
    t = np.clip(t, 0.0, 1.0)
    dx = px - (ax_ + t * ex)
    dy = py - (ay + t * ey)
    on_edge = np.any(dx * dx + dy * dy <= _EDGE_EPS * _EDGE_EPS, axis=1)
    return inside | on_edge


def point_in_polygon(p, poly: Polygon) -> bool:
    """Even-odd containment for a single point; boundary counts as inside."""
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :], poly)[0])


def box_in_polygons(b: OrientedBox, polys) -> bool:
    """True iff all 4 corners of the box lie inside the union of the polygons."""
    polys = list(polys)
    if not polys:
        raise ValueError("need at least one polygon")
    corners = b.corners()
    covered = np.zeros(4, dtype=bool)
    for poly in polys:
        covered |= points_in_polygon(corners, poly)
        if covered.all():
            return True
    return bool(covered.all())


# ---------------------------------------------------------------------------
# rasterization and grid IoU


def _snap(value: float, cell: float) -> float:
    return math.floor(value / cell) * cell


def buffer_rasterize(line: Polyline, width: float, cell_size: float) -> OccupancyGrid:
    """Rasterize the corridor of total width `width` around a polyline.

    A cell is occupied iff its center lies within width/2 of the polyline
    (round caps and joins).  Grid origins snap to the cell lattice so grids
    of equal cell size always align exactly.
    """
    if width <= 0:
        raise ValueError("corridor width must be positive")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    radius = 0.5 * width
    pts = line.points
    lo = pts.min(axis=0) - radius - cell_size
    hi = pts.max(axis=0) + radius + cell_size
    ox, oy = _snap(lo[0], cell_size), _snap(lo[1], cell_size)
    nx = int(math.ceil((hi[0] - ox) / cell_size))
    ny = int(math.ceil((hi[1] - oy) / cell_size))

    cxs = ox + (np.arange(nx) + 0.5) * cell_size
    cys = oy + (np.arange(ny) + 0.5) * cell_size
    gx, gy = np.meshgrid(cxs, cys)  # (ny, nx)

    if len(pts) == 1:
        d2 = (gx - pts[0, 0]) ** 2 + (gy - pts[0, 1]) ** 2
    else:
        a = pts[:-1]
        d = np.diff(pts, axis=0)
        len2 = np.sum(d * d, axis=1)
        # distance from every cell center to every segment, min over segments
        rx = gx[:, :, None] - a[:, 0]
        ry = gy[:, :, None] - a[:, 1]
        t = np.clip((rx * d[:, 0] + ry * d[:, 1]) / len2, 0.0, 1.0)
        qx = rx - t * d[:, 0]
        qy = ry - t * d[:, 1]
        d2 = np.min(qx * qx + qy * qy, axis=2)

    bits = d2 <= radius * radius
    return OccupancyGrid(origin=(ox, oy), cell_size=cell_size, width=nx, height=ny, bits=bits)


def _lattice_offset(origin_a: float, origin_b: float, cell: float) -> int:
    rel = (origin_b - origin_a) / cell
    k = round(rel)
    if abs(rel - k) > 1e-6:
        raise ValueError("grids are not on a common cell lattice")
    return int(k)


def grid_union(grids) -> OccupancyGrid:
    """Union of occupancy grids resampled onto their common lattice."""
    grids = list(grids)
    if not grids:
        raise ValueError("need at least one grid")
    cell = grids[0].cell_size
    for g in grids[1:]:
        if g.cell_size != cell:
            raise ValueError("grid cell sizes differ")
    ox = min(g.origin[0] for g in grids)
    oy = min(g.origin[1] for g in grids)
    kxs = [_lattice_offset(ox, g.origin[0], cell) for g in grids]
    kys = [_lattice_offset(oy, g.origin[1], cell) for g in grids]
    nx = max(kx + g.width for kx, g in zip(kxs, grids))
    ny = max(ky + g.height for ky, g in zip(kys, grids))
    bits = np.zeros((ny, nx), dtype=bool)
    for kx, ky, g in zip(kxs, kys, grids):
        bits[ky : ky + g.height, kx : kx + g.width] |= g.bits
    return OccupancyGrid(origin=(ox, oy), cell_size=cell, width=nx, height=ny, bits=bits)


def grid_iou(a: OccupancyGrid, b: OccupancyGrid) -> float:
    """Intersection over union of occupied cells; 0 if the union is empty."""
    if a.cell_size != b.cell_size:
        raise ValueError("grid cell sizes differ")
    cell = a.cell_size
    ox = min(a.origin[0], b.origin[0])
    oy = min(a.origin[1], b.origin[1])
    nx = max(_lattice_offset(ox, g.origin[0], cell) + g.width for g in (a, b))
    ny = max(_lattice_offset(oy, g.origin[1], cell) + g.height for g in (a, b))
    bits_a = np.zeros((ny, nx), dtype=bool)
    bits_b = np.zeros((ny, nx), dtype=bool)
    for bits, g in ((bits_a, a), (bits_b, b)):
        kx = _lattice_offset(ox, g.origin[0], cell)
        ky = _lattice_offset(oy, g.origin[1], cell)
        bits[ky : ky + g.height, kx : kx + g.width] = g.bits
    union = np.count_nonzero(bits_a | bits_b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(bits_a & bits_b) / union)


# ---------------------------------------------------------------------------
# polylines: arc length and projection


def arc_length(line: Polyline) -> float:
    return float(line._cum[-1])


def project_many(line: Polyline, points: np.ndarray):
    """Project points onto a polyline.

    Returns (s, lateral, dist, seg): arc length of the closest point (clamped
    to [0, total length]), signed perpendicular offset relative to the closest
    segment's direction (left positive), true distance to the polyline, and
    the closest segment index.  Equidistant segments break to the lowest index.
    """
    if len(line) < 2:
        raise ValueError("projection needs a polyline with at least 2 points")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = line.points
    a = p[:-1]
    d = np.diff(p, axis=0)
    len2 = np.sum(d * d, axis=1)
    seg_len = np.sqrt(len2)

    rx = pts[:, 0:1] - a[:, 0]
    ry = pts[:, 1:2] - a[:, 1]
    t = np.clip((rx * d[:, 0] + ry * d[:, 1]) / len2, 0.0, 1.0)
    qx = rx - t * d[:, 0]
    qy = ry - t * d[:, 1]
    d2 = qx * qx + qy * qy
    seg = np.argmin(d2, axis=1)

    rows = np.arange(len(pts))
    t_best = t[rows, seg]
    s = line._cum[seg] + t_best * seg_len[seg]
    dist = np.sqrt(d2[rows, seg])
    # sign from the cross product of segment direction with the offset vector
    cross = d[seg, 0] * ry[rows, seg] - d[seg, 1] * rx[rows, seg]
    lat_sign = np.where(cross >= 0, 1.0, -1.0)
    # perpendicular component only (beyond the ends the closest point is a
    # vertex, where the raw distance also carries a longitudinal part)
    lateral = lat_sign * np.abs(cross) / seg_len[seg]
    return s, lateral, dist, seg


def project_onto(line: Polyline, p) -> tuple[float, float]:
    """(arc length of closest point, signed lateral offset, left positive)."""
    s, lat, _, _ = project_many(line, np.asarray(p, dtype=float)[None, :])
    return float(s[0]), float(lat[0])


# ---------------------------------------------------------------------------
# segment intersection (used by the box-vs-polygon entry test)


def segments_intersect_batch(p1, p2, q1, q2) -> np.ndarray:
    """Whether closed segments p1-p2 and q1-q2 intersect, elementwise.

    Arguments are (..., 2) arrays broadcasting together.  Touching endpoints
    count as intersecting; collinear overlap is detected via bounding boxes.
    """
    p1 = np.asarray(p1, float)
    p2 = np.asarray(p2, float)
    q1 = np.asarray(q1, float)
    q2 = np.asarray(q2, float)

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]
        ) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)

    def on_box(a, b, c):
        return (
            (np.minimum(a[..., 0], b[..., 0]) - _EDGE_EPS <= c[..., 0])
            & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]) + _EDGE_EPS)
            & (np.minimum(a[..., 1], b[..., 1]) - _EDGE_EPS <= c[..., 1])
            & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]) + _EDGE_EPS)
        )

    touch = (
        ((d1 == 0) & on_box(q1, q2, p1))
        | ((d2 == 0) & on_box(q1, q2, p2))
        | ((d3 == 0) & on_box(p1, p2, q1))
        | ((d4 == 0) & on_box(p1, p2, q2))
    )
    return proper | touch
