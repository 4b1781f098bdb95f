"""
Planar geometry for borders between treatment and control regions.

A border is an open polyline parametrized by arc length. Sentinels are
placed at the midpoints of equal arc-length cells, arbitrary points are
projected onto the nearest border point, and lattices of points can be
generated inside a buffer around the border.

All coordinates are assumed to be in a projected (planar) reference system.
"""
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry.base import BaseGeometry

from .exceptions import GeometryError

__all__ = [
    "Border",
    "SentinelSet",
    "BufferGrid",
    "place_sentinels",
    "project_to_border",
    "project_points",
    "buffer_grid",
    "split_by_angle",
]

# relative tolerance used to decide that two candidate distances tie
_TIE_RTOL = 1e-12


def _as_points(points, name="points"):
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"{name} must have shape (n, 2), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Border:
    """Ordered polyline with a cumulative arc-length parametrization.

    Closed rings are represented by repeating the first vertex at the end.
    """

    vertices: np.ndarray
    cumulative_arclength: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = _as_points(self.vertices, "vertices")
        if len(v) < 2:
            raise GeometryError("a border needs at least 2 vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("border vertices must be finite")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        bad = np.flatnonzero(seg <= 0)
        if bad.size:
            raise GeometryError(
                f"consecutive border vertices {bad[0]} and {bad[0] + 1} coincide"
            )
        v = v.copy()
        v.setflags(write=False)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        cum.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cumulative_arclength", cum)

    @property
    def length(self):
        return float(self.cumulative_arclength[-1])

    @property
    def n_segments(self):
        return len(self.vertices) - 1

    def point_at(self, arclength):
        """Coordinates of the border point(s) at the given arc length(s)."""
        t = np.atleast_1d(np.asarray(arclength, dtype=float))
        cum = self.cumulative_arclength
        t = np.clip(t, 0.0, cum[-1])
        idx = np.searchsorted(cum, t, side="right") - 1
        idx = np.clip(idx, 0, self.n_segments - 1)
        seg_len = cum[idx + 1] - cum[idx]
        frac = (t - cum[idx]) / seg_len
        a = self.vertices[idx]
        b = self.vertices[idx + 1]
        return a + frac[:, None] * (b - a)

    def as_linestring(self):
        return shapely.LineString(self.vertices)


@dataclass(frozen=True, eq=False)
class SentinelSet:
    """Points evenly spaced along a border, at arc lengths ``arclength``."""

    points: np.ndarray
    arclength: np.ndarray
    spacing: float

    @property
    def R(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class BufferGrid:
    """Lattice points lying inside the region polygons and near the border.

    ``region`` holds, for every point, the index of the first polygon
    containing it.
    """

    points: np.ndarray
    spacing: float
    delta: float
    region: np.ndarray

    def __len__(self):
        return len(self.points)


def place_sentinels(border, R):
    """Place ``R`` sentinels at the midpoints of ``R`` equal arc-length cells.

    Sentinel ``i`` (1-based) sits at arc length ``(i - 1/2) L / R``.

    Examples
    --------
    >>> s = place_sentinels(Border([(0, 0), (1, 0)]), 2)
    >>> s.points.tolist()
    [[0.25, 0.0], [0.75, 0.0]]
    """
    R = int(R)
    if R < 1:
        raise GeometryError(f"R must be a positive integer, got {R}")
    L = border.length
    if not L > 0:
        raise GeometryError("border has zero total length")
    spacing = L / R
    arclength = (np.arange(R) + 0.5) * spacing
    return SentinelSet(border.point_at(arclength), arclength, spacing)


def project_points(border, points):
    """Project many points onto the border.

    Returns
    -------
    projected : ndarray, shape (n, 2)
        Nearest border point for each input point.
    distance : ndarray, shape (n,)
        Euclidean distance to the border.
    arclength : ndarray, shape (n,)
        Arc-length parameter of the projected point. When several border
        points are equally near, the one with the smallest arc length wins.
    """
    pts = _as_points(points)
    a = border.vertices[:-1]
    d = border.vertices[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    seg_len = np.sqrt(seg_len2)
    cum = border.cumulative_arclength
    n = len(pts)
    out_pt = np.empty((n, 2))
    out_dist = np.empty(n)
    out_arc = np.empty(n)
    # bound the (chunk x segment) work arrays to a few million entries
    chunk = max(1, 4_000_000 // max(1, len(a)))
    for start in range(0, n, chunk):
        p = pts[start:start + chunk]
        rel = p[:, None, :] - a[None, :, :]
        t = np.einsum("psk,sk->ps", rel, d) / seg_len2
        np.clip(t, 0.0, 1.0, out=t)
        foot = a[None, :, :] + t[..., None] * d[None, :, :]
        diff = p[:, None, :] - foot
        dist2 = np.einsum("psk,psk->ps", diff, diff)
        dmin = dist2.min(axis=1)
        scale = np.maximum(dmin, np.finfo(float).tiny)
        # first segment (smallest arc length) within the tie tolerance
        tied = dist2 <= dmin[:, None] + _TIE_RTOL * scale[:, None] + 1e-300
        j = np.argmax(tied, axis=1)
        rows = np.arange(len(p))
        out_pt[start:start + chunk] = foot[rows, j]
        out_dist[start:start + chunk] = np.sqrt(dist2[rows, j])
        out_arc[start:start + chunk] = cum[j] + t[rows, j] * seg_len[j]
    return out_pt, out_dist, out_arc


def project_to_border(border, s):
    """Nearest border point to ``s`` and the distance to it.

    Examples
    --------
    >>> project_to_border(Border([(0, 0), (1, 0)]), (0.5, 0.3))
    (array([0.5, 0. ]), 0.3)
    """
    pt, dist, _ = project_points(border, np.asarray(s, dtype=float)[None, :])
    return pt[0], float(dist[0])


def _polygon_list(region_polygons):
    if isinstance(region_polygons, BaseGeometry):
        region_polygons = [region_polygons]
    polys = []
    for p in region_polygons:
        if not isinstance(p, BaseGeometry):
            p = shapely.Polygon(np.asarray(p, dtype=float))
        if p.geom_type not in ("Polygon", "MultiPolygon"):
            raise GeometryError(f"expected Polygon or MultiPolygon, got {p.geom_type}")
        polys.append(p)
    if not polys:
        raise GeometryError("at least one region polygon is required")
    return polys


def buffer_grid(region_polygons, border, delta, nu, anchor=None):
    """Axis-aligned lattice of spacing ``nu`` restricted to the border vicinity.

    Parameters
    ----------
    region_polygons : Polygon, MultiPolygon, or sequence of them
        The treatment and control areas (shapely geometries or vertex arrays).
    border : Border
    delta : float
        Buffer distance; points farther than ``delta`` from the border are
        discarded. ``np.inf`` keeps every lattice point inside the polygons.
    nu : float
        Lattice spacing.
    anchor : (float, float), optional
        One lattice point. Defaults to the lower-left corner of the polygons'
        bounding box offset by ``nu / 2`` in each direction.
    """
    if not delta > 0:
        raise GeometryError(f"buffer distance must be positive, got {delta}")
    if not nu > 0:
        raise GeometryError(f"grid spacing must be positive, got {nu}")
    polys = _polygon_list(region_polygons)
    xmin, ymin, xmax, ymax = shapely.total_bounds(polys)
    if anchor is None:
        anchor = (xmin + nu / 2, ymin + nu / 2)
    ax, ay = map(float, anchor)
    i0 = np.ceil((xmin - ax) / nu)
    i1 = np.floor((xmax - ax) / nu)
    j0 = np.ceil((ymin - ay) / nu)
    j1 = np.floor((ymax - ay) / nu)
    xs = ax + nu * np.arange(i0, i1 + 1)
    ys = ay + nu * np.arange(j0, j1 + 1)
    if xs.size == 0 or ys.size == 0:
        raise GeometryError(
            f"no lattice point of spacing {nu} falls in the region; use a smaller spacing"
        )
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cand = np.column_stack([gx.ravel(), gy.ravel()])

    region = np.full(len(cand), -1)
    for k, poly in enumerate(polys):
        inside = shapely.contains_xy(poly, cand[:, 0], cand[:, 1])
        region[(region < 0) & inside] = k
    keep = region >= 0
    cand, region = cand[keep], region[keep]
    if np.isfinite(delta) and len(cand):
        _, dist, _ = project_points(border, cand)
        near = dist <= delta
        cand, region = cand[near], region[near]
    if len(cand) == 0:
        raise GeometryError(
            f"no lattice point of spacing {nu} lies within {delta} of the border "
            "inside the region; use a smaller spacing"
        )
    return BufferGrid(cand, float(nu), float(delta), region)


def split_by_angle(points, theta):
    """Split points in half with a line at ``theta`` degrees from horizontal.

    The line runs counter-clockwise at angle ``theta`` and is offset along its
    normal so that the two sides differ in size by at most one. With an odd
    count the median point goes to ``side_b`` (larger signed coordinate).

    Returns
    -------
    side_a, side_b : ndarray of int
        Indices of the points on each side.
    border : Border
        The splitting line clipped to the (padded) bounding box of the points.
    """
    pts = _as_points(points)
    n = len(pts)
    if n < 2:
        raise GeometryError("need at least 2 points to split")
    rad = np.deg2rad(theta)
    u = np.array([np.cos(rad), np.sin(rad)])
    normal = np.array([-u[1], u[0]])
    coord = pts @ normal
    spread = coord.max() - coord.min()
    extent = np.ptp(pts, axis=0).max()
    if spread <= 1e-12 * max(extent, 1.0):
        raise GeometryError(
            f"all points are collinear along the {theta} degree direction"
        )
    order = np.argsort(coord, kind="stable")
    n_a = n // 2
    side_a = np.sort(order[:n_a])
    side_b = np.sort(order[n_a:])
    offset = 0.5 * (coord[order[n_a - 1]] + coord[order[n_a]])

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.01 * max(np.linalg.norm(hi - lo), np.finfo(float).eps)
    lo, hi = lo - pad, hi + pad
    origin = offset * normal
    # clip the infinite line origin + t*u to the box
    t_lo, t_hi = -np.inf, np.inf
    for k in range(2):
        if abs(u[k]) < 1e-15:
            continue
        t1 = (lo[k] - origin[k]) / u[k]
        t2 = (hi[k] - origin[k]) / u[k]
        t_lo = max(t_lo, min(t1, t2))
        t_hi = min(t_hi, max(t1, t2))
    if not t_hi > t_lo:
        raise GeometryError("splitting line does not cross the data bounding box")
    border = Border(np.array([origin + t_lo * u, origin + t_hi * u]))
    return side_a, side_b, border
