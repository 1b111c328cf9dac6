"""Points, wedges and distances in R^d with the Euclidean norm.

A wedge is an ordered vertex triple (t1, t2, t3) standing for the union of
the segments [t1, t2] and [t2, t3].  Everything here is a pure function of
its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GEOM_TOL = 1e-9


def as_point(coords: Iterable[float]) -> np.ndarray:
    p = np.asarray(list(coords) if not isinstance(coords, np.ndarray) else coords, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValueError(f"a point needs at least 2 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


@dataclass(frozen=True)
class Wedge:
    """Vertex triple; ``K`` of the wedge is [t1,t2] U [t2,t3]."""

    t1: tuple
    t2: tuple
    t3: tuple

    def __post_init__(self):
        pts = [tuple(float(c) for c in t) for t in (self.t1, self.t2, self.t3)]
        d = len(pts[0])
        if d < 2 or any(len(t) != d for t in pts):
            raise ValueError("wedge vertices must share a dimension d >= 2")
        if not all(math.isfinite(c) for t in pts for c in t):
            raise ValueError("wedge vertices must be finite")
        object.__setattr__(self, "t1", pts[0])
        object.__setattr__(self, "t2", pts[1])
        object.__setattr__(self, "t3", pts[2])

    @classmethod
    def from_array(cls, arr) -> "Wedge":
        a = np.asarray(arr, dtype=float)
        return cls(tuple(a[0]), tuple(a[1]), tuple(a[2]))

    @property
    def d(self) -> int:
        return len(self.t1)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.t1, self.t2, self.t3], dtype=float)

    @property
    def degenerate(self) -> bool:
        """Repeated vertices are allowed but flagged."""
        return self.t1 == self.t2 or self.t2 == self.t3 or self.t1 == self.t3

    @property
    def length(self) -> float:
        a = self.array
        return float(np.linalg.norm(a[1] - a[0]) + np.linalg.norm(a[2] - a[1]))

    def shifted(self, v) -> "Wedge":
        return Wedge.from_array(self.array + np.asarray(v, dtype=float))

    def to_json(self) -> list:
        return [list(self.t1), list(self.t2), list(self.t3)]


def wedge_distance(a: Wedge, b: Wedge) -> float:
    """Max over the three vertices of the Euclidean displacement."""
    return float(np.max(np.linalg.norm(a.array - b.array, axis=1)))


def segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each row of ``points`` to the segment [a, b]."""
    points = np.atleast_2d(points)
    ab = b - a
    den = float(ab @ ab)
    if den == 0.0:
        return np.linalg.norm(points - a, axis=1)
    s = np.clip((points - a) @ ab / den, 0.0, 1.0)
    return np.linalg.norm(points - (a + s[:, None] * ab), axis=1)


def points_wedge_distance(points: np.ndarray, w: Wedge | np.ndarray) -> np.ndarray:
    v = w.array if isinstance(w, Wedge) else np.asarray(w, dtype=float)
    return np.minimum(segment_distances(points, v[0], v[1]),
                      segment_distances(points, v[1], v[2]))


def point_wedge_distance(p, w: Wedge) -> float:
    return float(points_wedge_distance(as_point(p)[None, :], w)[0])


def sample_wedge(w: Wedge | np.ndarray, step: float) -> np.ndarray:
    """Points along both arms with arc-length spacing at most ``step``."""
    v = w.array if isinstance(w, Wedge) else np.asarray(w, dtype=float)
    out = []
    for a, b in ((v[0], v[1]), (v[1], v[2])):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        s = np.linspace(0.0, 1.0, n + 1)
        out.append(a + s[:, None] * (b - a))
    return np.vstack(out)


def hausdorff_distance(a: Wedge, b: Wedge, tol: float) -> float:
    """Hausdorff distance to within ``tol``.

    dist(., K) is 1-Lipschitz, so sampling each wedge at spacing 2*tol and
    taking the exact distance of the samples to the other wedge is off by at
    most tol.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    sa = sample_wedge(a, 2.0 * tol)
    sb = sample_wedge(b, 2.0 * tol)
    return float(max(points_wedge_distance(sa, b).max(), points_wedge_distance(sb, a).max()))


def wedge_in_ball(w: Wedge, c, r: float) -> bool:
    """True iff K_w sits in the closed ball B(c, r); vertices suffice by convexity."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    return bool(np.all(np.linalg.norm(w.array - as_point(c), axis=1) <= r))


@dataclass(frozen=True)
class BoxGrid:
    origin: tuple
    h: float
    cells: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("cell size must be positive")

    @classmethod
    def from_points(cls, cloud: np.ndarray, h: float, origin=None) -> "BoxGrid":
        if not h > 0:
            raise ValueError("cell size must be positive")
        cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
        o = np.zeros(cloud.shape[1]) if origin is None else np.asarray(origin, dtype=float)
        idx = np.floor((cloud - o) / h).astype(np.int64)
        return cls(tuple(o), h, frozenset(map(tuple, np.unique(idx, axis=0))))

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class BoxCount:
    slope: float
    scales: tuple
    counts: tuple
    intercept: float


def box_dimension_estimate(cloud, scales: Sequence[float], origin=None) -> BoxCount:
    """Least-squares slope of log(count) against log(1/h)."""
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.size == 0:
        raise ValueError("empty point cloud")
    hs = [float(h) for h in scales]
    if len(set(hs)) < 2:
        raise ValueError("need at least two distinct scales")
    counts = [len(BoxGrid.from_points(cloud, h, origin)) for h in hs]
    x = np.log(1.0 / np.array(hs))
    y = np.log(np.array(counts, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    return BoxCount(float(slope), tuple(hs), tuple(counts), float(intercept))
