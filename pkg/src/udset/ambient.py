"""Dyadic wedge families, grid nets, the open scaffold sets and fat Cantor sets."""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .geometry import Wedge, wedge_distance

EPS0 = 0.5
RHO = 0.25


class OutOfDomain(ValueError):
    pass


def _phi_vector(phi, d: int) -> np.ndarray:
    if phi is None:
        v = np.zeros(d)
        v[0] = 1.0
        return v
    v = np.asarray(phi, dtype=float)
    if v.shape != (d,) or not np.any(v != 0):
        raise ValueError("phi must be a nonzero vector of length d")
    return v


def passes_filter(vertices: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Vectorised W1 test on arrays of shape (..., 3, d)."""
    f = vertices @ phi
    return (f[..., 0] != f[..., 1]) & (f[..., 1] != f[..., 2])


def dyadic_exponent(x: np.ndarray) -> np.ndarray:
    """Smallest j >= 0 with x * 2**j integral, elementwise (x dyadic)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("value is not a finite dyadic rational")
    m, e = np.frexp(np.abs(x))
    M = np.ldexp(m, 53).astype(np.int64)
    low = M & -M
    tz = np.zeros(M.shape, dtype=np.int64)
    nz = M != 0
    tz[nz] = np.log2(low[nz].astype(float)).astype(np.int64)
    j = -(e.astype(np.int64) - 53 + tz)
    return np.where(nz, np.maximum(j, 0), 0)


def wedge_pitch_exponent(vertices: np.ndarray) -> np.ndarray:
    """Coarsest dyadic pitch exponent holding all vertices; shape (...)."""
    v = np.asarray(vertices, dtype=float)
    e = dyadic_exponent(v)
    return e.reshape(e.shape[:-2] + (-1,)).max(axis=-1)


@dataclass(frozen=True)
class WedgeFamily:
    """All grid wedges at pitch 2**-j inside ``bbox`` passing the W1 filter.

    Members are indexed by their rank in the lexicographic order of vertex
    triples (vertex coordinates compared lexicographically).  Filtered-out
    triples leave gaps, so the index map is injective but not onto a range.
    """

    lo: tuple
    hi: tuple
    j: int
    phi: tuple

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def pitch(self) -> float:
        return math.ldexp(1.0, -self.j)

    @property
    def phi_vec(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=float)

    def axis_ticks(self) -> list[np.ndarray]:
        h = self.pitch
        return [np.arange(math.ceil(lo / h), math.floor(hi / h) + 1) * h
                for lo, hi in zip(self.lo, self.hi)]

    def grid_points(self) -> np.ndarray:
        ticks = self.axis_ticks()
        mesh = np.meshgrid(*ticks, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def n_points(self) -> int:
        return int(np.prod([len(t) for t in self.axis_ticks()]))

    def _point_rank(self, p: np.ndarray) -> int:
        ticks = self.axis_ticks()
        r = 0
        for c, t in zip(p, ticks):
            k = int(round(c / self.pitch - t[0] / self.pitch))
            if k < 0 or k >= len(t) or t[k] != c:
                raise KeyError("point not on the family grid")
            r = r * len(t) + k
        return r

    def index_of(self, w: Wedge) -> int:
        a = w.array
        if a.shape[1] != self.d:
            raise KeyError("dimension mismatch")
        if not passes_filter(a, self.phi_vec):
            raise KeyError("wedge fails the W1 filter")
        n = self.n_points
        r1, r2, r3 = (self._point_rank(p) for p in a)
        return (r1 * n + r2) * n + r3

    def wedge(self, i: int) -> Wedge:
        n = self.n_points
        if not 0 <= i < n ** 3:
            raise KeyError(f"index {i} outside the family")
        pts = self.grid_points()
        r3, rest = i % n, i // n
        r2, r1 = rest % n, rest // n
        w = Wedge.from_array(pts[[r1, r2, r3]])
        if not passes_filter(w.array, self.phi_vec):
            raise KeyError(f"index {i} is a filtered-out triple")
        return w

    def contains(self, w: Wedge) -> bool:
        try:
            self.index_of(w)
        except KeyError:
            return False
        return True

    def members(self) -> Iterator[tuple[int, Wedge]]:
        pts = self.grid_points()
        f = pts @ self.phi_vec
        n = len(pts)
        for r1, r2, r3 in itertools.product(range(n), repeat=3):
            if f[r1] != f[r2] and f[r2] != f[r3]:
                yield (r1 * n + r2) * n + r3, Wedge.from_array(pts[[r1, r2, r3]])

    def count(self) -> int:
        f = self.grid_points() @ self.phi_vec
        _, mult = np.unique(f, return_counts=True)
        n = len(f)
        # choose t2, then t1 and t3 each avoid phi(t2)
        return int(sum(m * (n - m) ** 2 for m in mult))


def enumerate_family(bbox, j: int, phi=None) -> WedgeFamily:
    lo, hi = (tuple(float(c) for c in b) for b in bbox)
    if len(lo) != len(hi) or len(lo) < 2 or any(b <= a for a, b in zip(lo, hi)):
        raise ValueError("bbox must be non-degenerate with d >= 2")
    if j < 1:
        raise ValueError("refinement level j must be >= 1")
    return WedgeFamily(lo, hi, int(j), tuple(_phi_vector(phi, len(lo))))


def repair_slack(d: int) -> float:
    """Worst vertex displacement of snap-and-repair, in units of the pitch."""
    return math.sqrt(1.0 + (d - 1) / 4.0)


def net_pitch_exponent(eps: float, d: int) -> int:
    """Smallest j with 2**-j * repair_slack(d) < eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    c = repair_slack(d)
    j = math.floor(-math.log2(eps / c))
    while math.ldexp(c, -j) >= eps:
        j += 1
    while math.ldexp(c, -(j - 1)) < eps:
        j -= 1
    return j


def snap_wedge(vertices: np.ndarray, j: int, phi: np.ndarray) -> np.ndarray:
    """Round each vertex to the 2**-j grid, then fix W1 violations.

    A violation is repaired by moving one vertex to its other neighbour along
    the axis where phi is largest, which costs at most repair_slack(d) pitches.
    """
    h = math.ldexp(1.0, -j)
    s = np.asarray(vertices, dtype=float)
    t = np.round(s / h) * h
    m = int(np.argmax(np.abs(phi)))

    def nudge(k):
        step = h if s[k, m] >= t[k, m] else -h
        t[k, m] += step

    f = t @ phi
    if f[0] == f[1] and f[1] == f[2]:
        nudge(1)
    elif f[0] == f[1]:
        nudge(0)
    elif f[1] == f[2]:
        nudge(2)
    return t


@dataclass(frozen=True)
class NetHit:
    family: WedgeFamily
    index: int
    wedge: Wedge
    distance: float


def net_index(s: Wedge, eps: float, bbox, phi=None, eps0: float = EPS0) -> NetHit:
    """Family member within wedge distance < eps of ``s``."""
    if not 0 < eps < eps0:
        raise OutOfDomain(f"eps must lie in (0, {eps0})")
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    a = s.array
    if np.any(a < lo - eps) or np.any(a > hi + eps):
        raise OutOfDomain("wedge lies outside the eps-inflated bounding box")
    d = a.shape[1]
    pv = _phi_vector(phi, d)
    j = net_pitch_exponent(eps, d)
    fam = WedgeFamily(tuple(lo), tuple(hi), j, tuple(pv))
    h = fam.pitch
    t = snap_wedge(a, j, pv)
    t = np.clip(t, np.ceil(lo / h) * h, np.floor(hi / h) * h)
    w = Wedge.from_array(t)
    dist = wedge_distance(w, s)
    if not dist < eps or not passes_filter(t, pv):
        raise OutOfDomain("no family member within eps near the bounding box edge")
    return NetHit(fam, fam.index_of(w), w, dist)


def local_member_count(center: Wedge, eps: float, rho: float = RHO, phi=None) -> int:
    """Number of pitch-matched grid wedges inside a set of diameter rho*eps.

    The set is the product of closed vertex balls of radius rho*eps/2 around
    the vertices of ``center``.
    """
    a = center.array
    d = a.shape[1]
    pv = _phi_vector(phi, d)
    h = math.ldexp(1.0, -net_pitch_exponent(eps, d))
    rad = rho * eps / 2.0
    choices = []
    for v in a:
        rng = [np.arange(math.ceil((c - rad) / h), math.floor((c + rad) / h) + 1) * h for c in v]
        pts = np.stack([m.ravel() for m in np.meshgrid(*rng, indexing="ij")], axis=1)
        choices.append(pts[np.linalg.norm(pts - v, axis=1) <= rad])
    n = 0
    for p1 in choices[0]:
        for p2 in choices[1]:
            if p1 @ pv == p2 @ pv:
                continue
            n += int(np.sum(choices[2] @ pv != p2 @ pv))
    return n


@dataclass(frozen=True)
class GScaffold:
    """Radius schedule eta(i, n) for the open sets G_n = U_i B(W_i, eta(i, n)).

    ``index_mode='generation'`` indexes a wedge by 1 + (its dyadic pitch
    exponent above ``j_base``); ``'enumeration'`` uses the ordinal of the
    wedge in a finite family (1-based over filtered members).
    """

    phi: tuple
    j_base: int = 2
    index_mode: str = "generation"
    family: WedgeFamily | None = None
    _ordinals: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.index_mode not in ("generation", "enumeration"):
            raise ValueError("index_mode must be 'generation' or 'enumeration'")
        if self.index_mode == "enumeration":
            if self.family is None:
                raise ValueError("enumeration mode needs a family")
            for n, (_, w) in enumerate(self.family.members(), start=1):
                self._ordinals[w.array.tobytes()] = n

    @property
    def phi_vec(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=float)

    def index(self, vertices: np.ndarray) -> np.ndarray:
        v = np.asarray(vertices, dtype=float)
        single = v.ndim == 2
        v = v[None] if single else v
        if not np.all(passes_filter(v, self.phi_vec)):
            raise KeyError("wedge is not in the filtered family")
        if self.index_mode == "generation":
            i = 1 + np.maximum(0, wedge_pitch_exponent(v) - self.j_base)
        else:
            try:
                i = np.array([self._ordinals[w.tobytes()] for w in v], dtype=np.int64)
            except KeyError as exc:
                raise KeyError("unknown wedge index") from exc
        return i[0] if single else i

    def eta_profile(self, vertices: np.ndarray, levels) -> np.ndarray:
        """eta at several levels at once; shape (m, len(levels))."""
        v = np.asarray(vertices, dtype=float)
        v = v[None] if v.ndim == 2 else v
        i = np.asarray(self.index(v), dtype=float)
        length, ratio = self._shape_terms(v)
        cols = []
        for n in levels:
            if n < 1:
                raise ValueError("level n must be >= 1")
            cap_dim = np.exp2(-(i + n)) * np.minimum(1.0, 1.0 / length)
            slice_bound = 1.0 / (n * np.exp2(i + 1) * ratio)
            cols.append(np.minimum(cap_dim, slice_bound * (1.0 - 2.0 ** -20)))
        return np.stack(cols, axis=1) if cols else np.zeros((len(v), 0))

    def _shape_terms(self, v: np.ndarray):
        s1 = v[:, 1] - v[:, 0]
        s2 = v[:, 2] - v[:, 1]
        l1 = np.linalg.norm(s1, axis=1)
        l2 = np.linalg.norm(s2, axis=1)
        pv = self.phi_vec
        cos = np.minimum(np.abs(s1 @ pv) / l1, np.abs(s2 @ pv) / l2)
        return l1 + l2, 1.0 + np.linalg.norm(pv) / cos

    def eta(self, vertices: np.ndarray, n: int) -> np.ndarray:
        """Vectorised eta over wedges of shape (..., 3, d); n >= 1."""
        if n < 1:
            raise ValueError("level n must be >= 1")
        v = np.asarray(vertices, dtype=float)
        out = self.eta_profile(v, [n])[:, 0]
        return out[0] if v.ndim == 2 else out


def g_contains_tube(scaffold: GScaffold, wedge, v: float, k: int) -> bool:
    """Closed v-neighbourhood of the wedge sits inside G_k iff v <= eta."""
    if not v > 0 or k < 1:
        raise ValueError("need v > 0 and k >= 1")
    arr = wedge.array if isinstance(wedge, Wedge) else np.asarray(wedge, dtype=float)
    return bool(v <= float(scaffold.eta(arr, k)))


@dataclass(frozen=True)
class CantorSet:
    intervals: tuple  # sorted tuple of (Fraction lo, Fraction hi)
    depth: int

    @property
    def length(self) -> Fraction:
        return sum((b - a for a, b in self.intervals), Fraction(0))

    def _starts(self) -> list:
        return [float(a) for a, _ in self.intervals]

    def contains(self, x: float) -> bool:
        k = bisect.bisect_right(self._starts(), x) - 1
        return k >= 0 and x <= float(self.intervals[k][1])

    def contains_many(self, xs: np.ndarray) -> np.ndarray:
        lo = np.array([float(a) for a, _ in self.intervals])
        hi = np.array([float(b) for _, b in self.intervals])
        k = np.searchsorted(lo, xs, side="right") - 1
        ok = k >= 0
        out = np.zeros(np.shape(xs), dtype=bool)
        out[ok] = xs[ok] <= hi[k[ok]]
        return out

    def measure_within(self, lo, hi) -> Fraction:
        lo, hi = Fraction(lo), Fraction(hi)
        return sum((max(Fraction(0), min(b, hi) - max(a, lo)) for a, b in self.intervals), Fraction(0))

    def shifted(self, s) -> "CantorSet":
        s = Fraction(s)
        return CantorSet(tuple((a + s, b + s) for a, b in self.intervals), self.depth)

    def to_json(self) -> list:
        return [[float(a), float(b)] for a, b in self.intervals]


def cantor_retained_length(m: int) -> Fraction:
    return 1 - sum((Fraction(2 ** (n - 1), 4 ** n) for n in range(1, m + 1)), Fraction(0))


def cantor_limit_length() -> Fraction:
    # sum_{n>=1} 2^(n-1) 4^-n = (1/2) sum_{n>=1} 2^-n = 1/2
    return 1 - Fraction(1, 2) * Fraction(1, 1)


def fat_cantor(m: int) -> CantorSet:
    """Remove the open middle 4**-n from each of the 2**(n-1) intervals, n = 1..m."""
    if m < 1:
        raise ValueError("depth must be >= 1")
    iv = [(Fraction(0), Fraction(1))]
    for n in range(1, m + 1):
        gap = Fraction(1, 4 ** n)
        nxt = []
        for a, b in iv:
            c = (a + b) / 2
            nxt += [(a, c - gap / 2), (c + gap / 2, b)]
        iv = nxt
    return CantorSet(tuple(iv), m)
