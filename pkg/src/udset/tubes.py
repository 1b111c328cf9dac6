"""Tube triples, the level recursion, and membership in M_k, J_k and T_lambda.

The recursion is far too large to materialise at useful depth (a single
level-1 expansion of the default root holds ~10^7 wedges), so the
construction is kept implicit.  Children of a tube are generated on demand
near a query point, and only witness chains, the root's self-chains and
approximation certificates are stored.  Stored triples carry the same ids
they would have in the full recursion.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ambient import GScaffold, net_pitch_exponent, passes_filter, snap_wedge, WedgeFamily
from .config import ConfigError, RunConfig, TubeConfig, AmbientConfig, as_fraction
from .geometry import Wedge, points_wedge_distance, sample_wedge, wedge_distance

SENTINEL = 2 ** 64 - 1
WIDTH_SLACK = 1.0 - 2.0 ** -20
FORMAT_MAGIC = b"UDSC"
FORMAT_VERSION = 1
RECORD = struct.Struct("<QQIQdd")


class BudgetExceeded(RuntimeError):
    def __init__(self, msg, counts):
        super().__init__(msg)
        self.counts = counts


class OutOfRange(ValueError):
    def __init__(self, msg, delta1):
        super().__init__(msg)
        self.delta1 = delta1


class CorruptFile(ValueError):
    pass


def dyadic_floor(x):
    """Largest power of two <= x (elementwise for arrays)."""
    if np.ndim(x):
        return np.ldexp(0.5, np.frexp(np.asarray(x, dtype=float))[1])
    if not x > 0:
        raise ValueError("dyadic_floor needs a positive value")
    return math.ldexp(0.5, math.frexp(x)[1])


class RklSchedule:
    """The constants r_{k,l}, extended lazily to any depth.

    r_{k+1,l} = min(rho/20, min_{l<l'<=k} r_{l',l} / k, and 1/k when l = k).
    """

    def __init__(self, rho, overrides: dict | None = None):
        self.rho = as_fraction(rho)
        self.overrides = {(int(k), int(l)): as_fraction(v) for (k, l), v in (overrides or {}).items()}
        self._t: dict = {}
        self._kmax = 0

    def _extend(self, kmax: int):
        while self._kmax < kmax:
            k = self._kmax
            for l in range(k + 1):
                if (k + 1, l) in self.overrides:
                    val = self.overrides[(k + 1, l)]
                else:
                    cands = [self.rho / 20]
                    if k >= 1:
                        inner = [self._t[(lp, l)] for lp in range(l + 1, k + 1)]
                        if inner:
                            cands.append(min(inner) / k)
                        if l == k:
                            cands.append(Fraction(1, k))
                    val = min(cands)
                self._t[(k + 1, l)] = val
            self._kmax += 1

    def __call__(self, k: int, l: int) -> Fraction:
        if not 0 <= l < k:
            raise ConfigError(f"no schedule entry r[{k},{l}]: need 0 <= l < k")
        self._extend(k)
        return self._t[(k, l)]

    def table(self, K: int) -> dict:
        self._extend(K)
        return {key: v for key, v in self._t.items() if key[0] <= K}

    def violations(self, K: int) -> list[str]:
        self._extend(K)
        out = []
        for (k, l), v in sorted(self._t.items()):
            if k > K:
                continue
            if not 0 < v < self.rho / 10:
                out.append(f"r[{k},{l}] = {v} outside (0, rho/10)")
        for k in range(1, K):
            if self._t[(k + 1, k)] > Fraction(1, k):
                out.append(f"r[{k + 1},{k}] > 1/{k}")
            for l in range(k):
                for lp in range(l + 1, k + 1):
                    if self._t[(k + 1, l)] > self._t[(lp, l)] / k:
                        out.append(f"r[{k + 1},{l}] > r[{lp},{l}]/{k}")
        return out


@dataclass(frozen=True)
class TubeTriple:
    id: int
    r: int  # index into the construction's wedge registry
    level: int
    parent: int | None
    w: float
    alpha: float
    wedge: Wedge = field(compare=False)


@dataclass(frozen=True)
class Step:
    """One link of a chain, relative to the previous wedge."""

    level: int
    w: float
    alpha: float
    wedge: tuple | None  # None means the self-child (same wedge as before)


@dataclass(frozen=True)
class MembershipWitness:
    chain: tuple  # ((level, triple id), ...) starting at (0, root id)
    w: float
    steps: tuple = field(default=(), compare=False, repr=False)

    @property
    def level(self) -> int:
        return self.chain[-1][0]


def triple_id(parent_id: int, level: int, wedge: np.ndarray) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<QI", parent_id, level))
    h.update(np.ascontiguousarray(wedge, dtype="<f8").tobytes())
    v = int.from_bytes(h.digest(), "little")
    return v if v not in (0, SENTINEL) else v ^ 1


# ---------------------------------------------------------------- geometry kernels

def wedges_point_distance(W: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Distance from one point to each wedge in an (n, 3, d) array."""
    out = None
    for i in (0, 1):
        a, b = W[:, i], W[:, i + 1]
        ab = b - a
        den = np.einsum("ij,ij->i", ab, ab)
        s = np.einsum("ij,ij->i", y - a, ab)
        s = np.where(den > 0, np.clip(s / np.where(den > 0, den, 1.0), 0.0, 1.0), 0.0)
        dist = np.linalg.norm(y - (a + s[:, None] * ab), axis=1)
        out = dist if out is None else np.minimum(out, dist)
    return out


def _quad_interval(A, B, C):
    """Solutions s of A s^2 + 2 B s + C <= 0 as (lo, hi); empty gives lo > hi."""
    lo = np.full(A.shape, np.inf)
    hi = np.full(A.shape, -np.inf)
    lin = A <= 1e-300
    allr = lin & (C <= 0)
    lo[allr], hi[allr] = -np.inf, np.inf
    q = ~lin
    disc = B[q] ** 2 - A[q] * C[q]
    ok = disc >= 0
    root = np.sqrt(np.where(ok, disc, 0.0))
    l_ = np.where(ok, (-B[q] - root) / A[q], np.inf)
    h_ = np.where(ok, (-B[q] + root) / A[q], -np.inf)
    lo[q], hi[q] = l_, h_
    return lo, hi


def _capsule_interval(p0, u, a, b, R):
    """Parameter interval of p0 + s u inside the capsule of [a, b] with radius R."""
    R2 = R * R
    los, his = [], []
    for c in (a, b):
        q = p0 - c
        lo, hi = _quad_interval(np.einsum("ij,ij->i", u, u), np.einsum("ij,ij->i", q, u),
                                np.einsum("ij,ij->i", q, q) - R2)
        los.append(lo)
        his.append(hi)
    ab = b - a
    L = np.linalg.norm(ab, axis=1)
    e = ab / np.where(L > 0, L, 1.0)[:, None]
    q0 = p0 - a
    q0e = np.einsum("ij,ij->i", q0, e)
    ue = np.einsum("ij,ij->i", u, e)
    q0p = q0 - q0e[:, None] * e
    up = u - ue[:, None] * e
    lo, hi = _quad_interval(np.einsum("ij,ij->i", up, up), np.einsum("ij,ij->i", q0p, up),
                            np.einsum("ij,ij->i", q0p, q0p) - R2)
    # 0 <= q0e + s ue <= L
    with np.errstate(divide="ignore", invalid="ignore"):
        s1 = np.where(ue != 0, (0.0 - q0e) / ue, np.nan)
        s2 = np.where(ue != 0, (L - q0e) / ue, np.nan)
    llo = np.where(ue != 0, np.minimum(s1, s2), np.where((q0e >= 0) & (q0e <= L), -np.inf, np.inf))
    lhi = np.where(ue != 0, np.maximum(s1, s2), np.where((q0e >= 0) & (q0e <= L), np.inf, -np.inf))
    lo, hi = np.maximum(lo, llo), np.minimum(hi, lhi)
    bad = L <= 0
    lo[bad], hi[bad] = np.inf, -np.inf
    los.append(lo)
    his.append(hi)
    LO, HI = np.stack(los), np.stack(his)
    nonempty = LO <= HI
    lo = np.where(nonempty, LO, np.inf).min(axis=0)
    hi = np.where(nonempty, HI, -np.inf).max(axis=0)
    return lo, hi


def wedges_in_neighbourhood(W: np.ndarray, P: np.ndarray, R: float, tol: float = 1e-12) -> np.ndarray:
    """True where K of each wedge in W lies in the closed R-neighbourhood of K_P."""
    W = np.asarray(W, dtype=float)
    n = len(W)
    ok = np.ones(n, dtype=bool)
    Rt = R * (1.0 + tol) + tol * 1e-3
    caps = [(np.broadcast_to(P[i], (n, P.shape[1])), np.broadcast_to(P[i + 1], (n, P.shape[1]))) for i in (0, 1)]
    for i in (0, 1):
        p0 = W[:, i]
        u = W[:, i + 1] - p0
        (l1, h1), (l2, h2) = (_capsule_interval(p0, u, a, b, Rt) for a, b in caps)
        e = 1e-12
        c1 = (l1 <= e) & (h1 >= 1 - e)
        c2 = (l2 <= e) & (h2 >= 1 - e)
        joint = (np.minimum(l1, l2) <= e) & (np.maximum(h1, h2) >= 1 - e) & \
            (np.maximum(l1, l2) <= np.minimum(h1, h2) + e) & (l1 <= h1) & (l2 <= h2)
        ok &= c1 | c2 | joint
    return ok


def wedge_diameters(W: np.ndarray) -> np.ndarray:
    d01 = np.linalg.norm(W[:, 0] - W[:, 1], axis=1)
    d12 = np.linalg.norm(W[:, 1] - W[:, 2], axis=1)
    d02 = np.linalg.norm(W[:, 0] - W[:, 2], axis=1)
    return np.maximum(np.maximum(d01, d12), d02)


def grid_ball(center: np.ndarray, radius: float, h: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    axes = []
    for c, a, b in zip(center, lo, hi):
        i0 = max(math.ceil((c - radius) / h), math.ceil(a / h))
        i1 = min(math.floor((c + radius) / h), math.floor(b / h))
        axes.append(np.arange(i0, i1 + 1, dtype=float) * h)
    if any(len(a) == 0 for a in axes):
        return np.zeros((0, len(center)))
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    return pts[np.linalg.norm(pts - center, axis=1) <= radius]


def near_grid_wedges(center, radius: float, pitch_exp: int, cap: float, lo, hi, phi) -> np.ndarray:
    """Filtered grid wedges at pitch 2**-pitch_exp, diameter <= cap, within radius of center.

    Returned rows are unique and sorted lexicographically by vertex coordinates.
    """
    center = np.asarray(center, dtype=float)
    h = math.ldexp(1.0, -pitch_exp)
    pts = grid_ball(center, cap + radius, h, lo, hi)
    d = center.shape[0]
    if len(pts) < 2:
        return np.zeros((0, 3, d))
    i, j = np.triu_indices(len(pts), 1)
    a, b = pts[i], pts[j]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    keep = L2 <= cap * cap
    a, b, ab, L2 = a[keep], b[keep], ab[keep], L2[keep]
    s = np.clip(np.einsum("ij,ij->i", center - a, ab) / L2, 0.0, 1.0)
    near = np.linalg.norm(center - (a + s[:, None] * ab), axis=1) <= radius
    a, b = a[near], b[near]
    fa, fb = a @ phi, b @ phi
    arm = fa != fb
    a, b = a[arm], b[arm]
    if len(a) == 0:
        return np.zeros((0, 3, d))
    A = np.concatenate([a, b])
    B = np.concatenate([b, a])
    m, P = len(A), len(pts)
    Ar = np.repeat(A, P, axis=0)
    Br = np.repeat(B, P, axis=0)
    C = np.tile(pts, (m, 1))
    # second arm near; drop wedges whose first arm is also near (already listed)
    near_pairs = {(x.tobytes(), z.tobytes()) for x, z in zip(A, B)}
    dup = np.fromiter(((c.tobytes(), x.tobytes()) in near_pairs for c, x in zip(C, Ar)), bool, len(C))
    W = np.concatenate([np.stack([Ar, Br, C], axis=1), np.stack([C[~dup], Ar[~dup], Br[~dup]], axis=1)])
    ok = passes_filter(W, phi) & (wedge_diameters(W) <= cap)
    return W[ok]


def lex_order(W: np.ndarray, primary: np.ndarray | None = None) -> np.ndarray:
    """Indices sorting wedges by (primary, vertex coordinates)."""
    if len(W) == 0:
        return np.zeros(0, dtype=np.int64)
    flat = W.reshape(len(W), -1)
    keys = [flat[:, i] for i in range(flat.shape[1] - 1, -1, -1)]
    if primary is not None:
        keys.append(primary)
    return np.lexsort(keys) if len(W) else np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------------- construction

@dataclass
class Node:
    level: int
    w: float
    alpha: float
    wedge: np.ndarray
    profile: tuple  # dyadic floor of min(eta(W, n), eps0/n slack) for n = 1..Kp

    @property
    def key(self) -> bytes:
        return self.wedge.tobytes()


class Construction:
    """Implicit tube recursion with a store of materialised triples."""

    def __init__(self, tubes: TubeConfig | None = None, ambient: AmbientConfig | None = None,
                 lambdas: Sequence[float] = (0.25, 0.5), seed: int = 0):
        self.tubes = tubes or TubeConfig()
        self.ambient = ambient or AmbientConfig()
        self.lambdas = tuple(float(x) for x in lambdas)
        self.seed = int(seed)
        t, a = self.tubes, self.ambient
        self.K = t.K
        self.rho = t.rho_q
        self.eps0 = float(t.eps0)
        self.cap_ratio = float(t.net_diameter_ratio)
        self.schedule = RklSchedule(self.rho, {(k, l): v for k, l, v in t.schedule_overrides})
        self.phi = np.asarray(a.phi, dtype=float)
        self.lo = np.asarray(a.bbox[0], dtype=float)
        self.hi = np.asarray(a.bbox[1], dtype=float)
        self.d = a.d
        self.scaffold = GScaffold(tuple(a.phi), j_base=a.j_base, index_mode="generation")
        self.root_wedge = Wedge.from_array(np.asarray(t.root, dtype=float))
        root = self.root_wedge.array
        if not passes_filter(root, self.phi):
            raise ConfigError("root wedge fails the W1 filter")
        if np.any(root < self.lo) or np.any(root > self.hi):
            raise ConfigError("root wedge lies outside the bounding box")
        self.wedges: list[Wedge] = []
        self._wedge_ix: dict[bytes, int] = {}
        self.triples: dict[int, TubeTriple] = {}
        self._tile_cache: dict = {}
        self.tile_factor = 2.0
        self.root = self._store(TubeTriple(0, self._intern(root), 0, None, float(t.w0), float(t.alpha0),
                                           self.root_wedge), check=False)
        self.index = SpatialIndex(float(t.alpha0) / 8)
        self.index.add(self.root)

    # -- parameters
    def cap(self, n: int) -> float:
        return self.eps0 / n * WIDTH_SLACK

    def profile(self, W: np.ndarray, upto: int | None = None) -> np.ndarray:
        """(m, upto) array of dyadic floors of min(eta(W, n), cap(n))."""
        W = np.asarray(W, dtype=float)
        single = W.ndim == 2
        W = W[None] if single else W
        upto = upto or self.K
        if len(W) == 0:
            return np.zeros((0, upto))
        ns = np.arange(1, upto + 1)
        eta = self.scaffold.eta_profile(W, ns)
        out = dyadic_floor(np.minimum(eta, self.eps0 / ns * WIDTH_SLACK))
        return out[0] if single else out

    def child_alpha(self, level: int, w: float, k: int) -> float:
        return float(self.schedule(k, level) * Fraction(w))

    def net_eps(self, level: int, w: float, k: int) -> float:
        return float(Fraction(10) / self.rho * self.schedule(k, level) * Fraction(w))

    def child_params(self, level: int, w: float, alpha: float, k: int):
        ac = self.child_alpha(level, w, k)
        eps = self.net_eps(level, w, k)
        pexp = net_pitch_exponent(eps, self.d)
        cap = self.cap_ratio * alpha + 2.0 * eps
        return ac, eps, pexp, cap

    def child_width(self, ac: float, prof_k: float) -> float:
        return min(dyadic_floor(ac), prof_k)

    def node_of(self, tri: TubeTriple, upto: int | None = None) -> Node:
        arr = tri.wedge.array
        return Node(tri.level, tri.w, tri.alpha, arr, tuple(self.profile(arr, upto or self.K)))

    # -- storage
    def _intern(self, arr: np.ndarray) -> int:
        key = np.ascontiguousarray(arr, dtype=float).tobytes()
        ix = self._wedge_ix.get(key)
        if ix is None:
            ix = len(self.wedges)
            self.wedges.append(Wedge.from_array(arr))
            self._wedge_ix[key] = ix
        return ix

    def _store(self, tri: TubeTriple, check: bool = True) -> TubeTriple:
        if tri.id in self.triples:
            return self.triples[tri.id]
        if len(self.triples) >= self.tubes.budget:
            raise BudgetExceeded(f"triple budget {self.tubes.budget} exceeded", self.level_counts())
        if check:
            bad = self.triple_violations(tri)
            if bad:
                raise AssertionError(f"triple {tri.id} violates {bad}")
        self.triples[tri.id] = tri
        if hasattr(self, "index"):
            self.index.add(tri)
        return tri

    def make_child(self, parent: TubeTriple, k: int, wedge: np.ndarray) -> TubeTriple:
        ac, _, _, _ = self.child_params(parent.level, parent.w, parent.alpha, k)
        prof = self.profile(wedge, k)
        v = self.child_width(ac, float(prof[k - 1]))
        tid = triple_id(parent.id, k, wedge)
        return TubeTriple(tid, -1, k, parent.id, v, ac, Wedge.from_array(wedge))

    def store_child(self, parent: TubeTriple, k: int, wedge: np.ndarray) -> TubeTriple:
        tri = self.make_child(parent, k, wedge)
        if tri.id in self.triples:
            return self.triples[tri.id]
        tri = TubeTriple(tri.id, self._intern(tri.wedge.array), tri.level, tri.parent, tri.w, tri.alpha, tri.wedge)
        return self._store(tri)

    def store_steps(self, steps: Sequence[Step]) -> list[TubeTriple]:
        cur = self.root
        out = [cur]
        for st in steps:
            arr = cur.wedge.array if st.wedge is None else np.asarray(st.wedge, dtype=float)
            cur = self.store_child(cur, st.level, arr)
            out.append(cur)
        return out

    def levels(self) -> list[list[TubeTriple]]:
        K = max([t.level for t in self.triples.values()] + [self.K])
        out = [[] for _ in range(K + 1)]
        for t in self.triples.values():
            out[t.level].append(t)
        return out

    def level_counts(self) -> list[int]:
        return [len(x) for x in self.levels()]

    # -- invariants
    def triple_violations(self, tri: TubeTriple) -> list[str]:
        out = []
        if not 0 < tri.w <= tri.alpha < self.eps0:
            out.append("0 < w <= alpha < eps0")
        if tri.parent is None:
            return out
        par = self.triples.get(tri.parent)
        if par is None:
            return out + ["parent missing"]
        k = tri.level
        if not par.level < k:
            out.append("parent level below child level")
            return out
        ac = self.child_alpha(par.level, par.w, k)
        if tri.alpha != ac:
            out.append("alpha = r_kl * w_parent")
        if not Fraction(tri.alpha) < Fraction(par.alpha) / 10:
            out.append("alpha < alpha_parent / 10")
        if not tri.w < self.eps0 / k:
            out.append("w < eps0 / k")
        arr = tri.wedge.array
        if not passes_filter(arr, self.phi):
            out.append("W1 filter")
        if not tri.w <= float(self.scaffold.eta(arr, k)):
            out.append("tube inside G_k")
        if not wedges_in_neighbourhood(arr[None], par.wedge.array, 2 * par.alpha)[0]:
            out.append("child inside 2 alpha_parent neighbourhood")
        same = np.array_equal(arr, par.wedge.array)
        if not same:
            _, eps, pexp, cap = self.child_params(par.level, par.w, par.alpha, k)
            h = math.ldexp(1.0, -pexp)
            if not np.all(np.round(arr / h) * h == arr):
                out.append("vertices on the net grid")
            if wedge_diameters(arr[None])[0] > cap:
                out.append("diameter cap")
            if np.any(arr < self.lo) or np.any(arr > self.hi):
                out.append("inside bbox")
        return out

    def sweep(self) -> dict:
        bad = {}
        for t in self.triples.values():
            v = self.triple_violations(t)
            if v:
                bad[t.id] = v
        return bad

    # -- children near a point
    def near_children(self, node: Node, k2: int, y: np.ndarray, thr: float, tiled: bool = True):
        """Children of ``node`` at level k2 whose wedge lies within thr of y.

        Returns (wedges, dist, v, profiles) sorted by (distance, vertex order).
        The list is shared between parents with equal parameters; callers
        apply the containment filter when it is not automatic.
        """
        ac, eps, pexp, cap = self.child_params(node.level, node.w, node.alpha, k2)
        if tiled and thr > 0:
            side = self.tile_factor * thr
            tile = tuple(np.floor(y / side).astype(np.int64))
            center = (np.asarray(tile, dtype=float) + 0.5) * side
            key = (k2, ac, pexp, cap, thr, tile)
            W = self._tile_cache.get(key)
            if W is None:
                W = near_grid_wedges(center, thr + side * math.sqrt(self.d) / 2, pexp, cap, self.lo, self.hi, self.phi)
                if len(self._tile_cache) > 4096:
                    self._tile_cache.clear()
                self._tile_cache[key] = W
        else:
            W = near_grid_wedges(y, thr, pexp, cap, self.lo, self.hi, self.phi)
        if len(W) == 0:
            return W, np.zeros(0), np.zeros(0), np.zeros((0, max(self.K, k2)))
        dist = wedges_point_distance(W, y)
        m = dist <= thr
        W, dist = W[m], dist[m]
        order = lex_order(W, dist)
        W, dist = W[order], dist[order]
        prof = self.profile(W, max(self.K, k2))
        v = np.minimum(dyadic_floor(ac), prof[:, k2 - 1]) if len(W) else np.zeros(0)
        return W, dist, v, prof

    def containment_automatic(self, node: Node, k2: int, lam: float) -> bool:
        ac, eps, pexp, cap = self.child_params(node.level, node.w, node.alpha, k2)
        return lam * node.alpha + lam * ac + cap <= 2 * node.alpha * (1 - 1e-12)


class SpatialIndex:
    """Uniform grid over stored wedges inflated by their safety radius."""

    def __init__(self, cell: float):
        self.cell = float(cell)
        self.cells: dict[tuple, list[int]] = {}
        self.boxes: dict[int, tuple] = {}

    def add(self, tri: TubeTriple):
        arr = tri.wedge.array
        lo = np.floor((arr.min(axis=0) - tri.alpha) / self.cell).astype(int)
        hi = np.floor((arr.max(axis=0) + tri.alpha) / self.cell).astype(int)
        self.boxes[tri.id] = (tuple(lo), tuple(hi))
        for c in np.ndindex(*(hi - lo + 1)):
            self.cells.setdefault(tuple(lo + np.asarray(c)), []).append(tri.id)

    def candidates(self, y, radius: float) -> list[int]:
        y = np.asarray(y, dtype=float)
        lo = np.floor((y - radius) / self.cell).astype(int)
        hi = np.floor((y + radius) / self.cell).astype(int)
        out = set()
        for c in np.ndindex(*(hi - lo + 1)):
            out.update(self.cells.get(tuple(lo + np.asarray(c)), ()))
        return sorted(out)

    def query(self, con: Construction, y, radius: float) -> list[int]:
        ids = self.candidates(y, radius)
        if not ids:
            return []
        W = np.stack([con.triples[i].wedge.array for i in ids])
        dist = wedges_point_distance(W, np.asarray(y, dtype=float))
        return [i for i, dd in zip(ids, dist) if dd <= radius]

    def __eq__(self, other):
        return isinstance(other, SpatialIndex) and self.cell == other.cell and \
            {k: sorted(v) for k, v in self.cells.items()} == {k: sorted(v) for k, v in other.cells.items()}


# ---------------------------------------------------------------- membership

def _as_tuple(a: np.ndarray) -> tuple:
    return tuple(tuple(map(float, row)) for row in a)


class MembershipEngine:
    """Depth-first witness search for M_k(lambda[, w]) over the implicit recursion.

    Canonical order: levels ascending, the self-child first, then generic
    children by (distance to y, vertex coordinates).  When the containment
    test is automatic, the answer below a child only depends on its level,
    width, safety radius, eta profile and distance to y, and is monotone in
    that distance; equivalent children are then explored once.
    """

    def __init__(self, con: Construction, lam: float, width: float | None = None, naive: bool = False):
        if not 0 <= lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        self.con = con
        self.lam = float(lam)
        self.width = width
        self.naive = naive
        self._y = None
        self._memo: dict = {}
        self.root_node = con.node_of(con.root)
        self.expanded = 0

    def _set_point(self, y):
        y = np.asarray(y, dtype=float)
        if self._y is None or not np.array_equal(y, self._y):
            self._y = y.copy()
            self._memo = {}
            self._d_root = float(points_wedge_distance(y[None], self.root_node.wedge)[0])

    def _terminal_ok(self, w: float, d: float) -> bool:
        return d <= self.lam * w and (self.width is None or w == self.width)

    def _sensitive(self, node: Node, k: int) -> bool:
        if self.naive:
            return True
        return not all(self.con.containment_automatic(node, k2, self.lam) for k2 in range(node.level + 1, k + 1))

    def _reach(self, node: Node, k: int, d: float):
        if node.level == k:
            return () if self._terminal_ok(node.w, d) else None
        sens = self._sensitive(node, k)
        key = (node.level, node.w, node.alpha, node.profile, k, node.key if sens else None)
        rec = self._memo.get(key)
        if rec is not None:
            if self.naive:
                if rec[0] == d:
                    return rec[1]
            else:
                sd, spath, fd = rec
                if sd is not None and d <= sd:
                    return spath
                if fd is not None and d >= fd:
                    return None
        res = self._search(node, k, d)
        if self.naive:
            self._memo[key] = (d, res)
        else:
            sd, spath, fd = rec if rec is not None else (None, None, None)
            if res is not None and (sd is None or d > sd):
                sd, spath = d, res
            if res is None and (fd is None or d < fd):
                fd = d
            self._memo[key] = (sd, spath, fd)
        return res

    def _search(self, node: Node, k: int, d: float):
        con, lam = self.con, self.lam
        for k2 in range(node.level + 1, k + 1):
            ac = con.child_alpha(node.level, node.w, k2)
            v = con.child_width(ac, node.profile[k2 - 1])
            if k2 == k:
                if self._terminal_ok(v, d):
                    return (Step(k2, v, ac, None),)
            elif d <= lam * ac:
                sub = self._reach(Node(k2, v, ac, node.wedge, node.profile), k, d)
                if sub is not None:
                    return (Step(k2, v, ac, None),) + sub
            self.expanded += 1
            W, dist, vs, prof = con.near_children(node, k2, self._y, lam * ac, tiled=not self.naive)
            if len(W) == 0:
                continue
            if self.naive or not con.containment_automatic(node, k2, lam):
                keep = wedges_in_neighbourhood(W, node.wedge, 2 * node.alpha)
                W, dist, vs, prof = W[keep], dist[keep], vs[keep], prof[keep]
            if k2 == k:
                ok = dist <= lam * vs
                if self.width is not None:
                    ok &= vs == self.width
                hit = np.flatnonzero(ok)
                if len(hit):
                    i = hit[0]
                    return (Step(k2, float(vs[i]), ac, _as_tuple(W[i])),)
                continue
            seen = set()
            for i in range(len(W)):
                child = Node(k2, float(vs[i]), ac, W[i], tuple(prof[i, :len(node.profile)]))
                if self._sensitive(child, k):
                    g = child.key
                else:
                    g = (child.w, child.profile)
                if g in seen:
                    continue
                seen.add(g)
                sub = self._reach(child, k, float(dist[i]))
                if sub is not None:
                    return (Step(k2, child.w, ac, _as_tuple(W[i])),) + sub
        return None

    # -- public queries
    def steps_M(self, y, k: int):
        if not 1 <= k:
            raise ValueError("level must be >= 1")
        self._set_point(y)
        if not self._d_root <= self.lam * self.root_node.alpha:
            return None
        return self._reach(self.root_node, k, self._d_root)

    def witness_M(self, y, k: int) -> MembershipWitness | None:
        steps = self.steps_M(y, k)
        if steps is None:
            return None
        return self._witness(steps)

    def _witness(self, steps) -> MembershipWitness:
        chain = [(0, self.con.root.id)]
        cur_id, cur_w = self.con.root.id, self.root_node.wedge
        w = self.con.root.w
        for st in steps:
            arr = cur_w if st.wedge is None else np.asarray(st.wedge, dtype=float)
            cur_id = triple_id(cur_id, st.level, arr)
            cur_w = arr
            chain.append((st.level, cur_id))
            w = st.w
        return MembershipWitness(tuple(chain), w, tuple(steps))

    def j_range(self, k: int) -> range:
        top = math.floor((1 + Fraction(self.lam)) * k)
        return range(k, min(top, self.con.K) + 1)

    def witness_J(self, y, k: int) -> MembershipWitness | None:
        for n in self.j_range(k):
            wit = self.witness_M(y, n)
            if wit is not None:
                return wit
        return None

    def in_M(self, y, k: int) -> bool:
        return self.steps_M(y, k) is not None

    def in_J(self, y, k: int) -> bool:
        return any(self.steps_M(y, n) is not None for n in self.j_range(k))

    def in_T(self, y) -> bool:
        return all(self.in_J(y, k) for k in range(1, self.con.K + 1))

    def witnesses_T(self, y) -> list[MembershipWitness] | None:
        out = []
        for k in range(1, self.con.K + 1):
            wit = self.witness_J(y, k)
            if wit is None:
                return None
            out.append(wit)
        return out


def membership_M(y, k: int, lam: float, con: Construction, width: float | None = None):
    if not 1 <= k <= con.K:
        raise ValueError("need 1 <= k <= K")
    return MembershipEngine(con, lam, width).witness_M(y, k)


def membership_J(y, k: int, lam: float, con: Construction) -> bool:
    if not 1 <= k <= con.K:
        raise ValueError("need 1 <= k <= K")
    return MembershipEngine(con, lam).in_J(y, k)


def membership_T(y, lam: float, con: Construction) -> bool:
    return MembershipEngine(con, lam).in_T(y)


# ---------------------------------------------------------------- expansion

def expand(con: Construction, parent: TubeTriple, k: int, limit: int = 200_000) -> list[TubeTriple]:
    """Every triple of the expansion of ``parent`` at level k (small cases only)."""
    if not 0 <= parent.level < k:
        raise ConfigError("expand needs parent level < k")
    node = con.node_of(parent, k)
    ac, eps, pexp, cap = con.child_params(parent.level, parent.w, parent.alpha, k)
    arr = parent.wedge.array
    h = math.ldexp(1.0, -pexp)
    center = arr.mean(axis=0)
    reach = float(np.max(np.linalg.norm(arr - center, axis=1))) + 2 * parent.alpha
    pts = grid_ball(center, reach, h, con.lo, con.hi)
    pts = pts[points_wedge_distance(pts, arr) <= 2 * parent.alpha]
    est = len(pts) * min(len(pts), (2 * cap / h + 1) ** con.d) ** 2
    if est > limit * 50:
        raise BudgetExceeded(f"expansion too large to enumerate (~{est:.3g} candidates)", con.level_counts())
    out = [con.make_child(parent, k, arr)]
    ds = np.linalg.norm(pts[:, None] - pts[None], axis=2) <= cap
    for i1 in range(len(pts)):
        for i2 in np.flatnonzero(ds[i1]):
            if pts[i1] @ con.phi == pts[i2] @ con.phi:
                continue
            cs = np.flatnonzero(ds[i2] & ds[i1])
            if len(cs) == 0:
                continue
            W = np.stack([np.broadcast_to(pts[i1], (len(cs), con.d)), np.broadcast_to(pts[i2], (len(cs), con.d)),
                          pts[cs]], axis=1)
            W = W[passes_filter(W, con.phi)]
            if len(W) == 0:
                continue
            W = W[wedges_in_neighbourhood(W, arr, 2 * parent.alpha)]
            for w in W:
                if np.array_equal(w, arr):
                    continue
                out.append(con.make_child(parent, k, w))
                if len(out) > limit:
                    raise BudgetExceeded("expansion exceeds the enumeration limit", con.level_counts())
    return out


def expansion_in_ball(con: Construction, parent: TubeTriple, k: int, center, radius: float) -> np.ndarray:
    """Brute-force list of expansion wedges with K_t inside B(center, radius)."""
    ac, eps, pexp, cap = con.child_params(parent.level, parent.w, parent.alpha, k)
    h = math.ldexp(1.0, -pexp)
    pts = grid_ball(np.asarray(center, dtype=float), radius, h, con.lo, con.hi)
    n = len(pts)
    if n == 0:
        return np.zeros((0, 3, con.d))
    I = np.stack(np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij"), -1).reshape(-1, 3)
    W = pts[I]
    W = W[passes_filter(W, con.phi) & (wedge_diameters(W) <= cap)]
    W = W[wedges_in_neighbourhood(W, parent.wedge.array, 2 * parent.alpha)]
    return W


# ---------------------------------------------------------------- build

def probe_points(con: Construction, n: int, seed: int) -> np.ndarray:
    """Deterministic workload: points on the root wedge and small offsets from it."""
    rng = np.random.default_rng(seed)
    arr = con.root_wedge.array
    pts = []
    for i in range(n):
        s = rng.random()
        arm = i % 2
        p = arr[arm] + s * (arr[arm + 1] - arr[arm])
        pts.append(p)
    for i in range(n):
        p = pts[i] + rng.normal(size=con.d) * con.tubes.w0 / 64
        pts.append(p)
    return np.asarray(pts)


def build(config: RunConfig | None = None, progress=None) -> Construction:
    cfg = (config or RunConfig()).validate()
    con = Construction(cfg.tubes, cfg.ambient, cfg.lambdas, cfg.seed)
    # root self-chains: every increasing level sequence ending anywhere <= K
    for k in range(1, con.K + 1):
        for par in [t for t in con.triples.values() if t.level < k and _is_self_chain(con, t)]:
            con.store_child(par, k, par.wedge.array)
    pts = probe_points(con, cfg.tubes.probe_points, cfg.seed)
    for lam in cfg.lambdas:
        eng = MembershipEngine(con, lam)
        for y in pts:
            for k in range(1, con.K + 1):
                wit = eng.witness_J(y, k)
                if wit is not None:
                    con.store_steps(wit.steps)
        if progress:
            progress(lam, con.level_counts())
    return con


def _is_self_chain(con: Construction, t: TubeTriple) -> bool:
    return bool(np.array_equal(t.wedge.array, con.root_wedge.array))


# ---------------------------------------------------------------- approximation

@dataclass(frozen=True)
class ApproxCertificate:
    triple: TubeTriple
    distance: float
    delta1: float
    ancestor_index: int  # position m in the witness chain
    ancestor_level: int
    level: int
    eps: float
    samples_checked: int
    witness_levels: tuple


def delta1_from_widths(widths: Sequence[float], psi: float, eta: float, rho: Fraction) -> float:
    kmax = min(len(widths), max(1, math.floor(20 / (float(rho) * psi * eta))))
    return psi / 2 * min(widths[:kmax]) * WIDTH_SLACK


def approximating_tube(y, delta: float, s: Wedge, lam_prime: float, lam: float, con: Construction,
                       eta: float = 0.9, n_samples: int = 9, check: bool = True,
                       witnesses: list | None = None) -> ApproxCertificate:
    """A tube triple within eta*delta of s whose wedge lies in T_lambda."""
    y = np.asarray(y, dtype=float)
    psi = lam - lam_prime
    if not psi > 0:
        raise ValueError("need lambda' < lambda")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if psi > con.cap_ratio:
        raise ConfigError(f"lambda - lambda' = {psi} exceeds the net diameter ratio {con.cap_ratio}")
    if witnesses is None:
        witnesses = MembershipEngine(con, lam_prime).witnesses_T(y)
    if witnesses is None:
        raise ValueError("y is not a member at lambda'")
    widths = [wit.w for wit in witnesses]
    d1 = delta1_from_widths(widths, psi, eta, con.rho)
    if not 0 < delta < d1:
        raise OutOfRange(f"delta {delta} outside (0, delta1={d1})", d1)
    if not np.all(np.linalg.norm(s.array - y, axis=1) <= delta):
        raise ValueError("K_s is not inside the closed delta-ball around y")
    wit = witnesses[-1]
    chain = con.store_steps(wit.steps)
    alphas = [t.alpha for t in chain]
    m = len(chain) - 1
    if not 2 * delta <= psi * alphas[m]:
        m = max(i for i in range(len(chain)) if 2 * delta <= psi * alphas[i])
    anc = chain[m]
    target = min(eta, 1.0) * delta
    k_new = wit.level + 1
    while con.net_eps(anc.level, anc.w, k_new) >= target:
        k_new += 1
        if k_new > wit.level + 64:
            raise RuntimeError("no level gives a fine enough net")
    _, eps, pexp, cap = con.child_params(anc.level, anc.w, anc.alpha, k_new)
    arr = snap_wedge(s.array, pexp, con.phi)
    tri = con.store_child(anc, k_new, arr)
    dist = wedge_distance(tri.wedge, s)
    if not dist < eta * delta:
        raise AssertionError("snapped wedge misses the target distance")
    n_checked = 0
    if check:
        eng = MembershipEngine(con, lam)
        step = max(tri.wedge.length / max(n_samples - 1, 1), 1e-15)
        for z in sample_wedge(tri.wedge, step):
            n_checked += 1
            if not eng.in_T(z):
                raise AssertionError(f"sample {z} of the approximating tube is not in T")
    return ApproxCertificate(tri, dist, d1, m, anc.level, k_new, eps, n_checked,
                             tuple(w.level for w in witnesses))


# ---------------------------------------------------------------- persistence

def _header(con: Construction) -> dict:
    sched = con.schedule.table(max(con.K, max(t.level for t in con.triples.values())))
    return {
        "format": "udset-construction",
        "version": FORMAT_VERSION,
        "tubes": RunConfig(tubes=con.tubes).to_dict()["tubes"],
        "ambient": RunConfig(ambient=con.ambient).to_dict()["ambient"],
        "lambdas": list(con.lambdas),
        "seed": con.seed,
        "schedule": [[k, l, str(v)] for (k, l), v in sorted(sched.items())],
        "counts": con.level_counts(),
        "n_triples": len(con.triples),
        "n_wedges": len(con.wedges),
        "d": con.d,
    }


def dumps(con: Construction) -> bytes:
    head = json.dumps(_header(con), sort_keys=True).encode()
    body = io.BytesIO()
    for wdg in con.wedges:
        body.write(np.ascontiguousarray(wdg.array, dtype="<f8").tobytes())
    for t in sorted(con.triples.values(), key=lambda t: (t.level, t.id)):
        body.write(RECORD.pack(t.id, t.r, t.level, SENTINEL if t.parent is None else t.parent, t.w, t.alpha))
    payload = body.getvalue()
    digest = hashlib.blake2b(head + payload, digest_size=16).digest()
    return FORMAT_MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(head)) + head + payload + digest


def save(con: Construction, path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(dumps(con))
    return p


def loads(raw: bytes) -> Construction:
    if len(raw) < 16 or raw[:4] != FORMAT_MAGIC:
        raise CorruptFile("not a construction file")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != FORMAT_VERSION:
        raise CorruptFile(f"unsupported format version {version}")
    off = 16
    if len(raw) < off + hlen + 16:
        raise CorruptFile("file truncated inside the header")
    head_b = raw[off:off + hlen]
    payload = raw[off + hlen:-16]
    if hashlib.blake2b(head_b + payload, digest_size=16).digest() != raw[-16:]:
        raise CorruptFile("checksum mismatch (truncated or corrupt file)")
    head = json.loads(head_b)
    d, nw, nt = head["d"], head["n_wedges"], head["n_triples"]
    wbytes = nw * 3 * d * 8
    if len(payload) != wbytes + nt * RECORD.size:
        raise CorruptFile("payload length mismatch")
    cfg = RunConfig.from_dict({"tubes": head["tubes"], "ambient": head["ambient"]})
    con = Construction(cfg.tubes, cfg.ambient, head["lambdas"], head["seed"])
    arrs = np.frombuffer(payload[:wbytes], dtype="<f8").reshape(nw, 3, d)
    con.wedges, con._wedge_ix = [], {}
    for a in arrs:
        con._intern(a.astype(float))
    con.triples = {}
    con.index = SpatialIndex(float(cfg.tubes.alpha0) / 8)
    for i in range(nt):
        tid, r, level, parent, w, alpha = RECORD.unpack_from(payload, wbytes + i * RECORD.size)
        tri = TubeTriple(tid, r, level, None if parent == SENTINEL else parent, w, alpha, con.wedges[r])
        con.triples[tid] = tri
        con.index.add(tri)
    con.root = con.triples[0]
    if con.level_counts() != head["counts"]:
        raise CorruptFile("level counts disagree with the header")
    return con


def load(path) -> Construction:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(p)
    return loads(p.read_bytes())


# ---------------------------------------------------------------- export

_LEVEL_COLOURS = ("#1b1b1b", "#c0392b", "#2471a3", "#229954", "#b9770e", "#7d3c98", "#17a589")


def to_svg(con: Construction, lam: float = 1.0, max_level: int | None = None, size: int = 800) -> str:
    tris = [t for t in con.triples.values() if max_level is None or t.level <= max_level]
    lo, hi = con.lo[:2], con.hi[:2]
    scale = size / float(max(hi - lo))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">']
    for t in sorted(tris, key=lambda t: (t.level, t.id)):
        a = t.wedge.array[:, :2]
        pts = " ".join(f"{(x - lo[0]) * scale:.6f},{(hi[1] - y) * scale:.6f}" for x, y in a)
        colour = _LEVEL_COLOURS[t.level % len(_LEVEL_COLOURS)]
        width = max(2 * lam * t.w * scale, 0.05)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="{width:.6g}" '
                   f'stroke-linejoin="round" data-level="{t.level}" data-id="{t.id}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def to_rows(con: Construction, max_level: int | None = None) -> list[dict]:
    rows = []
    for t in sorted(con.triples.values(), key=lambda t: (t.level, t.id)):
        if max_level is not None and t.level > max_level:
            continue
        rows.append({"id": t.id, "level": t.level, "parent": t.parent, "w": t.w, "alpha": t.alpha,
                     "wedge": t.wedge.to_json()})
    return rows
