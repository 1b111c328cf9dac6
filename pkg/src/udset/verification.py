"""Property suites over a built construction.

Every suite returns a SuiteReport.  Cases carry the seed they were drawn
with, so a failing case can be replayed on its own.  Cases that fall outside
the depth-K validity window are labelled "out-of-range" and never count as
failures.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .config import RunConfig, fmt_float
from .geometry import Wedge, box_dimension_estimate, points_wedge_distance, sample_wedge
from .ambient import passes_filter
from .tubes import (Construction, MembershipEngine, OutOfRange, approximating_tube, build, delta1_from_widths,
                    probe_points, wedge_diameters, wedges_in_neighbourhood)


@dataclass(frozen=True)
class Case:
    index: int
    inputs: dict
    expected: str
    observed: dict
    status: str  # "pass", "fail", "out-of-range" or "skipped"
    seed: int

    @property
    def failed(self) -> bool:
        return self.status == "fail"


@dataclass
class SuiteReport:
    suite: str
    config_hash: str = ""
    cases: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, inputs: dict, expected: str, observed: dict, ok: bool | None, seed: int, status: str | None = None):
        st = status or ("pass" if ok else "fail")
        self.cases.append(Case(len(self.cases), inputs, expected, observed, st, seed))

    @property
    def counts(self) -> dict:
        out = {"pass": 0, "fail": 0, "out-of-range": 0, "skipped": 0}
        for c in self.cases:
            out[c.status] += 1
        return out

    @property
    def passed(self) -> bool:
        return not any(c.failed for c in self.cases)

    def to_dict(self) -> dict:
        return _plain({"suite": self.suite, "config_hash": self.config_hash, "passed": self.passed,
                       "counts": self.counts, "notes": self.notes,
                       "cases": [c.__dict__ for c in self.cases]})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def summary_row(self) -> dict:
        c = self.counts
        return {"suite": self.suite, "passed": self.passed, **c}

    def to_text(self) -> str:
        c = self.counts
        head = f"{self.suite}: {'PASS' if self.passed else 'FAIL'}  pass={c['pass']} fail={c['fail']} " \
               f"out-of-range={c['out-of-range']} skipped={c['skipped']}"
        lines = [head]
        for case in self.cases:
            if case.failed:
                lines.append(f"  case {case.index} seed={case.seed} inputs={json.dumps(_plain(case.inputs))}")
        return "\n".join(lines)


def summary_csv(reports: Sequence[SuiteReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["suite", "passed", "pass", "fail", "out-of-range", "skipped"], lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.summary_row())
    return buf.getvalue()


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(fmt_float(float(x))) if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _case_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


# ---------------------------------------------------------------- tube invariants

def tube_invariants(con: Construction) -> SuiteReport:
    rep = SuiteReport("tube_invariants")
    for tri in sorted(con.triples.values(), key=lambda t: (t.level, t.id)):
        bad = con.triple_violations(tri)
        rep.add({"id": tri.id, "level": tri.level}, "no violated bound", {"violations": bad}, not bad, 0)
    return rep


# ---------------------------------------------------------------- nesting

def sample_near_root(con: Construction, n: int, rng: np.random.Generator, spread: float | None = None) -> np.ndarray:
    """Points within ``spread`` (default alpha0) of the root wedge, uniform in that neighbourhood."""
    spread = con.tubes.alpha0 if spread is None else spread
    arr = con.root_wedge.array
    lo = arr.min(axis=0) - spread
    hi = arr.max(axis=0) + spread
    out = []
    while len(out) < n:
        P = rng.uniform(lo, hi, size=(4 * n, con.d))
        P = P[points_wedge_distance(P, arr) <= spread]
        out.extend(P[: n - len(out)])
    return np.asarray(out)


def check_nesting(con: Construction, lambdas: Sequence[float] = (0.25, 0.5, 0.75), n: int = 1000,
                  seed: int = 0) -> SuiteReport:
    """Membership in T at lambda_1 implies membership at every lambda_2 >= lambda_1."""
    lams = sorted(set(float(l) for l in lambdas))
    rep = SuiteReport("nesting")
    rng = np.random.default_rng(seed)
    pts = sample_near_root(con, n, rng)
    engines = {l: MembershipEngine(con, l) for l in lams}
    for i, y in enumerate(pts):
        mem = [engines[l].in_T(y) for l in lams]
        ok = all(not a or b for a, b in zip(mem, mem[1:]))
        rep.add({"y": y, "lambdas": lams}, "membership monotone in lambda", {"member": mem}, ok, seed)
    return rep


# ---------------------------------------------------------------- hard work ball

def hardwork_ball(con: Construction, lambdas: Sequence[float] = (0.25, 0.5), n: int = 500, seed: int = 0,
                  n_points: int = 12) -> SuiteReport:
    """y in M_k(lambda, w) puts the closed psi*w ball around y inside M_k(lambda + psi, w)."""
    rep = SuiteReport("hardwork_ball")
    rng = np.random.default_rng(seed)
    base = np.vstack([probe_points(con, n_points, seed + 1), sample_near_root(con, n_points, rng, con.tubes.alpha0 / 4)])
    found = []
    for lam in lambdas:
        eng = MembershipEngine(con, lam)
        for y in base:
            for k in range(1, con.K + 1):
                wit = eng.witness_M(y, k)
                if wit is not None:
                    found.append((lam, k, y, wit.w))
    if not found:
        rep.notes["warning"] = "no members found"
        return rep
    engines = {}
    for i in range(n):
        lam, k, y, w = found[i % len(found)]
        r = np.random.default_rng(_case_seed(seed, i))
        psi = float(r.uniform(0, 1 - lam)) if i % 5 else 1 - lam
        u = r.normal(size=con.d)
        u /= np.linalg.norm(u)
        rad = psi * w * (1.0 if i % 3 == 0 else float(r.random()))
        z = y + rad * u
        key = (lam + psi, w)
        eng = engines.get(key)
        if eng is None:
            eng = engines[key] = MembershipEngine(con, min(lam + psi, 1.0), width=w)
        ok = eng.in_M(z, k)
        rep.add({"y": y, "k": k, "lambda": lam, "psi": psi, "w": w, "z": z},
                "z in M_k(lambda + psi, w)", {"member": ok}, ok, _case_seed(seed, i))
    return rep


# ---------------------------------------------------------------- wedge approximation

def random_wedge_in_ball(center: np.ndarray, delta: float, rng: np.random.Generator) -> Wedge:
    d = center.size
    u = rng.normal(size=(3, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = delta * rng.random((3, 1)) ** (1 / d)
    return Wedge.from_array(center + u * r)


def check_wedge_approximation(con: Construction, lam_prime: float = 0.25, lam: float = 0.5, eta: float = 0.9,
                              trials: int = 200, seed: int = 0, out_of_range: int = 0,
                              n_points: int = 8) -> SuiteReport:
    """Random wedges in small balls around members must be approximated by tubes inside T_lambda.

    Every success is cross-checked against an exhaustive scan of the
    ancestor's expansion near the target: the returned wedge must be one of
    the scanned children, and the scan must contain no child the
    approximation search should have preferred (none closer than the bound).
    """
    if not lam_prime < lam:
        raise ValueError("need lambda' < lambda")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    rep = SuiteReport("wedge_approximation")
    eng = MembershipEngine(con, lam_prime)
    members = []
    for y in probe_points(con, n_points, seed):
        wit = eng.witnesses_T(y)
        if wit is not None:
            members.append((y, wit))
    if not members:
        rep.notes["warning"] = "no members at lambda'"
        return rep
    psi = lam - lam_prime
    rep.notes["delta1"] = sorted({delta1_from_widths([w.w for w in wit], psi, eta, con.rho) for _, wit in members})
    for i in range(trials + out_of_range):
        y, wit = members[i % len(members)]
        cs = _case_seed(seed, i)
        r = np.random.default_rng(cs)
        d1 = delta1_from_widths([w.w for w in wit], psi, eta, con.rho)
        delta = d1 * (0.5 if i < trials else 2.0)
        s = random_wedge_in_ball(y, delta, r)
        inputs = {"y": y, "delta": delta, "delta1": d1, "s": s.to_json()}
        try:
            cert = approximating_tube(y, delta, s, lam_prime, lam, con, eta=eta, witnesses=wit)
        except OutOfRange as exc:
            rep.add(inputs, "approximating tube exists", {"delta1": exc.delta1}, None, cs, "out-of-range")
            continue
        except AssertionError as exc:
            rep.add(inputs, "approximating tube exists", {"error": str(exc)}, False, cs)
            continue
        anc = con.triples[cert.triple.parent]
        scan = local_expansion_scan(con, anc, cert.level, cert.triple.wedge.array)
        hit = bool(np.any(np.all(scan == cert.triple.wedge.array, axis=(1, 2)))) if len(scan) else False
        near = float(np.min(np.max(np.linalg.norm(scan - s.array, axis=2), axis=1))) if len(scan) else float("inf")
        ok = hit and cert.distance < eta * delta and near < eta * delta
        rep.add(inputs, "gamma(t, s) < eta*delta, K_t in T_lambda, t in the exhaustive scan",
                {"distance": cert.distance, "level": cert.level, "scan_size": len(scan), "in_scan": hit,
                 "scan_nearest": near, "samples": cert.samples_checked}, ok, cs)
    return rep


def local_expansion_scan(con: Construction, parent, k: int, wedge: np.ndarray, reach: int = 2) -> np.ndarray:
    """Every expansion child of ``parent`` at level k with each vertex within ``reach`` pitches of ``wedge``.

    Children are enumerated from scratch (grid, filter, diameter cap,
    containment), independently of the snapping used to produce ``wedge``.
    """
    _, _, pexp, cap = con.child_params(parent.level, parent.w, parent.alpha, k)
    h = math.ldexp(1.0, -pexp)
    d = con.d
    offs = np.stack(np.meshgrid(*[np.arange(-reach, reach + 1)] * d, indexing="ij"), -1).reshape(-1, d) * h
    base = np.round(np.asarray(wedge) / h) * h
    V = [base[i] + offs for i in range(3)]
    m = len(offs)
    I = np.stack(np.meshgrid(np.arange(m), np.arange(m), np.arange(m), indexing="ij"), -1).reshape(-1, 3)
    W = np.stack([V[0][I[:, 0]], V[1][I[:, 1]], V[2][I[:, 2]]], axis=1)
    inside = np.all((W >= con.lo - 1e-15) & (W <= con.hi + 1e-15), axis=(1, 2))
    W = W[inside]
    W = W[passes_filter(W, con.phi) & (wedge_diameters(W) <= cap)]
    return W[wedges_in_neighbourhood(W, parent.wedge.array, 2 * parent.alpha)]


# ---------------------------------------------------------------- closedness

def closedness_probe(con: Construction, k: int, lam: float, n: int = 12, seed: int = 0,
                     terms: int = 30) -> SuiteReport:
    """Limits of member sequences of M_k(lambda) are members; limits from outside are classified correctly.

    The fast engine's verdict on the limit is compared with the naive
    engine, which explores the recursion without any grouping.
    """
    if not 1 <= k <= con.K:
        raise ValueError("need 1 <= k <= K")
    rep = SuiteReport("closedness")
    fast = MembershipEngine(con, lam)
    naive = MembershipEngine(con, lam, naive=True)
    rng = np.random.default_rng(seed)
    pts = probe_points(con, n, seed)
    for i, y in enumerate(pts):
        cs = _case_seed(seed, i)
        steps = fast.steps_M(y, k)
        # constant sequence
        if steps is not None:
            rep.add({"kind": "constant", "y": y, "k": k}, "limit member", {"member": fast.in_M(y, k)},
                    fast.in_M(y, k), cs)
        else:
            continue
        wit = fast.witness_M(y, k)
        last = con.store_steps(wit.steps)[-1]
        arr = last.wedge.array
        # boundary point: distance exactly lambda*w from the terminal wedge, along a normal
        seg = arr[1] - arr[0]
        nrm = np.array([-seg[1], seg[0]]) if con.d == 2 else _normal(seg, rng)
        nrm /= np.linalg.norm(nrm)
        foot = arr[0] + 0.5 * seg
        b = foot + lam * last.w * nrm
        seq = [foot + lam * last.w * (1 - 2.0 ** -j) * nrm for j in range(1, terms + 1)]
        inside = [fast.in_M(z, k) for z in seq]
        lim = fast.in_M(b, k)
        cauchy = float(np.linalg.norm(seq[-1] - b))
        rep.add({"kind": "boundary-inside", "limit": b, "k": k, "w": last.w},
                "members converge to a member", {"all_members": all(inside), "limit_member": lim,
                                                 "last_gap": cauchy}, (not all(inside)) or lim, cs)
        # from outside towards a point at 1.5 lambda w (generically a non-member)
        c = foot + 1.5 * lam * last.w * nrm if lam > 0 else foot + last.w * nrm
        seq = [c + (2.0 ** -j) * last.w * nrm for j in range(1, terms + 1)]
        lim_fast = fast.in_M(c, k)
        lim_naive = naive.in_M(c, k)
        rep.add({"kind": "outside", "limit": c, "k": k, "w": last.w},
                "fast and naive verdicts agree at the limit",
                {"limit_member": lim_fast, "naive": lim_naive,
                 "sequence_members": sum(fast.in_M(z, k) for z in seq)}, lim_fast == lim_naive, cs)
    return rep


def _normal(v: np.ndarray, rng) -> np.ndarray:
    u = rng.normal(size=v.size)
    return u - (u @ v) / (v @ v) * v


# ---------------------------------------------------------------- porosity

def porosity_probe(contains_many: Callable[[np.ndarray], np.ndarray], points, c_grid: Sequence[float],
                   radii: Sequence[float], name: str = "porosity") -> SuiteReport:
    """Look for y' in B(y, r) with B(y', c r) missing the set, on a grid of spacing c r / 4.

    A case passes when a witness is found at every radius.  The report's
    ``fraction`` note is the share of (y, c) pairs with witnesses throughout.
    """
    if any(not 0 < c < 1 for c in c_grid):
        raise ValueError("c must lie in (0, 1)")
    rs = [float(r) for r in radii]
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise ValueError("radii must decrease")
    rep = SuiteReport(name)
    pts = np.atleast_2d(np.asarray(points, float))
    hits = 0
    for i, y in enumerate(pts):
        for c in c_grid:
            found = []
            for r in rs:
                found.append(_porosity_witness(contains_many, y, c, r))
            ok = all(w is not None for w in found)
            hits += ok
            rep.add({"y": y, "c": c, "radii": rs}, "empty-ball witness at every radius",
                    {"witnesses": [None if w is None else list(w) for w in found]}, ok, 0)
    rep.notes["fraction"] = hits / max(1, len(pts) * len(c_grid))
    return rep


def _porosity_witness(contains_many, y: np.ndarray, c: float, r: float):
    h = c * r / 4
    d = y.size
    m = int(math.ceil(r * (1 + c) / h))
    axes = [np.arange(-m, m + 1) * h] * d
    G = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    shape = G.shape[:-1]
    flat = G.reshape(-1, d) + y
    inset = contains_many(flat).reshape(shape)
    k = int(math.floor(c * r / h))
    off = np.stack(np.meshgrid(*[np.arange(-k, k + 1)] * d, indexing="ij"), -1).reshape(-1, d)
    off = off[np.linalg.norm(off * h, axis=1) <= c * r]
    foot = np.zeros([2 * k + 1] * d, bool)
    foot[tuple((off + k).T)] = True
    hit_near = ndimage.binary_dilation(inset, structure=foot)
    cand = np.linalg.norm(G, axis=-1) < r
    free = cand & ~hit_near
    if not free.any():
        return None
    idx = np.argwhere(free)
    j = int(np.argmin(np.linalg.norm(G[tuple(idx.T)], axis=1)))
    return tuple(map(float, G[tuple(idx[j])] + y))


# ---------------------------------------------------------------- dimension

def raster_members(contains_many, lo, hi, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres of a grid of spacing h over [lo, hi] and their membership mask."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    n = np.maximum(1, np.ceil((hi - lo) / h).astype(int))
    axes = [lo[i] + (np.arange(n[i]) + 0.5) * h for i in range(lo.size)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    mask = contains_many(G.reshape(-1, lo.size)).reshape(G.shape[:-1])
    return G, mask


def engine_oracle(con: Construction, lam: float):
    eng = MembershipEngine(con, lam)
    arr = con.root_wedge.array
    reach = lam * con.tubes.alpha0

    def contains_many(Y):
        Y = np.atleast_2d(Y)
        out = np.zeros(len(Y), bool)
        near = points_wedge_distance(Y, arr) <= reach
        for i in np.nonzero(near)[0]:
            out[i] = eng.in_T(Y[i])
        return out
    return contains_many


def dimension_report(con: Construction, lam: float = 0.5, scales: Sequence[float] | None = None,
                     depths: Sequence[int] = (2, 3, 4), config: RunConfig | None = None) -> SuiteReport:
    """Box-count slopes of the depth-K set on a fixed scale window, per depth, plus a segment control."""
    rep = SuiteReport("dimension")
    a0 = con.tubes.alpha0
    # coarser windows bias a single segment's slope low (the +1 box at each end)
    hs = list(scales) if scales is not None else [a0 / 2 ** j for j in range(2, 7)]
    if min(hs) <= 0 or max(hs) > a0:
        raise ValueError("scale window must sit inside (0, alpha0]")
    arr = con.root_wedge.array
    lo = arr.min(axis=0) - lam * a0
    hi = arr.max(axis=0) + lam * a0
    step = min(hs)
    slopes = {}
    cfg = config or RunConfig()
    for K in depths:
        c2 = con if K == con.K else build(replace(cfg, tubes=replace(cfg.tubes, K=K)))
        if min(w for w in _level_widths(c2)) >= min(hs):
            rep.add({"K": K}, "scale window above level-K width", {}, None, 0, "out-of-range")
        G, mask = raster_members(engine_oracle(c2, lam), lo, hi, step)
        cloud = G[mask]
        bc = box_dimension_estimate(cloud, hs, origin=lo)
        slopes[K] = bc.slope
        rep.add({"K": K, "scales": hs, "cell": step}, "slope >= 0.95",
                {"slope": bc.slope, "counts": list(bc.counts), "members": int(mask.sum())}, bc.slope >= 0.95, 0)
    ks = sorted(slopes)
    mono = all(slopes[b] <= slopes[a] + 1e-12 for a, b in zip(ks, ks[1:]))
    rep.add({"depths": ks}, "slope nonincreasing in K", {"slopes": [slopes[k] for k in ks]}, mono, 0)
    ctrl = box_dimension_estimate(sample_wedge(con.root_wedge, step / 4), hs, origin=lo)
    rep.add({"control": "root wedge"}, "slope in [0.95, 1.05]", {"slope": ctrl.slope},
            0.95 <= ctrl.slope <= 1.05, 0)
    rep.notes["slopes"] = {str(k): slopes[k] for k in ks}
    return rep


def _level_widths(con: Construction):
    return [t.w for t in con.triples.values() if t.level == con.K] or [con.tubes.w0]


# ---------------------------------------------------------------- disconnectedness

def component_diameters(G: np.ndarray, mask: np.ndarray, h: float) -> list[float]:
    """Diameters (plus one cell) of the 8-connected components of the raster."""
    lab, n = ndimage.label(mask, structure=np.ones((3,) * mask.ndim))
    out = []
    for i in range(1, n + 1):
        P = G[lab == i]
        if len(P) == 1:
            out.append(h)
            continue
        # extreme points along a few directions bound the diameter from below; exact for small sets
        if len(P) <= 2000:
            D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1).max()
        else:
            from scipy.spatial import ConvexHull
            H = P[ConvexHull(P).vertices]
            D = np.linalg.norm(H[:, None, :] - H[None, :, :], axis=-1).max()
        out.append(float(D) + h)
    return out


def disconnectedness_probe(contains_many, lo, hi, resolutions: Sequence[float], floor: float = 0.0,
                           name: str = "disconnectedness") -> SuiteReport:
    """Rasterise the set at each resolution and compare the largest component diameter.

    Passes when the largest diameter at the finest in-window resolution is at
    most the coarsest one scaled down by the resolution ratio (plus two
    cells): components must shrink at least linearly.
    """
    hs = [float(h) for h in resolutions]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("resolutions must decrease")
    rep = SuiteReport(name)
    rows = []
    for h in hs:
        if h < floor:
            rep.add({"h": h}, "resolution above the raster floor", {"floor": floor}, None, 0, "out-of-range")
            continue
        G, mask = raster_members(contains_many, lo, hi, h)
        diams = component_diameters(G, mask, h)
        rows.append((h, max(diams) if diams else 0.0, len(diams), int(mask.sum())))
    rep.notes["rows"] = [{"h": h, "max_diameter": d, "components": c, "cells": m} for h, d, c, m in rows]
    for (h1, d1, _, _), (h2, d2, _, _) in zip(rows, rows[1:]):
        rep.add({"h": h2, "previous_h": h1}, "max diameter nonincreasing as h shrinks",
                {"max_diameter": d2, "previous": d1}, d2 <= d1 + 1e-15, 0)
    if len(rows) >= 2:
        (hc, dc, _, _), (hf, df, _, _) = rows[0], rows[-1]
        bound = dc * hf / hc + 2 * hf
        rep.add({"coarse": hc, "fine": hf}, "linear shrink: diam(fine) <= diam(coarse) * fine/coarse + 2 fine",
                {"fine_diameter": df, "bound": bound}, df <= bound, 0)
    return rep


# ---------------------------------------------------------------- registry

def run_suite(name: str, con: Construction, cfg: RunConfig) -> SuiteReport:
    lam_lo, lam_hi = min(cfg.lambdas), max(cfg.lambdas)
    if name == "tube_invariants":
        rep = tube_invariants(con)
    elif name == "nesting":
        rep = check_nesting(con, sorted(set(cfg.lambdas) | {0.75}), n=1000, seed=cfg.seed)
    elif name == "hardwork_ball":
        rep = hardwork_ball(con, cfg.lambdas, n=500, seed=cfg.seed)
    elif name == "wedge_approximation":
        lp, l = (lam_lo, lam_hi) if lam_lo < lam_hi else (cfg.maximizer.lam_prime, cfg.maximizer.lam)
        rep = check_wedge_approximation(con, lp, l, 0.9, trials=200, seed=cfg.seed)
    elif name == "closedness":
        rep = closedness_probe(con, con.K, lam_hi, seed=cfg.seed)
    elif name == "dimension":
        rep = dimension_report(con, lam_lo, config=cfg)
    else:
        raise KeyError(f"unknown suite {name!r}")
    rep.config_hash = cfg.digest()
    return rep


SUITES = ("tube_invariants", "nesting", "hardwork_ball", "wedge_approximation", "closedness", "dimension")
