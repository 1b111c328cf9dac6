"""Lipschitz functions, directional derivatives, the Omega envelope, renorming
weights and the growth / modulus probes used by the maximizer.

Evaluators are vectorised: they take an array of shape (..., d) and return
shape (...).  Derivative oracles take (y, e) broadcast the same way and
return NaN where the two-sided directional derivative does not exist.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ambient import CantorSet, fat_cantor

VALUE_TOL = 1e-12
EXISTENCE_SPREAD = 1e-4  # relative to L


class LipschitzViolation(ValueError):
    pass


class InvalidInput(ValueError):
    pass


@dataclass(frozen=True)
class LipschitzFunction:
    evaluator: Callable[[np.ndarray], np.ndarray]
    L: float
    derivative: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    name: str = "f"
    params: tuple = ()

    def __post_init__(self):
        if not self.L >= 0:
            raise InvalidInput("Lipschitz constant must be >= 0")

    def __call__(self, y) -> np.ndarray | float:
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.evaluator(y), dtype=float)
        return float(out) if y.ndim == 1 else out

    def dir(self, y, e):
        """Exact directional derivative (NaN where it does not exist)."""
        if self.derivative is None:
            raise InvalidInput(f"{self.name} has no derivative oracle")
        y = np.asarray(y, dtype=float)
        e = np.asarray(e, dtype=float)
        out = np.asarray(self.derivative(y, e), dtype=float)
        return float(out) if out.ndim == 0 else out

    @property
    def exact(self) -> bool:
        return self.derivative is not None

    def check_lipschitz(self, points: np.ndarray, rng: np.random.Generator | None = None,
                        pairs: int = 2000) -> float:
        """Largest sampled ratio |f(y)-f(y')| / ||y-y'||; raises above L."""
        rng = rng or np.random.default_rng(0)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        i = rng.integers(0, len(pts), pairs)
        j = rng.integers(0, len(pts), pairs)
        a, b = pts[i], pts[j]
        dist = np.linalg.norm(a - b, axis=1)
        keep = dist > 0
        if not keep.any():
            return 0.0
        ratio = np.abs(np.asarray(self.evaluator(a[keep])) - np.asarray(self.evaluator(b[keep]))) / dist[keep]
        worst = float(ratio.max())
        if worst > self.L * (1 + 1e-9) + 1e-12:
            k = int(np.argmax(ratio))
            raise LipschitzViolation(
                f"{self.name}: |f(y)-f(y')| / |y-y'| = {worst} > L = {self.L} at {a[keep][k]}, {b[keep][k]}")
        return worst


def add_linear(g: LipschitzFunction, c: float, e0) -> LipschitzFunction:
    """g + c<e0, .>, with the oracle extended exactly."""
    e0 = np.asarray(e0, dtype=float)

    def ev(y):
        return np.asarray(g.evaluator(y)) + c * (np.asarray(y) @ e0)

    der = None
    if g.derivative is not None:
        def der(y, e):
            return np.asarray(g.derivative(y, e)) + c * (np.asarray(e) @ e0)
    return LipschitzFunction(ev, g.L + abs(c) * float(np.linalg.norm(e0)), der,
                             f"{g.name}+{c:g}e0*", g.params)


def scaled(g: LipschitzFunction, c: float) -> LipschitzFunction:
    if not c > 0:
        raise InvalidInput("scale must be positive")
    der = None if g.derivative is None else (lambda y, e: c * np.asarray(g.derivative(y, e)))
    return LipschitzFunction(lambda y: c * np.asarray(g.evaluator(y)), c * g.L, der, g.name, g.params)


# ---------------------------------------------------------------- derivatives

DEFAULT_SCALES = tuple(10.0 ** -k for k in (3, 4, 5, 6, 7))


@dataclass(frozen=True)
class DirDerivative:
    value: float
    diagnostic: str  # "exact", "ok" or "nonexistent"
    spread: float
    values: tuple = ()

    @property
    def exists(self) -> bool:
        return self.diagnostic != "nonexistent"


def dir_derivative(f: LipschitzFunction, y, e, scales: Sequence[float] = DEFAULT_SCALES) -> DirDerivative:
    """Oracle value if available, otherwise central differences over ``scales``.

    The spread is the larger of the variation of the last three central values
    and the largest forward/backward mismatch at those scales, so a corner
    (equal and opposite one-sided slopes) is flagged even though its central
    difference is stable.
    """
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    if not np.linalg.norm(e) > 0:
        raise InvalidInput("direction must be nonzero")
    if f.derivative is not None:
        v = f.dir(y, e)
        if np.isnan(v):
            return DirDerivative(float("nan"), "nonexistent", float("inf"))
        return DirDerivative(float(v), "exact", 0.0)
    hs = np.asarray(scales, dtype=float)
    if hs.size < 3 or np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise InvalidInput("scales must be a decreasing positive sequence of length >= 3")
    pts = np.concatenate([y + hs[:, None] * e, y - hs[:, None] * e, y[None]])
    vals = np.asarray(f.evaluator(pts), dtype=float)
    fp, fm, f0 = vals[:len(hs)], vals[len(hs):2 * len(hs)], vals[-1]
    central = (fp - fm) / (2 * hs)
    onesided = np.abs((fp - f0) / hs - (f0 - fm) / hs)
    tail = central[-3:]
    spread = float(max(tail.max() - tail.min(), onesided[-3:].max()))
    diag = "ok" if spread < EXISTENCE_SPREAD * max(f.L, 1e-300) else "nonexistent"
    return DirDerivative(float(central[-1]), diag, spread, tuple(map(float, central)))


# ---------------------------------------------------------------- Omega

def theta_default(s):
    """min(2, 25 sqrt(3 s))."""
    return np.minimum(2.0, 25.0 * np.sqrt(3.0 * np.asarray(s, dtype=float)))


@dataclass(frozen=True)
class OmegaEnvelope:
    n_lo: int
    n_hi: int
    breaks: tuple  # beta(2^n) for n = n_lo .. n_hi

    def beta(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise InvalidInput("Omega is defined on (0, inf)")
        b = np.asarray(self.breaks)
        lt = np.log2(t)
        n = np.clip(np.floor(lt), self.n_lo, self.n_hi - 1).astype(int)
        left, right = b[n - self.n_lo], b[n + 1 - self.n_lo]
        base = np.ldexp(1.0, n)
        frac = (t - base) / base
        out = left + frac * (right - left)
        # outside the window beta is held at its end values: still increasing
        # and still above Theta, which is all the envelope needs.
        out = np.where(t < math.ldexp(1.0, self.n_lo), b[0], out)
        out = np.where(t > math.ldexp(1.0, self.n_hi), b[-1], out)
        return out

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = 2 * self.beta(t_arr) + 2 * t_arr
        return float(out) if out.ndim == 0 else out


def omega_envelope(theta: Callable = theta_default, n_lo: int = -60, n_hi: int = 8,
                   per_octave: int = 64) -> OmegaEnvelope:
    """beta(2^n) = sup of theta over a geometric grid of (0, 2^(n+1)], affine in between."""
    if n_hi <= n_lo:
        raise InvalidInput("empty dyadic window")
    # grid from far below the window to 2^(n_hi+1), containing every 2^m exactly
    m_lo = n_lo - 40
    k = np.arange((n_hi + 1 - m_lo) * per_octave + 1)
    grid = np.ldexp(1.0, m_lo) * np.exp2(k / per_octave)
    grid[::per_octave] = np.ldexp(1.0, np.arange(m_lo, n_hi + 2))
    vals = np.asarray(theta(grid), dtype=float)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidInput("Theta must be positive on (0, inf)")
    if vals.max() > 2 + 1e-12:
        raise InvalidInput(f"Theta exceeds 2: max sampled value {vals.max()}")
    run = np.maximum.accumulate(vals)
    idx = (np.arange(n_lo, n_hi + 1) + 1 - m_lo) * per_octave
    return OmegaEnvelope(n_lo, n_hi, tuple(map(float, run[idx])))


# ---------------------------------------------------------------- norms and weights

@dataclass(frozen=True)
class NormState:
    ts: tuple = ()
    es: tuple = ()

    def __post_init__(self):
        if len(self.ts) != len(self.es):
            raise InvalidInput("ts and es differ in length")
        prev = None
        for t, e in zip(self.ts, self.es):
            if not 0 < t < 0.5:
                raise InvalidInput(f"t = {t} outside (0, 1/2)")
            if prev is not None and not t < prev / 2:
                raise InvalidInput("t_m must be below t_(m-1)/2")
            if abs(np.linalg.norm(e) - 1) > 1e-12:
                raise InvalidInput("e_m must be a unit vector")
            prev = t

    def extended(self, t: float, e) -> "NormState":
        return NormState(self.ts + (float(t),), self.es + (tuple(map(float, e)),))

    def truncated(self, n: int) -> "NormState":
        return NormState(self.ts[:n], self.es[:n])

    def __len__(self):
        return len(self.ts)

    def matrix(self, d: int) -> np.ndarray:
        """Q with p(y)^2 = y^T Q y."""
        Q = np.eye(d)
        for t, e in zip(self.ts, self.es):
            e = np.asarray(e)
            Q += t * t * (np.eye(d) - np.outer(e, e))
        return Q


def norm_gradient(state: NormState, e) -> np.ndarray:
    """Derivative of p at e != 0, i.e. Q e / p(e); its functional norms the direction."""
    e = np.asarray(e, dtype=float)
    return state.matrix(e.size) @ e / p_norm(state, e)


def p_norm(state: NormState, y) -> np.ndarray | float:
    """sqrt(|y|^2 + sum_m t_m^2 dist(y, R e_m)^2) with the Euclidean base norm."""
    y = np.asarray(y, dtype=float)
    sq = np.sum(y * y, axis=-1)
    total = sq.copy() if isinstance(sq, np.ndarray) else sq
    for t, e in zip(state.ts, state.es):
        e = np.asarray(e)
        along = y @ e
        total = total + t * t * np.maximum(sq - along * along, 0.0)
    out = np.sqrt(total)
    return float(out) if np.ndim(out) == 0 else out


def weight(f: LipschitzFunction, state: NormState, y, e):
    """f'(y, e) / p(e); NaN where the derivative does not exist."""
    if f.derivative is not None:
        num = f.dir(y, e)
    else:
        dd = dir_derivative(f, y, e)
        num = dd.value if dd.exists else float("nan")
    return num / p_norm(state, e)


@dataclass(frozen=True)
class WeightedPair:
    x: tuple  # bundle point (tau, y...)
    e: tuple
    weight: float

    def __post_init__(self):
        if not np.linalg.norm(self.e) > 0:
            raise InvalidInput("direction must be nonzero")

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.x[1:], dtype=float)


def t_grid(t_max: float, t_min: float = 1e-12, per_decade: int = 64) -> np.ndarray:
    """Symmetric geometric grid covering [t_min, t_max] on both sides of 0."""
    if not 0 < t_min < t_max:
        raise InvalidInput("need 0 < t_min < t_max")
    n = int(math.ceil(math.log10(t_max / t_min) * per_decade))
    pos = t_min * (t_max / t_min) ** (np.arange(n + 1) / n)
    return np.concatenate([-pos[::-1], pos])


def default_t_grid(bbox, per_decade: int = 64) -> np.ndarray:
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    return t_grid(4 * float(np.linalg.norm(hi - lo)), per_decade=per_decade)


def increment_gap(f: LipschitzFunction, y_base, e_base, y_cand, ts: np.ndarray) -> np.ndarray:
    """|(f(y'+te)-f(y')) - (f(y+te)-f(y))| over the grid ``ts``."""
    y_base = np.asarray(y_base, dtype=float)
    y_cand = np.asarray(y_cand, dtype=float)
    e = np.asarray(e_base, dtype=float)
    steps = ts[:, None] * e
    vb = np.asarray(f.evaluator(y_base + steps)) - f(y_base)
    vc = np.asarray(f.evaluator(y_cand + steps)) - f(y_cand)
    return np.abs(vc - vb)


def gap_slope(f: LipschitzFunction, y_base, e_base, y_cand, ts: np.ndarray) -> float:
    """max over the grid of (gap - tol) / |t|: the smallest admissible sigma + Omega."""
    gap = increment_gap(f, y_base, e_base, y_cand, ts)
    return float(np.max((gap - VALUE_TOL) / np.abs(ts)))


@dataclass(frozen=True)
class GResult:
    ok: bool | None  # None: indeterminate (a derivative is missing)
    violation: float
    weight_base: float = float("nan")
    weight_cand: float = float("nan")
    grid_slack: float = 0.0  # relative error allowance of the grid between nodes

    @property
    def indeterminate(self) -> bool:
        return self.ok is None


def in_G(f: LipschitzFunction, state: NormState, base, cand, sigma: float, omega: OmegaEnvelope,
         ts: np.ndarray) -> GResult:
    """Is ``cand`` = (y', e') in G_p(y, e, sigma) for ``base`` = (y, e)?"""
    (yb, eb), (yc, ec) = base, cand
    wb = weight(f, state, yb, eb)
    wc = weight(f, state, yc, ec)
    q = float(np.max(np.abs(ts[1:] / ts[:-1])[ts[1:] * ts[:-1] > 0]))
    slack = 2 * f.L * (q - 1)
    if np.isnan(wb) or np.isnan(wc):
        return GResult(None, float("nan"), wb, wc, slack)
    wviol = wb - wc
    if wviol > VALUE_TOL:
        return GResult(False, float(wviol), wb, wc, slack)
    excess = gap_slope(f, yb, eb, yc, ts) - sigma - float(omega(max(wc - wb, 0.0) + 1e-300))
    viol = max(excess, wviol)
    return GResult(bool(excess <= 0), float(viol), wb, wc, slack)


# ---------------------------------------------------------------- growth search

@dataclass(frozen=True)
class GrowthResult:
    status: str  # "found", "not-found" or "precondition-violation"
    preconditions: dict
    point: tuple | None = None
    direction: tuple | None = None
    gain: float = float("-inf")
    best_point: tuple | None = None
    best_direction: tuple | None = None
    samples: int = 0

    @property
    def failed_preconditions(self) -> list[str]:
        return [k for k, v in self.preconditions.items() if not v]


def growth_preconditions(f: LipschitzFunction, y, e, eps, s, xi, lam_vec, s1, s2, lam_prime,
                         ts_unit: np.ndarray) -> dict:
    y, e = np.asarray(y, float), np.asarray(e, float)
    lam_vec, s1, s2, lam_prime = (np.asarray(v, float) for v in (lam_vec, s1, s2, lam_prime))
    L = f.L
    out = {"eps_range": 0 < eps < L / 9, "unit_direction": abs(np.linalg.norm(e) - 1) < 1e-12,
           "xi_range": -s / 2 < xi < s / 2}
    dd = dir_derivative(f, y, e)
    out["derivative_nonnegative"] = bool(dd.exists and dd.value >= 0)
    if not (out["eps_range"] and dd.exists and L > 0):
        return out
    fp = dd.value
    reach = s * math.sqrt(2 * L / eps)
    ts = ts_unit * reach
    lin = np.abs(np.asarray(f.evaluator(y + ts[:, None] * e)) - f(y) - fp * ts)
    out["linear_along_e"] = bool(np.all(lin <= eps ** 2 / (160 * L) * np.abs(ts) + VALUE_TOL))
    out["large_increment"] = abs(f(y + lam_vec) - f(y + xi * e)) >= 240 * eps * s
    out["lambda_near_xi_e"] = np.linalg.norm(lam_vec - xi * e) <= s * math.sqrt(eps / L)
    out["angle_bound"] = all(np.linalg.norm(pi * s * e + lam_vec) / abs(pi * s + xi) <= 1 + eps / (4 * L)
                             for pi in (1, -1))
    out["s1_s2_near_se"] = max(np.linalg.norm(s1 - s * e), np.linalg.norm(s2 - s * e)) \
        <= eps ** 2 / (320 * L ** 2) * s
    out["lambda_prime_near"] = np.linalg.norm(lam_prime - lam_vec) <= eps * s / (16 * L)
    return out


def wedge_growth_search(f: LipschitzFunction, y, e, eps: float, s: float, xi: float, lam_vec, s1, s2,
                        lam_prime, n_samples: int = 257, ts: np.ndarray | None = None) -> GrowthResult:
    """Search [y-s1, y+l'] U [y+l', y+s2] for (y', e') raising f'(., e) by eps."""
    y, e = np.asarray(y, float), np.asarray(e, float)
    lam_prime = np.asarray(lam_prime, float)
    ts_unit = t_grid(1.0, 1e-9, 32) if ts is None else np.asarray(ts, float)
    pre = growth_preconditions(f, y, e, eps, s, xi, lam_vec, s1, s2, lam_prime, ts_unit)
    if not all(pre.values()) or len(pre) < 10:
        return GrowthResult("precondition-violation", pre)
    fp = dir_derivative(f, y, e).value
    a, b, c = y - np.asarray(s1, float), y + lam_prime, y + np.asarray(s2, float)
    grid = ts_unit * max(np.linalg.norm(b - a), np.linalg.norm(c - b)) * 4
    best = (float("-inf"), None, None)
    count = 0
    u = (np.arange(n_samples) + 0.5) / n_samples
    for p, q in ((a, b), (b, c)):
        seg = q - p
        if not np.linalg.norm(seg) > 0:
            continue
        dirs = [seg / np.linalg.norm(seg), -seg / np.linalg.norm(seg)]
        for ui in u:
            yp = p + ui * seg
            for ep in dirs:
                count += 1
                dd = dir_derivative(f, yp, ep)
                if not dd.exists:
                    continue
                gain = dd.value - fp
                if gain > best[0]:
                    best = (gain, yp, ep)
                if gain < eps:
                    continue
                bound = 25 * math.sqrt(max(gain, 0.0) * f.L) * np.abs(grid)
                if np.all(increment_gap(f, y, e, yp, grid) <= bound + VALUE_TOL):
                    return GrowthResult("found", pre, tuple(yp), tuple(ep), gain, tuple(yp), tuple(ep), count)
    bp = None if best[1] is None else tuple(best[1])
    bd = None if best[2] is None else tuple(best[2])
    return GrowthResult("not-found", pre, None, None, best[0], bp, bd, count)


# ---------------------------------------------------------------- modulus

@dataclass(frozen=True)
class ModulusCurve:
    radii: tuple
    values: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "M_r"])
        for r, m in zip(self.radii, self.values):
            w.writerow([format(r, ".17g"), format(m, ".17g")])
        return buf.getvalue()


def unit_directions(d: int, n: int, seed: int = 0) -> np.ndarray:
    if d == 2:
        a = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    u = np.random.default_rng(seed).normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def frechet_modulus(f: LipschitzFunction, y, e, e_star, radii: Sequence[float], n_dirs: int = 256,
                    fprime: float | None = None, seed: int = 0) -> ModulusCurve:
    """M(r) = max_u |f(y+ru) - f(y) - f'(y,e) e*(u) r| / r over sampled unit u."""
    if n_dirs < 16:
        raise InvalidInput("need at least 16 directions")
    rs = [float(r) for r in radii]
    if any(b >= a for a, b in zip(rs, rs[1:])) or any(r <= 0 for r in rs):
        raise InvalidInput("radii must be positive and decreasing")
    y = np.asarray(y, float)
    if fprime is None:
        dd = dir_derivative(f, y, e)
        if not dd.exists:
            raise InvalidInput("directional derivative does not exist at the base pair")
        fprime = dd.value
    U = unit_directions(y.size, n_dirs, seed)
    lin = fprime * (U @ np.asarray(e_star, float))
    f0 = f(y)
    vals = []
    for r in rs:
        inc = np.asarray(f.evaluator(y + r * U)) - f0
        vals.append(float(np.max(np.abs(inc - lin * r)) / r))
    return ModulusCurve(tuple(rs), tuple(vals))


# ---------------------------------------------------------------- corpus

def linear_function(a) -> LipschitzFunction:
    a = np.asarray(a, dtype=float)
    return LipschitzFunction(lambda y: np.asarray(y) @ a, float(np.linalg.norm(a)),
                             lambda y, e: np.asarray(e) @ a + 0 * np.sum(np.asarray(y), axis=-1),
                             "linear", (("a", tuple(a)),))


def _l1_der(y, e):
    y, e = np.broadcast_arrays(np.asarray(y, float), np.asarray(e, float))
    s = np.sign(y)
    bad = np.any((y == 0) & (e != 0), axis=-1)
    out = np.sum(s * e, axis=-1)
    return np.where(bad, np.nan, out)


def l1_norm(d: int = 2) -> LipschitzFunction:
    return LipschitzFunction(lambda y: np.sum(np.abs(np.asarray(y)), axis=-1), math.sqrt(d), _l1_der, "l1")


def _segments_value_and_grad(y: np.ndarray, segs: np.ndarray):
    """Distance to a union of segments and per-segment gradients (last axis d)."""
    y = np.asarray(y, float)
    flat = y.reshape(-1, y.shape[-1])
    A, B = segs[:, 0], segs[:, 1]
    AB = B - A
    den = np.einsum("sd,sd->s", AB, AB)
    s = np.clip(np.einsum("nsd,sd->ns", flat[:, None, :] - A, AB) / np.where(den > 0, den, 1), 0, 1)
    proj = A + s[..., None] * AB
    diff = flat[:, None, :] - proj
    dist = np.linalg.norm(diff, axis=-1)
    return dist, diff, s


def distance_to_segments(segs, name: str = "dist_segments", tol: float = 1e-13) -> LipschitzFunction:
    segs = np.asarray(segs, dtype=float)

    def ev(y):
        y = np.asarray(y, float)
        dist, _, _ = _segments_value_and_grad(y, segs)
        return dist.min(axis=1).reshape(y.shape[:-1])

    def der(y, e):
        y, e = np.broadcast_arrays(np.asarray(y, float), np.asarray(e, float))
        shape = y.shape[:-1]
        dist, diff, _ = _segments_value_and_grad(y, segs)
        ef = e.reshape(-1, e.shape[-1])
        m = dist.min(axis=1)
        out = np.empty(len(m))
        for i in range(len(m)):
            act = np.nonzero(dist[i] <= m[i] + tol)[0]
            if m[i] <= tol:
                # on the set: only directions along an active segment have a derivative (0)
                ok = False
                for j in act:
                    ab = segs[j, 1] - segs[j, 0]
                    nab = np.linalg.norm(ab)
                    if nab > 0 and np.linalg.norm(ef[i] - (ef[i] @ ab) / nab ** 2 * ab) <= tol:
                        ok = True
                out[i] = 0.0 if ok else np.nan
                continue
            slopes = (diff[i, act] @ ef[i]) / dist[i, act]
            out[i] = slopes[0] if np.ptp(slopes) <= 1e-12 else np.nan
        return out.reshape(shape)
    return LipschitzFunction(ev, 1.0, der, name, (("segments", tuple(map(tuple, segs.reshape(-1, segs.shape[-1] * 2)))),))


def distance_to_wedge(vertices) -> LipschitzFunction:
    v = np.asarray(vertices, dtype=float)
    return distance_to_segments(np.stack([v[:2], v[1:]]), "dist_wedge")


def distance_to_cantor_preimage(cantor: CantorSet, direction=(1.0, 0.0)) -> LipschitzFunction:
    """y -> dist(<p, y>, C) for a unit functional p."""
    p = np.asarray(direction, float)
    p = p / np.linalg.norm(p)
    iv = np.array([[float(a), float(b)] for a, b in cantor.intervals])

    def scalar(s):
        s = np.asarray(s, float)
        gaps = np.maximum(np.maximum(iv[:, 0] - s[..., None], s[..., None] - iv[:, 1]), 0.0)
        return gaps.min(axis=-1), gaps

    def ev(y):
        return scalar(np.asarray(y) @ p)[0]

    def der(y, e):
        y, e = np.broadcast_arrays(np.asarray(y, float), np.asarray(e, float))
        s = y @ p
        pe = e @ p
        m, gaps = scalar(s)
        inside = m == 0
        on_edge = np.any((s[..., None] == iv[:, 0]) | (s[..., None] == iv[:, 1]), axis=-1)
        # signed slope of dist in s: +1 right of the nearest interval, -1 left of it
        act = gaps <= m[..., None] + 1e-15
        right = act & (s[..., None] > iv[:, 1])
        left = act & (s[..., None] < iv[:, 0])
        both = np.any(right, axis=-1) & np.any(left, axis=-1)
        slope = np.where(np.any(right, axis=-1), 1.0, -1.0)
        out = np.where(inside, 0.0, slope * pe)
        bad = (both | (inside & on_edge)) & (pe != 0)
        return np.where(bad, np.nan, np.where(both, 0.0, out))
    return LipschitzFunction(ev, 1.0, der, "dist_cantor", (("depth", cantor.depth), ("direction", tuple(p))))


def random_piecewise_linear(seed: int = 0, pieces: int = 6, d: int = 2, scale: float = 1.0) -> LipschitzFunction:
    """max_i (a_i . y + b_i); the cells are the argmax regions."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(pieces, d))
    A = scale * A / np.maximum(np.linalg.norm(A, axis=1, keepdims=True), 1.0)
    b = rng.normal(size=pieces) * 0.1

    def ev(y):
        return np.max(np.asarray(y) @ A.T + b, axis=-1)

    def der(y, e):
        y, e = np.broadcast_arrays(np.asarray(y, float), np.asarray(e, float))
        v = y @ A.T + b
        top = v.max(axis=-1, keepdims=True)
        act = v >= top - 1e-13
        sl = e @ A.T
        hi = np.where(act, sl, -np.inf).max(axis=-1)
        lo = np.where(act, sl, np.inf).min(axis=-1)
        return np.where(hi - lo <= 1e-13, hi, np.nan)
    L = float(np.linalg.norm(A, axis=1).max())
    return LipschitzFunction(ev, L, der, "random_pl", (("seed", seed), ("pieces", pieces)))


POROUS_CONTROL = ((-0.6, 0.75), (0.0, 0.9), (0.6, 0.75))


def distance_to_porous_control(vertices=POROUS_CONTROL) -> LipschitzFunction:
    """Distance to a wedge placed away from the tube set; a wedge is porous."""
    f = distance_to_wedge(vertices)
    return LipschitzFunction(f.evaluator, f.L, f.derivative, "dist_porous", f.params)


CORPUS = ("linear", "l1", "dist_wedge", "dist_cantor", "random_pl", "dist_porous")


def corpus_function(name: str, params: dict | None = None, d: int = 2) -> LipschitzFunction:
    params = dict(params or {})
    if name == "linear":
        return linear_function(params.get("a", [0.6, 0.8] + [0.0] * (d - 2)))
    if name == "l1":
        return l1_norm(d)
    if name == "dist_wedge":
        return distance_to_wedge(params.get("vertices", ((-0.25, 0.05), (0.0, 0.3), (0.3, 0.0))))
    if name == "dist_cantor":
        return distance_to_cantor_preimage(fat_cantor(int(params.get("depth", 6))),
                                           params.get("direction", (1.0, 0.0)))
    if name == "random_pl":
        return random_piecewise_linear(int(params.get("seed", 0)), int(params.get("pieces", 6)), d)
    if name == "dist_porous":
        return distance_to_porous_control(params.get("vertices", POROUS_CONTROL))
    raise KeyError(f"unknown corpus function {name!r}; choose from {', '.join(CORPUS)}")

