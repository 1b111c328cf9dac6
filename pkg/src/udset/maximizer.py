"""Weight maximisation over the bundle X_lambda and the end-to-end pipelines.

A bundle point is a tuple (tau, y_1, ..., y_d).  The iteration renorms with
p_n, keeps a ball of shrinking radius delta_n around the current point and
picks a candidate of almost maximal weight at every step.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .ambient import CantorSet
from .analysis import (VALUE_TOL, LipschitzFunction, ModulusCurve, NormState, OmegaEnvelope, add_linear,
                       default_t_grid, dir_derivative, frechet_modulus, gap_slope, norm_gradient, omega_envelope, p_norm,
                       scaled, weight)
from .config import fmt_float
from .geometry import Wedge
from .tubes import Construction, MembershipEngine, OutOfRange, approximating_tube, delta1_from_widths

SIGMA_FLOOR = 1e-12


class InvariantFailure(RuntimeError):
    def __init__(self, msg, step=None, trace=None):
        super().__init__(msg)
        self.step = step
        self.trace = trace


class EmptyBundle(ValueError):
    pass


# ---------------------------------------------------------------- schedule

def _sqrt_floor(q: Fraction, bits: int = 64) -> Fraction:
    """Largest k / 2^bits with (k / 2^bits)^2 <= q."""
    return Fraction(math.isqrt(q.numerator * 4 ** bits // q.denominator), 2 ** bits)


@dataclass(frozen=True)
class Schedule:
    sigma: tuple  # Fractions, index n = 0..N
    t: tuple
    eps: tuple  # eps[0] unused (0)
    nu: tuple  # nu[0] unused (0)
    delta0: Fraction = Fraction(1)

    @classmethod
    def standard(cls, N: int) -> "Schedule":
        if N < 1:
            raise ValueError("need N >= 1")
        sigma = [Fraction(16)]
        t = [Fraction(1, 4)]
        eps = [Fraction(0)]
        nu = [Fraction(0)]
        for n in range(1, N + 1):
            sigma.append(Fraction(16, 17 ** n))
            t.append(min(Fraction(1, 4 * 3 ** n), _sqrt_floor(sigma[n - 1]) / 5))
            eps.append(t[n] ** 2 * sigma[n] ** 2 / 2 ** 14)
            nu.append(sigma[n - 1] / 4)
        return cls(tuple(sigma), tuple(t), tuple(eps), tuple(nu))

    @property
    def N(self) -> int:
        return len(self.sigma) - 1

    def violations(self) -> list[str]:
        bad = []
        if self.sigma[0] != 16:
            bad.append("sigma_0 = 16")
        if self.delta0 != 1:
            bad.append("delta_0 = 1")
        if not 0 < self.t[0] < Fraction(1, 2):
            bad.append("t_0 in (0, 1/2)")
        for n in range(1, self.N + 1):
            s, s1, t, t1 = self.sigma[n], self.sigma[n - 1], self.t[n], self.t[n - 1]
            if not 0 < s < s1 / 16:
                bad.append(f"sigma_{n} < sigma_{n - 1}/16")
            if not 0 < t < t1 / 2:
                bad.append(f"t_{n} < t_{n - 1}/2")
            if not t * t < s1 / 16:
                bad.append(f"t_{n}^2 < sigma_{n - 1}/16")
            if not 0 < self.eps[n] < t * t * s * s / 2 ** 13:
                bad.append(f"eps_{n} < t_{n}^2 sigma_{n}^2 / 2^13")
            if not 0 < self.nu[n] < s1 / 2:
                bad.append(f"nu_{n} in (0, sigma_{n - 1}/2)")
        return bad


# ---------------------------------------------------------------- bundle

def _logit(u):
    return math.log(u) - math.log1p(-u)


@dataclass
class Bundle:
    """X_lambda with its projection and metric, backed by tube membership."""

    con: Construction
    lam: float
    tau_samples: int = 4
    _engines: dict = field(default_factory=dict, repr=False)
    _memo: dict = field(default_factory=dict, repr=False)

    def tau_grid(self, tau: float) -> list[float]:
        m = self.tau_samples
        return [tau + (self.lam - tau) * i / (m + 1) for i in range(1, m + 1)]

    def _engine(self, lam: float) -> MembershipEngine:
        eng = self._engines.get(lam)
        if eng is None:
            eng = self._engines[lam] = MembershipEngine(self.con, lam)
        return eng

    def contains(self, x) -> bool:
        x = tuple(map(float, x))
        hit = self._memo.get(x)
        if hit is None:
            tau = x[0]
            y = np.asarray(x[1:])
            hit = 0 < tau < self.lam and all(self._engine(s).in_T(y) for s in self.tau_grid(tau))
            self._memo[x] = hit
        return hit

    @staticmethod
    def project(x) -> np.ndarray:
        return np.asarray(x[1:], dtype=float)

    def tau_distance(self, a: float, b: float) -> float:
        return abs(_logit(a / self.lam) - _logit(b / self.lam))

    def distance(self, a, b) -> float:
        return self.tau_distance(a[0], b[0]) + float(np.linalg.norm(np.asarray(a[1:]) - np.asarray(b[1:])))

    def perturb(self, x, dtau: float, dy) -> tuple:
        """Point at logit offset ``dtau`` and displacement ``dy`` from ``x``."""
        u = _logit(x[0] / self.lam) + dtau
        tau = self.lam / (1 + math.exp(-u))
        return (tau,) + tuple(np.asarray(x[1:]) + np.asarray(dy))


def make_bundle(con: Construction, lam: float, tau_samples: int = 4) -> Bundle:
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    b = Bundle(con, float(lam), int(tau_samples))
    y = con.root_wedge.array[1]
    if not b.contains((lam / 2,) + tuple(y)):
        raise EmptyBundle("X_lambda has no member at the sampled tau grid")
    return b


# ---------------------------------------------------------------- iteration

@dataclass(frozen=True)
class StepRecord:
    n: int
    x: tuple
    e: tuple
    weight: float
    sigma: float
    t: float
    eps: float
    nu: float
    Delta: float
    delta: float
    pool_size: int
    gap: float
    step_distance: float
    pool_best: float

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class IterTrace:
    function: str
    lam: float
    records: tuple
    x_limit: tuple
    e_limit: tuple
    state: NormState
    pools: tuple = field(default=(), compare=False, repr=False)  # per step: (Y, E, W) arrays
    e0_star: tuple = ()
    min_e0_star: float = float("inf")

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(json.dumps(_floats(r.to_dict()), sort_keys=True))
        return "\n".join(lines) + "\n"


def _floats(obj):
    if isinstance(obj, float):
        return float(fmt_float(obj)) if math.isfinite(obj) else None  # strict JSON has no NaN
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_floats(v) for v in obj]
    return obj


def _candidate_directions(d: int, e_prev: np.ndarray, width: float, count: int, rng) -> np.ndarray:
    """Unit directions within roughly ``width`` of ``e_prev`` (all of them when width >= 2)."""
    if d == 2:
        base = math.atan2(e_prev[1], e_prev[0])
        half = math.pi if width >= 2 else 2 * math.asin(min(1.0, width / 2))
        a = base + np.linspace(-half, half, count, endpoint=width < 2)
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    u = rng.normal(size=(count, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    if width < 2:
        u = e_prev + width / 2 * u
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u


def _direction_spacing(E: np.ndarray) -> float:
    """Largest gap between neighbouring directions of a sweep (upper bound for random sweeps)."""
    if len(E) < 2:
        return 2.0
    if E.shape[1] == 2:
        a = np.sort(np.arctan2(E[:, 1], E[:, 0]))
        return float(np.max(np.diff(a))) if np.ptp(a) < np.pi else float(2 * np.pi / len(E))
    return float(2.0 / len(E) ** (1 / (E.shape[1] - 1)))


def _estimate(f: LipschitzFunction, y, e) -> float:
    dd = dir_derivative(f, y, e)
    return dd.value if dd.exists else float("nan")


def _derivative_bound_ok(f: LipschitzFunction, y, e, fp: float, slope: float, reach: float) -> bool:
    """|f(y+te) - f(y) - fp t| <= slope |t| for 0 < |t| <= reach (geometric grid)."""
    pos = reach * np.geomspace(1e-9, 1.0, 9 * 24 + 1)
    ts = np.concatenate([-pos, pos])
    vals = np.asarray(f.evaluator(np.asarray(y) + ts[:, None] * np.asarray(e))) - f(np.asarray(y))
    return bool(np.all(np.abs(vals - fp * ts) <= slope * np.abs(ts) + VALUE_TOL))


def solve_Delta(f: LipschitzFunction, pairs, sigma_prev: float, nu: float, cap: float, iters: int = 60) -> float:
    """Largest Delta <= cap (to bisection accuracy) with both linearity bounds on |t| <= 4 Delta / nu."""
    def ok(D):
        return all(_derivative_bound_ok(f, y, e, fp, sigma_prev / 32, 4 * D / nu) for y, e, fp in pairs)

    if ok(cap):
        return cap
    lo, hi = math.log(cap) - 80, math.log(cap)
    if not ok(math.exp(lo)):
        raise InvariantFailure("no Delta satisfies the linearity bounds (derivative may not exist)")
    for _ in range(iters):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if ok(math.exp(mid)) else (lo, mid)
    return math.exp(lo)


def iterate(f: LipschitzFunction, bundle: Bundle, x0, e0, N: int = 12, pool_size: int = 48, seed: int = 0,
            omega: OmegaEnvelope | None = None, schedule: Schedule | None = None, n_directions: int = 720,
            e0_star=None, ts=None) -> IterTrace:
    """Almost-maximal weight selection with nested candidate constraints.

    A candidate at step n must satisfy the ball and G conditions of every
    earlier step and must not beat any earlier selection by more than that
    step's eps; the finite pools then behave like subsets of the nested D_m.
    """
    rng = np.random.default_rng(seed)
    omega = omega or omega_envelope()
    sched = schedule or Schedule.standard(N)
    if sched.N < N:
        raise ValueError("schedule shorter than N")
    ts = default_t_grid((bundle.con.lo, bundle.con.hi)) if ts is None else ts
    x0 = tuple(map(float, x0))
    e0 = np.asarray(e0, float)
    if abs(np.linalg.norm(e0) - 1) > 1e-12:
        raise ValueError("e_0 must be a unit vector")
    e0s = e0 if e0_star is None else np.asarray(e0_star, float)
    if not bundle.contains(x0):
        raise ValueError("x_0 is not in the bundle")
    fp0 = dir_derivative(f, bundle.project(x0), e0)
    if not fp0.exists or fp0.value < 0:
        raise ValueError("need an existing, nonnegative f'(pi x_0, e_0)")
    d = e0.size
    xs, es = [x0], [e0]
    ws = [fp0.value]  # w_n(x_n, e_n)
    deltas = [1.0]
    state = NormState()
    records = [StepRecord(0, x0, tuple(e0), ws[0], float(sched.sigma[0]), float(sched.t[0]), 0.0, 0.0,
                          float("nan"), 1.0, 1, 0.0, 0.0, ws[0])]
    pools = []
    min_e0s = float("inf")
    for n in range(1, N + 1):
        sigma_prev = float(sched.sigma[n - 1])
        if float(sched.sigma[n]) < SIGMA_FLOOR:
            break
        state = state.extended(float(sched.t[n - 1]), es[n - 1])  # p_n
        states = [state.truncated(m) for m in range(1, n + 1)]  # p_1..p_n
        # candidate points
        dl = deltas[n - 1]
        pts = [xs[n - 1]]
        while len(pts) < pool_size:
            u = rng.normal(size=d)
            u *= 0.45 * dl * rng.random() ** (1 / d) / np.linalg.norm(u)
            dt = 0.45 * dl * (2 * rng.random() - 1)
            pts.append(bundle.perturb(xs[n - 1], dt, u))
        width = 2.0 if n == 1 else min(2.0, 2 * sigma_prev)
        E = _candidate_directions(d, es[n - 1], width, n_directions, rng)
        E = np.vstack([es[n - 1][None], E])
        slopes: dict = {}

        def admit(x, E):
            """Directions of E that make (x, e) a member of every nested candidate set."""
            y = bundle.project(x)
            fp = np.asarray(f.dir(np.broadcast_to(y, E.shape), E)) if f.exact else \
                np.array([_estimate(f, y, e) for e in E])
            keep = ~np.isnan(fp)
            for m in range(1, n + 1):
                wm = fp / p_norm(states[m - 1], E)
                base = ws[m - 1]  # w_m(x_{m-1}, e_{m-1}) = w_{m-1}(x_{m-1}, e_{m-1})
                key = (x, m)
                if key not in slopes:
                    slopes[key] = 0.0 if x == xs[m - 1] else \
                        gap_slope(f, bundle.project(xs[m - 1]), es[m - 1], y, ts)
                om = omega(np.maximum(wm - base, 0.0) + 1e-300)
                keep &= (wm >= base - VALUE_TOL) & (slopes[key] - 0.75 * float(sched.sigma[m - 1]) <= om)
                if m < n:
                    keep &= wm <= ws[m] + float(sched.eps[m])
            return E[keep], fp[keep] / p_norm(state, E[keep])

        Ys, Es, Ws = [], [], []
        members = []
        for x in pts:
            if x != xs[n - 1] and not bundle.contains(x):
                continue
            if not all(bundle.distance(x, xs[m - 1]) < deltas[m - 1] for m in range(1, n + 1)):
                continue
            members.append(x)
            Ek, Wk = admit(x, E)
            if len(Wk):
                Ys.append(np.broadcast_to(np.asarray(x), (len(Wk), len(x))))
                Es.append(Ek)
                Ws.append(Wk)
        if not Ws:
            raise InvariantFailure(f"step {n}: previous pair rejected by its own candidate filter", n,
                                   _partial(f, bundle, records, state, pools))
        # refine the direction sweep around the best pair, twice
        spacing = _direction_spacing(E)
        for _ in range(2):
            Y, Ec, W = np.vstack(Ys), np.vstack(Es), np.concatenate(Ws)
            k = int(np.argmax(W))
            xb = tuple(map(float, Y[k]))
            Er = _candidate_directions(d, Ec[k], 2 * spacing, n_directions // 4 + 1, rng)
            spacing = _direction_spacing(Er)
            Ek, Wk = admit(xb, Er)
            if len(Wk):
                Ys.append(np.broadcast_to(np.asarray(xb), (len(Wk), len(xb))))
                Es.append(Ek)
                Ws.append(Wk)
        Y, Ec, W = np.vstack(Ys), np.vstack(Es), np.concatenate(Ws)
        min_e0s = min(min_e0s, float((Ec @ e0s).min()))
        pools.append((Y, Ec, W))
        k = int(np.argmax(W))
        xn, en, wn = tuple(map(float, Y[k])), Ec[k].copy(), float(W[k])
        # invariants that the nested selection should deliver
        if wn < ws[n - 1] - 1e-9:
            raise InvariantFailure(f"step {n}: weight decreased from {ws[n - 1]} to {wn}", n,
                                   _partial(f, bundle, records, state, pools))
        if np.linalg.norm(en - es[n - 1]) > sigma_prev / 8:
            raise InvariantFailure(f"step {n}: |e_n - e_(n-1)| = {np.linalg.norm(en - es[n - 1])} > sigma/8", n,
                                   _partial(f, bundle, records, state, pools))
        nu = float(sched.nu[n])
        yn, yp = bundle.project(xn), bundle.project(xs[n - 1])
        dist = bundle.distance(xn, xs[n - 1])
        cap = (deltas[n - 1] - dist) / 2 * (1 - 2 ** -10)
        Delta = solve_Delta(f, [(yn, en, dir_derivative(f, yn, en).value),
                                (yp, es[n - 1], dir_derivative(f, yp, es[n - 1]).value)],
                            sigma_prev, nu, max(cap, 1e-300))
        delta_n = min(Delta, cap)
        if not delta_n > 0:
            raise InvariantFailure(f"step {n}: delta_n collapsed", n, _partial(f, bundle, records, state, pools))
        xs.append(xn)
        es.append(en)
        ws.append(wn)
        deltas.append(delta_n)
        records.append(StepRecord(n, xn, tuple(map(float, en)), wn, float(sched.sigma[n]), float(sched.t[n]),
                                  float(sched.eps[n]), nu, Delta, delta_n, len(W), wn - ws[n - 1], dist,
                                  float(W.max())))
    final = state.extended(float(sched.t[len(records) - 1]), es[-1])
    e_lim = es[-1] / p_norm(final, es[-1])
    trace = IterTrace(f.name, bundle.lam, tuple(records), xs[-1], tuple(map(float, e_lim)), final,
                      tuple(pools), tuple(map(float, e0s)), min_e0s)
    bad = trace_violations(trace, bundle)
    if bad:
        raise InvariantFailure(bad[0], None, trace)
    return trace


def _partial(f, bundle, records, state, pools) -> IterTrace:
    last = records[-1]
    return IterTrace(f.name, bundle.lam, tuple(records), last.x, last.e, state, tuple(pools))


def trace_violations(trace: IterTrace, bundle: Bundle, slack: float = 1e-9) -> list[str]:
    """Recheck the monotonicity, Cauchy and ball-nesting bounds on a finished trace."""
    bad = []
    R = trace.records
    for a, b in zip(R, R[1:]):
        if b.weight < a.weight - slack:
            bad.append(f"weight decreased at step {b.n}")
        if np.linalg.norm(np.subtract(b.e, a.e)) > a.sigma / 8:
            bad.append(f"|e_{b.n} - e_{a.n}| > sigma_{a.n}/8")
        if not b.delta + bundle.distance(b.x, a.x) < a.delta:
            bad.append(f"ball at step {b.n} not inside the previous ball")
    for i, a in enumerate(R):
        for b in R[i + 1:]:
            if not bundle.distance(b.x, a.x) < a.delta:
                bad.append(f"d(x_{b.n}, x_{a.n}) >= delta_{a.n}")
            if np.linalg.norm(np.subtract(b.e, a.e)) > a.sigma / 8 and b.n > a.n + 1:
                bad.append(f"|e_{b.n} - e_{a.n}| > sigma_{a.n}/8")
    if trace.min_e0_star < 0.5 - slack:
        bad.append(f"accepted candidate with e0*(e) = {trace.min_e0_star} < 1/2")
    return bad


def rescan_pools(trace: IterTrace) -> list[float]:
    """Per step, how far the best pool weight exceeds the selected one (should be <= eps_n)."""
    out = []
    for rec, (_, _, W) in zip(trace.records[1:], trace.pools):
        out.append(float(W.max()) - rec.weight)
    return out


# ---------------------------------------------------------------- almost maximality

@dataclass(frozen=True)
class MaximalityReport:
    passed: bool
    eps: float
    max_excess: float
    probes: int
    admitted: int
    vacuous: bool
    worst: tuple | None = None

    def to_dict(self) -> dict:
        return _floats(dict(self.__dict__))


def almost_maximality_check(f: LipschitzFunction, bundle: Bundle, trace: IterTrace, eps: float,
                            probes: int = 64, seed: int = 0, extra_pairs=(), omega=None, ts=None,
                            include_tail: bool = True) -> MaximalityReport:
    """Probe pairs near the limit in G_{p_inf}(x~, e~, 0) and report their weight excess."""
    last = trace.records[-1]
    if not eps > last.eps + 2 * last.t ** 2:
        raise ValueError(f"eps must exceed eps_n + 2 t_n^2 = {last.eps + 2 * last.t ** 2}")
    omega = omega or omega_envelope()
    ts = default_t_grid((bundle.con.lo, bundle.con.hi)) if ts is None else ts
    rng = np.random.default_rng(seed)
    st = trace.state
    xl = trace.x_limit
    el = np.asarray(trace.e_limit) / np.linalg.norm(trace.e_limit)
    yl = bundle.project(xl)
    base_w = float(f.dir(yl, el) if f.exact else dir_derivative(f, yl, el).value) / p_norm(st, el)
    pairs = []
    if include_tail:
        pairs += [(r.x, np.asarray(r.e), None) for r in trace.records[1:]]
    for _ in range(probes):
        u = rng.normal(size=yl.size)
        u *= 0.45 * last.delta * rng.random() / np.linalg.norm(u)
        x = bundle.perturb(xl, 0.45 * last.delta * (2 * rng.random() - 1), u)
        e = el + last.sigma * rng.normal(size=yl.size)
        pairs.append((x, e / np.linalg.norm(e), None))
    pairs += [(tuple(p.x), np.asarray(p.e, float), p.weight) for p in extra_pairs]
    admitted, worst, excess = 0, None, float("-inf")
    for x, e, forced in pairs:
        if forced is None:
            if not bundle.contains(x) or bundle.distance(x, xl) > last.delta:
                continue
            w = weight(f, st, bundle.project(x), e)
            if np.isnan(w) or w < base_w - VALUE_TOL:
                continue
            slope = gap_slope(f, yl, el, bundle.project(x), ts)
            if slope > float(omega(max(w - base_w, 0.0) + 1e-300)):
                continue
        else:
            w = forced
        admitted += 1
        if w - base_w > excess:
            excess, worst = w - base_w, (tuple(map(float, x)), tuple(map(float, e)))
    if admitted == 0:
        return MaximalityReport(True, eps, 0.0, len(pairs), 0, True)
    return MaximalityReport(bool(excess < eps), eps, float(excess), len(pairs), admitted, False, worst)


# ---------------------------------------------------------------- pipelines

@dataclass(frozen=True)
class PipelineReport:
    function: str
    trace: IterTrace
    modulus: ModulusCurve
    maximality: MaximalityReport
    certificates: tuple
    point: tuple
    direction: tuple
    derivative: float
    initial_derivative: float
    diagnostic_grade: bool

    @property
    def modulus_ratio(self) -> float:
        top = self.modulus.values[0]
        return self.modulus.values[-1] / top if top > 0 else 0.0

    def to_dict(self) -> dict:
        return _floats({
            "function": self.function,
            "point": list(self.point),
            "direction": list(self.direction),
            "derivative": self.derivative,
            "initial_derivative": self.initial_derivative,
            "final_weight": self.trace.records[-1].weight,
            "initial_weight": self.trace.records[0].weight,
            "steps": len(self.trace.records) - 1,
            "modulus": {"r": list(self.modulus.radii), "M": list(self.modulus.values)},
            "maximality": self.maximality.to_dict(),
            "certificates": list(self.certificates),
            "diagnostic_grade": self.diagnostic_grade,
        })


def start_pair(g: LipschitzFunction, con: Construction, lam: float):
    """A point on the root wedge and a unit direction with g'(y, e) >= 0."""
    arr = con.root_wedge.array
    options = [(arr[1] + 0.5 * (arr[2] - arr[1]), arr[2] - arr[1]), (arr[0] + 0.5 * (arr[1] - arr[0]), arr[1] - arr[0])]
    for y, e in options:
        e = e / np.linalg.norm(e)
        dd = dir_derivative(g, y, e)
        if dd.exists:
            if dd.value < 0:
                e = -e
            return (lam / 2,) + tuple(map(float, y)), e
    raise ValueError("no start pair with an existing derivative")


def uds_pipeline(g: LipschitzFunction, con: Construction, lam_prime: float, lam: float, N: int = 12,
                 pool_size: int = 48, tau_samples: int = 4, seed: int = 0, radii=None, n_certificates: int = 4,
                 n_directions: int = 720) -> PipelineReport:
    """Find an almost maximal pair for f = g + 2 Lip(g) e0* and measure its Frechet modulus there."""
    if not 0 <= lam_prime < lam <= 1:
        raise ValueError("need 0 <= lambda' < lambda <= 1")
    bundle = make_bundle(con, lam, tau_samples)
    x0, e0 = start_pair(g, con, lam)
    L = g.L if g.L > 0 else 1.0
    f = add_linear(g, 2 * L, e0)
    fn = scaled(f, 1 / (3 * L))  # Lip <= 1 for the weights
    trace = iterate(fn, bundle, x0, e0, N, pool_size, seed, n_directions=n_directions, e0_star=e0)
    last = trace.records[-1]
    eps = 2 * (last.eps + 2 * last.t ** 2) + 1e-12
    rep = almost_maximality_check(fn, bundle, trace, eps, seed=seed)
    y = bundle.project(trace.x_limit)
    e = np.asarray(trace.e_limit)  # unit in the final norm
    fprime = dir_derivative(f, y, e).value
    if radii is None:
        r_max = con.tubes.alpha0
        radii = tuple(r_max * 2.0 ** -k for k in range(0, 11))
    e_star = norm_gradient(trace.state, e)
    mod = frechet_modulus(f, y, e, e_star, radii, fprime=fprime, seed=seed)
    certs = _certificates(con, y, lam_prime, lam, n_certificates, seed)
    return PipelineReport(g.name, trace, mod, rep, certs, tuple(map(float, y)), tuple(map(float, e)),
                          float(fprime), float(dir_derivative(f, np.asarray(x0[1:]), e0).value), not g.exact)


def _certificates(con: Construction, y, lam_prime: float, lam: float, count: int, seed: int) -> tuple:
    """Wedge-approximation certificates for small balls around y (skipped if y is not in T at lambda')."""
    psi = lam - lam_prime
    if psi > con.cap_ratio or count <= 0:
        return ()
    wit = MembershipEngine(con, lam_prime).witnesses_T(y)
    if wit is None:
        return ({"status": "skipped", "reason": "point not in T at lambda'"},)
    rng = np.random.default_rng(seed)
    out = []
    d1 = delta1_from_widths([w.w for w in wit], psi, 0.9, con.rho)
    for i in range(count):
        delta = d1 / 2
        v = y + delta * _unit_rows(rng, 3, y.size) * rng.random((3, 1))
        try:
            c = approximating_tube(y, delta, Wedge.from_array(v), lam_prime, lam, con, witnesses=wit)
            out.append({"status": "ok", "delta": delta, "distance": c.distance, "level": c.level,
                        "samples": c.samples_checked})
        except (OutOfRange, AssertionError, ValueError) as exc:
            out.append({"status": "failed", "delta": delta, "reason": str(exc)})
    return tuple(_floats(c) for c in out)


def _unit_rows(rng, n, d):
    u = rng.normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


# ---------------------------------------------------------------- disconnected set

@dataclass
class DisconnectedSet:
    con: Construction
    lam: float
    center: np.ndarray
    radius: float  # of the closed ball (r0 / 2)
    cantor: CantorSet
    P: np.ndarray
    shift: float
    _engine: MembershipEngine = field(default=None, repr=False)

    def __post_init__(self):
        self._engine = MembershipEngine(self.con, self.lam)

    def fibre_ok(self, Y: np.ndarray) -> np.ndarray:
        return self.cantor.contains_many(np.atleast_2d(Y) @ self.P - self.shift)

    def contains(self, y) -> bool:
        y = np.asarray(y, float)
        if np.linalg.norm(y - self.center) > self.radius:
            return False
        if not self.fibre_ok(y[None])[0]:
            return False
        return self._engine.in_T(y)

    def contains_many(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, float))
        mask = (np.linalg.norm(Y - self.center, axis=1) <= self.radius) & self.fibre_ok(Y)
        out = np.zeros(len(Y), bool)
        for i in np.nonzero(mask)[0]:
            out[i] = self._engine.in_T(Y[i])
        return out

    def descriptor(self) -> dict:
        return _floats({"lambda": self.lam, "center": list(self.center), "radius": self.radius,
                        "P": list(self.P), "shift": self.shift, "cantor_depth": self.cantor.depth})


def disconnected_set(con: Construction, lam0: float, y0, r0: float, cantor: CantorSet, P) -> DisconnectedSet:
    """P^-1(C0) n T_lambda0 n closed ball(y0, r0/2), with C0 = C + (P y0 - c) for a point c of C."""
    y0 = np.asarray(y0, float)
    P = np.asarray(P, float)
    if not np.linalg.norm(P) > 0:
        raise ValueError("P must be nonzero")
    if not r0 > 0:
        raise ValueError("radius must be positive")
    if not MembershipEngine(con, lam0).in_T(y0):
        raise ValueError("y0 is not in T at lambda0")
    c = float(cantor.intervals[0][0])
    return DisconnectedSet(con, float(lam0), y0, r0 / 2, cantor, P, float(y0 @ P) - c)
