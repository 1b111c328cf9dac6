"""Run configuration dataclasses with validation of the construction's inequalities."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """A configuration value violates a required inequality."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class AmbientConfig:
    d: int = 2
    bbox: tuple = ((-1.0, -1.0), (1.0, 1.0))
    j: int = 5
    phi: tuple = (1.0, 0.0)
    eta_index: str = "generation"
    j_base: int = 2


@dataclass(frozen=True)
class TubeConfig:
    rho: str = "1/4"
    eps0: float = 0.5
    w0: float = 0.125
    alpha0: float = 0.25
    K: int = 4
    root: tuple = ((-0.25, 0.0), (0.0, 0.0), (0.25, 0.25))
    net_diameter_ratio: float = 0.25
    budget: int = 1_000_000
    schedule_overrides: tuple = ()  # ((k, l, "p/q"), ...)
    probe_points: int = 6

    @property
    def rho_q(self) -> Fraction:
        return as_fraction(self.rho)


@dataclass(frozen=True)
class MaximizerConfig:
    N: int = 12
    pool_size: int = 48
    function: str = "l1"
    function_params: tuple = ()  # sorted (key, value) pairs
    lam_prime: float = 0.25
    lam: float = 0.5
    tau_samples: int = 4

    @property
    def params(self) -> dict:
        return dict(self.function_params)


DEFAULT_SUITES = ("tube_invariants", "nesting", "hardwork_ball", "wedge_approximation", "closedness")


@dataclass(frozen=True)
class RunConfig:
    ambient: AmbientConfig = field(default_factory=AmbientConfig)
    tubes: TubeConfig = field(default_factory=TubeConfig)
    maximizer: MaximizerConfig = field(default_factory=MaximizerConfig)
    lambdas: tuple = (0.25, 0.5)
    suites: tuple = DEFAULT_SUITES
    seed: int = 0
    out: str = "runs/default"
    workers: int = 1

    def validate(self) -> "RunConfig":
        a, t, m = self.ambient, self.tubes, self.maximizer
        if a.d < 2 or a.d > 8:
            raise ConfigError(f"dimension d={a.d} must satisfy 2 <= d <= 8")
        lo, hi = a.bbox
        if len(lo) != a.d or len(hi) != a.d or any(h <= l for l, h in zip(lo, hi)):
            raise ConfigError("bbox must be a non-degenerate box in R^d")
        if len(a.phi) != a.d or not any(a.phi):
            raise ConfigError("phi must be a nonzero functional on R^d")
        if a.j < 1:
            raise ConfigError("refinement level j must be >= 1")
        if a.eta_index not in ("generation", "enumeration"):
            raise ConfigError("eta_index must be 'generation' or 'enumeration'")
        try:
            rho = t.rho_q
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"rho is not a number: {t.rho!r}") from exc
        if not 0 < rho < 1:
            raise ConfigError(f"rho = {float(rho)} violates 0 < rho < 1")
        if not 0 < t.w0 <= t.alpha0 < t.eps0:
            raise ConfigError(f"root widths violate 0 < w0 <= alpha0 < eps0 (w0={t.w0}, alpha0={t.alpha0}, eps0={t.eps0})")
        if t.K < 1:
            raise ConfigError("depth K must be >= 1")
        if not 0 < t.net_diameter_ratio <= 1:
            raise ConfigError("net_diameter_ratio must lie in (0, 1]")
        if t.budget < 1:
            raise ConfigError("triple budget must be positive")
        if len(t.root) != 3 or any(len(v) != a.d for v in t.root):
            raise ConfigError("root must be three points in R^d")
        for lam in self.lambdas:
            if not 0 <= lam <= 1:
                raise ConfigError(f"lambda = {lam} violates 0 <= lambda <= 1")
        if not 0 <= m.lam_prime < m.lam <= 1:
            raise ConfigError("maximizer lambdas violate 0 <= lambda' < lambda <= 1")
        if m.N < 1 or m.pool_size < 1 or m.tau_samples < 1:
            raise ConfigError("N, pool_size and tau_samples must be positive")
        from .tubes import RklSchedule  # local import avoids a cycle
        sched = RklSchedule(rho, dict(((k, l), as_fraction(v)) for k, l, v in t.schedule_overrides))
        bad = sched.violations(t.K + 2)
        if bad:
            raise ConfigError(f"schedule violates {bad[0]}")
        from .maximizer import Schedule
        bad = Schedule.standard(m.N).violations()
        if bad:
            raise ConfigError(f"iteration schedule violates {bad[0]}")
        return self

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def digest(self) -> str:
        """Content hash of everything that affects results (not the output path or worker count)."""
        body = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        sub = {}
        for name, kind in (("ambient", AmbientConfig), ("tubes", TubeConfig), ("maximizer", MaximizerConfig)):
            part = dict(raw.pop(name, {}) or {})
            names = {f.name for f in fields(kind)}
            if set(part) - names:
                raise ConfigError(f"unknown {name} keys: {sorted(set(part) - names)}")
            sub[name] = kind(**{k: _tupled(k, v) for k, v in part.items()})
        rest = {k: _tupled(k, v) for k, v in raw.items()}
        try:
            return cls(**sub, **rest)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | os.PathLike | None = None) -> "RunConfig":
        env = os.environ.get("UDS_CONFIG")
        p = env or path
        if p is None:
            return cls()
        try:
            raw = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        return cls.from_dict(raw)

    def with_overrides(self, **kw) -> "RunConfig":
        tubes = self.tubes
        if kw.get("depth") is not None:
            tubes = replace(tubes, K=int(kw["depth"]))
        out = replace(self, tubes=tubes)
        if kw.get("seed") is not None:
            out = replace(out, seed=int(kw["seed"]))
        if kw.get("workers") is not None:
            out = replace(out, workers=int(kw["workers"]))
        if kw.get("out") is not None:
            out = replace(out, out=str(kw["out"]))
        if kw.get("lam") is not None:
            out = replace(out, lambdas=(float(kw["lam"]),))
        return out


def _plain(x: Any):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    return x


def _tupled(key: str, v: Any):
    if key == "function_params" and isinstance(v, dict):
        return tuple(sorted((k, _tupled(k, x)) for k, x in v.items()))
    if isinstance(v, list):
        return tuple(_tupled(key, x) for x in v)
    return v
