"""Command line entry point: ``udset build|verify|maximize|export|report``.

Every artifact lives under the run directory (``--out``).  Exit codes:
0 success, 1 suite or invariant failure, 2 configuration error,
3 missing artifact.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import tubes
from .analysis import CORPUS, corpus_function
from .config import ConfigError, RunConfig, fmt_float
from .maximizer import InvariantFailure, _floats, uds_pipeline
from .verification import SUITES, run_suite, summary_csv

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MISSING = 0, 1, 2, 3
CACHE = "construction.uds"
FORMATS = ("svg", "csv", "json")


class MissingArtifact(FileNotFoundError):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dump(obj) -> str:
    return json.dumps(_floats(obj), sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def resolve_config(args) -> RunConfig:
    """Config file (or UDS_CONFIG), else the run directory's saved config, then flag overrides."""
    path = args.config
    if path is None and args.out is not None and (Path(args.out) / "config.json").exists():
        path = str(Path(args.out) / "config.json")
    cfg = RunConfig.load(path)
    cfg = cfg.with_overrides(depth=args.depth, seed=args.seed, workers=args.workers, out=args.out,
                             lam=args.lam)
    return cfg.validate()


def load_cache(out: Path) -> tubes.Construction:
    p = out / CACHE
    if not p.exists():
        raise MissingArtifact(f"no construction cache at {p}; run `udset build` first")
    return tubes.load(p)


def build_stats(con: tubes.Construction, cfg: RunConfig) -> dict:
    per_level = []
    for lvl, tris in enumerate(con.levels()):
        ws = [t.w for t in tris]
        per_level.append({"level": lvl, "count": len(tris),
                          "w_min": min(ws) if ws else None, "w_max": max(ws) if ws else None,
                          "alpha_max": max((t.alpha for t in tris), default=None)})
    return {"config_hash": cfg.digest(), "K": con.K, "d": con.d, "lambdas": list(cfg.lambdas),
            "triples": len(con.triples), "wedges": len(con.wedges), "levels": per_level}


# ---------------------------------------------------------------- subcommands

def cmd_build(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    t0 = time.perf_counter()
    con = tubes.build(cfg)
    tubes.save(con, out / CACHE)
    _write(out / "config.json", cfg.to_json() + "\n")
    _write(out / "stats.json", _dump(build_stats(con, cfg)))
    _log(f"built {len(con.triples)} triples, levels {con.level_counts()} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


def _suite_job(args):
    path, name, cfg = args
    return run_suite(name, tubes.load(path), cfg)


def cmd_verify(cfg: RunConfig, suites=None) -> int:
    out = Path(cfg.out)
    con = load_cache(out)
    names = list(cfg.suites if suites is None else suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; choose from {', '.join(SUITES)}")
    if not names:
        _log("warning: no suites selected, nothing to verify")
        _write(out / "verify.json", _dump({"config_hash": cfg.digest(), "suites": []}))
        return EXIT_OK
    if cfg.workers > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(_suite_job, [(out / CACHE, n, cfg) for n in names]))
    else:
        reports = []
        for n in names:
            t0 = time.perf_counter()
            reports.append(run_suite(n, con, cfg))
            _log(f"{n}: {time.perf_counter() - t0:.1f}s")
    for rep in reports:
        print(rep.to_text())
    _write(out / "verify.json", _dump({"config_hash": cfg.digest(), "suites": [r.to_dict() for r in reports]}))
    _write(out / "summary.csv", summary_csv(reports))
    failed = [r.suite for r in reports if not r.passed]
    if failed:
        print("FAILED suites: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


def cmd_maximize(cfg: RunConfig, function: str | None = None) -> int:
    out = Path(cfg.out)
    con = load_cache(out)
    m = cfg.maximizer
    name = function or m.function
    try:
        g = corpus_function(name, m.params, con.d)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from exc
    run = out / "maximize" / name
    try:
        rep = uds_pipeline(g, con, m.lam_prime, m.lam, N=m.N, pool_size=m.pool_size, tau_samples=m.tau_samples,
                           seed=cfg.seed)
    except InvariantFailure as exc:
        if exc.trace is not None:
            _write(run / "trace.jsonl", exc.trace.to_jsonl())
        _write(run / "report.json", _dump({"function": name, "status": "invariant-failure", "step": exc.step,
                                           "message": str(exc)}))
        print(f"invariant failure: {exc}")
        return EXIT_FAIL
    _write(run / "trace.jsonl", rep.trace.to_jsonl())
    _write(run / "modulus.csv", rep.modulus.to_csv())
    body = rep.to_dict()
    body["status"] = "ok"
    body["config_hash"] = cfg.digest()
    _write(run / "report.json", _dump(body))
    print(f"{name}: weight {rep.trace.records[0].weight:.6g} -> {rep.trace.records[-1].weight:.6g}, "
          f"M(r_min)/M(r_max) = {rep.modulus_ratio:.3g}")
    return EXIT_OK


def cmd_export(cfg: RunConfig, fmt: str | None) -> int:
    fmt = fmt or "svg"
    if fmt not in FORMATS:
        raise ConfigError(f"unknown export format {fmt!r}; choose from {', '.join(FORMATS)}")
    out = Path(cfg.out)
    con = load_cache(out)
    lam = max(cfg.lambdas)
    level = cfg.tubes.K
    if fmt == "svg":
        text = tubes.to_svg(con, lam, level)
    else:
        rows = tubes.to_rows(con, level)
        if fmt == "json":
            text = _dump(rows)
        else:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["id", "level", "parent", "w", "alpha", "wedge"])
            for r in rows:
                w.writerow([r["id"], r["level"], "" if r["parent"] is None else r["parent"], fmt_float(r["w"]),
                            fmt_float(r["alpha"]), json.dumps(_floats(r["wedge"]))])
            text = buf.getvalue()
    p = _write(out / f"tubes.{fmt}", text)
    print(p)
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    parts = {}
    for key, rel in (("build", "stats.json"), ("verify", "verify.json")):
        if (out / rel).exists():
            parts[key] = json.loads((out / rel).read_text())
    runs = {}
    for p in sorted((out / "maximize").glob("*/report.json")):
        runs[p.parent.name] = json.loads(p.read_text())
    if runs:
        parts["maximize"] = runs
    if not parts:
        raise MissingArtifact(f"nothing to report in {out}")
    summary = {"config_hash": cfg.digest(), **parts}
    if "verify" in parts:
        summary["suites_passed"] = {s["suite"]: s["passed"] for s in parts["verify"]["suites"]}
    _write(out / "report.json", _dump(summary))
    for s, ok in summary.get("suites_passed", {}).items():
        print(f"{s:24s} {'PASS' if ok else 'FAIL'}")
    for name, r in runs.items():
        print(f"{name:24s} {r.get('status')}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="udset", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (UDS_CONFIG overrides)")
    common.add_argument("--out", help="run directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--depth", type=int, help="construction depth K")
    common.add_argument("--lambda", dest="lam", type=float, help="single lambda to use instead of the config list")
    sub.add_parser("build", parents=[common], help="build and cache the tube construction")
    v = sub.add_parser("verify", parents=[common], help="run verification suites on the cached construction")
    v.add_argument("--suites", help=f"comma separated subset of {', '.join(SUITES)} (empty string for none)")
    mx = sub.add_parser("maximize", parents=[common], help="run the almost-maximization pipeline")
    mx.add_argument("--function", help=f"corpus function: {', '.join(CORPUS)}")
    ex = sub.add_parser("export", parents=[common], help="export tubes as svg, csv or json")
    ex.add_argument("--format", dest="fmt", help="svg | csv | json")
    sub.add_parser("report", parents=[common], help="collect artifacts into report.json")
    return ap


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "verify":
            suites = None if args.suites is None else [s for s in args.suites.split(",") if s.strip()]
            return cmd_verify(cfg, suites)
        if args.command == "maximize":
            return cmd_maximize(cfg, args.function)
        if args.command == "export":
            return cmd_export(cfg, args.fmt)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, tubes.CorruptFile) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
