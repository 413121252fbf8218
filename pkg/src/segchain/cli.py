"""
qsegsim: sweeps, checks and reports for the segmented-chain toolkit.

Numeric grids are CSV with ``#`` metadata lines; structured reports are
JSON. Sweeps keep a ``<out>.state.json`` sidecar of finished grid points and
skip them on rerun; outputs carry no timestamps, so reruns are byte-identical.

Exit codes: 0 success, 1 a check failed, 2 invalid configuration,
3 IO failure, 4 a grid point raised inside a worker.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from multiprocessing import Pool
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import analysis as an
from .gauge import (LEVEL_COLUMNS, MAX_FIT_P, TRANSITS, LogicalRates, crossing,
                    fit_level_curve, read_level_csv)
from .sweep import (SURFACE_COLUMNS, chunk_sizes, gauge_chunk, gauge_row, matching_check,
                    resolve_rounds, single_fault_check, surface_chunk, surface_row)

SCHEMA = 1
WORKERS_ENV = "SEGCHAIN_WORKERS"


class ConfigError(ValueError):
    pass


# -- parsing -----------------------------------------------------------------

def parse_grid(text: str, typ: Callable = float) -> list:
    """``a,b,c`` | ``start:stop:step`` (inclusive) | ``log:start:stop:count``."""
    t = text.strip()
    try:
        if t.startswith("log:"):
            _, a, b, k = t.split(":")
            vals = np.geomspace(float(a), float(b), int(k))
            return [typ(float(f"{v:.6g}")) for v in vals]
        if ":" in t:
            a, b, step = (float(x) for x in t.split(":"))
            if step <= 0 or b < a:
                raise ConfigError(f"bad range {text!r}")
            k = int(math.floor((b - a) / step + 1e-9)) + 1
            return [typ(float(f"{a + i * step:.10g}")) for i in range(k)]
        return [typ(x) for x in t.split(",") if x.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None


def worker_count(arg: Optional[int]) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    elif arg:
        n = arg
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ConfigError("worker count must be >= 1")
    return n


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- output --------------------------------------------------------------------

def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def csv_text(columns: Sequence[str], rows: Sequence[dict], meta: dict) -> str:
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r[k]) for k in columns})
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=an._json_default) + "\n"


class State:
    """Finished grid points of one sweep, persisted next to its output."""

    def __init__(self, out: str, fresh: bool = False):
        self.path = out + ".state.json"
        self.points: dict = {}
        if not fresh and os.path.exists(self.path):
            with open(self.path) as fh:
                self.points = json.load(fh).get("points", {})

    def save(self) -> None:
        atomic_write(self.path, json_text({"schema": SCHEMA, "points": self.points}))


def _call(task):
    fn, args = task
    try:
        return True, fn(*args)
    except Exception as exc:  # surfaced as a failed grid point
        return False, f"{type(exc).__name__}: {exc}"


def run_points(points: list, state: State, workers: int, on_done: Callable) -> list:
    """Run ``(key, [(fn, args), ...], reduce)`` points; chunks fan out to the pool."""
    failed = []
    pool = Pool(workers) if workers > 1 else None
    try:
        for key, tasks, reduce in points:
            if key in state.points:
                continue
            res = pool.map(_call, tasks) if pool else [_call(t) for t in tasks]
            bad = [msg for ok, msg in res if not ok]
            if bad:
                failed.append({"point": key, "error": bad[0]})
                continue
            state.points[key] = reduce([v for _, v in res])
            state.save()
            on_done()
    finally:
        if pool:
            pool.close()
            pool.join()
    return failed


def _meta(kind: str, cfg: dict, extra: dict) -> dict:
    return {"schema": f"{kind}/{SCHEMA}", "config_hash": config_hash(cfg),
            "code_version": __version__, "config": cfg, **extra}


# -- subcommands -----------------------------------------------------------------

def cmd_surface_sweep(a) -> int:
    ds = parse_grid(a.d, int)
    eps = parse_grid(a.eps2, float)
    if not ds or min(ds) < 3:
        raise ConfigError("--d needs distances >= 3")
    if not eps or not all(0 < e < 1 for e in eps):
        raise ConfigError("--eps2 values must lie in (0, 1)")
    if a.trials < 1 or a.chunk < 1:
        raise ConfigError("--trials and --chunk must be positive")
    rounds = {d: resolve_rounds(a.rounds, d) for d in ds}
    cfg = {"mode": "surface-sweep", "d": ds, "eps2": eps, "rounds": a.rounds, "trials": a.trials,
           "seed": a.seed, "chunk": a.chunk, "backend": a.backend}
    meta = _meta("surface", cfg, {
        "noise": "eps_I = eps_M = eps2, eps1 = eps2/10, eps0 = eps2/(5(2d-1))",
        "conventions": "R noisy rounds + 1 perfect readout round; "
                       "p_L from P = (1 - (1 - 2 p_L)^R)/2; Z = phase-error logical"})
    state = State(a.out, a.fresh)
    grid = [(d, e) for d in ds for e in eps]

    def key(d, e):
        return json.dumps([d, e, rounds[d], a.trials, a.seed, a.chunk, a.backend])

    def write():
        rows = [surface_row(d, e, rounds[d], a.trials, *state.points[key(d, e)])
                for d, e in grid if key(d, e) in state.points]
        atomic_write(a.out, csv_text(SURFACE_COLUMNS, rows, meta))

    points = []
    for d, e in grid:
        tasks = [(surface_chunk, (d, e, rounds[d], n, a.seed, k, a.backend))
                 for k, n in enumerate(chunk_sizes(a.trials, a.chunk))]
        points.append((key(d, e), tasks, lambda res: [sum(r[0] for r in res), sum(r[1] for r in res)]))
    failed = run_points(points, state, worker_count(a.workers), write)
    write()
    return _finish(failed)


def cmd_gauge_sweep(a) -> int:
    levels = parse_grid(a.levels, int)
    ps = parse_grid(a.p_cnot, float)
    if not levels or not all(1 <= n <= 4 for n in levels):
        raise ConfigError("--levels must lie in 1..4")
    if not ps or not all(p > 0 for p in ps):
        raise ConfigError("--p-cnot values must be positive")
    for p in ps:
        try:
            LogicalRates.from_p_cnot(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if a.trials < 1 or a.chunk < 1:
        raise ConfigError("--trials and --chunk must be positive")
    cfg = {"mode": "gauge-sweep", "levels": levels, "p_cnot": ps, "trials": a.trials,
           "seed": a.seed, "chunk": a.chunk}
    meta = _meta("gauge-level", cfg, {
        "noise": "depolarizing logical gates; p_IM = p0 = p_CNOT/14, p_SWAP = 3 p_CNOT, "
                 "memory x1/x4/x12 per init-measure/CNOT/SWAP layer",
        "routing": f"{TRANSITS} ancilla slot transits before each gauge CNOT, each billed as a SWAP",
        "conventions": "exRec = EC, transversal CNOT, EC on both blocks, then a noiseless decode; "
                       "failure = wrong or flagged logical frame on either block"})
    state = State(a.out, a.fresh)
    grid = [(n, p) for n in levels for p in ps]

    def key(n, p):
        return json.dumps([n, p, a.trials, a.seed, a.chunk])

    def write():
        rows = [gauge_row(n, p, a.trials, state.points[key(n, p)]) for n, p in grid
                if key(n, p) in state.points]
        atomic_write(a.out, csv_text(LEVEL_COLUMNS, rows, meta))

    points = []
    for n, p in grid:
        tasks = [(gauge_chunk, (n, p, m, a.seed, k)) for k, m in enumerate(chunk_sizes(a.trials, a.chunk))]
        points.append((key(n, p), tasks, sum))
    failed = run_points(points, state, worker_count(a.workers), write)
    write()
    return _finish(failed)


def _finish(failed: list) -> int:
    if failed:
        sys.stderr.write(json_text({"error": "grid points failed", "kind": "worker", "points": failed}))
        return 4
    return 0


def cmd_decode_check(a) -> int:
    ds = parse_grid(a.d, int)
    rep = {"schema": f"decode-check/{SCHEMA}", "code_version": __version__,
           "matching": matching_check(a.instances, a.max_defects, a.seed),
           "single_fault": [single_fault_check(d, backend=a.backend) for d in ds]}
    rep["passed"] = rep["matching"]["passed"] and all(r["passed"] for r in rep["single_fault"])
    _emit(a.out, json_text(rep))
    return 0 if rep["passed"] else 1


def cmd_verify_protocol(a) -> int:
    from .protocols import build_protocol, verify_protocol
    names = ["cnot", "hadamard", "state_transfer"] if a.protocol == "all" else [a.protocol]
    ds = parse_grid(a.d, int)
    if not ds or min(ds) < 2:
        raise ConfigError("--d needs distances >= 2")
    reports = []
    for name in names:
        for d in ds:
            reports.append(verify_protocol(build_protocol(name, d), rounds=a.rounds).to_dict())
    rep = {"schema": f"verify-protocol/{SCHEMA}", "code_version": __version__,
           "conventions": "phase-free maps checked modulo the final stabiliser group; "
                          "distance is spatial, per configuration",
           "reports": reports, "passed": all(r["passed"] for r in reports)}
    _emit(a.out, json_text(rep))
    return 0 if rep["passed"] else 1


def cmd_analyze(a) -> int:
    rep: dict = {"schema": f"analyze/{SCHEMA}", "code_version": __version__}
    if a.surface:
        rows = [r for path in a.surface for r in an.read_surface_csv(path)]
        grid = an.surface_grid(rows, a.kind)
        try:
            th = an.find_threshold(grid, seed=a.seed)
            rep["threshold"] = th.to_dict()
            eps_th = th.eps2_th
        except ValueError as exc:  # includes NoThresholdError
            rep["threshold"] = {"error": str(exc)}
            eps_th = a.eps2_th
        if eps_th:
            sub = an.select_subthreshold(grid, eps_th)
            try:
                fit = an.fit_scaling(sub)
                rep["scaling_fit"] = fit.to_dict()
                rep["scaling_fit"]["max_prediction_ratio"] = max(
                    max(fit.evaluate(e, d) / p, p / fit.evaluate(e, d)) for e, d, p, _ in sub)
            except ValueError as exc:
                rep["scaling_fit"] = {"error": str(exc)}
    if a.gauge:
        rows = [r for path in a.gauge for r in read_level_csv(path)]
        fits = {}
        for n in sorted({r["n"] for r in rows}):
            try:
                fits[n] = fit_level_curve(rows, n, a.p_lo, a.p_hi, a.max_p)
            except ValueError as exc:
                rep.setdefault("gauge_errors", {})[str(n)] = str(exc)
        rep["gauge_fits"] = {str(n): f.to_dict() for n, f in fits.items()}
        rep["gauge_crossings"] = {}
        for lo, hi in ((2, 3), (3, 4)):
            if lo in fits and hi in fits:
                rep["gauge_crossings"][f"{lo}-{hi}"] = crossing(fits[lo], fits[hi])
        rep["gauge_fit_window"] = {"p_lo": a.p_lo, "p_hi": a.p_hi, "max_P": a.max_p}
    if not a.surface and not a.gauge:
        raise ConfigError("analyze needs --surface and/or --gauge input")
    _emit(a.out, json_text(rep))
    return 0


def cmd_resource_curves(a) -> int:
    eps = parse_grid(a.eps2, float)
    targets = parse_grid(a.targets, float)
    sizes = parse_grid(a.sizes, int)
    rep = {"schema": f"resource-curves/{SCHEMA}", "code_version": __version__,
           "model": "scaling law with the tabulated fit; p_CNOT = 14 d p_L; s = d + 2",
           "required_segment": an.resource_table(eps, targets),
           "gates_before_failure": an.gates_table(eps, sizes),
           "overhead": {str(n): an.gauge_overhead(n) for n in (0, 3, 4)}}
    _emit(a.out, json_text(rep))
    return 0


def _emit(out: Optional[str], text: str) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qsegsim", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="mode", required=True)

    def sweep_opts(p, trials, chunk):
        p.add_argument("--trials", type=int, default=trials)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--chunk", type=int, default=chunk, help="trials per work unit")
        p.add_argument("--workers", type=int, default=None,
                       help=f"process count (env {WORKERS_ENV} overrides)")
        p.add_argument("--out", required=True)
        p.add_argument("--fresh", action="store_true", help="ignore finished points")

    p = sub.add_parser("surface-sweep", help="surface-code memory Monte Carlo")
    p.add_argument("--d", default="3,5,7")
    p.add_argument("--eps2", default="0.004:0.012:0.001")
    p.add_argument("--rounds", default="8d", help="integer or multiple of d such as 8d")
    p.add_argument("--backend", choices=("pymatching", "blossom"), default="pymatching")
    sweep_opts(p, 100_000, 10_000)
    p.set_defaults(fn=cmd_surface_sweep)

    p = sub.add_parser("gauge-sweep", help="gauge-code CNOT exRec Monte Carlo")
    p.add_argument("--levels", default="1,2,3")
    p.add_argument("--p-cnot", default="log:3e-5:3e-3:9")
    sweep_opts(p, 1_000_000, 1 << 16)
    p.set_defaults(fn=cmd_gauge_sweep)

    p = sub.add_parser("decode-check", help="matching oracle and single-fault correctability")
    p.add_argument("--d", default="3,5")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--max-defects", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("pymatching", "blossom"), default="blossom")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_decode_check)

    p = sub.add_parser("verify-protocol", help="symbolic check of lattice-deformation gates")
    p.add_argument("--protocol", choices=("cnot", "hadamard", "state_transfer", "all"), default="all")
    p.add_argument("--d", default="3")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_verify_protocol)

    p = sub.add_parser("analyze", help="threshold, scaling and level-curve fits")
    p.add_argument("--surface", nargs="*", default=[])
    p.add_argument("--gauge", nargs="*", default=[])
    p.add_argument("--kind", choices=("Z", "X"), default="Z")
    p.add_argument("--eps2-th", type=float, default=None,
                   help="threshold for point selection when no crossing is found")
    p.add_argument("--p-lo", type=float, default=0.0)
    p.add_argument("--p-hi", type=float, default=math.inf)
    p.add_argument("--max-p", type=float, default=MAX_FIT_P)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("resource-curves", help="segment size and gates-before-failure tables")
    p.add_argument("--eps2", default="log:1e-4:6e-3:25")
    p.add_argument("--targets", default="4e-6,1e-15")
    p.add_argument("--sizes", default="5:41:2")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_resource_curves)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    try:
        return a.fn(a)
    except ConfigError as exc:
        sys.stderr.write(json_text({"error": str(exc), "kind": "config"}))
        return 2
    except OSError as exc:
        sys.stderr.write(json_text({"error": str(exc), "kind": "io"}))
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
