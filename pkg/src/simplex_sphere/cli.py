"""Command-line experiment driver.

    simplex-sphere solve-params --b 1.5
    simplex-sphere sample --n 20 --b 1.5 --sampler exact --n-samples 1000 --seed 7
    simplex-sphere verify-thm2 --n-samples 500 --seed 1 --threads 4

Exit status: 0 success/pass, 1 failed check or infeasible sampler, 2 usage error.
The output directory defaults to $SIMPLEX_SPHERE_OUT_DIR, else ./simplex-sphere-out.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from . import experiments as ex
from .errors import InfeasibleRejectionError, SimplexSphereError
from .geometry import ManifoldSpec, ShellSpec
from .samplers import write_batch
from .tilted import TiltedParams, limit_params, solve_params, tilted_moments
from .verify import moment_report

SUBCOMMANDS = ("solve-params", "sample", "verify-thm1", "verify-thm2", "verify-thm3",
               "llt-check", "sandwich-check")
OUT_ENV = "SIMPLEX_SPHERE_OUT_DIR"
DEFAULT_OUT = "simplex-sphere-out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str
    n: List[int] = field(default_factory=list)
    b: List[float] = field(default_factory=list)
    eps: Optional[float] = None
    sampler: str = "gibbs"
    n_samples: Optional[int] = None
    seed: int = 0
    threads: int = 1
    out_dir: str = DEFAULT_OUT
    format: str = "json"
    sweeps: Optional[int] = None
    burn_in: Optional[int] = None
    bins: int = 25
    r: Optional[float] = None
    s: Optional[float] = None

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.n_samples is not None and self.n_samples < 1:
            raise UsageError("--n-samples must be >= 1")
        if self.threads < 1:
            raise UsageError("--threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        if self.subcommand in ("sample", "sandwich-check"):
            if len(self.n) != 1 or len(self.b) != 1:
                raise UsageError(f"{self.subcommand} takes exactly one --n and one --b")
        if self.subcommand in ("sample", "verify-thm1", "verify-thm2", "verify-thm3",
                               "sandwich-check"):
            for n in self.n:
                for b in self.b:
                    if not (1.0 < b < n):
                        raise UsageError(f"need 1 < b < n, got n={n}, b={b}")
        if self.subcommand == "sample" and self.sampler == "shell" and self.eps is None:
            raise UsageError("the shell sampler needs --eps")
        if self.eps is not None and not (0 < self.eps < 0.5):
            raise UsageError("--eps must satisfy 0 < eps < 1/2")


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simplex-sphere", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, n_default=None, b_default=None, samples=None):
        p.add_argument("--n", type=_int_list, default=n_default,
                       help="dimension(s), comma separated")
        p.add_argument("--b", type=_float_list, default=b_default,
                       help="normalized second moment(s), comma separated")
        p.add_argument("--n-samples", type=int, default=samples)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("solve-params", help="moment-matched (r, s) for 1 < b <= 2")
    common(p, b_default=None)

    p = sub.add_parser("sample", help="draw points and write a batch file")
    common(p, samples=1000)
    p.add_argument("--sampler", choices=("exact", "shell", "gibbs"), default="exact")
    p.add_argument("--eps", type=float)
    p.add_argument("--sweeps", type=int, help="Gibbs sweeps between recorded points")
    p.add_argument("--burn-in", type=int, help="Gibbs burn-in sweeps")

    p = sub.add_parser("verify-thm1", help="marginal convergence for 1 < b <= 2")
    common(p, list(ex.THM1_NS), list(ex.THM1_BS), samples=10**4)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("verify-thm2", help="localization for b > 2")
    common(p, list(ex.THM2_NS), [ex.THM2_B], samples=500)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("verify-thm3", help="KS rate for one and two coordinates")
    common(p, list(ex.THM1_NS), [1.5], samples=10**4)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("llt-check", help="local limit theorem for (sum Y, sum Y^2)")
    common(p, [50, 400], [2.0], samples=10**5)
    p.add_argument("--r", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--bins", type=int, default=25)

    p = sub.add_parser("sandwich-check", help="thick-shell two-sided bound")
    common(p, [10], [1.5], samples=10**6)
    p.add_argument("--eps", type=float, default=0.05)
    return parser


def config_from_args(args) -> ExperimentConfig:
    out_dir = args.out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT
    if args.subcommand == "solve-params" and not args.b:
        raise UsageError("solve-params needs --b")
    if args.subcommand == "sample" and (not args.n or not args.b):
        raise UsageError("sample needs --n and --b")
    return ExperimentConfig(
        subcommand=args.subcommand,
        n=list(args.n or []),
        b=list(args.b or []),
        eps=getattr(args, "eps", None),
        sampler=getattr(args, "sampler", "gibbs"),
        n_samples=args.n_samples,
        seed=args.seed,
        threads=args.threads,
        out_dir=out_dir,
        format=args.format,
        sweeps=getattr(args, "sweeps", None),
        burn_in=getattr(args, "burn_in", None),
        bins=getattr(args, "bins", 25),
        r=getattr(args, "r", None),
        s=getattr(args, "s", None),
    )


# --- report io ------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_report(out_dir: Path, name: str, report: dict, fmt: str) -> List[Path]:
    report = _plain(report)
    if fmt == "json":
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        return [path]
    paths = []
    rows = report.get("rows") or []
    if rows:
        path = out_dir / f"{name}.csv"
        write_rows(path, rows)
        paths.append(path)
    checks = [{"check": k, "passed": v} for k, v in sorted(report.get("checks", {}).items())]
    summary = [{"key": k, "value": json.dumps(v, sort_keys=True)}
               for k, v in sorted(report.items()) if k not in ("rows", "checks")]
    for suffix, table in (("checks", checks), ("summary", summary)):
        if table:
            path = out_dir / f"{name}-{suffix}.csv"
            write_rows(path, table)
            paths.append(path)
    return paths


def write_rows(path: Path, rows: List[dict]) -> None:
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(row.get(k)) for k in keys})


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def read_rows(path) -> List[dict]:
    """Rows of a CSV table; numeric cells come back as int/float."""
    def parse(v):
        if v == "":
            return None
        for cast in (int, float):
            try:
                return cast(v)
            except ValueError:
                pass
        if v in ("True", "False"):
            return v == "True"
        return v

    with open(path, newline="") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# --- subcommands -------------------------------------------------------------------

def _cmd_solve_params(cfg: ExperimentConfig):
    rows = []
    for b in cfg.b:
        p = solve_params(b)
        mom = tilted_moments(p)
        rows.append({"b": b, "r": p.r, "s": p.s, "mean": mom.m[0], "second_moment": mom.m[1],
                     "third_moment": mom.m[2], "fourth_moment": mom.m[3]})
        print(f"b={b!r} r={p.r:.12g} s={p.s:.12g}")
    checks = {f"match_b={row['b']}": abs(row["mean"] - 1) <= 1e-8 and
              abs(row["second_moment"] - row["b"]) <= 1e-8 for row in rows}
    return {"rows": rows, "checks": checks}, []


def _cmd_sample(cfg: ExperimentConfig, out_dir: Path):
    n, b = cfg.n[0], cfg.b[0]
    count = cfg.n_samples
    batch = ex.draw_batch(cfg.sampler, n, b, count, cfg.seed, cfg.threads, eps=cfg.eps,
                          thin=cfg.sweeps, burn_in=cfg.burn_in)
    path = out_dir / "batch.txt"
    write_batch(path, batch)
    print(f"wrote {len(batch)} points to {path}")
    summary = {
        "points": len(batch), "proposals": batch.proposals, "accepts": batch.accepts,
        "acceptance": batch.acceptance, "worker_seeds": batch.extra.get("worker_seeds"),
        "thin": batch.extra.get("thin"), "burn_in": batch.extra.get("burn_in"),
    }
    return {"summary": summary, "checks": {"membership": bool(batch.validate().all())}}, [path]


def _limit_moment_rows(batch, b, n):
    p = limit_params(b)
    lim = tilted_moments(p).m
    rows = []
    for k, est, se in moment_report(batch, 4):
        rows.append({"b": b, "n": n, "k": k, "empirical": est, "se": se, "limit": lim[k - 1],
                     "z": (est - lim[k - 1]) / se if se > 0 else None})
    return rows


def _cmd_verify_thm1(cfg: ExperimentConfig):
    thin = cfg.sweeps or 10
    burn = cfg.burn_in or 1000
    rows, moment_rows, checks = [], [], {}
    for b in cfg.b:
        if not 1.0 < b <= 2.0:
            raise UsageError(f"verify-thm1 covers 1 < b <= 2, got b={b}")
        results, probe = ex.convergence_probe(b, cfg.n, cfg.n_samples, cfg.seed, cfg.threads,
                                              thin, burn)
        scale = (lambda n: math.log(n)) if b == 2.0 else (lambda n: math.sqrt(math.log(n)))
        maxima = []
        for res in results:
            batch = ex.draw_batch("gibbs", res.n, b, min(cfg.n_samples, 2000), cfg.seed,
                                  cfg.threads, thin=thin, burn_in=burn)
            ext = ex.extreme_report(batch)
            med = ext.median_scaled_max(scale(res.n))
            maxima.append(med)
            row = res.to_dict()
            row["median_scaled_max"] = med
            rows.append(row)
            moment_rows += _limit_moment_rows(batch, b, res.n)
        checks[f"b={b}:ks_nonincreasing"] = probe.nonincreasing
        checks[f"b={b}:ks_within_rate"] = probe.within_rate
        checks[f"b={b}:max_bounded"] = ex.bounded_growth(maxima)
    return {"rows": rows, "moments": moment_rows, "checks": checks}, []


def _cmd_verify_thm2(cfg: ExperimentConfig):
    b = cfg.b[0]
    if b <= 2.0:
        raise UsageError(f"verify-thm2 covers b > 2, got b={b}")
    rows, checks = [], {}
    locs, m2s = [], []
    for n in cfg.n:
        thin = cfg.sweeps or ex.default_thin(n, b)
        burn = cfg.burn_in or ex.default_burn_in(n, b)
        batch = ex.draw_batch("gibbs", n, b, cfg.n_samples, cfg.seed, cfg.threads,
                              thin=thin, burn_in=burn)
        ext = ex.extreme_report(batch)
        mom = moment_report(batch, 2)
        second = mom[1][1]
        locs.append(ext.median_ratio_loc)
        m2s.append(ext.median_ratio_m2)
        row = ext.to_dict()
        row.update(thin=thin, burn_in=burn, first_moment=mom[0][1], second_moment=second,
                   exp1_second_moment=2.0, moment_gap=second - 2.0)
        rows.append(row)
        checks[f"n={n}:second_moment_equals_b"] = abs(second - b) <= 1e-9
        checks[f"n={n}:moment_gap_gt_0.9"] = second - 2.0 > 0.9
    checks["ratio_loc_in_[0.5,1.5]_at_largest_n"] = 0.5 <= locs[-1] <= 1.5
    checks["ratio_loc_monotone_toward_1"] = ex.monotone_toward(locs, 1.0)
    checks["ratio_m2_decreasing"] = ex.strictly_decreasing(m2s)
    return {"rows": rows, "checks": checks}, []


def _cmd_verify_thm3(cfg: ExperimentConfig):
    thin = cfg.sweeps or 10
    burn = cfg.burn_in or 1000
    rows, checks = [], {}
    for b in cfg.b:
        if not 1.0 < b <= 2.0:
            raise UsageError(f"verify-thm3 covers 1 < b <= 2, got b={b}")
        results, probe = ex.convergence_probe(b, cfg.n, cfg.n_samples, cfg.seed, cfg.threads,
                                              thin, burn)
        joint = ex.rate_probe([r.n for r in results], [r.ks_joint for r in results],
                              [0.0] * len(results))
        rows += [r.to_dict() for r in results]
        checks[f"b={b}:k=1_nonincreasing"] = probe.nonincreasing
        checks[f"b={b}:k=1_within_rate"] = probe.within_rate
        checks[f"b={b}:k=2_within_rate"] = joint.within_rate
    return {"rows": rows, "checks": checks}, []


def _cmd_llt(cfg: ExperimentConfig):
    if cfg.r is not None or cfg.s is not None:
        p = TiltedParams(cfg.r or 0.0, cfg.s or 0.0)
    else:
        p = limit_params(cfg.b[0])
    reports = ex.llt_pair(p, cfg.n, cfg.n_samples, cfg.bins, cfg.seed)
    rows = []
    checks = {}
    for rep in reports:
        d = rep.to_dict()
        d["r"], d["s"] = p.r, p.s
        rows.append(d)
        checks[f"n={rep.n}:cov_within_5se"] = bool(np.all(np.abs(rep.cov_z_scores()) <= 5.0))
    errs = [rep.sup_err for rep in reports]
    checks["sup_err_decreasing"] = ex.strictly_decreasing(errs)
    return {"rows": rows, "checks": checks}, []


def _cmd_sandwich(cfg: ExperimentConfig):
    n, b = cfg.n[0], cfg.b[0]
    reps = ex.sandwich_suite(n, b, cfg.eps, cfg.n_samples, cfg.seed)
    rows = [r.to_dict() for r in reps]
    return {"rows": rows, "checks": {r.f_id: r.passed for r in reps}}, []


COMMANDS = {
    "solve-params": _cmd_solve_params,
    "verify-thm1": _cmd_verify_thm1,
    "verify-thm2": _cmd_verify_thm2,
    "verify-thm3": _cmd_verify_thm3,
    "llt-check": _cmd_llt,
    "sandwich-check": _cmd_sandwich,
}


def _versions():
    import numba
    import scipy
    return {"simplex_sphere": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


def run(cfg: ExperimentConfig) -> int:
    """Execute one configured experiment; returns the process exit code."""
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        if cfg.subcommand == "sample":
            report, files = _cmd_sample(cfg, out_dir)
        else:
            report, files = COMMANDS[cfg.subcommand](cfg)
    except InfeasibleRejectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    elapsed = time.perf_counter() - started
    report["config"] = asdict(cfg)
    name = cfg.subcommand
    files = list(files) + write_report(out_dir, name, report, cfg.format)
    checks = report.get("checks", {})
    passed = all(checks.values())
    for key, ok in sorted(checks.items()):
        print(f"{'PASS' if ok else 'FAIL'} {key}")
    manifest = {
        "config": asdict(cfg),
        "versions": _versions(),
        "wall_clock_seconds": elapsed,
        "worker_seeds": [[cfg.seed, k] for k in range(cfg.threads)],
        "files": sorted(p.name for p in files),
        "passed": passed,
    }
    (out_dir / "manifest.json").write_text(json.dumps(_plain(manifest), indent=2, sort_keys=True) + "\n")
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimplexSphereError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ValueError) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
