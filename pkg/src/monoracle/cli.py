"""Command-line front end: ``monoracle {fit,estimate,oracle,bench,diag}``.

Exit codes: 0 success, 1 diagnostic violation, 2 usage or precondition
error, 3 I/O error.  Every output embeds the resolved configuration (JSON
``config`` object, or ``# key=value`` lines above the CSV header).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np

from . import __version__
from .criteria import RiskReport, cv_value, empirical_spectrum, estimate_density, ise_value, mise_value
from .densities import SampleSet, l2_norm_sq, parse_model, read_sample_file, replication_seed, sample
from .selector import cv_optimal_kernel, minimax_kernel, oracle_kernel, refine
from .spectral import SpectralKernel, build_grid, kernel_from_json
from .waveletdiag import (
    build_f_basis,
    build_haar_basis,
    check_lemma1,
    check_lemma3,
    default_depth,
    favorable_event_frequencies,
)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

# bins allowed when the resolution is left to its default
DEFAULT_MAX_BINS = 4096
FIT_MAX_BINS = 1 << 16


class UsageError(Exception):
    pass


def thread_count() -> int:
    raw = os.environ.get("MONORACLE_THREADS", "")
    if raw.strip():
        try:
            k = int(raw)
        except ValueError:
            raise UsageError(f"MONORACLE_THREADS must be a positive integer, got {raw!r}") from None
        if k < 1:
            raise UsageError(f"MONORACLE_THREADS must be a positive integer, got {raw!r}")
        return k
    return os.cpu_count() or 1


def ordered_map(fn, items):
    """``map`` over a thread pool capped by MONORACLE_THREADS; results keep input order."""
    items = list(items)
    k = min(thread_count(), max(len(items), 1))
    if k == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


def load_schema(name: str) -> dict:
    """Shipped JSON schema for an output: fit, estimate, oracle, bench_summary or diag."""
    return json.loads(resources.files("monoracle").joinpath("schemas", f"{name}.json").read_text())


# configuration -----------------------------------------------------------------


def _default_W(n: int) -> float:
    return float(min(n, 256))


def _default_t(W: float, max_bins: int) -> int:
    t = 0
    while True:
        try:
            grid = build_grid(W, t)
        except ValueError:
            t += 1
            if t > 40:
                raise UsageError(f"--W {W!r} is not a dyadic rational")
            continue
        if grid.m * 2 > max_bins:
            return t
        t += 1


def _grid(cfg):
    try:
        return build_grid(cfg["W"], cfg["t"])
    except ValueError as exc:
        raise UsageError(f"invalid grid: {exc}") from None


def _model(cfg):
    if cfg.get("model") is None:
        raise UsageError(f"command '{cfg['command']}' needs --model")
    try:
        return parse_model(cfg["model"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_sample(cfg) -> SampleSet:
    """Sample from --sample, or drawn from --model with --n and --seed; exactly one source."""
    has_file = cfg.get("sample") is not None
    has_model = cfg.get("model") is not None
    if has_file == has_model:
        raise UsageError("give exactly one data source: --sample PATH, or --model with --n and --seed")
    if has_file:
        s = read_sample_file(cfg["sample"])
        cfg["n"] = s.n
        return s
    if cfg.get("n") is None:
        raise UsageError("--model needs --n")
    return sample(_model(cfg), cfg["n"], cfg["seed"])


def _config(args, **extra) -> dict:
    cfg = {
        "command": args.command,
        "version": __version__,
        "model": args.model,
        "sample": args.sample,
        "n": args.n,
        "seed": args.seed,
        "W": args.W,
        "t": args.t,
        "eps": args.eps,
        "reps": args.reps,
        "lambda": args.lam,
        "format": args.format,
    }
    cfg.update(extra)
    return cfg


def _comment_block(cfg) -> str:
    return "".join(f"# {k}={json.dumps(v)}\n" for k, v in cfg.items())


def _emit(text: str, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def _kernel_dict(K: SpectralKernel) -> dict:
    return {"W": K.grid.W, "t": K.grid.t, "v": [float(a) for a in K.v]}


def _read_kernel(path, strict=True) -> SpectralKernel:
    with open(path) as fh:
        text = fh.read()
    try:
        return kernel_from_json(text, strict=strict)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: invalid kernel: {exc}") from None


# commands ----------------------------------------------------------------------


def cmd_fit(args) -> int:
    cfg = _config(args)
    s = _load_sample(cfg)
    if s.n < 2:
        raise UsageError(f"fit needs a sample with n ≥ 2 (n >= 2), got n={s.n}")
    cfg["W"] = _default_W(s.n) if args.W is None else args.W
    if args.t is not None:
        t_max = args.t
    else:
        t_max = min(args.t_max, _default_t(cfg["W"], FIT_MAX_BINS))
    cfg["t_max"] = t_max
    try:
        K, trace = refine(s, cfg["W"], t_max=t_max, eps=cfg["eps"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg["t"] = K.grid.t
    out = {
        "config": cfg,
        **_kernel_dict(K),
        "cv": trace.entries[-1].cv,
        "trace": [{"t": e.t, "m": e.m, "cv": e.cv, "guaranteed_gap": e.guaranteed_gap} for e in trace.entries],
    }
    if args.format == "csv":
        _emit(_comment_block(cfg) + trace.to_csv(), args.out)
    else:
        _emit(_dump(out), args.out)
    if args.trace:
        _emit(_comment_block(cfg) + trace.to_csv(), args.trace)
    if args.kernel_out:
        _emit(_dump(out), args.kernel_out)
    return EXIT_OK


def _read_points(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise UsageError(f"{path}:{lineno}: not a real number: {line!r}") from None
    return np.asarray(vals, dtype=float)


def cmd_estimate(args) -> int:
    if args.kernel is None or args.points is None:
        raise UsageError("estimate needs --kernel and --points")
    cfg = _config(args, kernel=args.kernel, points=args.points)
    K = _read_kernel(args.kernel)
    s = _load_sample(cfg)
    if s.n < 1:
        raise UsageError("estimate needs a non-empty sample")
    cfg["W"], cfg["t"] = K.grid.W, K.grid.t
    pts = _read_points(args.points)
    vals = estimate_density(K, s, pts) if pts.size else np.empty(0)
    if args.format == "json":
        _emit(_dump({"config": cfg, "rows": [{"x": float(a), "fhat": float(b)} for a, b in zip(pts, vals)]}), args.out)
    else:
        buf = io.StringIO()
        buf.write(_comment_block(cfg))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "fhat"])
        for a, b in zip(pts, vals):
            w.writerow([repr(float(a)), repr(float(b))])
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _resolve_grid(cfg, n):
    if cfg["W"] is None:
        cfg["W"] = _default_W(n)
    if cfg["t"] is None:
        cfg["t"] = _default_t(cfg["W"], DEFAULT_MAX_BINS)
    return _grid(cfg)


def cmd_oracle(args) -> int:
    cfg = _config(args)
    model = _model(cfg)
    if cfg["n"] is None or cfg["n"] < 1:
        raise UsageError("oracle needs --n ≥ 1")
    grid = _resolve_grid(cfg, cfg["n"])
    n = cfg["n"]
    K = oracle_kernel(model, n, grid)
    report = RiskReport(K, n, model.tail_energy(grid.W), mise=mise_value(K, model, n))
    minimax = {str(b): mise_value(minimax_kernel(b, grid), model, n) for b in (1, 2, 3)}
    out = {
        "config": cfg,
        **_kernel_dict(K),
        "report": report.to_dict(),
        "minimax_mise": minimax,
        "l2_norm_sq": l2_norm_sq(model),
    }
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(_comment_block(cfg))
        buf.write(f"# mise={json.dumps(report.mise)}\n")
        for b, v in minimax.items():
            buf.write(f"# mise_beta{b}={json.dumps(v)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "omega_lo", "omega_hi", "v"])
        for k, (lo, v) in enumerate(zip(grid.edges[:-1], K.v)):
            w.writerow([k, repr(float(lo)), repr(float(lo + grid.width)), repr(float(v))])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_dump(out), args.out)
    if args.kernel_out:
        _emit(_dump(out), args.kernel_out)
    return EXIT_OK


BENCH_COLUMNS = ["rep", "seed", "n", "t", "cv", "ise", "mise_oracle", "ratio"]


def run_bench(model, n: int, R: int, grid, seed: int, map_fn=map, timing: bool = False):
    """R replications of sample -> K0 -> ISE(K0), against the oracle MISE(K*) on the same grid.

    Returns (rows, summary).  Row r uses the sample seeded by ``replication_seed(seed, r)``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    Kstar = oracle_kernel(model, n, grid)
    mstar = mise_value(Kstar, model, n)
    f2 = l2_norm_sq(model)

    def one(r):
        t0 = time.perf_counter()
        rs = replication_seed(seed, r)
        s = sample(model, n, rs)
        spec = empirical_spectrum(s, grid)
        K0 = cv_optimal_kernel(spec)
        ise = ise_value(K0, s, model)
        row = {
            "rep": r,
            "seed": rs,
            "n": n,
            "t": grid.t,
            "cv": cv_value(K0, spec),
            "ise": ise,
            "mise_oracle": mstar,
            "ratio": ise / mstar,
        }
        cv_star = cv_value(Kstar, spec)
        if timing:
            row["wall_time"] = time.perf_counter() - t0
        return row, cv_star

    res = list(map_fn(one, range(R)))
    rows = [r for r, _ in res]
    ratios = np.array([r["ratio"] for r in rows])
    resid = np.array([c for _, c in res]) + f2 - mstar
    se = float(ratios.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    rse = float(resid.std(ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    summary = {
        "mean_ratio": float(ratios.mean()),
        "se": se,
        "n": n,
        "R": R,
        "W": grid.W,
        "t": grid.t,
        "mise_oracle": mstar,
        "mean_ise": float(np.mean([r["ise"] for r in rows])),
        # mean of CV(K*) + ||f||^2 - MISE(K*): zero in expectation
        "cv_unbiasedness_residual": float(resid.mean()),
        "cv_unbiasedness_se": rse,
    }
    return rows, {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in summary.items()}


def cmd_bench(args) -> int:
    cfg = _config(args, timing=args.timing)
    model = _model(cfg)
    if cfg["n"] is None:
        raise UsageError("bench needs --n")
    if cfg["reps"] < 1:
        raise UsageError(f"--reps must be ≥ 1, got {cfg['reps']}")
    grid = _resolve_grid(cfg, cfg["n"])
    try:
        rows, summary = run_bench(model, cfg["n"], cfg["reps"], grid, cfg["seed"], ordered_map, args.timing)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = {"config": cfg, **summary}
    if args.format == "json":
        _emit(_dump({**summary, "rows": rows}), args.out)
    else:
        cols = BENCH_COLUMNS + (["wall_time"] if args.timing else [])
        buf = io.StringIO()
        buf.write(_comment_block(cfg))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        _emit(buf.getvalue(), args.out)
    if args.summary:
        _emit(_dump(summary), args.summary)
    return EXIT_OK


def cmd_diag(args) -> int:
    cfg = _config(args, kernel=args.kernel)
    if cfg["model"] is None:
        cfg["model"] = "gaussian:0,1"
    model = _model(cfg)
    if cfg["n"] is None:
        cfg["n"] = 200
    n = cfg["n"]
    if n < 2:
        raise UsageError("diag needs --n ≥ 2")
    d = default_depth(n)
    W = 2.0 ** (d + 1)
    cfg["depth"] = d
    cfg["basis_W"] = W

    if args.kernel is not None:
        K = _read_kernel(args.kernel, strict=False)
        if K.grid.W > W:
            raise UsageError(f"kernel band W={K.grid.W} exceeds the basis band 2^(d_n+1) = {W} for n={n}")
        cfg["W"], cfg["t"] = K.grid.W, K.grid.t
        kernels = {"file": K}
    else:
        cfg["W"] = W
        if cfg["t"] is None:
            cfg["t"] = 4
        grid = _grid(cfg)
        s = sample(model, n, cfg["seed"])
        kernels = {
            "cv_optimal": cv_optimal_kernel(empirical_spectrum(s, grid)),
            "oracle": oracle_kernel(model, n, grid),
            **{f"minimax_beta{b}": minimax_kernel(b, grid) for b in (1, 2, 3)},
        }
    s_max = max(min(3, min(K.grid.t for K in kernels.values()) - 1), -1)
    haar = build_haar_basis(W, d, s_max=s_max)
    try:
        fbasis = build_f_basis(model, W, d)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    checks = []
    for name, K in kernels.items():
        for rep in (check_lemma1(K, haar), check_lemma3(K, model, fbasis)):
            checks.append({"kernel": name, **rep.to_dict()})
    violations = sum(c["violations"] for c in checks)
    fav = None
    if cfg["reps"] > 0:
        fav = favorable_event_frequencies(model, n, cfg["lambda"], cfg["reps"], cfg["seed"], map_fn=ordered_map).to_dict()
    out = {
        "config": cfg,
        "d_n": d,
        "s_n": d,
        "haar_complete": haar.complete,
        "violations": violations,
        "bound_checks": checks,
        "favorable_events": fav,
    }
    if args.format == "csv":
        buf = io.StringIO()
        buf.write(_comment_block(cfg))
        buf.write(f"# violations={violations}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kernel", "check", "row", "value", "bound", "slack", "ok"])
        for c in checks:
            for r in c["rows"]:
                w.writerow([c["kernel"], c["check"], r["row"], repr(r["value"]), repr(r["bound"]), repr(r["slack"]), r["ok"]])
        _emit(buf.getvalue(), args.out)
    else:
        _emit(_dump(out), args.out)
    if args.events and fav is not None:
        _emit(_comment_block(cfg) + favorable_rows_csv(fav["rows"]), args.events)
    return EXIT_VIOLATION if violations else EXIT_OK


def favorable_rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["event", "kind", "s", "t", "threshold", "exceedances", "frequency"])
    for r in rows:
        w.writerow([r["event"], r["kind"], r["s"], r["t"], repr(r["threshold"]), r["exceedances"], repr(r["frequency"])])
    return buf.getvalue()


# argument parsing --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _dyadic(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _add_common(p: argparse.ArgumentParser, fmt: str):
    p.add_argument("--model", help="density spec, e.g. gaussian:0,1 or mix:0.5*gaussian:-2,1+0.5*gaussian:2,1")
    p.add_argument("--sample", help="sample file: one real per line, '#' comments")
    p.add_argument("--n", type=int, help="sample size for --model draws")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--W", type=_dyadic, help="band limit; default min(n, 256) (diag: 2^(ceil(ln n)+1))")
    p.add_argument("--t", type=int, help="grid resolution, bins of width 2^-t")
    p.add_argument("--eps", type=float, default=1e-4, help="fit: stop refining when (2/pi) 2^-t < eps")
    p.add_argument("--reps", type=int, default=200, help="Monte Carlo replications (default 200)")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0, help="favorable-event constant (default 10)")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default=fmt, help=f"output format (default {fmt})")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="monoracle", description="Monotone spectral kernel selection by cross-validation.")
    p.add_argument("--version", action="version", version=f"monoracle {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="CV-optimal kernel with dyadic refinement")
    _add_common(f, "json")
    f.add_argument("--t-max", dest="t_max", type=int, default=12)
    f.add_argument("--trace", help="also write the refinement trace CSV here")
    f.add_argument("--kernel-out", dest="kernel_out", help="also write the kernel JSON here")

    e = sub.add_parser("estimate", help="evaluate the kernel estimator at points")
    _add_common(e, "csv")
    e.add_argument("--kernel", help="kernel JSON from fit/oracle")
    e.add_argument("--points", help="points file: one real per line")

    o = sub.add_parser("oracle", help="monotone oracle kernel and its MISE")
    _add_common(o, "json")
    o.add_argument("--kernel-out", dest="kernel_out", help="also write the kernel JSON here")

    b = sub.add_parser("bench", help="Monte Carlo ratio ISE(K0)/MISE(K*)")
    _add_common(b, "csv")
    b.add_argument("--summary", help="also write the summary JSON here")
    b.add_argument("--timing", action="store_true", help="add a wall_time column (breaks byte-identical reruns)")

    d = sub.add_parser("diag", help="wavelet coefficient bounds and favorable events")
    _add_common(d, "json")
    d.add_argument("--kernel", help="check this kernel instead of the default set (invariants not enforced)")
    d.add_argument("--events", help="also write the exceedance table CSV here")
    return p


COMMANDS = {"fit": cmd_fit, "estimate": cmd_estimate, "oracle": cmd_oracle, "bench": cmd_bench, "diag": cmd_diag}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"monoracle {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_IO
    except OSError as exc:
        print(f"monoracle {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"monoracle {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
