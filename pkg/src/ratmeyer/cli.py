"""Command-line front end.

Exit codes: 0 when every requested residual is under tolerance, 1 on a
tolerance or construction failure, 2 on a usage error.  Reports are written
as JSON with floats in fixed ``%.10e`` notation so that identical jobs give
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic JSON


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return f"{x:.10e}"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        items = sorted(x.items())
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in items) + "}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if hasattr(x, "item"):
        return _fmt(x.item())
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj) -> str:
    return _fmt(obj) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# job specs


def parse_dilation(text):
    from .ratlat import RatMatrix

    try:
        data = json.loads(text) if isinstance(text, str) else text
        A = RatMatrix.from_json(data)
    except (ValueError, TypeError, KeyError, ZeroDivisionError) as exc:
        raise UsageError(f"malformed dilation: {exc}") from exc
    r, c = A.shape
    if r != c:
        raise UsageError("dilation must be square")
    return A


def load_job(path: str) -> dict:
    try:
        with open(path) as fh:
            job = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read job file: {exc}") from exc
    if not isinstance(job, dict) or "mode" not in job:
        raise UsageError("job file must be an object with a 'mode' key")
    return job


def _check_range(name, value, lo=None, hi=None, lo_open=False):
    if value is None:
        return
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise UsageError(f"{name} out of range: {value}")
    if hi is not None and value > hi:
        raise UsageError(f"{name} out of range: {value}")


# ---------------------------------------------------------------------------
# CSV export


def export_csv(path, columns: dict) -> None:
    """Write named equal-length columns to a CSV file with a header row."""
    names = list(columns)
    data = [list(columns[n]) for n in names]
    if len({len(c) for c in data}) > 1:
        raise ValueError("columns differ in length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*data):
            w.writerow([f"{float(v):.12e}" for v in row])


def _export_bank_csv(out: Path, ws, points: int = 1000) -> None:
    import numpy as np

    bank = ws.bank
    if bank.A.shape[0] != 1:
        return
    lo, hi = bank.spec.scaling.bbox()
    xi = np.linspace(lo[0] - 0.25, hi[0] + 0.25, points)
    phi = bank.spec.scaling.eval(xi.reshape(-1, 1))[0]
    cols = {"xi": xi, "phi_hat_re": phi.real, "phi_hat_im": phi.imag}
    export_csv(out / "phi_hat.csv", cols)
    wlo, whi = ws.bbox()
    eta = np.linspace(wlo[0] - 0.25, whi[0] + 0.25, points)
    psi = ws.eval(eta.reshape(-1, 1))
    cols = {"xi": eta}
    for l in range(ws.L):
        cols[f"psi{l + 1}_re"] = psi[l].real
        cols[f"psi{l + 1}_im"] = psi[l].imag
    export_csv(out / "psi_hat.csv", cols)
    pts = bank.M.points()[:, 0]
    order = np.argsort(pts)
    cols = {"xi": pts[order]}
    for r in range(bank.M.rows):
        cols[f"m{r + 1}_abs"] = np.abs(bank.M.values[order, r, 0])
    export_csv(out / "lowpass.csv", cols)


# ---------------------------------------------------------------------------
# commands


def _bank_report(ws, tol: float) -> dict:
    from . import filterbank as fb

    bank = ws.bank
    comps = fb.polyphase(bank.M, bank.D, bank.Omega)
    rep = {
        "A": bank.A.to_json(), "p": bank.p, "q": bank.q, "N": bank.N, "L": ws.L,
        "L_identity": ws.L == (bank.p - bank.q) * bank.N,
        "refinement_residual": bank.meta["refinement_residual"],
        "smith_barnwell": fb.smith_barnwell_residual(bank.M, bank.Omega),
        "polyphase_round_trip": fb.polyphase_round_trip(bank.M, bank.D, bank.Omega),
        "plancherel": fb.plancherel_defect(bank.M, comps),
        "unitarity": fb.unitarity_residual(bank),
        "completion": bank.completion.report() if bank.completion is not None else None,
        "grid": list(bank.M.shape),
    }
    checks = [rep["refinement_residual"] < 1e-8, rep["smith_barnwell"] < tol,
              rep["polyphase_round_trip"] < 1e-12, rep["plancherel"] < 1e-10,
              rep["unitarity"] < tol, rep["L_identity"]]
    rep["pass"] = all(checks)
    return rep


def _save_bank(out: Path, ws, job: dict, report: dict) -> None:
    bank = ws.bank
    out.mkdir(parents=True, exist_ok=True)
    bank.M.save(out / "M.grid")
    bank.H.save(out / "H.grid")
    _write(out / "scaling.json", dumps(bank.spec.to_json()))
    _write(out / "wavelets.json", dumps(ws.to_json()))
    _write(out / "job.json", dumps(job))
    _write(out / "report.json", dumps(report))
    _export_bank_csv(out, ws)


def cmd_sfs_check(args) -> tuple[int, dict]:
    from .bump import make_profile
    from .sfs import dual_gramian_residual, orthonormality_check_sfs, required_jmax

    _check_range("delta", args.delta, 0, 0.25, lo_open=True)
    prof = make_profile(args.delta)
    jmax = args.jmax if args.jmax is not None else required_jmax(2.0, args.delta)
    rep = dual_gramian_residual(prof, jmax, (-2.0, 2.0, args.points), k_max=args.kmax)
    ortho = orthonormality_check_sfs(prof, 8, n=1, trials=args.pairs, seed=args.seed)
    ok = rep.residual < args.tol and ortho.max_dev < 1e-8
    return (EXIT_OK if ok else EXIT_FAIL), {"dual_gramian": rep.to_json(),
                                             "orthonormality": ortho.to_json(), "pass": ok}


def _job_from_args(args, mode: str) -> dict:
    keys = {"build-1d": ("p", "q", "eps", "grid", "method", "seed"),
            "build-lift": ("p", "q", "n", "eps", "grid", "shape", "seed"),
            "build-general": ("dilation", "delta", "shape", "method", "seed")}[mode]
    job = {"mode": mode}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            job[k] = v
    return job


def run_job(job: dict, out: Path | None, tol: float) -> tuple[int, dict]:
    """Execute a job description; returns the exit code and the report."""
    from .completion import build_general, lift_to_nd, pipeline_1d

    mode = job.get("mode")
    seed = int(job.get("seed", 0))
    if mode == "build-1d":
        p, q = int(job["p"]), int(job["q"])
        if math.gcd(p, q) != 1 or not p > q >= 1:
            raise UsageError("need coprime integers p > q >= 1")
        ws = pipeline_1d(p, q, float(job.get("eps", 0.1)), int(job.get("grid", 256)),
                         method=job.get("method", "auto"), seed=seed)
    elif mode == "build-lift":
        p, q, n = int(job["p"]), int(job["q"]), int(job.get("n", 2))
        if math.gcd(p, q) != 1 or not p > q >= 1 or n < 2:
            raise UsageError("need coprime p > q >= 1 and n >= 2")
        shape = tuple(job["shape"]) if job.get("shape") else None
        ws = lift_to_nd(p, q, n, float(job.get("eps", 0.1)), int(job.get("grid", 256)), shape)
    elif mode == "build-general":
        A = parse_dilation(job["dilation"])
        _check_range("delta", job.get("delta"), 0, 0.25, lo_open=True)
        shape = tuple(job["shape"]) if job.get("shape") else None
        ws = build_general(A, float(job.get("delta", 0.02)), shape,
                           method=job.get("method", "auto"), seed=seed)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    report = _bank_report(ws, tol)
    if mode == "build-lift":
        report["lift_lowpass_deviation"] = ws.meta["lift_lowpass_deviation"]
        report["pass"] = report["pass"] and ws.meta["lift_lowpass_deviation"] < 1e-10
    if out is not None:
        _save_bank(out, ws, job, report)
    return (EXIT_OK if report["pass"] else EXIT_FAIL), report


def cmd_verify(args) -> tuple[int, dict]:
    from .completion import pipeline_1d
    from .verify import gaussian_probe, parseval_probe, wavelet_gram

    if args.job:
        job = load_job(args.job)
        if job["mode"] != "build-1d":
            raise UsageError("verify supports one-dimensional jobs")
    else:
        job = {"mode": "build-1d", "p": args.p, "q": args.q, "eps": args.eps, "grid": args.grid}
    ws = pipeline_1d(int(job["p"]), int(job["q"]), float(job.get("eps", 0.1)),
                     int(job.get("grid", 256)), seed=int(job.get("seed", 0)))
    j0, j1 = args.j_range
    gram = wavelet_gram(ws, (j0, j1), args.k_range)
    import numpy as np

    dc = float(np.abs(ws.eval(np.zeros((1, 1)))).max())
    g, total = gaussian_probe([1.0], 0.3)
    pr = parseval_probe(ws, g, total, (-6, 6), 64)
    ok = gram.max_dev < args.tol and dc < 1e-9 and pr.ratio > 0.999
    return (EXIT_OK if ok else EXIT_FAIL), {"gram": gram.to_json(), "dc": dc,
                                             "parseval": pr.to_json(), "pass": ok}


def cmd_export(args) -> tuple[int, dict]:
    import numpy as np

    out = Path(args.output)
    if args.what == "sfs":
        from .bump import make_profile
        from .sfs import eval_fj

        prof = make_profile(args.delta)
        xi = np.linspace(args.lo, args.hi, args.points)
        cols = {"xi": xi}
        for j in args.j:
            cols[f"f{j}"] = eval_fj(j, prof, xi).real
        export_csv(out, cols)
        return EXIT_OK, {"written": str(out), "columns": list(cols)}
    if args.what == "grid":
        from .filterbank import GridFn

        if not args.input:
            raise UsageError("export grid needs --input")
        G = GridFn.load(args.input)
        if G.dim != 1:
            raise UsageError("grid export supports one-dimensional grids")
        period = float(G.period.basis[0, 0])
        pts = G.points()[:, 0]
        order = np.argsort(pts)
        xs, vals = [], []
        for r in range(args.periods):
            xs.append(pts[order] + r * period)
            vals.append(G.values[order])
        xs = np.concatenate(xs)
        vals = np.concatenate(vals)
        cols = {"xi": xs}
        for a in range(G.rows):
            for b in range(G.cols):
                cols[f"re_{a}_{b}"] = vals[:, a, b].real
                cols[f"im_{a}_{b}"] = vals[:, a, b].imag
        export_csv(out, cols)
        return EXIT_OK, {"written": str(out), "rows": int(xs.size)}
    raise UsageError(f"unknown export target {args.what!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ratmeyer", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None,
                    help="cap on BLAS/OpenMP threads (default: $RATMEYER_THREADS)")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--out", default=None, help="output directory for artifacts")
        p.add_argument("--tol", type=float, default=1e-9, help="residual tolerance")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--job", default=None, help="JSON job file (overrides flags)")

    s = sub.add_parser("sfs-check", help="dual Gramian and orthonormality of the SFS basis")
    s.add_argument("--delta", type=float, default=0.125)
    s.add_argument("--jmax", type=int, default=None)
    s.add_argument("--kmax", type=int, default=6)
    s.add_argument("--points", type=int, default=4096)
    s.add_argument("--pairs", type=int, default=200)
    common(s)
    s.set_defaults(tol=1e-12)

    s = sub.add_parser("build-1d", help="rational dilation p/q on the line")
    s.add_argument("--p", type=int, required=False)
    s.add_argument("--q", type=int, required=False)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--method", choices=["auto", "cofactor", "propagate"], default="auto")
    common(s)

    s = sub.add_parser("build-lift", help="lift a p/q system to R^n")
    s.add_argument("--p", type=int)
    s.add_argument("--q", type=int)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--shape", type=int, nargs="+", default=None)
    common(s)

    s = sub.add_parser("build-general", help="any rational expansive dilation")
    s.add_argument("--dilation", default=None,
                   help='JSON matrix of "num/den" strings, e.g. \'[["0","1/2"],["3","0"]]\'')
    s.add_argument("--delta", type=float, default=0.02)
    s.add_argument("--shape", type=int, nargs="+", default=None)
    s.add_argument("--method", choices=["auto", "cofactor", "propagate"], default="auto")
    common(s)
    s.set_defaults(tol=1e-8)

    s = sub.add_parser("verify", help="orthonormality and Parseval checks of a p/q system")
    s.add_argument("--p", type=int, default=3)
    s.add_argument("--q", type=int, default=2)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--grid", type=int, default=256)
    s.add_argument("--j-range", type=int, nargs=2, default=[-1, 1])
    s.add_argument("--k-range", type=int, default=8)
    common(s)
    s.set_defaults(tol=1e-6)

    s = sub.add_parser("export", help="CSV samples of SFS generators or saved grids")
    s.add_argument("what", choices=["sfs", "grid"])
    s.add_argument("--output", required=True)
    s.add_argument("--delta", type=float, default=0.125)
    s.add_argument("--j", type=int, nargs="+", default=[0, 1, 2, 3])
    s.add_argument("--lo", type=float, default=-2.5)
    s.add_argument("--hi", type=float, default=2.5)
    s.add_argument("--points", type=int, default=1000)
    s.add_argument("--input", default=None)
    s.add_argument("--periods", type=int, default=2)
    return ap


def _set_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get("RATMEYER_THREADS")
        if env is None:
            return
        try:
            n = int(env)
        except ValueError as exc:
            raise UsageError(f"RATMEYER_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise UsageError("thread count must be positive")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _set_threads(args.threads)
        if args.cmd == "sfs-check":
            code, report = cmd_sfs_check(args)
        elif args.cmd == "verify":
            code, report = cmd_verify(args)
        elif args.cmd == "export":
            code, report = cmd_export(args)
        else:
            job = load_job(args.job) if args.job else _job_from_args(args, args.cmd)
            if job.get("mode") != args.cmd:
                raise UsageError(f"job mode {job.get('mode')!r} does not match {args.cmd}")
            if args.cmd in ("build-1d", "build-lift") and (job.get("p") is None or job.get("q") is None):
                raise UsageError("--p and --q are required")
            if args.cmd == "build-general" and job.get("dilation") is None:
                raise UsageError("--dilation is required")
            out = Path(args.out) if args.out else None
            code, report = run_job(job, out, args.tol)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # construction hypotheses (refinability, inclusion, rank) failed
        report = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
        code = EXIT_FAIL
    text = dumps(report)
    out_dir = getattr(args, "out", None)
    if out_dir and args.cmd in ("sfs-check", "verify"):
        _write(Path(out_dir) / "report.json", text)
    sys.stdout.write(text)
    print("PASS" if code == EXIT_OK else "FAIL", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
