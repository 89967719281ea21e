"""Command-line front end: ``exheat <command> [options]``.

Every run writes ``<name>.report.json`` (resolved config, version, results,
assertions) and, when there is a table, ``<name>.csv`` into ``--out``.
Exit codes: 0 pass, 1 usage or config error, 2 assertion failure, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (SchurKernelSpec, WindowError, band_limited_family, bump_family,
                       counterexample_fR, difference_experiment, dyadic_range, hardy_ratio_domain,
                       hardy_ratio_whole, loglog_slope, lp_square_function, multiplier_band,
                       schur_integrals)
from .bridge_mc import McConfig
from .envelope import EnvelopeParams
from .exact_kernels import exterior_disk_green, halfplane_kernel, log_halfplane_kernel
from .geometry import Disk, ExteriorDomain, GeometryError, HalfPlane, parse_domain, point_at_distance
from .layer_potential import build_phi
from .nls import (NonContractionError, SmallnessError, build_model, contraction_factors, exponents,
                  ground_state_data, picard_solve, pin_eta)
from .potentials import (ExactSource, McSource, QuadratureSpec, SpectralSource, TailFitError,
                         green_numeric, riesz_numeric)
from .spectral import CapExceededError, build_operator, polar_operator
from .verify import (InsufficientPrecisionError, ScanGrid, green_pairs, riesz_pairs, sample_pairs, scan_eigenfunction,
                     scan_green, scan_heat, scan_phi, scan_riesz)

EXIT_OK, EXIT_USAGE, EXIT_ASSERT, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (InsufficientPrecisionError, NonContractionError, TailFitError, CapExceededError,
                  np.linalg.LinAlgError, ArithmeticError)
COMMANDS = ("kernel", "green", "riesz", "phi", "eigen", "verify-heat", "verify-green", "verify-riesz",
            "verify-phi", "hardy", "schur", "lp", "lp-diff", "counterexample", "nls-exponents",
            "nls-solve")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- value parsers ------------------------------------------------------------------


def point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from exc


def floats(text: str) -> list[float]:
    """Comma list, or lo:hi:n for n log-spaced values."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad rational {text!r}") from exc


def band(text: str) -> tuple[float, float]:
    vals = [float(Fraction(v)) for v in text.split(",")]
    if len(vals) != 2 or not 0 < vals[0] <= vals[1]:
        raise argparse.ArgumentTypeError("band must be lo,hi with 0 < lo <= hi")
    return vals[0], vals[1]


def seed_value(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


# -- parser -------------------------------------------------------------------------


def _mc_args(p):
    g = p.add_argument_group("monte carlo")
    g.add_argument("--paths", type=int, default=20000)
    g.add_argument("--steps", type=int, default=64)
    g.add_argument("--block-size", type=int, default=4096)


def _spectral_args(p, h=1.0 / 16, rtrunc=12.0):
    g = p.add_argument_group("spectral")
    g.add_argument("--h", type=float, default=h)
    g.add_argument("--rtrunc", type=float, default=rtrunc)
    g.add_argument("--outer", choices=("dirichlet", "neumann"), default="neumann")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=seed_value, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=".")
    common.add_argument("--config", default=None, help="flat key = value file; flags take precedence")
    common.add_argument("--name", default=None, help="run name for the output files")

    top = _Parser(prog="exheat", description="Heat kernels, Green functions and fractional "
                  "Laplacians outside compact obstacles.")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    p = cmd("kernel", "Dirichlet heat kernel at one (t, x, y)")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", type=point, required=True)
    p.add_argument("--y", type=point, required=True)
    p.add_argument("--source", choices=("mc", "spectral", "exact"), default="mc")
    _mc_args(p)
    _spectral_args(p)

    for name, what in (("green", "Green function"), ("riesz", "Riesz potential kernel")):
        p = cmd(name, f"{what} at one pair")
        p.add_argument("--obstacle", default="disk:1")
        p.add_argument("--x", type=point, required=True)
        p.add_argument("--y", type=point, required=True)
        p.add_argument("--source", choices=("mc", "spectral", "exact"), default="mc")
        p.add_argument("--npd", type=int, default=8, help="time nodes per decade")
        if name == "riesz":
            p.add_argument("--s", type=float, required=True)
        _mc_args(p)
        _spectral_args(p)

    p = cmd("phi", "harmonic weight at points")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--x", type=point, action="append", required=True)
    p.add_argument("--m", type=int, default=256)

    p = cmd("eigen", "first Dirichlet eigenpair of a bounded domain")
    p.add_argument("--domain", default="idisk:1")
    p.add_argument("--h", type=float, default=1.0 / 64)
    p.add_argument("--max-spread", type=float, default=None)

    p = cmd("verify-heat", "heat-kernel ratio scan")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--t-grid", type=floats, default=floats("1e-2:1e2:9"))
    p.add_argument("--rho", type=floats, default=[0.05, 0.2, 1, 5, 20])
    p.add_argument("--angle", type=float, default=0.0)
    p.add_argument("--pairing", default="diagonal,radial,antipodal")
    p.add_argument("--c-up", type=float, default=16.0)
    p.add_argument("--c-low", type=float, default=2.0)
    p.add_argument("--band", type=band, default=(1 / 64, 64))
    p.add_argument("--max-excluded", type=float, default=0.1)
    p.add_argument("--source", choices=("mc", "exact"), default="mc")
    _mc_args(p)

    p = cmd("verify-green", "Green-function ratio scan")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--source", choices=("exact", "mc", "spectral"), default="exact")
    p.add_argument("--band", type=band, default=(1 / 8, 8))
    _mc_args(p)
    _spectral_args(p)

    p = cmd("verify-riesz", "Riesz-kernel upper ratio scan")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--s", type=floats, default=[0.5, 1.0, 1.5])
    p.add_argument("--rho", type=floats, default=[0.2, 1.0, 5.0])
    p.add_argument("--max-ratio", type=float, default=64.0)
    p.add_argument("--npd", type=int, default=8)
    _mc_args(p)

    p = cmd("verify-phi", "harmonic-weight ratio scan")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--rho", type=floats, default=floats("1e-6:1e3:40"))
    p.add_argument("--max-spread", type=float, default=20.0)
    p.add_argument("--m", type=int, default=256)

    p = cmd("hardy", "Hardy ratios over a bump family")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--rho", type=floats, default=floats("0.1:5:10"))
    p.add_argument("--n-theta", type=int, default=1024)
    p.add_argument("--dlog", type=float, default=0.005)
    p.add_argument("--rtrunc", type=float, default=16.0)

    p = cmd("schur", "weighted Schur-test integrals")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--kernel", choices=("hardy_domain", "lp_difference"), default="hardy_domain")
    p.add_argument("--region", default="Id")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=None, help="default: middle of the window")
    p.add_argument("--rint", type=float, default=64.0)
    p.add_argument("--tol", type=float, default=0.01, help="allowed change when R_int doubles")

    p = cmd("lp", "Littlewood-Paley square-function comparison")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--p", type=float, default=3.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--box", type=float, default=64.0)
    p.add_argument("--grid", type=int, default=256)

    p = cmd("lp-diff", "difference kernel of the Littlewood-Paley pieces")
    p.add_argument("--obstacle", default="disk:1")
    p.add_argument("--N", type=int, action="append", default=None)
    p.add_argument("--k", type=int, action="append", default=None)
    p.add_argument("--pairs", type=int, default=24)

    p = cmd("counterexample", "norms of the f_R family")
    p.add_argument("--R", type=floats, default=[8.0, 16.0, 32.0])
    p.add_argument("--s", type=float, default=1.4)
    p.add_argument("--p", type=float, default=2.0)

    p = cmd("nls-exponents", "exact Strichartz exponents")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--s", type=rational, required=True)

    p = cmd("nls-solve", "Picard iteration for the NLS outside the unit disk")
    p.add_argument("--s", type=rational, default=Fraction(1, 2))
    p.add_argument("--eta", type=float, default=None, help="default: pinned dyadic value")
    p.add_argument("--sign", type=int, choices=(1, -1), default=1)
    p.add_argument("--modes", type=int, default=400)
    p.add_argument("--times", type=int, default=64)
    p.add_argument("--h", type=float, default=0.25)
    return top


# -- config files -----------------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``section.key`` prefixes are allowed and stripped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, val = (v.strip() for v in line.split("=", 1))
        out[key.rsplit(".", 1)[-1].replace("-", "_")] = val
    return out


def parse_args(argv) -> argparse.Namespace:
    pre = _Parser(add_help=False)
    pre.add_argument("--config", default=None)
    path = pre.parse_known_args(argv)[0].config
    parser = build_parser()
    if path:
        try:
            cfg = read_config(path)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        command = next((a for a in argv if a in COMMANDS), None)
        if command is None:
            raise UsageError("a command is required")
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for key, val in cfg.items():
            act = known[key]
            conv = act.type or str
            try:
                defaults[key] = [conv(val)] if isinstance(act, argparse._AppendAction) else conv(val)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"bad config value for {key}: {val!r}") from exc
            act.required = False
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        # flags override config values, also for repeatable options
        for key, val in defaults.items():
            act = known[key]
            if isinstance(act, argparse._AppendAction) and any(a in act.option_strings for a in argv):
                setattr(args, key, getattr(args, key)[len(val):])
        return args
    return parser.parse_args(argv)


# -- reporting --------------------------------------------------------------------------


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                             timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Fraction):
        return str(v)
    return v


class Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.name = args.name or args.command
        self.results: dict = {}
        self.assertions: list[dict] = []
        self.table: tuple[list, list] | None = None

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        ok = bool(ok)
        self.assertions.append({"name": name, "passed": ok, "detail": detail})
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
        return ok

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def config(self) -> dict:
        skip = {"threads", "out", "config", "name"}
        return {k: v for k, v in sorted(vars(self.args).items()) if k not in skip}

    def write(self):
        out = Path(self.args.out)
        out.mkdir(parents=True, exist_ok=True)
        rec = {"command": self.args.command, "config": self.config(), "version": version_string(),
               "results": self.results, "assertions": self.assertions, "passed": self.passed}
        if self.table is not None:
            rec["columns"], rec["table"] = list(self.table[0]), self.table[1]
        text = json.dumps(_jsonable(rec), sort_keys=True, indent=2) + "\n"
        (out / f"{self.name}.report.json").write_text(text)
        if self.table is not None:
            with open(out / f"{self.name}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(self.table[0])
                for row in self.table[1]:
                    w.writerow([_csv_cell(c) for c in row])


def _csv_cell(c):
    if isinstance(c, (list, tuple, np.ndarray)):
        return " ".join(repr(float(v)) for v in c)
    if isinstance(c, (float, np.floating)):
        return repr(float(c))
    if isinstance(c, np.integer):
        return int(c)
    return c


@contextmanager
def worker_pool(threads: int):
    if threads <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        yield ex.map


# -- commands -----------------------------------------------------------------------------


def _mc_cfg(a) -> McConfig:
    return McConfig(a.paths, a.steps, a.seed, True, a.block_size)


def _source(a, dom, pmap):
    if a.source == "mc":
        return McSource(dom, _mc_cfg(a), pmap)
    if a.source == "spectral":
        return SpectralSource.build(dom, a.h, a.rtrunc, outer=a.outer)
    if isinstance(dom, HalfPlane):
        return ExactSource(halfplane_kernel, "halfplane-images", log_halfplane_kernel)
    raise UsageError("the exact source exists only for the half-plane")


def _unit_disk(dom) -> bool:
    return (isinstance(dom, ExteriorDomain) and isinstance(dom.obstacle, Disk)
            and dom.obstacle.radius == 1 and not any(dom.obstacle.center))


def cmd_kernel(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    if a.source == "mc":
        from .bridge_mc import kernel_estimate
        est = kernel_estimate(dom, a.t, a.x, a.y, _mc_cfg(a), pmap)
        mean, err = est.mean, est.stderr
    else:
        src = _source(a, dom, pmap)
        v, e = src.kernel(np.array([a.t]), a.x, a.y)
        mean, err = float(v[0]), float(e[0])
    run.results.update(mean=mean, stderr=err)
    print(f"mean={mean!r} stderr={err!r}")


def _pair_command(run: Run, a, pmap, which: str):
    dom = parse_domain(a.obstacle)
    quad = QuadratureSpec(nodes_per_decade=a.npd)
    if a.source == "exact":
        if which != "green" or not _unit_disk(dom):
            raise UsageError("the exact source is the unit-disk Green function")
        val, err = exterior_disk_green(a.x, a.y), 0.0
    else:
        src = _source(a, dom, pmap)
        if which == "green":
            val, err = src.green(a.x, a.y) if a.source == "spectral" else green_numeric(dom, a.x, a.y, src, quad)
        else:
            val, err = src.riesz(a.x, a.y, a.s) if a.source == "spectral" else \
                riesz_numeric(dom, a.x, a.y, a.s, src, quad)
    run.results.update(value=val, error=err)
    print(f"value={val!r} error={err!r}")


def cmd_green(run: Run, a, pmap):
    _pair_command(run, a, pmap, "green")


def cmd_riesz(run: Run, a, pmap):
    _pair_command(run, a, pmap, "riesz")


def cmd_phi(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    w = build_phi(dom, a.m)
    pts = np.array(a.x)
    vals = np.atleast_1d(w(pts))
    run.results.update(c0=w.c0, phi=vals)
    print(f"c0={w.c0!r}")
    for x, v in zip(pts, vals):
        print(f"phi({x[0]:g},{x[1]:g})={float(v)!r}")
    run.table = (("x1", "x2", "phi"), [[float(x[0]), float(x[1]), float(v)] for x, v in zip(pts, vals)])


def cmd_eigen(run: Run, a, pmap):
    dom = parse_domain(a.domain)
    if not dom.bounded:
        raise UsageError("eigen needs a bounded domain (idisk:R, iellipse:a,b, square)")
    op = build_operator(dom, a.h)
    rep = scan_eigenfunction(op, dom)
    lam = rep.source["lambda1"]
    run.results.update(lambda1=lam, spread=rep.spread, cells=op.n)
    print(f"lambda1={lam!r} spread={rep.spread!r} cells={op.n}")
    if a.max_spread is not None:
        run.check("eigenfunction spread", rep.spread <= a.max_spread, f"{rep.spread:.4f} <= {a.max_spread}")
    run.table = (rep.columns, rep.table)


def _report_results(run: Run, rep):
    d = rep.to_dict()
    d.pop("table")
    d.pop("columns")
    run.results.update(d)
    run.table = (rep.columns, rep.table)


def cmd_verify_heat(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    rules = tuple(r.strip() for r in a.pairing.split(","))
    grid = ScanGrid(tuple(a.t_grid), tuple((r, a.angle) for r in a.rho), rules)
    src = _source(a, dom, pmap)
    rep = scan_heat(dom, grid, src, EnvelopeParams(a.c_up), EnvelopeParams(a.c_low))
    _report_results(run, rep)
    lo, hi = a.band
    run.check("upper ratio", rep.ratio_max <= hi, f"max {rep.ratio_max:.4g} at {rep.argmax}")
    run.check("lower ratio", rep.ratio_min >= lo, f"min {rep.ratio_min:.4g} at {rep.argmin}")
    if rep.excluded_fraction > a.max_excluded:
        print(f"excluded fraction {rep.excluded_fraction:.3f} exceeds {a.max_excluded}")
        run.results["exclusion_cap_exceeded"] = True
        return EXIT_NUMERIC
    return None


def cmd_verify_green(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    pairs = green_pairs(dom, a.pairs, a.seed)
    if a.source == "exact":
        if not _unit_disk(dom):
            raise UsageError("the exact Green function is for the unit disk")
        rep = scan_green(dom, pairs, exterior_disk_green, label="exact-disk")
    else:
        rep = scan_green(dom, pairs, _source(a, dom, pmap))
    _report_results(run, rep)
    lo, hi = a.band
    run.check("green band", rep.within(lo, hi),
              f"[{rep.ratio_min:.4g}, {rep.ratio_max:.4g}] vs [{lo:.4g}, {hi:.4g}]; "
              f"min at {rep.argmin}, max at {rep.argmax}")


def cmd_verify_riesz(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    pairs = riesz_pairs(dom, a.rho)
    src = McSource(dom, _mc_cfg(a), pmap)
    quads = (QuadratureSpec(a.npd), QuadratureSpec(a.npd).refined())
    series = [sample_pairs(src, pairs, q) for q in quads]
    for s in a.s:
        reps = [scan_riesz(dom, pairs, s, src, q, series=ser) for q, ser in zip(quads, series)]
        m0, m1 = reps[0].ratio_max, reps[1].ratio_max
        run.results[f"s={s:g}"] = {"ratio_max": m0, "ratio_max_refined": m1, "ratio_min": reps[0].ratio_min,
                                   "argmax": reps[0].argmax}
        run.check(f"riesz s={s:g} finite", math.isfinite(m0) and m0 <= a.max_ratio, f"max {m0:.4g}")
        run.check(f"riesz s={s:g} stable", abs(m1 / m0 - 1) <= 0.1, f"{m0:.4g} -> {m1:.4g}")
        if run.table is None:
            run.table = (("s",) + reps[0].columns, [])
        run.table[1].extend([[s] + row for row in reps[0].table])


def cmd_verify_phi(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    w = build_phi(dom, a.m)
    pts = np.array([point_at_distance(dom, r, 0.37 * k) for k, r in enumerate(a.rho)])
    rep = scan_phi(dom, w, pts)
    _report_results(run, rep)
    run.results["c0"] = w.c0
    run.check("phi spread", rep.spread < a.max_spread, f"{rep.spread:.4g} < {a.max_spread}")


def cmd_hardy(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    fam = bump_family(dom, a.rho)
    op = polar_operator(dom, a.rtrunc, a.dlog, a.n_theta)
    rows = list(pmap(lambda b: (hardy_ratio_whole(b, a.s, a.p, dom), hardy_ratio_domain(b, a.s, a.p, op)), fam))
    whole, domr = np.array(rows).T
    run.results.update(max_whole=whole.max(), max_domain=domr.max())
    run.table = (("center", "half_width", "ratio_whole", "ratio_domain"),
                 [[list(b.center), b.half_width, w, d] for b, w, d in zip(fam, whole, domr)])
    print(f"max ratio whole={whole.max():.6g} domain={domr.max():.6g}")
    run.check("hardy ratios bounded", np.all(np.isfinite(whole)) and np.all(np.isfinite(domr)))


def cmd_schur(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    spec = SchurKernelSpec.mid(a.kernel, a.region, a.p, a.s) if a.alpha is None else \
        SchurKernelSpec(a.kernel, a.region, a.p, a.s, a.alpha)
    r1 = schur_integrals(spec, dom, r_int=a.rint, pmap=pmap)
    r2 = schur_integrals(spec, dom, r_int=2 * a.rint, pmap=pmap)
    run.results.update(alpha=spec.alpha, sup_first=[r1.sup_first, r2.sup_first],
                       sup_second=[r1.sup_second, r2.sup_second], argsup_first=r1.argsup_first,
                       argsup_second=r1.argsup_second)
    print(f"alpha={spec.alpha:g} first={r1.sup_first:.6g}->{r2.sup_first:.6g} "
          f"second={r1.sup_second:.6g}->{r2.sup_second:.6g}")
    checks = [("first", r1.sup_first, r2.sup_first)]
    if spec.region != "Ia_ball":  # the ball region only has a closed form for the first integral
        checks.append(("second", r1.sup_second, r2.sup_second))
    for lab, u, v in checks:
        run.check(f"{lab} supremum converged", math.isfinite(v) and abs(v / u - 1) < a.tol,
                  f"change {abs(v / u - 1):.2e}")
    if spec.region == "Ia_ball":
        c = spec.ball_constant()
        run.check("ball constant", abs(r1.first.max() / c - 1) < 0.01, f"{r1.first.max():.6g} vs {c:.6g}")
    run.table = (("x1", "x2", "first", "second"),
                 [[*p, f, s] for p, f, s in zip(r1.points.tolist(), r1.first, r1.second)])


def cmd_lp(run: Run, a, pmap):
    lo, hi = multiplier_band(a.s, a.k)
    run.results.update(multiplier_min=lo, multiplier_max=hi)
    run.check("multiplier band", hi / lo < 10, f"M/m = {hi / lo:.4g}")
    rng = np.random.default_rng(a.seed)
    fam = band_limited_family(a.count, a.box, a.grid, (1.0, 4.0), rng)
    Ns = dyadic_range(2.0**-6, 2.0**10)
    ratios = [b / c for c, b in (lp_square_function(f, a.s, a.p, a.k, Ns, a.box) for f in fam)]
    run.results["ratios"] = ratios
    r = np.array(ratios)
    run.check("family ratio band", np.all((r >= 1 / 8) & (r <= 8)), f"[{r.min():.4g}, {r.max():.4g}]")
    run.check("family pairwise", r.max() / r.min() - 1 <= 0.2, f"spread {r.max() / r.min():.4g}")


def cmd_lp_diff(run: Run, a, pmap):
    dom = parse_domain(a.obstacle)
    rows = []
    for N in a.N or [1, 2, 4]:
        for fit in difference_experiment(dom, N, a.k or [1, 2], a.pairs, a.seed + N):
            run.results[f"N={N},k={fit.k}"] = {"C": fit.C, "c": fit.c, "held_out_ok": fit.held_out_ok,
                                               "held_out": fit.held_out, "min_bracket": fit.min_bracket}
            run.check(f"difference bound N={N} k={fit.k}", fit.passed,
                      f"C={fit.C:.4g} c={fit.c:.4g}, {fit.held_out_ok}/{fit.held_out} held-out pairs")
            run.check(f"brackets nonnegative N={N} k={fit.k}", fit.min_bracket >= -1e-10,
                      f"min {fit.min_bracket:.3e}")
            rows.extend([[N, fit.k, *x.tolist(), *y.tolist(), sc, v]
                         for (x, y), sc, v in zip(fit.pairs, fit.scale, fit.values)])
    run.table = (("N", "k", "x1", "x2", "y1", "y2", "scale", "K"), rows)


def cmd_counterexample(run: Run, a, pmap):
    res = list(pmap(lambda R: counterexample_fR(R, a.s, a.p), a.R))
    dn = np.array([r.domain_norm for r in res])
    wn = np.array([r.whole_norm for r in res])
    slope = loglog_slope(a.R, dn)
    target = 2.0 / a.p - a.s
    run.results.update(R=a.R, domain_norm=dn, whole_norm=wn, slope=slope)
    run.table = (("R", "domain_norm", "whole_norm"), [[R, d, w] for R, d, w in zip(a.R, dn, wn)])
    run.check("domain norm decreasing", np.all(np.diff(dn) < 0), str(dn.round(6).tolist()))
    run.check("domain slope", abs(slope - target) <= 0.3, f"{slope:.4f} vs {target:.4f}")
    run.check("whole-plane norm flat", wn.max() / wn.min() < 2, f"{wn.max() / wn.min():.4f}")


def cmd_nls_exponents(run: Run, a, pmap):
    ex = exponents(a.n, a.s)
    print(ex.as_text())
    run.results.update(p=ex.p, q=ex.q, r=ex.r, q_tilde_conj=ex.q_tilde_conj, r_tilde_conj=ex.r_tilde_conj)
    for name, ok in ex.identities().items():
        run.check(name, ok)


def cmd_nls_solve(run: Run, a, pmap):
    ex = exponents(2, a.s)
    model = build_model(h=a.h, n_modes=a.modes, n_times=a.times)
    if a.eta is None:
        eta, factor = pin_eta(model, ex, a.sign, seed=a.seed)
    else:
        eta, factor = a.eta, float(contraction_factors(model, ex, a.eta, a.sign, seed=a.seed).max())
    c0 = ground_state_data(model, ex, 0.5 * eta)
    res = picard_solve(c0, ex, a.sign, model, eta)
    trend = [float(contraction_factors(model, ex, m * eta, a.sign, seed=a.seed).max()) for m in (1, 2, 4)]
    run.results.update(eta=eta, contraction=factor, iterations=res.iterations, norm=res.norm,
                       residual=res.residual, trend=trend)
    print(f"eta={eta:g} factor={factor:.4g} iterations={res.iterations} norm={res.norm:.6g}")
    run.check("contraction", factor <= 0.5, f"{factor:.4g}")
    run.check("iterations", res.iterations <= 10, str(res.iterations))
    run.check("final norm", res.norm <= 2 * eta, f"{res.norm:.4g} <= {2 * eta:g}")
    run.check("monotone trend", trend[0] <= trend[1] <= trend[2], str([round(t, 4) for t in trend]))


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be positive")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run = Run(args)
    try:
        with worker_pool(args.threads) as pmap:
            code = HANDLERS[args.command](run, args, pmap)
    except (UsageError, GeometryError, WindowError, SmallnessError, ValueError) as exc:
        if isinstance(exc, NUMERIC_ERRORS):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        run.results["numeric_failure"] = str(exc)
        run.write()
        return EXIT_NUMERIC
    run.write()
    if code:
        return code
    return EXIT_OK if run.passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
