"""Command-line front end.

    kccjacobi analyze    MODEL --at x1,...,xn [--y on-shell|v1,...,vn]
    kccjacobi equilibria MODEL [--x0 x1,...]... [--region min:max:count,...]
    kccjacobi trajectory MODEL --x0 ... [--el --y0 ...] [--T 1] [--dt 1e-3]
    kccjacobi deviation  MODEL --x0 ... --xi0 ... --xidot0 ... [--el --y0 ...]
    kccjacobi scan       MODEL --region min:max:count,... [--y on-shell|v...]
    kccjacobi check      MODEL [--at ...] [--x0 ...] [--region ...]

MODEL is a path to a model file or the name of a bundled model.  Exit codes:
0 success, 1 usage error, 2 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import catalog
from .checks import run_checks
from .dynamics import (
    ON_SHELL,
    deviation_integrate,
    el_integrate,
    find_equilibria,
    flow_integrate,
    grid_nodes,
    grid_scan,
    stability_profile,
)
from .errors import ExprSyntaxError, KccError, SemanticError
from .expr import load_model
from .kcc import decomposition_residual, geometry_frame
from .spectral import Jacobi, classify_jacobi, theorem1_predicate

COMMANDS = ("analyze", "equilibria", "trajectory", "deviation", "scan", "check")
FORMATS = ("text", "csv", "json")
_VALUE_FLAGS = ("--at", "--y", "--x0", "--y0", "--xi0", "--xidot0", "--region", "--param")


class UsageError(KccError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str
    params: dict = field(default_factory=dict)
    at: tuple | None = None
    y: tuple | None = None  # None means on-shell
    x0: list = field(default_factory=list)
    y0: tuple | None = None
    xi0: tuple | None = None
    xidot0: tuple | None = None
    T: float = 1.0
    dt: float = 1e-3
    tol: float = 1e-9
    region: tuple | None = None
    format: str = "text"
    out: str | None = None
    el: bool = False

    @property
    def point(self):
        return self.at


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _vector(text):
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError("coordinates must be finite")
    return values


def _fiber(text):
    return None if text == ON_SHELL else _vector(text)


def _region(text):
    axes = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise argparse.ArgumentTypeError(f"region axis must be min:max:count, got {part!r}")
        try:
            lo, hi, count = float(bits[0]), float(bits[1]), int(bits[2])
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad region axis {part!r}") from None
        if count < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
            raise argparse.ArgumentTypeError(f"bad region axis {part!r}")
        axes.append((lo, hi, count))
    return tuple(axes)


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonnegative(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return v


def _param(text):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad parameter value in {text!r}") from None


def _build_parser():
    parser = _Parser(prog="kccjacobi", description="Jacobi stability of dynamical systems via KCC geometry.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    def common(p, T=False):
        p.add_argument("model", help="model file or bundled model name")
        p.add_argument("--param", action="append", type=_param, default=[], metavar="NAME=VALUE")
        p.add_argument("--tol", type=_nonnegative, default=1e-9)
        p.add_argument("--format", choices=FORMATS, default="text")
        p.add_argument("--out", metavar="PATH")
        if T:
            p.add_argument("--T", type=_nonnegative, default=1.0)
            p.add_argument("--dt", type=_positive, default=1e-3)

    p = sub.add_parser("analyze", help="geometry, spectrum and Theorem 1 at one point")
    common(p)
    p.add_argument("--at", type=_vector, required=True)
    p.add_argument("--y", type=_fiber, default=None, metavar="on-shell|V")

    p = sub.add_parser("equilibria", help="find zeros of X and classify P there at y=0")
    common(p)
    p.add_argument("--x0", type=_vector, action="append", default=[], help="Newton seed (repeatable)")
    p.add_argument("--region", type=_region, help="grid of Newton seeds")

    p = sub.add_parser("trajectory", help="integrate the flow (or --el) with a stability profile")
    common(p, T=True)
    p.add_argument("--x0", type=_vector, action="append", required=True)
    p.add_argument("--y0", type=_vector)
    p.add_argument("--el", action="store_true", help="integrate the Euler-Lagrange system")

    p = sub.add_parser("deviation", help="integrate a Jacobi field along a trajectory")
    common(p, T=True)
    p.add_argument("--x0", type=_vector, action="append", required=True)
    p.add_argument("--y0", type=_vector)
    p.add_argument("--xi0", type=_vector, required=True)
    p.add_argument("--xidot0", type=_vector, required=True)
    p.add_argument("--el", action="store_true")

    p = sub.add_parser("scan", help="stability map over a grid")
    common(p)
    p.add_argument("--region", type=_region, required=True)
    p.add_argument("--y", type=_fiber, default=None, metavar="on-shell|V")

    p = sub.add_parser("check", help="run the self-verification suite on a model")
    common(p, T=True)
    p.add_argument("--at", type=_vector, action="append", default=[], help="sample point (repeatable)")
    p.add_argument("--x0", type=_vector, action="append", default=[])
    p.add_argument("--xi0", type=_vector)
    p.add_argument("--xidot0", type=_vector)
    p.add_argument("--region", type=_region, help="box for random sample points")
    return parser


def _normalize(argv):
    # "--at -1,0" would otherwise be read as an unknown option
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def parse_args(argv) -> RunConfig:
    """Turn an argument list into a :class:`RunConfig`; raises UsageError."""
    ns = _build_parser().parse_args(_normalize(list(argv)))
    if ns.command is None:
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    d = vars(ns)
    x0 = d.get("x0") or []
    if ns.command in ("trajectory", "deviation"):
        if len(x0) != 1:
            raise UsageError("--x0 must be given exactly once")
        if ns.el and d.get("y0") is None:
            raise UsageError("--el requires --y0")
    at = d.get("at")
    if ns.command == "check":
        at = tuple(at) or None  # list of sample points
    return RunConfig(
        command=ns.command,
        model=ns.model,
        params=dict(ns.param),
        at=at,
        y=d.get("y"),
        x0=list(x0),
        y0=d.get("y0"),
        xi0=d.get("xi0"),
        xidot0=d.get("xidot0"),
        T=d.get("T", 1.0),
        dt=d.get("dt", 1e-3),
        tol=ns.tol,
        region=d.get("region"),
        format=ns.format,
        out=ns.out,
        el=d.get("el", False),
    )


# ---------------------------------------------------------------------------
# formatting

def num(v) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(v), ".17g")


def _short(v) -> str:
    return format(float(v), ".10g")


def _complex_text(z):
    if z.imag == 0:
        return _short(z.real)
    return f"{_short(z.real)}{'+' if z.imag >= 0 else '-'}{_short(abs(z.imag))}i"


def _matrix_text(M, indent="    "):
    return "\n".join(indent + "  ".join(f"{_short(v):>14}" for v in row) for row in np.atleast_2d(M))


def _to_json(obj):
    if isinstance(obj, np.ndarray):
        return _to_json(obj.tolist())
    if isinstance(obj, complex):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (list, tuple)):
        return [_to_json(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_json(v) for k, v in obj.items()}
    if isinstance(obj, Jacobi):
        return obj.value
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([num(v) if isinstance(v, (float, np.floating)) else str(v) for v in row])
    return buf.getvalue()


def emit(report: dict, fmt: str) -> bytes:
    """Serialize a report produced by :func:`execute`'s pipelines.

    ``report`` carries ``json`` (a dict), ``csv`` (header, rows) and ``text``
    (a string) renderings; only the requested one is produced.
    """
    if fmt == "json":
        return (json.dumps(_to_json(report["json"]), indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        header, rows = report["csv"]
        return _csv_text(header, rows).encode("utf-8")
    if fmt == "text":
        return report["text"].encode("utf-8")
    raise UsageError(f"unknown format {fmt!r}")


# ---------------------------------------------------------------------------
# pipelines

def _load(config):
    path = Path(config.model)
    try:
        if path.is_file():
            model = load_model(path)
        elif config.model in catalog.names():
            model = catalog.load(config.model)
        else:
            raise UsageError(f"model file not found: {config.model}")
        if config.params:
            model = model.with_params(**config.params)
    except OSError as exc:
        raise UsageError(f"cannot read model: {exc}") from None
    except (ExprSyntaxError, SemanticError) as exc:
        raise UsageError(f"invalid model {config.model}: {exc}") from None
    return model


def _need_dim(model, v, flag):
    if v is not None and len(v) != model.n:
        raise UsageError(f"{flag} needs {model.n} values, got {len(v)}")
    return v


def _analyze(model, c):
    _need_dim(model, c.at, "--at")
    _need_dim(model, c.y, "--y")
    frame = geometry_frame(model, c.at, c.y)
    rep = classify_jacobi(frame.P, c.tol)
    th = theorem1_predicate(frame, model.n, c.tol)
    d1, d2 = decomposition_residual(frame)
    verdict = Jacobi.UNSTABLE if th.unstable else rep.classification
    n = model.n
    th_json = {"applies": th.applies, "skew_defect": th.skew_defect, "det_P": th.det_P,
               "has_zero_eig": th.has_zero_eig}
    data = {
        "model": model.name,
        "point": frame.x,
        "y": frame.y,
        "y_policy": ON_SHELL if c.y is None else "fixed",
        "L": frame.L,
        "G": frame.G,
        "N": frame.N,
        "P": frame.P,
        "E": frame.E,
        "Emat": frame.Emat,
        "eigenvalues": list(rep.eigenvalues),
        "max_re": rep.max_re,
        "det_P": rep.det,
        "classification": rep.classification,
        "theorem1": th_json,
        "verdict": verdict,
        "decomposition_residual": {"D1_max": float(np.max(np.abs(d1))), "D2_max": float(np.max(np.abs(d2)))},
    }
    header = [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)]
    header += [f"P{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    header += [f"eig{k}_{part}" for k in range(1, n + 1) for part in ("re", "im")]
    header += ["max_re", "class", "theorem1_applies", "verdict"]
    row = list(frame.x) + list(frame.y) + list(frame.P.ravel())
    row += [v for z in rep.eigenvalues for v in (z.real, z.imag)]
    row += [rep.max_re, rep.classification.value, str(th.applies).lower(), verdict.value]
    text = "\n".join([
        f"model: {model.name or c.model} (n={n})",
        "point: " + ", ".join(_short(v) for v in frame.x),
        "y: " + ", ".join(_short(v) for v in frame.y) + (" (on-shell)" if c.y is None else ""),
        f"L = {_short(frame.L)}",
        "G = " + ", ".join(_short(v) for v in frame.G),
        "E = " + ", ".join(_short(v) for v in frame.E),
        "N =", _matrix_text(frame.N),
        "Emat =", _matrix_text(frame.Emat),
        "P =", _matrix_text(frame.P),
        "eigenvalues of P: " + ", ".join(_complex_text(z) for z in rep.eigenvalues),
        f"max Re(lambda) = {_short(rep.max_re)}",
        f"det P = {_short(rep.det)}",
        f"classification: {rep.classification}",
        f"theorem 1: applies={th.applies} skew_defect={_short(th.skew_defect)} "
        f"det_P={_short(th.det_P)} zero_eigenvalue={th.has_zero_eig}",
        f"verdict: {verdict}",
    ]) + "\n"
    return {"json": data, "csv": (header, [row]), "text": text}


def _default_box(model, region, per_axis):
    if region is not None:
        if len(region) != model.n:
            raise UsageError(f"--region needs {model.n} axes")
        return region
    return tuple((-2.0, 2.0, per_axis) for _ in range(model.n))


def _equilibria(model, c):
    seeds = [_need_dim(model, s, "--x0") for s in c.x0]
    if not seeds or c.region is not None:
        seeds += list(grid_nodes(_default_box(model, c.region, 5)))
    eq = find_equilibria(model, seeds)
    for seed, exc in eq.failures:
        print(f"seed {np.asarray(seed).tolist()}: {type(exc).__name__}: {exc}", file=sys.stderr)
    n = model.n
    rows, items, lines = [], [], [f"model: {model.name or c.model} (n={n})",
                                  f"equilibria found: {len(eq.points)} (P evaluated at y = 0)"]
    for x in eq.points:
        frame = geometry_frame(model, x, np.zeros(n))
        rep = classify_jacobi(frame.P, c.tol)
        rows.append(list(x) + [rep.max_re, rep.classification.value])
        items.append({"point": x, "eigenvalues": list(rep.eigenvalues), "max_re": rep.max_re,
                      "classification": rep.classification})
        lines.append("  x = (" + ", ".join(_short(v) for v in x) + f")  max Re(lambda) = {_short(rep.max_re)}"
                     f"  {rep.classification}")
    header = [f"x{i}" for i in range(1, n + 1)] + ["max_re", "class"]
    data = {"model": model.name, "equilibria": items, "failed_seeds": len(eq.failures)}
    return {"json": data, "csv": (header, rows), "text": "\n".join(lines) + "\n"}


def _base(model, c):
    x0 = _need_dim(model, c.x0[0], "--x0")
    if c.el:
        return el_integrate(model, x0, _need_dim(model, c.y0, "--y0"), c.T, c.dt)
    return flow_integrate(model, x0, c.T, c.dt)


def _trajectory(model, c):
    traj = _base(model, c)
    prof = stability_profile(model, traj, c.tol)
    n = model.n
    header = ["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, n + 1)] + ["max_re", "class"]
    rows = [[t] + list(x) + list(y) + [s.max_re, s.classification.value]
            for t, x, y, s in zip(traj.t, traj.x, traj.y, prof.samples)]
    data = {
        "model": model.name, "kind": traj.kind, "dt": traj.dt, "verdict": prof.verdict,
        "verdict_scope": prof.note, "theorem1": prof.theorem1,
        "samples": [{"t": t, "x": x, "y": y, "max_re": s.max_re, "class": s.classification}
                    for t, x, y, s in zip(traj.t, traj.x, traj.y, prof.samples)],
    }
    counts = {k: sum(1 for s in prof.samples if s.classification == k) for k in Jacobi}
    text = "\n".join([
        f"model: {model.name or c.model} (n={n})  kind: {traj.kind}  samples: {len(traj)}  dt: {_short(traj.dt)}",
        "final x: " + ", ".join(_short(v) for v in traj.x[-1]),
        "per-sample classes: " + ", ".join(f"{k.value}={counts[k]}" for k in Jacobi),
        f"max Re(lambda) over samples = {_short(max(s.max_re for s in prof.samples))}",
        f"verdict: {prof.verdict} ({prof.note})",
    ]) + "\n"
    return {"json": data, "csv": (header, rows), "text": text}


def _deviation(model, c):
    traj = _base(model, c)
    run = deviation_integrate(model, traj, _need_dim(model, c.xi0, "--xi0"), _need_dim(model, c.xidot0, "--xidot0"))
    n = model.n
    idx = range(1, n + 1)
    header = (["t"] + [f"x{i}" for i in idx] + [f"y{i}" for i in idx] + [f"xi{i}" for i in idx]
              + [f"xidot{i}" for i in idx] + ["residual"])
    rows = [[t] + list(x) + list(y) + list(a) + list(b) + [r]
            for t, x, y, a, b, r in zip(traj.t, traj.x, traj.y, run.xi, run.xidot, run.covariant_residual)]
    worst = float(np.nanmax(run.covariant_residual)) if len(traj) >= 5 else float("nan")
    data = {"model": model.name, "kind": traj.kind, "dt": traj.dt, "max_covariant_residual": worst,
            "t": traj.t, "x": traj.x, "y": traj.y, "xi": run.xi, "xidot": run.xidot,
            "covariant_residual": run.covariant_residual}
    text = "\n".join([
        f"model: {model.name or c.model} (n={n})  kind: {traj.kind}  samples: {len(traj)}",
        "final xi: " + ", ".join(_short(v) for v in run.xi[-1]),
        f"|xi| initial {_short(np.linalg.norm(run.xi[0]))}, final {_short(np.linalg.norm(run.xi[-1]))}",
        f"max covariant residual = {_short(worst)}",
    ]) + "\n"
    return {"json": data, "csv": (header, rows), "text": text}


def _scan(model, c):
    if len(c.region) != model.n:
        raise UsageError(f"--region needs {model.n} axes")
    _need_dim(model, c.y, "--y")
    smap = grid_scan(model, c.region, ON_SHELL if c.y is None else c.y, c.tol)
    n = model.n
    header = [f"x{i}" for i in range(1, n + 1)] + ["max_re", "class", "error"]
    rows = [list(cell.point) + [cell.max_re, cell.classification.value if cell.classification else "",
                                cell.error or ""] for cell in smap.cells]
    data = {"model": model.name, "axes": [list(a) for a in smap.axes],
            "y_policy": ON_SHELL if c.y is None else list(c.y),
            "cells": [{"point": cell.point, "max_re": None if cell.error else cell.max_re,
                       "class": cell.classification, "error": cell.error} for cell in smap.cells]}
    counts = {k: sum(1 for cell in smap.cells if cell.classification == k) for k in Jacobi}
    errors = sum(1 for cell in smap.cells if cell.error)
    text = (f"model: {model.name or c.model} (n={n})  cells: {len(smap)}\n"
            + ", ".join(f"{k.value}={counts[k]}" for k in Jacobi) + f", errors={errors}\n")
    return {"json": data, "csv": (header, rows), "text": text}


def _check(model, c):
    n = model.n
    rng = np.random.default_rng(20201)
    box = _default_box(model, c.region, 1)
    lo = np.array([a[0] for a in box])
    hi = np.array([a[1] for a in box])
    points = [np.asarray(_need_dim(model, p, "--at"), float) for p in (c.at or ())]
    points += [lo + (hi - lo) * rng.random(n) for _ in range(20)]
    x0 = _need_dim(model, c.x0[0], "--x0") if c.x0 else points[0]
    rep = run_checks(model, points, x0, _need_dim(model, c.xi0, "--xi0"), _need_dim(model, c.xidot0, "--xidot0"),
                     c.T, c.dt, c.tol)
    lines = [f"model: {model.name or c.model} (n={n})  points: {rep.points_used} used, {rep.points_skipped} skipped"]
    for r in rep.results:
        status = "INFO" if r.tol is None else ("PASS" if r.passed else "FAIL")
        bound = "" if r.tol is None else f" (tol {r.tol:g})"
        note = f"  [{r.note}]" if r.note else ""
        lines.append(f"{status}  {r.name}: {_short(r.worst)}{bound}{note}")
    if rep.theorem_applies:
        lines.append(f"theorem 1 applies at {rep.theorem_applies}/{rep.points_used} points; "
                     f"det P = {_short(rep.max_abs_det)} (max |det P|); "
                     f"zero eigenvalue at {rep.theorem_zero_eig} of them")
    else:
        if n < 2:
            reason = "dimension below 2"
        elif n % 2 == 0:
            reason = "even dimension"
        else:
            reason = "invariant matrix not skew-symmetric"
        lines.append(f"theorem 1 does not apply ({reason})")
    lines.append(f"verdict: {rep.verdict} (over the sampled points only)")
    lines.append("overall: " + ("PASS" if rep.passed else "FAIL"))
    data = {
        "model": model.name,
        "checks": [{"name": r.name, "worst": r.worst, "tol": r.tol, "passed": r.passed, "note": r.note}
                   for r in rep.results],
        "theorem1": {"applies_at": rep.theorem_applies, "zero_eig_at": rep.theorem_zero_eig,
                     "max_abs_det_P": rep.max_abs_det},
        "verdict": rep.verdict,
        "passed": rep.passed,
    }
    header = ["check", "worst", "tol", "status"]
    rows = [[r.name, r.worst, "" if r.tol is None else r.tol, "INFO" if r.tol is None else
             ("PASS" if r.passed else "FAIL")] for r in rep.results]
    return {"json": data, "csv": (header, rows), "text": "\n".join(lines) + "\n"}, rep.passed


def execute(config: RunConfig) -> int:
    """Run one command; returns the process exit code."""
    try:
        model = _load(config)
        passed = True
        if config.command == "analyze":
            report = _analyze(model, config)
        elif config.command == "equilibria":
            report = _equilibria(model, config)
        elif config.command == "trajectory":
            report = _trajectory(model, config)
        elif config.command == "deviation":
            report = _deviation(model, config)
        elif config.command == "scan":
            report = _scan(model, config)
        elif config.command == "check":
            report, passed = _check(model, config)
        else:
            raise UsageError(f"unknown command {config.command!r}")
        payload = emit(report, config.format)
    except UsageError as exc:
        print(f"kccjacobi: error: {exc}", file=sys.stderr)
        return 1
    except (KccError, ValueError) as exc:
        print(f"kccjacobi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    try:
        if config.out:
            Path(config.out).write_bytes(payload)
        else:
            sys.stdout.buffer.write(payload)
            sys.stdout.flush()
    except OSError as exc:
        print(f"kccjacobi: cannot write output: {exc}", file=sys.stderr)
        return 2
    if not passed:
        print("kccjacobi: check failed", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_args(argv)
    except UsageError as exc:
        _build_parser().print_usage(sys.stderr)
        print(f"kccjacobi: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
