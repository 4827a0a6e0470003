"""Self-verification suite run by ``kccjacobi check``.

Each check returns a :class:`CheckResult` with the worst defect found and the
tolerance it is held to.  Checks with ``tol=None`` are diagnostics: they are
reported but never fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import covariant_residual, deviation_integrate, flow_integrate
from .errors import KccError
from .jet import jet2, jet2_fd
from .kcc import (
    decomposition_residual,
    euler_lagrange_residual,
    first_invariant_expanded,
    frame_from_jet,
    semispray,
    semispray_x_gradient,
)
from .spectral import Jacobi, classify_jacobi, theorem1_predicate
from .dynamics import aggregate

FD_STEP_Y = 1e-6
FD_STEP_X = 1e-5


@dataclass
class CheckResult:
    name: str
    worst: float
    tol: float | None
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.tol is None or self.worst <= self.tol


@dataclass
class CheckReport:
    results: list
    points_used: int
    points_skipped: int
    theorem_applies: int
    theorem_zero_eig: int
    max_abs_det: float
    verdict: Jacobi

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def _maxabs(a):
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def _rel(a, b):
    return _maxabs(np.asarray(a) - np.asarray(b)) / (1.0 + _maxabs(b))


def skew_defects(frame):
    """Worst of ``|N + N^T|`` and ``|dN_k + dN_k^T|`` relative to ``1 + max|.|``."""
    worst = _maxabs(frame.N + frame.N.T) / (1.0 + _maxabs(frame.N))
    for k in range(frame.n):
        s = frame.dN[:, :, k]
        worst = max(worst, _maxabs(s + s.T) / (1.0 + _maxabs(s)))
    return worst


def jet_fd_defect(model, x):
    exact = jet2(model, x)
    approx = jet2_fd(model, x)
    return max(
        _rel(approx.value, exact.value),
        float(np.max(np.abs(approx.jac - exact.jac) / (1.0 + np.abs(exact.jac)))),
        float(np.max(np.abs(approx.hess - exact.hess) / (1.0 + np.abs(exact.hess)))),
    )


def dGdy_defect(jet, y):
    n = jet.n
    fd = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = FD_STEP_Y
        fd[:, j] = (semispray(jet, y + e) - semispray(jet, y - e)) / (2 * FD_STEP_Y)
    N = -0.5 * (jet.jac - jet.jac.T)
    return _maxabs(fd - N)


def dGdx_defect(model, x, y):
    x = np.asarray(x, dtype=float)
    n = x.size
    fd = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = FD_STEP_X
        fd[:, j] = (semispray(jet2(model, x + e), y) - semispray(jet2(model, x - e), y)) / (2 * FD_STEP_X)
    return _rel(fd, semispray_x_gradient(jet2(model, x), y))


def run_checks(model, points, x0, xi0=None, xidot0=None, T=1.0, dt=1e-3, tol=1e-9) -> CheckReport:
    n = model.n
    worst = {k: 0.0 for k in ("skew", "jet", "E", "dGdy", "dGdx", "EL", "D1", "D2")}
    used = skipped = applies = zero = 0
    max_det = 0.0
    classes = []
    theorem_hit = False
    for x in points:
        try:
            jet = jet2(model, x)
            y = jet.value
            frame = frame_from_jet(jet, x, y)
            worst["jet"] = max(worst["jet"], jet_fd_defect(model, x))
            worst["dGdx"] = max(worst["dGdx"], dGdx_defect(model, x, y))
        except KccError:
            skipped += 1
            continue
        used += 1
        worst["skew"] = max(worst["skew"], skew_defects(frame))
        worst["E"] = max(worst["E"], _rel(frame.E, first_invariant_expanded(jet, y)))
        worst["dGdy"] = max(worst["dGdy"], dGdy_defect(jet, y))
        worst["EL"] = max(worst["EL"], euler_lagrange_residual(jet))
        d1, d2 = decomposition_residual(frame)
        worst["D1"] = max(worst["D1"], _maxabs(d1))
        worst["D2"] = max(worst["D2"], _maxabs(d2))
        classes.append(classify_jacobi(frame.P, tol).classification)
        th = theorem1_predicate(frame, n, tol)
        if th.applies:
            applies += 1
            max_det = max(max_det, abs(th.det_P))
            if th.has_zero_eig:
                zero += 1
                theorem_hit = True

    xi0 = np.eye(n)[0] if xi0 is None else xi0
    xidot0 = np.zeros(n) if xidot0 is None else xidot0
    try:
        run = deviation_integrate(model, flow_integrate(model, x0, T, dt), xi0, xidot0)
        cov = covariant_residual(model, run)
        cov_note = f"flow from {np.round(np.asarray(x0, float), 6).tolist()}, T={T:g}, dt={dt:g}"
    except KccError as exc:
        cov = float("inf")
        cov_note = f"integration failed: {exc}"

    decomposition_note = "diagnostic only: the split P = R y + Emat is under test, not assumed"
    results = [
        CheckResult("skew-symmetry of N and dN_k", worst["skew"], 1e-12),
        CheckResult("exact jet vs central differences", worst["jet"], 1e-6),
        CheckResult("first invariant 2G - Ny vs closed form", worst["E"], 1e-12),
        CheckResult("dG/dy (finite differences) = N", worst["dGdy"], 1e-6),
        CheckResult("dG/dx analytic vs finite differences", worst["dGdx"], 1e-6),
        CheckResult("Euler-Lagrange residual on flow", worst["EL"], 1e-10),
        CheckResult("covariant residual |D2xi - P xi|", cov, 1e-4, cov_note),
        CheckResult("decomposition residual D1 = P - (R y + Emat)", worst["D1"], None, decomposition_note),
        CheckResult("decomposition residual D2 = P - (dN y + Emat)", worst["D2"], None, decomposition_note),
    ]
    if used == 0:
        results.append(CheckResult("evaluable sample points", 0.0, -1.0, "no sample point could be evaluated"))
    return CheckReport(results, used, skipped, applies, zero, max_det, aggregate(classes, theorem_hit))
