"""Trajectories, deviation (Jacobi) fields, equilibria and stability aggregation.

All integrators are classical fixed-step RK4 on a uniform grid.  When ``T``
is not a multiple of ``dt`` the step is shrunk to ``T / ceil(T / dt)`` so the
last sample lands exactly on ``T``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EvalError, KccError, NoConvergence, NonFiniteError, SingularJacobian, TooFewSamples
from .jet import field_jacobian, field_value, jet2
from .kcc import (
    deviation_tensor,
    frame_from_jet,
    geometry_frame,
    nonlinear_connection,
    semispray,
    semispray_x_gradient,
)
from .spectral import Jacobi, classify_jacobi, theorem1_predicate

FLOW = "Flow"
EULER_LAGRANGE = "EulerLagrange"
ON_SHELL = "on-shell"


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray  # (m,)
    x: np.ndarray  # (m, n)
    y: np.ndarray  # (m, n)
    dt: float
    kind: str

    def __len__(self):
        return self.t.shape[0]

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.y))


@dataclass(frozen=True)
class DeviationRun:
    base: Trajectory
    xi: np.ndarray  # (m, n)
    xidot: np.ndarray  # (m, n)
    covariant_residual: np.ndarray  # (m,)


@dataclass(frozen=True)
class ProfileSample:
    t: float
    max_re: float
    classification: Jacobi


@dataclass(frozen=True)
class StabilityProfile:
    samples: list
    verdict: Jacobi
    theorem1: bool  # some sample met the zero-eigenvalue theorem's hypothesis and conclusion
    note: str = "verdict covers the computed samples only"


@dataclass(frozen=True)
class Cell:
    point: np.ndarray
    max_re: float
    classification: Jacobi | None
    error: str | None = None


@dataclass(frozen=True)
class StabilityMap:
    axes: tuple  # ((min, max, count), ...)
    cells: list

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True)
class Equilibria:
    points: list
    failures: list = field(default_factory=list)  # (seed, exception)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def _grid(T, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    if T == 0:
        return np.zeros(1), dt
    steps = max(1, math.ceil(T / dt - 1e-9))
    return np.arange(steps + 1) * (T / steps), T / steps


def _rk4(rhs, z0, times, h):
    z = np.array(z0, dtype=float)
    out = np.empty((len(times), z.size))
    out[0] = z
    for k in range(1, len(times)):
        t = times[k - 1]
        try:
            k1 = rhs(z)
            k2 = rhs(z + 0.5 * h * k1)
            k3 = rhs(z + 0.5 * h * k2)
            k4 = rhs(z + h * k3)
        except EvalError as exc:
            exc.t = t
            raise
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise NonFiniteError(f"state left double range near t={times[k]:.17g}", t=times[k])
        out[k] = z
    return out


def _check_point(model, v, what):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (model.n,):
        raise ValueError(f"{what} must have {model.n} coordinates")
    return v


def flow_integrate(model, x0, T: float, dt: float) -> Trajectory:
    """RK4 on ``dx/dt = X(x)``; ``y`` samples are ``X(x)``."""
    x0 = _check_point(model, x0, "x0")
    times, h = _grid(T, dt)
    xs = _rk4(lambda z: field_value(model, z), x0, times, h)
    ys = np.array([field_value(model, x) for x in xs])
    return Trajectory(times, xs, ys, h, FLOW)


def _el_rhs(model, n):
    def rhs(z):
        x, y = z[:n], z[n:]
        jet = jet2(model, x)
        return np.concatenate([y, -2.0 * semispray(jet, y)])

    return rhs


def el_integrate(model, x0, y0, T: float, dt: float) -> Trajectory:
    """RK4 on the Euler-Lagrange system ``x' = y, y' = -2 G(x, y)``."""
    n = model.n
    z0 = np.concatenate([_check_point(model, x0, "x0"), _check_point(model, y0, "y0")])
    times, h = _grid(T, dt)
    zs = _rk4(_el_rhs(model, n), z0, times, h)
    return Trajectory(times, zs[:, :n], zs[:, n:], h, EULER_LAGRANGE)


def _newton_step(model, x):
    X, J = field_jacobian(model, x)
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
        raise SingularJacobian(f"singular Jacobian at {x.tolist()}")
    return X, np.linalg.solve(J, -X)


def find_equilibria(model, seeds: Sequence, tol: float = 1e-12, max_iter: int = 50) -> Equilibria:
    """Damped Newton on ``X(x) = 0`` from each seed.

    Failed seeds are recorded in ``failures`` and skipped.  Converged points
    closer than 1e-6 (max-norm) are merged.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    points, failures = [], []
    for seed in seeds:
        x = _check_point(model, seed, "seed").copy()
        try:
            for _ in range(max_iter):
                X, step = _newton_step(model, x)
                res = np.max(np.abs(X))
                if res <= tol:
                    break
                lam = 1.0
                for _ in range(20):
                    trial = x + lam * step
                    try:
                        if np.max(np.abs(field_value(model, trial))) < res:
                            break
                    except EvalError:
                        pass
                    lam *= 0.5
                x = x + lam * step
            else:
                X = field_value(model, x)
                if np.max(np.abs(X)) > tol:
                    raise NoConvergence(f"no convergence from seed {np.ravel(seed).tolist()}")
        except (SingularJacobian, NoConvergence, EvalError) as exc:
            failures.append((np.asarray(seed, dtype=float), exc))
            continue
        if not any(np.max(np.abs(x - p)) <= 1e-6 for p in points):
            points.append(x)
    return Equilibria(points, failures)


def _deviation_rhs(model, n, kind):
    def accel(x, y, xi, eta):
        jet = jet2(model, x)
        if y is None:
            y = jet.value
        N = nonlinear_connection(jet)
        Gx = semispray_x_gradient(jet, y)
        return jet, y, -2.0 * (N @ eta) - 2.0 * (Gx @ xi)

    if kind == FLOW:
        def rhs(z):
            x, xi, eta = z[:n], z[n : 2 * n], z[2 * n :]
            jet, _, acc = accel(x, None, xi, eta)
            return np.concatenate([jet.value, eta, acc])
    else:
        def rhs(z):
            x, y, xi, eta = z[:n], z[n : 2 * n], z[2 * n : 3 * n], z[3 * n :]
            jet, _, acc = accel(x, y, xi, eta)
            return np.concatenate([y, -2.0 * semispray(jet, y), eta, acc])

    return rhs


def deviation_integrate(model, base: Trajectory, xi0, xidot0) -> DeviationRun:
    """Integrate the Jacobi field ``xi'' + 2 N xi' + 2 (dG/dx) xi = 0`` along ``base``.

    The base state is re-integrated in lockstep with ``xi`` so RK4 stages see
    consistent coefficients; the stored base samples are reused unchanged.
    """
    n = model.n
    xi0 = _check_point(model, xi0, "xi0")
    xidot0 = _check_point(model, xidot0, "xidot0")
    times = base.t
    if len(times) == 1:
        xi = xi0[None, :].copy()
        xidot = xidot0[None, :].copy()
    else:
        h = base.dt
        if base.kind == FLOW:
            z0 = np.concatenate([base.x[0], xi0, xidot0])
            zs = _rk4(_deviation_rhs(model, n, FLOW), z0, times, h)
            xi, xidot = zs[:, n : 2 * n], zs[:, 2 * n :]
        else:
            z0 = np.concatenate([base.x[0], base.y[0], xi0, xidot0])
            zs = _rk4(_deviation_rhs(model, n, EULER_LAGRANGE), z0, times, h)
            xi, xidot = zs[:, 2 * n : 3 * n], zs[:, 3 * n :]
    if len(times) >= 5:
        res = covariant_residuals(model, base, xi, xidot)
    else:
        res = np.full(len(times), np.nan)
    return DeviationRun(base, xi, xidot, res)


# 4th-order first-derivative stencils on a uniform grid (multiply by 1/12h)
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_FORWARD0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_FORWARD1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def _derivative_4th(u, h):
    m = u.shape[0]
    if m < 5:
        raise TooFewSamples(f"need at least 5 samples, got {m}")
    d = np.empty_like(u)
    for k in range(2, m - 2):
        d[k] = _CENTRAL @ u[k - 2 : k + 3]
    d[0] = _FORWARD0 @ u[0:5]
    d[1] = _FORWARD1 @ u[0:5]
    d[m - 1] = -(_FORWARD0 @ u[m - 1 : m - 6 : -1] if m > 5 else _FORWARD0 @ u[::-1])
    d[m - 2] = -(_FORWARD1 @ u[m - 1 : m - 6 : -1] if m > 5 else _FORWARD1 @ u[::-1])
    return d / (12.0 * h)


def covariant_residuals(model, base: Trajectory, xi, xidot) -> np.ndarray:
    """Per-sample ``|D^2 xi/dt^2 - P xi|_inf / (1 + |P xi|_inf)`` with ``D = d/dt + N``."""
    xi = np.asarray(xi, dtype=float)
    xidot = np.asarray(xidot, dtype=float)
    m = len(base)
    if m < 5:
        raise TooFewSamples(f"covariant residual needs at least 5 samples, got {m}")
    Ns, Ps = [], []
    for x, y in zip(base.x, base.y):
        jet = jet2(model, x)
        Ns.append(nonlinear_connection(jet))
        Ps.append(deviation_tensor(jet, y))
    Ns, Ps = np.array(Ns), np.array(Ps)
    u = xidot + np.einsum("kij,kj->ki", Ns, xi)
    Du = _derivative_4th(u, base.dt) + np.einsum("kij,kj->ki", Ns, u)
    Pxi = np.einsum("kij,kj->ki", Ps, xi)
    return np.max(np.abs(Du - Pxi), axis=1) / (1.0 + np.max(np.abs(Pxi), axis=1))


def covariant_residual(model, run: DeviationRun) -> float:
    """Worst covariant residual of a run; small values validate P, N and G together."""
    return float(np.max(covariant_residuals(model, run.base, run.xi, run.xidot)))


def stability_profile(model, traj: Trajectory, tol: float = 1e-9) -> StabilityProfile:
    """Classify ``P(x(t), y(t))`` at every sample and aggregate.

    The aggregate is JacobiStable only if every sample is; JacobiUnstable if
    any sample is, or if some sample satisfies the odd-dimension zero-eigenvalue
    theorem; Marginal otherwise.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    samples = []
    any_theorem = False
    for t, x, y in zip(traj.t, traj.x, traj.y):
        frame = geometry_frame(model, x, y)
        rep = classify_jacobi(frame.P, tol)
        samples.append(ProfileSample(float(t), rep.max_re, rep.classification))
        if model.n % 2 == 1 and not any_theorem:
            any_theorem = theorem1_predicate(frame, model.n, tol).unstable
    return StabilityProfile(samples, aggregate([s.classification for s in samples], any_theorem), any_theorem)


def aggregate(classes, theorem_hit: bool = False) -> Jacobi:
    classes = list(classes)
    if classes and all(c == Jacobi.STABLE for c in classes):
        return Jacobi.STABLE
    if theorem_hit or any(c == Jacobi.UNSTABLE for c in classes):
        return Jacobi.UNSTABLE
    return Jacobi.MARGINAL


def grid_nodes(axes):
    """Grid points in row-major order with axis 1 varying fastest."""
    ticks = []
    for lo, hi, count in axes:
        count = int(count)
        if count < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("each axis needs finite bounds and count >= 1")
        ticks.append(np.array([lo]) if count == 1 else np.linspace(lo, hi, count))
    for combo in itertools.product(*reversed(ticks)):
        yield np.array(combo[::-1])


def grid_scan(model, axes, y_policy=ON_SHELL, tol: float = 1e-9, workers: int = 1) -> StabilityMap:
    """Evaluate the pointwise classification on a rectangular grid.

    ``axes`` is one ``(min, max, count)`` per coordinate.  ``y_policy`` is
    ``"on-shell"`` (``y = X(x)``) or a fixed fiber vector.  Cells that fail to
    evaluate are recorded with their error and the scan continues.
    """
    axes = tuple((float(lo), float(hi), int(c)) for lo, hi, c in axes)
    if len(axes) != model.n:
        raise ValueError(f"region needs {model.n} axes")
    fixed = None if isinstance(y_policy, str) and y_policy == ON_SHELL else _check_point(model, y_policy, "y")
    nodes = list(grid_nodes(axes))

    def cell(x):
        try:
            jet = jet2(model, x)
            frame = frame_from_jet(jet, x, jet.value if fixed is None else fixed)
            rep = classify_jacobi(frame.P, tol)
        except KccError as exc:
            return Cell(x, math.nan, None, str(exc))
        return Cell(x, rep.max_re, rep.classification)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cells = list(pool.map(cell, nodes))
    else:
        cells = [cell(x) for x in nodes]
    return StabilityMap(axes, cells)
