"""Second-order jets of a vector field: value, Jacobian and Hessians.

Derivative trees are built once per model by :func:`kccjacobi.expr.differentiate`
and compiled into straight-line Python (one assignment per distinct subtree).
A tree-walking evaluation is used only to locate the failing node when the
compiled code hits a domain error.
"""

from __future__ import annotations

import math
import threading
import warnings
import weakref
from dataclasses import dataclass

import numpy as np

from .errors import DomainWarning, EvalError
from .expr import Binary, Const, Param, Unary, Var, VectorFieldModel, differentiate, evaluate

DEFAULT_H = 1e-5
DEFAULT_H_HESS = 1e-4


@dataclass(frozen=True)
class Jet2:
    value: np.ndarray  # (n,)       X^i
    jac: np.ndarray  # (n, n)       J[i, j] = dX^i/dx^j
    hess: np.ndarray  # (n, n, n)   H[i, j, k] = d2X^i/dx^j dx^k

    @property
    def n(self) -> int:
        return self.value.shape[0]


class _Compiled:
    """Derivative trees of one model and the straight-line code evaluating them."""

    def __init__(self, model: VectorFieldModel):
        n = model.n
        self.model = model
        self.singular = []  # (i, derivative) pairs flagged by DomainWarning
        comps = model.components
        first = {}
        second = {}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DomainWarning)
            for i in range(n):
                for j in range(n):
                    before = len(caught)
                    first[i, j] = differentiate(comps[i], j + 1)
                    if len(caught) > before:
                        self.singular.append((i + 1, (j + 1,)))
                for j in range(n):
                    for k in range(j, n):
                        before = len(caught)
                        second[i, j, k] = differentiate(first[i, j], k + 1)
                        if len(caught) > before:
                            self.singular.append((i + 1, (j + 1, k + 1)))
        self.first = first
        self.second = second
        self.value_fn = self._compile("value", list(comps))
        self.jac_fn = self._compile("jac", list(comps) + [first[i, j] for i in range(n) for j in range(n)])
        self.hess_keys = [(i, j, k) for i in range(n) for j in range(n) for k in range(j, n)]
        self.full_fn = self._compile(
            "full",
            list(comps)
            + [first[i, j] for i in range(n) for j in range(n)]
            + [second[key] for key in self.hess_keys],
        )

    def _compile(self, name, exprs):
        n = self.model.n
        params = self.model.params
        lines = []
        memo = {}

        def emit(e):
            if isinstance(e, Const):
                return repr(e.value)
            if isinstance(e, Var):
                return f"x{e.index}"
            if isinstance(e, Param):
                return repr(float(params[e.name]))
            if e in memo:
                return memo[e]
            if isinstance(e, Unary):
                a = emit(e.arg)
                code = f"(-{a})" if e.op == "neg" else f"_{e.op}({a})"
            elif isinstance(e, Binary):
                a, b = emit(e.left), emit(e.right)
                code = {
                    "add": f"{a} + {b}",
                    "sub": f"{a} - {b}",
                    "mul": f"{a} * {b}",
                    "div": f"{a} / {b}",
                    "pow": f"_pow({a}, {b})",
                }[e.op]
            else:
                raise TypeError(f"not an expression node: {e!r}")
            var = f"t{len(memo)}"
            memo[e] = var
            lines.append(f"    {var} = {code}")
            return var

        outputs = [emit(e) for e in exprs]
        unpack = ", ".join(f"x{i}" for i in range(1, n + 1))
        src = [f"def _{name}(x):", f"    {unpack}, = x"] + lines
        src.append(f"    return ({', '.join(outputs)},)")
        namespace = {
            "_sin": math.sin,
            "_cos": math.cos,
            "_tan": math.tan,
            "_exp": math.exp,
            "_ln": math.log,
            "_sqrt": math.sqrt,
            "_tanh": math.tanh,
            "_pow": math.pow,
        }
        exec(compile("\n".join(src), f"<kccjacobi:{self.model.name or 'model'}:{name}>", "exec"), namespace)
        return namespace[f"_{name}"]

    def run(self, fn, x):
        try:
            out = fn(x)
        except (ValueError, ZeroDivisionError, OverflowError):
            self._diagnose(x)
            raise EvalError(f"evaluation failed at x={list(x)}") from None
        return out

    def _diagnose(self, x):
        """Re-evaluate tree by tree to raise an EvalError naming the bad node."""
        n = self.model.n
        params = self.model.params
        jobs = [(i + 1, None, e) for i, e in enumerate(self.model.components)]
        jobs += [(i + 1, (j + 1,), self.first[i, j]) for i in range(n) for j in range(n)]
        jobs += [(i + 1, (j + 1, k + 1), self.second[i, j, k]) for i, j, k in self.hess_keys]
        for comp, deriv, e in jobs:
            try:
                evaluate(e, x, params)
            except EvalError as exc:
                exc.component, exc.derivative = comp, deriv
                raise


_cache: "weakref.WeakKeyDictionary[VectorFieldModel, _Compiled]" = weakref.WeakKeyDictionary()
_lock = threading.Lock()


def compiled(model: VectorFieldModel) -> _Compiled:
    """Per-model derivative cache, built once under a lock."""
    c = _cache.get(model)
    if c is None:
        with _lock:
            c = _cache.get(model)
            if c is None:
                c = _cache[model] = _Compiled(model)
    return c


def _point(model, x):
    x = [float(v) for v in np.ravel(x)]
    if len(x) != model.n:
        raise ValueError(f"point has {len(x)} coordinates, model has dimension {model.n}")
    if not all(math.isfinite(v) for v in x):
        raise ValueError("point coordinates must be finite")
    return x


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise EvalError(f"non-finite {what}")
    return arr


def field_value(model: VectorFieldModel, x) -> np.ndarray:
    c = compiled(model)
    return _finite(np.array(c.run(c.value_fn, _point(model, x))), "field value")


def field_jacobian(model: VectorFieldModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X(x), J(x))``."""
    c = compiled(model)
    n = model.n
    out = np.array(c.run(c.jac_fn, _point(model, x)))
    _finite(out, "Jacobian")
    return out[:n], out[n:].reshape(n, n)


def jet2(model: VectorFieldModel, x) -> Jet2:
    """Exact value, Jacobian and Hessians of the field at ``x``."""
    c = compiled(model)
    n = model.n
    out = np.array(c.run(c.full_fn, _point(model, x)))
    _finite(out, "jet")
    value = out[:n]
    jac = out[n : n + n * n].reshape(n, n)
    hess = np.empty((n, n, n))
    for (i, j, k), v in zip(c.hess_keys, out[n + n * n :]):
        hess[i, j, k] = v
        hess[i, k, j] = v
    for a in (value, jac, hess):
        a.flags.writeable = False
    return Jet2(value, jac, hess)


def jet2_fd(model: VectorFieldModel, x, h: float = DEFAULT_H, h_hess: float = DEFAULT_H_HESS,
            symmetrize: bool = True) -> Jet2:
    """Central-difference jet; the independent oracle for :func:`jet2`.

    ``h`` is the Jacobian step and ``h_hess`` the Hessian step.  Hessians use
    the 4-point stencil ``[f(++) - f(+-) - f(-+) + f(--)] / 4 h^2``.
    """
    if not (h > 0 and h_hess > 0):
        raise ValueError("finite-difference steps must be positive")
    x = np.array(_point(model, x))
    n = model.n
    f = lambda p: field_value(model, p)  # noqa: E731
    value = f(x)
    eye = np.eye(n)
    jac = np.empty((n, n))
    for j in range(n):
        jac[:, j] = (f(x + h * eye[j]) - f(x - h * eye[j])) / (2 * h)
    hess = np.empty((n, n, n))
    for j in range(n):
        for k in range(n):
            dj, dk = h_hess * eye[j], h_hess * eye[k]
            hess[:, j, k] = (f(x + dj + dk) - f(x + dj - dk) - f(x - dj + dk) + f(x - dj - dk)) / (
                4 * h_hess * h_hess
            )
    if symmetrize:
        hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return Jet2(value, jac, hess)
