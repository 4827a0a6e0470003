"""Eigenvalues of small dense real matrices and Jacobi stability classification.

The eigenvalue routine is the classical pipeline: diagonal balancing,
Householder reduction to upper Hessenberg form, then Francis double-shift QR
with deflation.  Matrices here are at most ~10x10, so plain Python lists are
used for the inner loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

_EPS = np.finfo(float).eps
_RADIX = 2.0


class Jacobi(str, enum.Enum):
    STABLE = "JacobiStable"
    UNSTABLE = "JacobiUnstable"
    MARGINAL = "Marginal"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: tuple  # complex, descending real part then imaginary part
    max_re: float
    classification: Jacobi
    det: float


@dataclass(frozen=True)
class Theorem1Check:
    applies: bool
    skew_defect: float
    det_P: float
    has_zero_eig: bool

    @property
    def unstable(self) -> bool:
        return self.applies and self.has_zero_eig


def balance(a: np.ndarray) -> np.ndarray:
    """Similarity-scale rows/columns by powers of 2 so their norms are comparable."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    sqrdx = _RADIX * _RADIX
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / _RADIX
            f = 1.0
            s = c + r
            while c < g:
                f *= _RADIX
                c *= sqrdx
            g = r * _RADIX
            while c > g:
                f /= _RADIX
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Orthogonal similarity reduction to upper Hessenberg form (Householder)."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        a[k + 1 :, k:] -= 2.0 * np.outer(v, v @ a[k + 1 :, k:])
        a[:, k + 1 :] -= 2.0 * np.outer(a[:, k + 1 :] @ v, v)
        a[k + 2 :, k] = 0.0
    return a


def _hqr(a: list, max_sweeps: int) -> list:
    """Francis double-shift QR on an upper Hessenberg matrix (modified in place)."""
    n = len(a)
    wr = [complex(0.0)] * n
    found = [False] * n
    anorm = sum(abs(a[i][j]) for i in range(n) for j in range(max(i - 1, 0), n))
    nn = n - 1
    t = 0.0
    sweeps = 0

    def partial():
        return [wr[i] for i in range(n) if found[i]]

    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = nn
            while l > 0:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) <= _EPS * s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = complex(x + t)
                found[nn] = True
                nn -= 1
            else:
                y = a[nn - 1][nn - 1]
                w = a[nn][nn - 1] * a[nn - 1][nn]
                if l == nn - 1:
                    p = 0.5 * (y - x)
                    q = p * p + w
                    z = math.sqrt(abs(q))
                    x += t
                    if q >= 0.0:
                        z = p + math.copysign(z, p)
                        wr[nn - 1] = wr[nn] = complex(x + z)
                        if z != 0.0:
                            wr[nn] = complex(x - w / z)
                    else:
                        wr[nn] = complex(x + p, -z)
                        wr[nn - 1] = wr[nn].conjugate()
                    found[nn] = found[nn - 1] = True
                    nn -= 2
                else:
                    if sweeps >= max_sweeps:
                        raise ConvergenceError(
                            f"QR iteration did not converge in {max_sweeps} sweeps "
                            f"({sum(found)} of {n} eigenvalues found)",
                            partial(),
                        )
                    if its in (10, 20):
                        # exceptional shift
                        t += x
                        for i in range(nn + 1):
                            a[i][i] -= x
                        s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                        y = x = 0.75 * s
                        w = -0.4375 * s * s
                    its += 1
                    sweeps += 1
                    m = nn - 2
                    while m >= l:
                        z = a[m][m]
                        r = x - z
                        s = y - z
                        p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                        q = a[m + 1][m + 1] - z - r - s
                        r = a[m + 2][m + 1]
                        s = abs(p) + abs(q) + abs(r)
                        p /= s
                        q /= s
                        r /= s
                        if m == l:
                            break
                        u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                        v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                        if u <= _EPS * v:
                            break
                        m -= 1
                    for i in range(m, nn - 1):
                        a[i + 2][i] = 0.0
                        if i != m:
                            a[i + 2][i - 1] = 0.0
                    for k in range(m, nn):
                        if k != m:
                            p = a[k][k - 1]
                            q = a[k + 1][k - 1]
                            r = a[k + 2][k - 1] if k + 1 != nn else 0.0
                            x = abs(p) + abs(q) + abs(r)
                            if x != 0.0:
                                p /= x
                                q /= x
                                r /= x
                        s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                        if s == 0.0:
                            continue
                        if k == m:
                            if l != m:
                                a[k][k - 1] = -a[k][k - 1]
                        else:
                            a[k][k - 1] = -s * x
                        p += s
                        x = p / s
                        y = q / s
                        z = r / s
                        q /= p
                        r /= p
                        for j in range(k, nn + 1):
                            p = a[k][j] + q * a[k + 1][j]
                            if k + 1 != nn:
                                p += r * a[k + 2][j]
                                a[k + 2][j] -= p * z
                            a[k + 1][j] -= p * y
                            a[k][j] -= p * x
                        mmin = nn if nn < k + 3 else k + 3
                        for i in range(l, mmin + 1):
                            p = x * a[i][k] + y * a[i][k + 1]
                            if k + 1 != nn:
                                p += z * a[i][k + 2]
                                a[i][k + 2] -= p * r
                            a[i][k + 1] -= p * q
                            a[i][k] -= p
            if l + 1 >= nn:
                break
    return wr


def _sort_key(z: complex):
    return (-z.real, -z.imag)


def eigenvalues(M) -> list:
    """All eigenvalues of a real square matrix, sorted by descending real part.

    Ties (conjugate pairs) are ordered by descending imaginary part.  Raises
    :class:`ConvergenceError` after ``30 n`` QR sweeps.
    """
    a = np.array(M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError("expected a non-empty square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    n = a.shape[0]
    h = hessenberg(balance(a))
    wr = _hqr(h.tolist(), 30 * n)
    return sorted(wr, key=_sort_key)


def classify(max_re: float, tol: float = 1e-9) -> Jacobi:
    if max_re < -tol:
        return Jacobi.STABLE
    if max_re > tol:
        return Jacobi.UNSTABLE
    return Jacobi.MARGINAL


def classify_jacobi(M, tol: float = 1e-9) -> SpectrumReport:
    """Pointwise Jacobi classification of a deviation tensor.

    Stable needs every real part below ``-tol``; a real part inside
    ``[-tol, tol]`` gives Marginal, which is not stable.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    ev = eigenvalues(M)
    max_re = ev[0].real
    return SpectrumReport(tuple(ev), max_re, classify(max_re, tol), float(np.linalg.det(np.asarray(M, float))))


def theorem1_predicate(frame, n: int | None = None, tol: float = 1e-9) -> Theorem1Check:
    """Odd dimension plus skew-symmetric invariant matrix forces a zero eigenvalue of P.

    The conclusion (``det P = 0``, some ``|lambda| <= tol``) is computed
    directly, not inferred.
    """
    n = frame.n if n is None else n
    E = frame.Emat
    skew_defect = float(np.max(np.abs(E + E.T)))
    skew = skew_defect <= tol * (1.0 + float(np.max(np.abs(E))))
    applies = n >= 2 and n % 2 == 1 and skew
    P = frame.P
    det_P = float(np.linalg.det(P))
    scale = max(1.0, float(np.max(np.abs(P))))
    has_zero = min(abs(z) for z in eigenvalues(P)) <= tol * scale
    return Theorem1Check(applies, skew_defect, det_P, has_zero)
