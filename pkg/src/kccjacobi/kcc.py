"""Lagrange/KCC geometry of the least-squares Lagrangian ``L = |y - X(x)|^2``.

Everything here is a pure function of a :class:`~kccjacobi.jet.Jet2` and a
fiber vector ``y``.  Array indices are 0-based; ``H[i, j, k]`` is
``d2X^i / dx^j dx^k``.  The metric is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jet import Jet2, jet2


@dataclass(frozen=True)
class GeometryFrame:
    x: np.ndarray
    y: np.ndarray
    jet: Jet2
    L: float
    G: np.ndarray  # semispray
    N: np.ndarray  # nonlinear connection
    dN: np.ndarray  # dN[i, j, k] = dN^i_j / dx^k
    R: np.ndarray  # d-torsion R[i, j, k] = R^i_jk
    E: np.ndarray  # first invariant
    Emat: np.ndarray  # delta E^i / delta x^j
    P: np.ndarray  # deviation curvature tensor

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _vec(y, n):
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (n,):
        raise ValueError(f"fiber vector must have length {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("fiber vector must be finite")
    return y


def lagrangian(jet: Jet2, y) -> float:
    r = _vec(y, jet.n) - jet.value
    return float(r @ r)


def semispray(jet: Jet2, y) -> np.ndarray:
    """``G = -1/2 [(J - J^T) y + J^T X]``."""
    y = _vec(y, jet.n)
    J = jet.jac
    return -0.5 * ((J - J.T) @ y + J.T @ jet.value)


def nonlinear_connection(jet: Jet2) -> np.ndarray:
    """``N = -1/2 (J - J^T)``; equals ``dG/dy`` and does not depend on ``y``."""
    J = jet.jac
    return -0.5 * (J - J.T) + 0.0  # + 0.0 clears negative zeros on the diagonal


def connection_gradient(jet: Jet2) -> np.ndarray:
    """``dN[i, j, k] = -1/2 (H[i, j, k] - H[j, i, k])``."""
    H = jet.hess
    return -0.5 * (H - H.transpose(1, 0, 2))


def d_torsion(dN: np.ndarray) -> np.ndarray:
    """``R[i, j, k] = dN[i, j, k] - dN[i, k, j]``.

    The horizontal derivatives reduce to plain x-derivatives because N has no
    y-dependence.
    """
    return dN - dN.transpose(0, 2, 1)


def first_invariant(jet: Jet2, y) -> np.ndarray:
    """``E = 2 G - N y``."""
    y = _vec(y, jet.n)
    return 2.0 * semispray(jet, y) - nonlinear_connection(jet) @ y


def first_invariant_expanded(jet: Jet2, y) -> np.ndarray:
    """Closed form ``-1/2 (J - J^T) y - J^T X``, used to cross-check :func:`first_invariant`."""
    y = _vec(y, jet.n)
    J = jet.jac
    return -0.5 * (J - J.T) @ y - J.T @ jet.value


def invariant_matrix(jet: Jet2, y) -> np.ndarray:
    """Horizontal derivative ``delta E^i / delta x^j``, term by term.

    -1/2 (H^i_jk - H^k_ij) y^k  -  H^k_ij X^k  -  J_ki J_kj  -  1/4 [(J - J^T)^2]_ij
    """
    y = _vec(y, jet.n)
    J, H, X = jet.jac, jet.hess, jet.value
    A = J - J.T
    t1 = -0.5 * (np.einsum("ijk,k->ij", H, y) - np.einsum("kij,k->ij", H, y))
    t2 = -np.einsum("kij,k->ij", H, X)
    t3 = -J.T @ J
    t4 = -0.25 * (A @ A)
    return t1 + t2 + t3 + t4


def semispray_x_gradient(jet: Jet2, y) -> np.ndarray:
    """``dG^i/dx^j`` expanded through the jet."""
    y = _vec(y, jet.n)
    J, H, X = jet.jac, jet.hess, jet.value
    minus2 = (
        np.einsum("ikj,k->ij", H, y)
        - np.einsum("kij,k->ij", H, y)
        + np.einsum("kij,k->ij", H, X)
        + J.T @ J
    )
    return -0.5 * minus2


def deviation_tensor(jet: Jet2, y) -> np.ndarray:
    """``P = -2 dG/dx + (dN/dx^l) y^l + N N``.

    The ``-2 G^l dN/dy^l`` term of the general formula is zero for this
    Lagrangian since N does not depend on y.
    """
    y = _vec(y, jet.n)
    N = nonlinear_connection(jet)
    dN = connection_gradient(jet)
    return -2.0 * semispray_x_gradient(jet, y) + np.einsum("ijk,k->ij", dN, y) + N @ N


def decomposition_residual(frame: GeometryFrame, y=None) -> tuple[np.ndarray, np.ndarray]:
    """Diagnostic pair ``(P - (R y + Emat), P - (dN y + Emat))``.

    Both vanish only when the split of P into a torsion part plus the
    invariant matrix holds at this point; neither is used to compute P.
    """
    y = frame.y if y is None else _vec(y, frame.n)
    Ry = np.einsum("ijk,k->ij", frame.R, y)
    dNy = np.einsum("ijk,k->ij", frame.dN, y)
    return frame.P - (Ry + frame.Emat), frame.P - (dNy + frame.Emat)


def frame_from_jet(jet: Jet2, x, y) -> GeometryFrame:
    y = _vec(y, jet.n)
    N = nonlinear_connection(jet)
    dN = connection_gradient(jet)
    return GeometryFrame(
        x=np.asarray(x, dtype=float).reshape(-1).copy(),
        y=y.copy(),
        jet=jet,
        L=lagrangian(jet, y),
        G=semispray(jet, y),
        N=N,
        dN=dN,
        R=d_torsion(dN),
        E=first_invariant(jet, y),
        Emat=invariant_matrix(jet, y),
        P=deviation_tensor(jet, y),
    )


def geometry_frame(model, x, y=None) -> GeometryFrame:
    """All geometric objects at ``(x, y)``; ``y=None`` means on-shell, ``y = X(x)``."""
    jet = jet2(model, x)
    if y is None:
        y = jet.value
    return frame_from_jet(jet, x, y)


def euler_lagrange_residual(jet: Jet2) -> float:
    """Relative residual of ``x'' + 2G = 0`` for the flow through this point.

    Along a flow solution ``x' = X`` and ``x'' = J X``.
    """
    acc = jet.jac @ jet.value
    r = acc + 2.0 * semispray(jet, jet.value)
    return float(np.max(np.abs(r)) / (1.0 + np.max(np.abs(acc))))
