import numpy as np
import pytest

from kccjacobi import catalog
from kccjacobi.errors import ConvergenceError
from kccjacobi.kcc import geometry_frame
from kccjacobi.spectral import (
    Jacobi,
    _hqr,
    balance,
    classify,
    classify_jacobi,
    eigenvalues,
    hessenberg,
    theorem1_predicate,
)


def greedy_match(a, b):
    b = list(b)
    worst = 0.0
    for z in a:
        k = min(range(len(b)), key=lambda i: abs(b[i] - z))
        worst = max(worst, abs(b.pop(k) - z))
    return worst


# --- eigenvalues ---------------------------------------------------------------

def test_diagonal():
    ev = eigenvalues(np.diag([3.0, -1.0, 2.0]))
    assert ev == [3.0, 2.0, -1.0]


def test_rotation_generator():
    ev = eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
    assert abs(ev[0] - 1j) <= 1e-12 and abs(ev[1] + 1j) <= 1e-12


def test_one_by_one():
    assert eigenvalues([[-4.5]]) == [-4.5]


def test_sorted_descending(rng):
    for _ in range(50):
        ev = eigenvalues(rng.normal(size=(6, 6)))
        keys = [(z.real, z.imag) for z in ev]
        assert keys == sorted(keys, reverse=True)


def test_conjugate_pairs_come_positive_imaginary_first():
    ev = eigenvalues([[1.0, -2.0], [2.0, 1.0]])
    assert ev[0].imag > 0 and ev[1].imag < 0
    assert ev[0] == pytest.approx(1 + 2j, abs=1e-14)


def test_trace_and_det_random(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        M = rng.normal(size=(n, n))
        ev = eigenvalues(M)
        tr = np.trace(M)
        assert abs(sum(ev) - tr) <= 1e-9 * (1 + abs(tr))
        det = np.linalg.det(M)
        assert abs(np.prod(ev) - det) <= 1e-6 * max(abs(det), 1e-300) + 1e-12


def test_matches_numpy_reference(rng):
    for _ in range(30):
        M = rng.normal(size=(5, 5))
        assert greedy_match(eigenvalues(M), np.linalg.eigvals(M)) <= 1e-9


def test_similarity_invariance(rng):
    for _ in range(40):
        n = int(rng.integers(2, 7))
        M = rng.normal(size=(n, n))
        T = rng.normal(size=(n, n)) + 3 * np.eye(n)
        if np.linalg.cond(T) > 1e3:
            continue
        assert greedy_match(eigenvalues(M), eigenvalues(np.linalg.solve(T, M @ T))) <= 1e-7


def test_badly_scaled_matrix():
    D = np.diag([1e-6, 1.0, 1e6])
    A = np.array([[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [1.0, 0.1, 0.7]])
    M = D @ A @ np.linalg.inv(D)
    assert greedy_match(eigenvalues(M), np.linalg.eigvals(A)) <= 1e-8


def test_deterministic(rng):
    M = rng.normal(size=(7, 7))
    assert eigenvalues(M) == eigenvalues(M.copy())


@pytest.mark.parametrize("bad", [np.zeros((2, 3)), np.zeros((0, 0)), [[np.nan]], [[np.inf, 0], [0, 1]]])
def test_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        eigenvalues(bad)


def test_sweep_budget_exhausted():
    h = hessenberg(balance(np.array([[0.0, 2.0, 1.0], [-1.0, 0.5, 3.0], [2.0, 1.0, -1.0]])))
    with pytest.raises(ConvergenceError) as info:
        _hqr(h.tolist(), 0)
    assert info.value.partial is not None


def test_hessenberg_form_and_similarity(rng):
    M = rng.normal(size=(6, 6))
    H = hessenberg(M)
    assert np.all(np.tril(H, -2) == 0.0)
    assert np.trace(H) == pytest.approx(np.trace(M), abs=1e-12)
    assert greedy_match(np.linalg.eigvals(H), np.linalg.eigvals(M)) <= 1e-10


def test_balance_preserves_spectrum(rng):
    M = rng.normal(size=(5, 5)) * np.logspace(-4, 4, 5)
    assert greedy_match(np.linalg.eigvals(balance(M)), np.linalg.eigvals(M)) <= 1e-8 * np.abs(M).max()


# --- skew-symmetric core of the theorem ---------------------------------------

@pytest.mark.parametrize("n", [3, 5, 7])
def test_odd_skew_has_zero_eigenvalue(n, rng):
    for _ in range(20):
        A = rng.normal(size=(n, n))
        M = A - A.T
        assert min(abs(z) for z in eigenvalues(M)) <= 1e-9 * np.abs(M).max()


def test_even_skew_spectrum_is_imaginary(rng):
    A = rng.normal(size=(4, 4))
    for z in eigenvalues(A - A.T):
        assert abs(z.real) <= 1e-12 and abs(z.imag) > 1e-6


# --- classification ------------------------------------------------------------

def test_classify_examples():
    assert classify_jacobi(-np.eye(3)).classification is Jacobi.STABLE
    rep = classify_jacobi(np.zeros((2, 2)))
    assert rep.classification is Jacobi.MARGINAL and rep.max_re == 0.0
    assert classify_jacobi([[1.0, 0.0], [0.0, -2.0]]).classification is Jacobi.UNSTABLE


def test_classify_bands():
    assert classify(-1e-8) is Jacobi.STABLE
    assert classify(-1e-10) is Jacobi.MARGINAL
    assert classify(1e-10) is Jacobi.MARGINAL
    assert classify(1e-8) is Jacobi.UNSTABLE
    assert classify(-0.5, tol=1.0) is Jacobi.MARGINAL
    assert str(Jacobi.STABLE) == "JacobiStable"


def test_report_fields(rng):
    M = rng.normal(size=(4, 4))
    rep = classify_jacobi(M)
    assert len(rep.eigenvalues) == 4
    assert rep.max_re == rep.eigenvalues[0].real
    assert rep.det == pytest.approx(np.linalg.det(M), rel=1e-12)


def test_negative_tol_rejected():
    with pytest.raises(ValueError):
        classify_jacobi(np.eye(2), tol=-1.0)


def test_scale_monotone(rng):
    for _ in range(50):
        A = rng.normal(size=(4, 4))
        M = -(A @ A.T) - 0.1 * np.eye(4)
        assert classify_jacobi(M).classification is Jacobi.STABLE
        for c in (1e-3, 0.5, 7.0, 1e4):
            assert classify_jacobi(c * M).classification is Jacobi.STABLE


# --- theorem predicate ---------------------------------------------------------

def test_theorem_rigid_rotation():
    model = catalog.load("rigid_rotation3")
    frame = geometry_frame(model, [0.4, -1.2, 0.9])
    check = theorem1_predicate(frame)
    assert check.applies and check.has_zero_eig and check.unstable
    assert check.skew_defect <= 1e-12
    assert abs(check.det_P) <= 1e-10


def test_theorem_even_dimension():
    frame = geometry_frame(catalog.load("rotation2"), [1.0, 2.0])
    check = theorem1_predicate(frame)
    assert not check.applies and not check.unstable


def test_theorem_contraction3():
    # Emat = -I is not skew, so the hypothesis fails
    frame = geometry_frame(catalog.load("contraction3"), [1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
    check = theorem1_predicate(frame)
    assert not check.applies
    assert check.skew_defect == pytest.approx(2.0)
    assert not check.has_zero_eig


def test_theorem_dimension_override():
    frame = geometry_frame(catalog.load("rigid_rotation3"), [0.4, -1.2, 0.9])
    assert not theorem1_predicate(frame, n=2).applies
