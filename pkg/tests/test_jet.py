import threading

import numpy as np
import pytest

from kccjacobi.errors import EvalError
from kccjacobi.expr import parse_model
from kccjacobi.jet import compiled, field_jacobian, field_value, jet2, jet2_fd


def test_linear_field():
    j = jet2(parse_model("dim 1\nx1' = -x1"), [3.0])
    np.testing.assert_array_equal(j.value, [-3.0])
    np.testing.assert_array_equal(j.jac, [[-1.0]])
    np.testing.assert_array_equal(j.hess, [[[0.0]]])


def test_quadratic_field():
    j = jet2(parse_model("dim 2\nx1' = x2^2\nx2' = x1"), [1.0, 2.0])
    np.testing.assert_array_equal(j.value, [4.0, 1.0])
    np.testing.assert_array_equal(j.jac, [[0.0, 4.0], [1.0, 0.0]])
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = 2.0
    np.testing.assert_array_equal(j.hess, expected)


def test_sin_at_origin():
    j = jet2(parse_model("dim 1\nx1' = sin(x1)"), [0.0])
    assert j.value[0] == 0.0 and j.jac[0, 0] == 1.0 and j.hess[0, 0, 0] == 0.0


def test_jet_is_read_only():
    j = jet2(parse_model("dim 1\nx1' = x1^3"), [2.0])
    with pytest.raises(ValueError):
        j.jac[0, 0] = 1.0


def test_hessian_mirrored_exactly(models, rng):
    for model in models.values():
        for _ in range(10):
            h = jet2(model, rng.uniform(-2, 2, model.n)).hess
            np.testing.assert_array_equal(h, h.transpose(0, 2, 1))


def test_fd_examples():
    lin = parse_model("dim 1\nx1' = -x1")
    assert abs(jet2_fd(lin, [3.0], h=1e-5).jac[0, 0] + 1.0) <= 1e-9
    sq = parse_model("dim 1\nx1' = x1^2")
    assert abs(jet2_fd(sq, [2.0], h=1e-4).hess[0, 0, 0] - 2.0) <= 1e-6


@pytest.mark.parametrize("h", [0.0, -1e-5])
def test_fd_rejects_bad_step(h):
    with pytest.raises(ValueError):
        jet2_fd(parse_model("dim 1\nx1' = x1"), [0.0], h=h)


def test_fd_hessian_symmetric_before_symmetrization(models, rng):
    for model in models.values():
        for _ in range(10):
            h = jet2_fd(model, rng.uniform(-2, 2, model.n), symmetrize=False).hess
            scale = 1.0 + np.max(np.abs(h))
            assert np.max(np.abs(h - h.transpose(0, 2, 1))) <= 1e-8 * scale


def test_transcendental_jet_against_fd(rng):
    model = parse_model("dim 3\nx1' = exp(x2)*cos(x3)\nx2' = ln(2+sin(x1*x3))\nx3' = tanh(x1)/(1+x2^2)")
    for _ in range(20):
        x = rng.uniform(-1, 1, 3)
        exact, approx = jet2(model, x), jet2_fd(model, x)
        assert np.max(np.abs(exact.jac - approx.jac) / (1 + np.abs(exact.jac))) <= 1e-6
        assert np.max(np.abs(exact.hess - approx.hess) / (1 + np.abs(exact.hess))) <= 1e-6


def test_value_and_jacobian_helpers():
    model = parse_model("dim 2\nx1' = x1*x2\nx2' = x1 - x2")
    X, J = field_jacobian(model, [2.0, 3.0])
    np.testing.assert_array_equal(X, [6.0, -1.0])
    np.testing.assert_array_equal(J, [[3.0, 2.0], [1.0, -1.0]])
    np.testing.assert_array_equal(field_value(model, [2.0, 3.0]), X)


def test_eval_error_in_component():
    model = parse_model("dim 1\nx1' = sqrt(x1)")
    with pytest.raises(EvalError) as info:
        jet2(model, [-1.0])
    assert info.value.component == 1 and info.value.derivative is None


def test_eval_error_in_derivative():
    # sqrt is fine at 0 but its derivative 1/(2 sqrt(x)) is not
    model = parse_model("dim 1\nx1' = sqrt(x1)")
    with pytest.raises(EvalError) as info:
        jet2(model, [0.0])
    assert info.value.component == 1 and info.value.derivative == (1,)


def test_singular_derivatives_recorded():
    c = compiled(parse_model("dim 2\nx1' = ln(x1)\nx2' = x1*x2"))
    assert (1, (1,)) in c.singular
    assert all(comp == 1 for comp, _ in c.singular)


def test_wrong_dimension_point():
    with pytest.raises(ValueError):
        jet2(parse_model("dim 2\nx1' = x2\nx2' = x1"), [1.0])


def test_cache_built_once_across_threads():
    model = parse_model("dim 2\nx1' = sin(x1*x2)\nx2' = x1^3")
    seen = []

    def work():
        seen.append(compiled(model))
        jet2(model, [0.1, 0.2])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(c is seen[0] for c in seen)
