import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from groupsindy.core import (
    CoefficientMatrix,
    RegressionProblem,
    SourceSeries,
    StructuralError,
    l20_norm,
    objective,
)
from groupsindy.dictionary import enumerate_monomials


def _problem(dicts, vels):
    return RegressionProblem(tuple(dicts), tuple(vels), None)


def test_objective_zero_coefficients_is_velocity_energy(rng):
    D = [rng.normal(size=(6, 3)), rng.normal(size=(4, 3))]
    V = [rng.normal(size=6), rng.normal(size=4)]
    prob = _problem(D, V)
    expected = sum(float(v @ v) for v in V)
    assert objective(prob, np.zeros((3, 2)), 1.3) == pytest.approx(expected, rel=1e-14)


def test_objective_exact_data_vanishes(rng):
    C = rng.normal(size=(3, 2))
    D = [rng.normal(size=(7, 3)) for _ in range(2)]
    prob = _problem(D, [D[i] @ C[:, i] for i in range(2)])
    assert objective(prob, C, 0.0) == pytest.approx(0.0, abs=1e-24)


def test_objective_identity_toy():
    prob = _problem([np.eye(2)], [np.array([1.0, 0.0])])
    assert objective(prob, np.array([[1.0], [0.0]]), 0.5) == 0.5


def test_objective_shape_mismatch():
    prob = _problem([np.eye(2)], [np.ones(2)])
    with pytest.raises(StructuralError):
        objective(prob, np.zeros((3, 1)), 0.0)


def test_objective_negative_gamma():
    prob = _problem([np.eye(2)], [np.ones(2)])
    with pytest.raises(StructuralError):
        objective(prob, np.zeros((2, 1)), -1.0)


@pytest.mark.parametrize(
    "C, count",
    [(np.zeros((3, 2)), 0), (np.eye(3), 3), (np.array([[1.0, 0], [0, 0], [0, 2]]), 2)],
)
def test_l20_norm_examples(C, count):
    assert l20_norm(C) == count
    assert l20_norm(CoefficientMatrix(C)) == count


matrices = arrays(
    float,
    st.tuples(st.integers(1, 6), st.integers(1, 4)),
    elements=st.sampled_from([0.0, 0.0, 1.5, -2.0, 3.25, 1e-3]),
)


@given(matrices, st.floats(0, 10), st.integers(0, 2**31))
def test_objective_additive_in_gamma(C, gamma, seed):
    r = np.random.default_rng(seed)
    nbar, m = C.shape
    prob = _problem([r.normal(size=(5, nbar)) for _ in range(m)], [r.normal(size=5) for _ in range(m)])
    lhs = objective(prob, C, gamma)
    rhs = objective(prob, C, 0.0) + gamma * l20_norm(C)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(matrices, st.integers(0, 2**31))
def test_objective_invariant_under_source_permutation(C, seed):
    r = np.random.default_rng(seed)
    nbar, m = C.shape
    D = [r.normal(size=(5, nbar)) for _ in range(m)]
    V = [r.normal(size=5) for _ in range(m)]
    perm = r.permutation(m)
    a = objective(_problem(D, V), C, 0.7)
    b = objective(_problem([D[i] for i in perm], [V[i] for i in perm]), C[:, perm], 0.7)
    assert a == pytest.approx(b, rel=1e-12)


@given(matrices, st.integers(0, 2**31))
def test_l20_norm_invariances(C, seed):
    r = np.random.default_rng(seed)
    assert l20_norm(C[:, r.permutation(C.shape[1])]) == l20_norm(C)
    scales = r.choice([-3.0, 0.5, 7.0], size=C.shape[0])
    assert l20_norm(C * scales[:, None]) == l20_norm(C)


def test_coefficient_matrix_support_and_immutability():
    C = CoefficientMatrix(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, -2.0]]))
    assert C.support == (1, 2)
    assert C.column_support(0) == (1,)
    with pytest.raises(ValueError):
        C.values[0, 0] = 1.0


def test_source_series_validation():
    t = np.arange(5) * 0.1
    s = SourceSeries(0.1, t, np.ones(5))
    assert s.states.shape == (5, 1) and s.n == 1 and len(s) == 5
    with pytest.raises(StructuralError):
        SourceSeries(0.1, t[:2], np.ones(2))
    with pytest.raises(StructuralError):
        SourceSeries(0.1, t[::-1], np.ones(5))
    with pytest.raises(StructuralError):
        SourceSeries(0.1, np.array([0, 0.1, 0.25, 0.3, 0.4]), np.ones(5))
    with pytest.raises(StructuralError):
        SourceSeries(0.1, t, np.ones((4, 1)))


def test_regression_problem_checks():
    spec = enumerate_monomials(1, 2)
    with pytest.raises(StructuralError):
        RegressionProblem((np.ones((4, 3)),), (np.ones(5),), spec)
    with pytest.raises(StructuralError):
        RegressionProblem((np.ones((4, 2)),), (np.ones(4),), spec)
    with pytest.raises(StructuralError):
        RegressionProblem((np.ones((4, 3)), np.ones((4, 2))), (np.ones(4), np.ones(4)), None)
    prob = RegressionProblem((2 * np.ones((4, 3)),), (np.ones(4),), spec, 0.5)
    np.testing.assert_array_equal(prob.unscaled_dictionaries()[0], 4 * np.ones((4, 3)))
