import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from groupsindy.core import StructuralError
from groupsindy.dynamics import (
    IntegrationError,
    OdeSystem,
    duffing,
    integrate,
    logistic,
    lorenz,
    make_system,
    max_table_mismatch,
    random_points,
    read_series_csv,
    simulate_switching,
    split_into_segments,
    write_series_csv,
)


def _linear(lam):
    return OdeSystem("linear", 1, lambda x: lam * x, {"lam": lam}, [{(1,): lam}])


def test_zero_dynamics_constant():
    s = integrate(_linear(0.0), [5.0], 0.1, 1.0)
    assert len(s) == 11
    assert np.all(s.states == 5.0)


def test_exponential_matches_closed_form():
    s = integrate(_linear(1.0), [1.0], 0.001, 1.0)
    assert s.times[-1] == pytest.approx(1.0)
    assert abs(s.states[-1, 0] - math.e) < 1e-9


def test_rk4_fourth_order():
    errs = []
    for dt in (0.1, 0.05):
        s = integrate(_linear(-1.3), [1.0], dt, 2.0)
        errs.append(abs(s.states[-1, 0] - math.exp(-1.3 * 2.0)))
    assert errs[0] / errs[1] >= 12


def test_logistic_saturates_from_below():
    s = integrate(logistic(0.23), [0.01], 0.005, 50)
    x = s.states[:, 0]
    assert np.all(np.diff(x) > 0)
    assert np.all(x < 1) and x[-1] > 0.99


def test_blow_up_names_time():
    quad = OdeSystem("quad", 1, lambda x: x**2, {}, [{(2,): 1.0}])
    with pytest.raises(IntegrationError, match=r"t = "):
        integrate(quad, [1.0], 0.01, 3.0)


@pytest.mark.parametrize("alpha", [0.05, 0.23])
def test_logistic_coefficients(alpha):
    assert logistic(alpha).coefficients == [{(1,): alpha, (2,): -alpha}]


def test_logistic_zero_dynamics():
    sys_ = logistic(0.0)
    assert sys_.coefficients == [{}]
    assert np.all(sys_([0.3]) == 0)


def test_lorenz_component_two():
    c = lorenz(-1.0).coefficients[1]
    assert c[(1, 0, 0)] == 28 and c[(0, 1, 0)] == -1 and c[(1, 0, 1)] == -1
    c = lorenz(7.73).coefficients[1]
    assert c[(1, 0, 0)] == pytest.approx(-6.92) and c[(0, 1, 0)] == 7.73
    assert (1, 0, 0) not in lorenz(6.0).coefficients[1]


def test_duffing_coefficients():
    assert duffing(1, 1).coefficients[1] == {(1, 0): 1.0, (0, 1): -1.0, (3, 0): -1.0}
    assert duffing(0, 0).coefficients[1] == {(3, 0): -1.0}


@pytest.mark.parametrize(
    "system", [logistic(0.05), logistic(0.23), lorenz(-1), lorenz(4.7), lorenz(7.73), duffing(1, 0.3)]
)
def test_coefficient_table_matches_rhs(system):
    assert max_table_mismatch(system, random_points(system.n, 100, seed=5)) < 1e-12


def test_make_system_unknown():
    with pytest.raises(StructuralError):
        make_system("pendulum", alpha=1)


def test_switching_equal_parameters_bitwise():
    a = simulate_switching(2.0, 2.0, [-8, 7, 27], 0.005, 1.0, 3.0)
    b = integrate(lorenz(2.0), [-8, 7, 27], 0.005, 3.0)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.times, b.times)


def test_switching_boundary_sample_in_first_regime():
    dt, ts = 0.005, 0.5
    s = simulate_switching(-1.0, 6.6, [-8, 7, 27], dt, ts, 1.0)
    first = integrate(lorenz(-1.0), [-8, 7, 27], dt, ts)
    k = len(first) - 1
    np.testing.assert_array_equal(s.states[: k + 1], first.states)
    second = integrate(lorenz(6.6), s.states[k], dt, 1.0 - ts)
    np.testing.assert_array_equal(s.states[k:], second.states)


def test_switching_changes_geometry():
    s = simulate_switching(-1.0, 6.6, [-8, 7, 27], 0.005, 20.0, 40.0)
    before = s.states[(s.times > 5) & (s.times <= 20)]
    after = s.states[s.times > 25]
    assert abs(before[:, 2].mean() - after[:, 2].mean()) > 1.0 or abs(before.std() - after.std()) > 1.0


def test_switching_rejects_bad_times():
    with pytest.raises(StructuralError):
        simulate_switching(-1, 6.6, [1, 1, 1], 0.01, 2.0, 1.0)


def _series(n):
    return integrate(_linear(0.0), [1.0], 0.1, 0.1 * (n - 1))


def test_split_exact():
    segs = split_into_segments(_series(96), 32)
    assert [len(s) for s in segs] == [3] * 32
    assert [s.source_id for s in segs] == list(range(1, 33))


def test_split_remainder_goes_first():
    assert [len(s) for s in split_into_segments(_series(10), 3)] == [4, 3, 3]


def test_split_too_short():
    with pytest.raises(StructuralError):
        split_into_segments(_series(8), 3)


@given(st.integers(3, 200), st.integers(1, 20))
def test_split_is_partition(length, M):
    if length < 3 * M:
        return
    s = _series(length)
    segs = split_into_segments(s, M)
    assert sum(len(g) for g in segs) == length
    np.testing.assert_array_equal(np.concatenate([g.times for g in segs]), s.times)


def test_csv_round_trip(tmp_path):
    s = integrate(lorenz(-1), [-8, 7, 27], 0.005, 1.0)
    path = write_series_csv(s, tmp_path / "a.csv")
    assert path.read_text().splitlines()[0] == "t,x1,x2,x3"
    back = read_series_csv(path)
    np.testing.assert_array_equal(back.states, s.states)
    np.testing.assert_array_equal(back.times, s.times)


def test_csv_errors_name_the_file(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1\n0,1\n0.1,oops\n0.2,3\n")
    with pytest.raises(StructuralError, match="bad.csv"):
        read_series_csv(bad)
    with pytest.raises(StructuralError, match="missing.csv"):
        read_series_csv(tmp_path / "missing.csv")
